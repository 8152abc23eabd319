"""Shared helpers for the figure-data scripts."""
import argparse
from pathlib import Path


def scenario_slug(desc: dict) -> str:
    name = desc.get("model", desc.get("family", desc["kind"])).lower()
    params = "_".join(f"{k}{desc[k]:g}" for k in ("rho", "a", "d", "theta") if k in desc)
    return f"{name}_{params}_m{desc['m']}" if params else f"{name}_m{desc['m']}"


def base_parser(description: str, replicates: int) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--seed", type=int, default=2024)
    p.add_argument("--replicates", type=int, default=replicates)
    p.add_argument("--workers", type=int, default=1)
    return p
