"""Reproducible simulation pipelines.

Three experiments: the tail of the equal-weight CCT against the standard
Cauchy tail, the empirical size of the Cauchy-calibrated test, and the power
of CCT against the Gumbel-calibrated MAX test under sparse means.

All pipelines split replicates into fixed blocks (``BLOCK_SIZE``) and draw
block ``lo`` from ``substream(seed, stream, lo)``. Reductions are integer
counts, so outputs do not depend on the number of workers.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import __version__
from ._parallel import BLOCK_SIZE, block_bounds, parallel_map, substream
from .combiners import cct_pvalue, cct_statistic, gumbel_norm
from .copulas import Family, mixed_copula_sample
from .correlation import (CorrelationMatrix, CorrelationSpec, MeanSpec, Model,
                          build_correlation, mvn_sample, z_to_pvalues)
from .special import cauchy_quantile, cauchy_tail, gumbel_quantile

T_LOW = cauchy_quantile(0.95)
T_HIGH = 1000.0
N_GRID = 40

# substream keys, one per pipeline
_TAIL, _SIZE, _POWER, _POWER_NULL, _TUNE = 11, 12, 13, 14, 15


def default_t_grid(n: int = N_GRID) -> np.ndarray:
    return np.geomspace(T_LOW, T_HIGH, n)


# Scenarios ------------------------------------------------------------------

@dataclass(frozen=True)
class MvnScenario:
    """Latent ``Z ~ N(mu, R)`` with two-sided normal p-values."""

    corr: CorrelationSpec
    mean: MeanSpec | None = None

    @property
    def m(self) -> int:
        return self.corr.m

    def describe(self) -> dict:
        out = {"kind": "mvn", **self.corr.describe()}
        if self.mean is not None:
            out["mean"] = {"support_fraction": self.mean.support_fraction,
                           "magnitude": self.mean.magnitude_for(self.m),
                           "placement": self.mean.placement}
        return out

    def pvalue_sampler(self) -> Callable[[np.random.Generator, int], np.ndarray]:
        r = build_correlation(self.corr)
        mu = None if self.mean is None else self.mean.vector(self.m)
        return lambda rng, n: z_to_pvalues(mvn_sample(r, mu, n, rng))


@dataclass(frozen=True)
class CopulaScenario:
    """Consecutive p-value pairs drawn from a bivariate copula, pairs independent."""

    family: Family
    theta: float
    m: int

    def __post_init__(self):
        fam = Family.parse(self.family) if isinstance(self.family, str) else self.family
        object.__setattr__(self, "family", fam)
        if fam not in (Family.FGM, Family.AMH):
            raise ValueError("mixed copula scenarios support FGM and AMH")
        if self.m < 1:
            raise ValueError("m must be >= 1")

    def describe(self) -> dict:
        return {"kind": "mixed_copula", "family": self.family.value, "theta": self.theta,
                "m": self.m}

    def pvalue_sampler(self) -> Callable[[np.random.Generator, int], np.ndarray]:
        fam, th, m = self.family, self.theta, self.m
        return lambda rng, n: mixed_copula_sample(fam, th, m, rng, size=n)


Scenario = MvnScenario | CopulaScenario


def standard_null_scenarios(m_values: Sequence[int] = (10, 50, 500)) -> list[Scenario]:
    """Equal correlation, spiked, mixed FGM and mixed AMH null scenarios."""
    out: list[Scenario] = []
    for m in m_values:
        out += [MvnScenario(CorrelationSpec(Model.EQUAL_CORR, m, rho=r)) for r in (0.2, 0.5, 0.8)]
        out += [MvnScenario(CorrelationSpec(Model.SPIKED_EIGEN, m, d=d)) for d in (4, 5, 6)]
        out += [CopulaScenario(Family.FGM, th, m) for th in (0.2, 0.5, 0.8)]
        out += [CopulaScenario(Family.AMH, th, m) for th in (0.2, 0.5, 0.8)]
    return out


def null_cct_statistics(scenario: Scenario, replicates: int, seed: int, *,
                        workers: int = 1, stream: int = _TAIL) -> np.ndarray:
    """Equal-weight CCT statistics for ``replicates`` draws of ``scenario``."""
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    draw = scenario.pvalue_sampler()

    def block(bounds):
        lo, hi = bounds
        return cct_statistic(draw(substream(seed, stream, lo), hi - lo))

    return np.concatenate(parallel_map(block, block_bounds(replicates, BLOCK_SIZE), workers))


def exceedance_counts(stats: np.ndarray, t) -> np.ndarray:
    """``#{stat > t_k}`` for each ``t_k`` via one sort and a binary search."""
    s = np.sort(np.asarray(stats, dtype=float))
    return s.size - np.searchsorted(s, np.asarray(t, dtype=float), side="right")


def _binomial_se(p, n):
    p = np.asarray(p, dtype=float)
    return np.sqrt(p * (1.0 - p) / n)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


# Tail calibration -------------------------------------------------------------

@dataclass
class TailCalibration:
    t_grid: np.ndarray
    empirical_tail: np.ndarray
    cauchy_tail_ref: np.ndarray
    replicates: int
    mc_stderr: np.ndarray
    scenario: dict
    seed: int
    probe_t: np.ndarray = field(default_factory=lambda: np.empty(0))
    probe_tail: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def probe_stderr(self) -> np.ndarray:
        return _binomial_se(self.probe_tail, self.replicates)

    def ratio(self) -> np.ndarray:
        return self.empirical_tail / self.cauchy_tail_ref

    def to_csv(self) -> str:
        rows = zip(self.t_grid, self.empirical_tail, self.cauchy_tail_ref, self.mc_stderr)
        return _csv(["t_or_m", "empirical", "reference", "stderr"], rows)

    def to_json(self) -> str:
        probes = [{"t": float(t), "empirical": float(e), "reference": float(cauchy_tail(t)),
                   "stderr": float(s)}
                  for t, e, s in zip(self.probe_t, self.probe_tail, self.probe_stderr)]
        rows = [{"t_or_m": float(t), "empirical": float(e), "reference": float(r),
                 "stderr": float(s)}
                for t, e, r, s in zip(self.t_grid, self.empirical_tail, self.cauchy_tail_ref,
                                      self.mc_stderr)]
        return json.dumps({"kind": "tail_calibration", "version": __version__,
                           "scenario": self.scenario, "seed": self.seed,
                           "replicates": self.replicates, "rows": rows, "probes": probes},
                          indent=2)


def tail_calibration(scenario: Scenario, replicates: int, seed: int, *, workers: int = 1,
                     t_grid=None, probe_t: Sequence[float] = ()) -> TailCalibration:
    """Empirical ``P(CCT > t)`` against the standard Cauchy tail.

    ``probe_t`` adds off-grid evaluation points without changing the grid.
    """
    if replicates < 10_000:
        raise ValueError("tail calibration needs at least 10^4 replicates")
    grid = default_t_grid() if t_grid is None else np.sort(np.asarray(t_grid, dtype=float))
    stats = null_cct_statistics(scenario, replicates, seed, workers=workers, stream=_TAIL)
    emp = exceedance_counts(stats, grid) / replicates
    probe_t = np.asarray(probe_t, dtype=float)
    probe = exceedance_counts(stats, probe_t) / replicates
    return TailCalibration(grid, emp, np.asarray(cauchy_tail(grid)), replicates,
                           _binomial_se(emp, replicates), scenario.describe(), seed,
                           probe_t, probe)


# Size ---------------------------------------------------------------------------

@dataclass
class SizeResult:
    alpha: np.ndarray
    size: np.ndarray
    replicates: int
    scenario: dict
    seed: int

    @property
    def stderr(self) -> np.ndarray:
        """Binomial standard error at the nominal level."""
        return _binomial_se(self.alpha, self.replicates)

    def within(self, n_se: float = 3.0) -> np.ndarray:
        return np.abs(self.size - self.alpha) <= n_se * self.stderr

    def to_csv(self) -> str:
        return _csv(["alpha", "size", "stderr"], zip(self.alpha, self.size, self.stderr))


def size_check(scenario: Scenario, alpha, replicates: int, seed: int, *,
               workers: int = 1) -> SizeResult:
    """Fraction of null replicates with CCT p-value <= alpha (for each alpha)."""
    alphas = np.atleast_1d(np.asarray(alpha, dtype=float))
    if np.any((alphas <= 0) | (alphas >= 1)):
        raise ValueError("alpha must lie in (0, 1)")
    stats = null_cct_statistics(scenario, replicates, seed, workers=workers, stream=_SIZE)
    pvals = np.asarray(cct_pvalue(stats))
    size = np.array([np.count_nonzero(pvals <= a) for a in alphas]) / replicates
    return SizeResult(alphas, size, replicates, scenario.describe(), seed)


# Power ----------------------------------------------------------------------------

_POWER_MODELS = (Model.AR1, Model.POLY_DECAY)


@dataclass
class PowerResult:
    m_grid: np.ndarray
    power_cct: np.ndarray
    power_max: np.ndarray
    alpha: float
    replicates: int
    scenario: dict
    seed: int
    stderr: np.ndarray
    stderr_cct: np.ndarray
    stderr_max: np.ndarray
    max_calibration: str = "gumbel"

    def ordering_holds(self, n_se: float = 2.0) -> np.ndarray:
        return self.power_cct >= self.power_max - n_se * self.stderr

    def to_csv(self) -> str:
        rows = zip(self.m_grid, self.power_cct, self.power_max, self.stderr)
        return _csv(["t_or_m", "empirical", "reference", "stderr"], rows)

    def to_json(self) -> str:
        rows = [{"t_or_m": int(m), "power_cct": float(c), "power_max": float(x),
                 "stderr": float(s)}
                for m, c, x, s in zip(self.m_grid, self.power_cct, self.power_max, self.stderr)]
        return json.dumps({"kind": "power", "version": __version__, "scenario": self.scenario,
                           "alpha": self.alpha, "seed": self.seed,
                           "replicates": self.replicates,
                           "max_calibration": self.max_calibration, "rows": rows}, indent=2)


@dataclass
class _NullDraws:
    """Mean-zero draws at one ``m``; a mean shift is applied on top (common random numbers)."""

    z0: np.ndarray
    r: CorrelationMatrix


def _null_draws(corr: CorrelationSpec, replicates: int, seed: int, stream: int,
                workers: int) -> _NullDraws:
    r = build_correlation(corr)

    def block(bounds):
        lo, hi = bounds
        return mvn_sample(r, None, hi - lo, substream(seed, stream, corr.m, lo))

    z0 = np.concatenate(parallel_map(block, block_bounds(replicates, BLOCK_SIZE), workers))
    return _NullDraws(z0, r)


def _reject(z0: np.ndarray, mu: np.ndarray, cct_crit: float, max_crit: float):
    """Per-replicate CCT and MAX rejection indicators, in blocks to bound memory."""
    rej_c = np.empty(z0.shape[0], dtype=bool)
    rej_m = np.empty(z0.shape[0], dtype=bool)
    for lo, hi in block_bounds(z0.shape[0], BLOCK_SIZE):
        z = z0[lo:hi] + mu
        rej_c[lo:hi] = cct_statistic(z_to_pvalues(z)) > cct_crit
        rej_m[lo:hi] = np.max(np.abs(z), axis=1) > max_crit
    return rej_c, rej_m


def gumbel_max_threshold(m: int, alpha: float) -> float:
    """Reject MAX when ``(max|z| - a_m) / b_m`` exceeds the Gumbel ``1 - alpha`` quantile."""
    g = gumbel_norm(m)
    return g.a + g.b * gumbel_quantile(1.0 - alpha)


def _check_power_model(corr: CorrelationSpec):
    if corr.model not in _POWER_MODELS:
        raise ValueError(f"power study supports {[m.value for m in _POWER_MODELS]}, "
                         f"got {corr.model.value}")


def power_study(corr: CorrelationSpec, mean: MeanSpec, m_grid: Sequence[int], alpha: float,
                replicates: int, seed: int, *, workers: int = 1,
                max_calibration: str = "gumbel",
                mc_null_replicates: int | None = None) -> PowerResult:
    """CCT vs MAX power over ``m_grid``.

    ``corr`` supplies the model and its parameter; its ``m`` is replaced by
    each grid value. ``max_calibration="monte_carlo"`` replaces the Gumbel
    threshold by the empirical null quantile of ``max|z|`` from an
    independent substream.
    """
    _check_power_model(corr)
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if max_calibration not in ("gumbel", "monte_carlo"):
        raise ValueError("max_calibration must be 'gumbel' or 'monte_carlo'")
    m_grid = np.asarray(m_grid, dtype=int)
    if m_grid.size == 0 or np.any(m_grid < 2):
        raise ValueError("m_grid needs values >= 2")
    cct_crit = cauchy_quantile(1.0 - alpha)
    pc, pm, se, se_c, se_m = [], [], [], [], []
    for m in m_grid:
        spec = corr.with_m(int(m))
        draws = _null_draws(spec, replicates, seed, _POWER, workers)
        if max_calibration == "gumbel":
            max_crit = gumbel_max_threshold(int(m), alpha)
        else:
            n_null = mc_null_replicates or replicates
            null = _null_draws(spec, n_null, seed, _POWER_NULL, workers)
            max_crit = float(np.quantile(np.max(np.abs(null.z0), axis=1), 1.0 - alpha))
        rc, rm = _reject(draws.z0, mean.vector(int(m)), cct_crit, max_crit)
        pc.append(rc.mean())
        pm.append(rm.mean())
        diff = rc.astype(float) - rm.astype(float)
        se.append(diff.std(ddof=1) / math.sqrt(replicates) if replicates > 1 else float("nan"))
        se_c.append(_binomial_se(pc[-1], replicates))
        se_m.append(_binomial_se(pm[-1], replicates))
    scen = {"kind": "mvn", **corr.describe(), "support_fraction": mean.support_fraction,
            "magnitude": [mean.magnitude_for(int(m)) for m in m_grid],
            "placement": mean.placement}
    scen.pop("m", None)
    return PowerResult(m_grid, np.array(pc), np.array(pm), alpha, replicates, scen, seed,
                       np.array(se), np.array(se_c), np.array(se_m), max_calibration)


def cct_power_curve(corr: CorrelationSpec, support_fraction: float, magnitudes, alpha: float,
                    replicates: int, seed: int, *, workers: int = 1,
                    stream: int = _TUNE) -> np.ndarray:
    """CCT power at each magnitude, all evaluated on the same null draws."""
    _check_power_model(corr)
    draws = _null_draws(corr, replicates, seed, stream, workers)
    crit = cauchy_quantile(1.0 - alpha)
    out = []
    for mag in np.atleast_1d(magnitudes):
        mu = MeanSpec(support_fraction, float(mag)).vector(corr.m)
        rc, _ = _reject(draws.z0, mu, crit, math.inf)
        out.append(rc.mean())
    return np.array(out)


def tune_magnitude(corr: CorrelationSpec, support_fraction: float, alpha: float,
                   replicates: int, seed: int, *, target: float = 0.5, lo: float = 0.0,
                   hi: float = 6.0, iters: int = 30, workers: int = 1) -> float:
    """Signal magnitude giving CCT power ``target`` at ``corr.m``.

    Bisection on common random numbers from a dedicated substream, so the
    power curve being searched is monotone and the answer is reproducible.
    """
    _check_power_model(corr)
    draws = _null_draws(corr, replicates, seed, _TUNE, workers)
    crit = cauchy_quantile(1.0 - alpha)

    def power(mag):
        mu = MeanSpec(support_fraction, mag).vector(corr.m)
        return _reject(draws.z0, mu, crit, math.inf)[0].mean()

    if power(hi) < target:
        raise ValueError(f"power at magnitude {hi} is below the target {target}")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if power(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
