"""Run the acceptance suite and print its one-line-per-criterion summary.

Takes about ten minutes on a single core. Extra arguments go to pytest,
for example ``-k "01 or 02"`` to run a subset.
"""
import subprocess
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def main():
    cmd = [sys.executable, "-m", "pytest", str(ROOT / "tests" / "test_acceptance.py"), "-q",
           "-p", "no:cacheprovider", *sys.argv[1:]]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    lines = [ln for ln in proc.stdout.splitlines() if ln.startswith("CRITERION")]
    # each line is echoed twice (captured stdout and the summary section); keep the summary
    seen = []
    for ln in lines:
        if ln not in seen:
            seen.append(ln)
    print("\n".join(seen) if seen else proc.stdout)
    sys.exit(proc.returncode)


if __name__ == "__main__":
    main()
