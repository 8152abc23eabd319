"""Empirical size of the CCT at several levels across every null scenario, as one CSV."""
import csv

from _common import base_parser, scenario_slug

from cctlab.simulation import standard_null_scenarios, size_check


def main():
    p = base_parser(__doc__, 100_000)
    p.add_argument("--m", type=int, nargs="+", default=[10, 50, 500])
    p.add_argument("--alpha", type=float, nargs="+", default=[0.05, 0.01, 0.001])
    args = p.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "size.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scenario", "alpha", "size", "stderr", "within_3se"])
        for scen in standard_null_scenarios(tuple(args.m)):
            res = size_check(scen, args.alpha, args.replicates, args.seed, workers=args.workers)
            slug = scenario_slug(scen.describe())
            for row in zip(res.alpha, res.size, res.stderr, res.within(3.0)):
                writer.writerow([slug, *(repr(float(x)) for x in row[:3]), bool(row[3])])
            print(slug, " ".join(f"{s:.5f}" for s in res.size))
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
