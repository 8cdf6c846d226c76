"""Replicated MSE comparison of CD, DS, GPA-CD and GPA-DS on simulated stacks.

    python scripts/run_benchmark.py --reps 20 --out results/mse.csv --plot results/mse.png
"""
import argparse
import time
from pathlib import Path

from dskde.simulate import SimConfig, plot_report, run_mse_benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=int, default=64)
    ap.add_argument("--q", type=int, default=64)
    ap.add_argument("--sigma", type=float, default=0.16)
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--n-values", type=int, nargs="+", default=[100, 400])
    ap.add_argument("--g-star", type=int, default=500)
    ap.add_argument("--g-plus", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--mean-field", help="optional .npy / text file with a p x q mean field")
    ap.add_argument("--out", default="results/mse.csv")
    ap.add_argument("--plot", help="write a grayscale summary figure (needs matplotlib)")
    args = ap.parse_args()

    cfg = SimConfig(p=args.p, q=args.q, sigma=args.sigma, reps=args.reps, n_values=tuple(args.n_values),
                    g_star=args.g_star, g_plus=args.g_plus, seed=args.seed, mean_field=args.mean_field)
    t0 = time.perf_counter()
    report = run_mse_benchmark(cfg, progress=lambda rep, n: print(f"  rep {rep + 1}/{cfg.reps} N={n}", flush=True))
    print(f"done in {time.perf_counter() - t0:.0f}s")

    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    report.to_csv(args.out)
    if args.plot:
        plot_report(report, args.plot)
    print(f"{'estimator':9s} {'N':>5s} {'mean MSE':>10s} {'mean log MSE':>13s} {'s/frame':>9s}")
    for r in report.rows:
        print(f"{r.estimator:9s} {r.n:5d} {r.mean_mse:10.5f} {r.mean_log_mse:13.4f} {r.mean_seconds:9.2e}")
    for n in cfg.n_values:
        ds, gpa = report.row("ds", n).mean_mse, report.row("gpa-ds", n).mean_mse
        print(f"N={n}: GPA-DS vs DS relative gap {abs(gpa - ds) / ds:.3f}")


if __name__ == "__main__":
    main()
