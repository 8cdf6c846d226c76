"""Monte Carlo check of CD bias and of the DS variance reduction at one pixel."""
import argparse
import math

import numpy as np

from dskde.bandwidth import ds_bandwidth
from dskde.estimators import FrameStack, cd_grid, ds_smooth
from dskde.kernel import kernel_moments
from dskde.simulate import sample_truncnorm_array, synthetic_mean_field, truncnorm_pdf


def cd_bias(n, reps, h, mu, sigma, rng):
    est = np.array([cd_grid(FrameStack(sample_truncnorm_array(mu, sigma, rng, size=(n, 1, 1))), [mu], h)[0, 0, 0]
                    for _ in range(reps)])
    f = truncnorm_pdf(mu, mu, sigma)
    return est.mean() - f, est.std(ddof=1) / math.sqrt(reps), -(h * h / 2) * f / sigma**2


def variances(p, n, reps, sigma, rng):
    mu = synthetic_mean_field(p, p)
    i = j = p // 2
    x = float(mu[i, j])
    h = ds_bandwidth(n, p * p, sigma)
    cd_vals, ds_vals = [], []
    for _ in range(reps):
        cd = cd_grid(FrameStack(sample_truncnorm_array(mu, sigma, rng, size=(n, p, p))), [x], h)
        cd_vals.append(cd[0, i, j])
        ds_vals.append(ds_smooth(cd, h)[0, i, j])
    nu0 = kernel_moments().nu[0]
    f = truncnorm_pdf(x, mu[i, j], sigma)
    return h, np.var(cd_vals, ddof=1), np.var(ds_vals, ddof=1), nu0 * f / (n * h), nu0**3 * f / (n * p * p * h**3)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--bias-n", type=int, default=20000)
    ap.add_argument("--bias-reps", type=int, default=200)
    ap.add_argument("--bias-h", type=float, default=0.02)
    ap.add_argument("--side", type=int, default=32)
    ap.add_argument("--var-n", type=int, default=200)
    ap.add_argument("--var-reps", type=int, default=100)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    bias, se, lead = cd_bias(args.bias_n, args.bias_reps, args.bias_h, 0.5, 0.16, rng)
    print(f"CD bias at the mode: {bias:.5f} +/- {se:.5f} (leading term {lead:.5f}, z={bias / se:.1f})")

    h, v_cd, v_ds, th_cd, th_ds = variances(args.side, args.var_n, args.var_reps, 0.16, rng)
    print(f"h={h:.4f}")
    print(f"variance CD {v_cd:.3e} (leading term {th_cd:.3e})")
    print(f"variance DS {v_ds:.3e} (leading term {th_ds:.3e})")
    print(f"DS / CD variance ratio {v_ds / v_cd:.4f}")


if __name__ == "__main__":
    main()
