"""Synthetic truncated-normal image stacks and the MSE benchmark."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .bandwidth import SILVERMAN_CONSTANT, cd_bandwidth, ds_bandwidth, empirical_sigma, plan_bandwidths
from .estimators import DEFAULT_TRUNCATION, FrameStack, cd_grid, ds_smooth, gpa_fit, gpa_query_grid
from .extract import BBox

ESTIMATORS = ("cd", "ds", "gpa-cd", "gpa-ds")


@dataclass
class SimConfig:
    p: int = 64
    q: int = 64
    n: int = 200
    sigma: float = 0.16
    mean_field: np.ndarray | str | None = None
    seed: int = 0
    g_star: int = 500
    g_plus: int = 100
    reps: int = 20
    n_values: tuple[int, ...] = (100, 400)
    estimators: tuple[str, ...] = ESTIMATORS
    cd_constant: float = SILVERMAN_CONSTANT
    trunc_radius_bandwidths: float = DEFAULT_TRUNCATION

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        for name in ("p", "q", "n", "g_star", "g_plus", "reps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        unknown = set(self.estimators) - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators {sorted(unknown)}")

    def mean_field_array(self) -> np.ndarray:
        if self.mean_field is None:
            return synthetic_mean_field(self.p, self.q)
        if isinstance(self.mean_field, (str, Path)):
            mu = load_mean_field(self.mean_field)
        else:
            mu = np.asarray(self.mean_field, dtype=float)
        if mu.shape != (self.p, self.q):
            raise ValueError(f"mean field shape {mu.shape} does not match ({self.p}, {self.q})")
        return mu


def load_mean_field(path) -> np.ndarray:
    path = Path(path)
    mu = np.load(path) if path.suffix == ".npy" else np.loadtxt(path, delimiter=None, ndmin=2)
    if mu.min() < 0 or mu.max() > 1:
        raise ValueError("mean field values must lie in [0, 1]")
    return mu.astype(float)


def truncation_mass(mu, sigma):
    """Probability that normal(mu, sigma^2) lands in [0, 1]."""
    return ndtr((1.0 - mu) / sigma) - ndtr(-mu / sigma)


def truncnorm_pdf(x, mu, sigma):
    """Density of normal(mu, sigma^2) truncated to [0, 1]; zero outside."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    x = np.asarray(x, dtype=float)
    mu = np.asarray(mu, dtype=float)
    z = (x - mu) / sigma
    dens = np.exp(-0.5 * z * z) / (math.sqrt(2.0 * math.pi) * sigma * truncation_mass(mu, sigma))
    dens = np.where((x >= 0.0) & (x <= 1.0), dens, 0.0)
    return dens[()] if dens.ndim == 0 else dens


def sample_truncnorm(mu: float, sigma: float, rng: np.random.Generator) -> float:
    """One draw in [0, 1] by rejection from normal(mu, sigma^2)."""
    while True:
        x = rng.normal(mu, sigma)
        if 0.0 <= x <= 1.0:
            return float(x)


def sample_truncnorm_array(mu, sigma: float, rng: np.random.Generator, size=None) -> np.ndarray:
    """Vectorised rejection sampler; ``mu`` broadcasts against ``size``."""
    mu = np.broadcast_to(np.asarray(mu, dtype=float), size if size is not None else np.shape(mu))
    out = rng.normal(mu, sigma)
    bad = (out < 0.0) | (out > 1.0)
    while bad.any():
        out[bad] = rng.normal(mu[bad], sigma)
        bad = (out < 0.0) | (out > 1.0)
    return out


def synthetic_mean_field(p: int, q: int) -> np.ndarray:
    """0.35 + 0.20 i/p + 0.10 sin(2 pi j/q), clamped to [0.1, 0.9]; i, j are 1-based."""
    i = np.arange(1, p + 1)[:, None] / p
    j = np.arange(1, q + 1)[None, :] / q
    return np.clip(0.35 + 0.20 * i + 0.10 * np.sin(2.0 * np.pi * j), 0.1, 0.9)


def simulate_stack(cfg: SimConfig, n: int | None = None, rng: np.random.Generator | None = None) -> FrameStack:
    n = cfg.n if n is None else n
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    mu = cfg.mean_field_array()
    return FrameStack(sample_truncnorm_array(mu, cfg.sigma, rng, size=(n,) + mu.shape))


def mse_of_estimator(estimate_fn, mean_field, sigma: float, test_points) -> float:
    """Average squared error over all test points and all lattice pixels.

    ``estimate_fn(test_points)`` must return an array of shape (G+, p, q).
    """
    test_points = np.asarray(test_points, dtype=float)
    est = np.asarray(estimate_fn(test_points), dtype=float)
    truth = truncnorm_pdf(test_points[:, None, None], np.asarray(mean_field)[None], sigma)
    return float(np.mean((est - truth) ** 2))


@dataclass
class MseRow:
    estimator: str
    n: int
    bandwidth_rule: str
    mse: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    @property
    def mean_mse(self) -> float:
        return float(np.mean(self.mse))

    @property
    def mean_log_mse(self) -> float:
        return float(np.mean(np.log(self.mse)))

    @property
    def median_log_mse(self) -> float:
        return float(np.median(np.log(self.mse)))

    @property
    def mean_seconds(self) -> float:
        return float(np.mean(self.seconds))


@dataclass
class MseReport:
    rows: list[MseRow]
    config: dict

    def row(self, estimator: str, n: int) -> MseRow:
        for r in self.rows:
            if r.estimator == estimator and r.n == n:
                return r
        raise KeyError((estimator, n))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["estimator", "n", "bandwidth_rule", "reps", "mean_mse", "mean_log_mse",
                        "median_log_mse", "mean_seconds_per_frame"])
            for r in self.rows:
                w.writerow([r.estimator, r.n, r.bandwidth_rule, len(r.mse), f"{r.mean_mse:.10g}",
                            f"{r.mean_log_mse:.10g}", f"{r.median_log_mse:.10g}", f"{r.mean_seconds:.6g}"])


def _timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def run_mse_benchmark(cfg: SimConfig, estimators=None, n_values=None, progress=None) -> MseReport:
    """Replicated MSE comparison of CD, DS, GPA-CD and GPA-DS.

    Each (replication, N) pair draws its stack, test points and grid seed
    from a generator seeded with ``(cfg.seed, rep, N)``, so replications are
    independent of execution order. CD variants use the Silverman-style rule,
    DS variants the DS rule; reported times are per test value (one frame's
    worth of pixel queries), excluding GPA fitting.
    """
    estimators = tuple(estimators or cfg.estimators)
    n_values = tuple(n_values or cfg.n_values)
    mu = cfg.mean_field_array()
    m = cfg.p * cfg.q
    rows = {(e, n): MseRow(e, n, "cd" if e.endswith("cd") else "ds") for n in n_values for e in estimators}
    for rep in range(cfg.reps):
        for n in n_values:
            rng = np.random.default_rng([cfg.seed, rep, n])
            stack = simulate_stack(cfg, n=n, rng=rng)
            test_points = rng.uniform(0.0, 1.0, cfg.g_plus)
            grid_seed = int(rng.integers(2**63))
            sigma_hat = empirical_sigma(stack)
            h_ds = ds_bandwidth(n, m, sigma_hat)
            h_cd = cd_bandwidth(n, sigma_hat, cfg.cd_constant)
            for e in estimators:
                if e == "cd":
                    est, dt = _timed(lambda: cd_grid(stack, test_points, h_cd))
                elif e == "ds":
                    est, dt = _timed(lambda: ds_smooth(cd_grid(stack, test_points, h_ds), h_ds,
                                                       cfg.trunc_radius_bandwidths))
                else:
                    variant = e.split("-")[1]
                    plan = plan_bandwidths(n, m, sigma_hat, variant, cfg.cd_constant)
                    table = gpa_fit(stack, cfg.g_star, plan, variant, seed=grid_seed,
                                    trunc_radius_bandwidths=cfg.trunc_radius_bandwidths)
                    est, dt = _timed(lambda: gpa_query_grid(table, test_points))
                row = rows[(e, n)]
                row.mse.append(mse_of_estimator(lambda _: est, mu, cfg.sigma, test_points))
                row.seconds.append(dt / cfg.g_plus)
            if progress is not None:
                progress(rep, n)
    echo = {k: v for k, v in asdict(cfg).items() if k != "mean_field"}
    echo["mean_field"] = "synthetic" if cfg.mean_field is None else (
        str(cfg.mean_field) if isinstance(cfg.mean_field, (str, Path)) else "array")
    echo.update(estimators=estimators, n_values=n_values)
    return MseReport(list(rows.values()), echo)


def plot_report(report: MseReport, path) -> None:
    """Grayscale log-MSE and log-time summary image (needs matplotlib)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    estimators = list(dict.fromkeys(r.estimator for r in report.rows))
    shades = np.linspace(0.0, 0.7, len(estimators))
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    for est, shade in zip(estimators, shades):
        rows = sorted((r for r in report.rows if r.estimator == est), key=lambda r: r.n)
        ns = [r.n for r in rows]
        color = str(shade)
        axes[0].plot(ns, [r.mean_log_mse for r in rows], "o-", color=color, label=est.upper())
        axes[1].plot(ns, [math.log(r.mean_seconds) for r in rows], "s--", color=color, label=est.upper())
    axes[0].set_xlabel("N")
    axes[0].set_ylabel("mean log MSE")
    axes[1].set_xlabel("N")
    axes[1].set_ylabel("log seconds per frame")
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


# Synthetic anomaly injection for the detection experiments.

def inject_block(frame, mean_field, box: BBox, rng: np.random.Generator, jitter: float = 0.02) -> np.ndarray:
    """Overwrite ``box`` with values half a unit away from the local background mean."""
    out = np.array(frame, dtype=float)
    mu = np.asarray(mean_field)[box.r0:box.r1, box.c0:box.c1]
    target = np.where(mu < 0.5, mu + 0.5, mu - 0.5)
    vals = target + jitter * rng.standard_normal(target.shape)
    out[box.r0:box.r1, box.c0:box.c1] = np.clip(vals, 0.0, 1.0)
    return out


@dataclass
class DetectionSuite:
    train: FrameStack
    frames: list[np.ndarray]
    boxes: list[BBox | None]
    mean_field: np.ndarray


def make_detection_suite(
    p: int = 180,
    q: int = 320,
    n_train: int = 100,
    n_vacant: int = 20,
    n_anomalous: int = 20,
    block: int = 90,
    sigma: float = 0.16,
    seed: int = 0,
) -> DetectionSuite:
    """Background training stack plus test frames, half of them with one injected square block."""
    rng = np.random.default_rng(seed)
    mu = synthetic_mean_field(p, q)
    train = FrameStack(sample_truncnorm_array(mu, sigma, rng, size=(n_train, p, q)))
    frames, boxes = [], []
    for k in range(n_vacant + n_anomalous):
        frame = sample_truncnorm_array(mu, sigma, rng, size=(p, q))
        box = None
        if k >= n_vacant:
            r0 = int(rng.integers(0, p - block + 1))
            c0 = int(rng.integers(0, q - block + 1))
            box = BBox(r0, r0 + block, c0, c0 + block)
            frame = inject_block(frame, mu, box, rng)
        frames.append(frame)
        boxes.append(box)
    return DetectionSuite(train, frames, boxes, mu)
