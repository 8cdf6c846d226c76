"""CD, DS and grid-point-approximation (GPA) density estimators.

Pixel ``(i, j)`` (0-based) sits at ``((i + 1) / p, (j + 1) / q)`` on the unit
square. Only coordinate differences enter the spatial weights, so the offset
convention never changes a result.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import ndimage

from .bandwidth import BandwidthPlan, DegenerateInputError
from .kernel import INV_SQRT_2PI, gauss_kernel, neg_exp

DEFAULT_TRUNCATION = 5.0
VARIANTS = ("ds", "cd")

# ln(1e16): grid points whose weight falls this far below the nearest one's are
# dropped by the windowed query; the neglected mass stays below G* * 1e-16.
_QUERY_TAIL_LOG = 16.0 * math.log(10.0)


@dataclass(frozen=True)
class FrameStack:
    """``values`` has shape (N, p, q) with entries in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 2:
            v = v[None]
        if v.ndim != 3 or min(v.shape) < 1:
            raise ValueError(f"expected an (N, p, q) array, got shape {np.shape(self.values)}")
        if not np.all(np.isfinite(v)) or v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    @property
    def q(self) -> int:
        return self.values.shape[2]

    @property
    def m(self) -> int:
        return self.p * self.q


@dataclass(frozen=True)
class DensityMap:
    values: np.ndarray

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def q(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class GpaTable:
    """Fitted model: density estimates ``table[g, i, j]`` at sorted value-grid points."""

    grid: np.ndarray
    table: np.ndarray
    plan: BandwidthPlan
    variant: str
    seed: int
    _pixel_major: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float)
        table = np.array(self.table, dtype=float)
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if grid.ndim != 1 or table.ndim != 3 or table.shape[0] != grid.size:
            raise ValueError("table must have shape (G*, p, q) matching the grid")
        if np.any(np.diff(grid) <= 0) or grid[0] <= 0.0 or grid[-1] >= 1.0:
            raise ValueError("grid points must be strictly ascending inside (0, 1)")
        if np.any(table < 0) or not np.all(np.isfinite(table)):
            raise ValueError("table entries must be finite and non-negative")
        grid.setflags(write=False)
        table.setflags(write=False)
        pm = np.ascontiguousarray(table.reshape(grid.size, -1).T)
        pm.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "_pixel_major", pm)

    @property
    def g_star(self) -> int:
        return self.grid.size

    @property
    def shape(self) -> tuple[int, int]:
        return self.table.shape[1], self.table.shape[2]


def _check_pixel(pixel, p: int, q: int) -> tuple[int, int]:
    i, j = (int(v) for v in pixel)
    if not (0 <= i < p and 0 <= j < q):
        raise IndexError(f"pixel {pixel} outside the {p}x{q} lattice")
    return i, j


def _check_h(h: float) -> None:
    if not h > 0.0:
        raise ValueError(f"bandwidth must be positive, got {h}")


def cd_estimate(stack: FrameStack, x: float, pixel, h: float) -> float:
    """Per-pixel kernel density estimate at value ``x``."""
    _check_h(h)
    i, j = _check_pixel(pixel, stack.p, stack.q)
    samples = stack.values[:, i, j]
    return float(gauss_kernel((samples - x) / h).sum() / (stack.n * h))


@numba.njit(fastmath={"reassoc", "contract", "nsz", "arcp"}, cache=True)
def _kernel_sums(samples, grid, inv_h, scale, out):
    # samples: (n_pix, N) contiguous; out: (G, n_pix)
    n_pix, n = samples.shape
    for k in range(n_pix):
        row = samples[k]
        for g in range(grid.shape[0]):
            x = grid[g]
            acc = 0.0
            for i in range(n):
                t = (row[i] - x) * inv_h
                acc += neg_exp(-0.5 * t * t)
            out[g, k] = acc * scale


def cd_grid(stack: FrameStack, grid, h: float, chunk_pixels: int = 4096) -> np.ndarray:
    """CD estimates at every grid value and pixel, shape (G, p, q)."""
    _check_h(h)
    grid = np.ascontiguousarray(np.atleast_1d(np.asarray(grid, dtype=float)))
    if grid.size == 0:
        raise ValueError("grid must be non-empty")
    n, p, q = stack.values.shape
    flat = stack.values.reshape(n, p * q)
    out = np.empty((grid.size, p * q))
    scale = INV_SQRT_2PI / (n * h)
    for start in range(0, p * q, chunk_pixels):
        stop = min(start + chunk_pixels, p * q)
        block = np.ascontiguousarray(flat[:, start:stop].T)
        _kernel_sums(block, grid, 1.0 / h, scale, out[:, start:stop])
    return out.reshape(grid.size, p, q)


def spatial_radius(h: float, p: int, q: int, trunc_radius_bandwidths: float | None) -> tuple[int, int]:
    """Per-axis window half-widths in pixels; ``None`` means no truncation."""
    if trunc_radius_bandwidths is None or math.isinf(trunc_radius_bandwidths):
        return p - 1, q - 1
    if not trunc_radius_bandwidths > 0:
        raise ValueError("truncation radius must be positive")
    r1 = min(math.ceil(trunc_radius_bandwidths * h * p), p - 1)
    r2 = min(math.ceil(trunc_radius_bandwidths * h * q), q - 1)
    return r1, r2


def ds_direct(cd_map, pixel, h: float, radius: tuple[int, int] | None = None) -> float:
    """Brute-force spatially smoothed value at one pixel, O(M).

    Reference implementation: every lattice location (or those inside the
    optional ``radius`` window) is weighted by the product kernel and the
    weights are normalised to sum to one.
    """
    _check_h(h)
    cd_map = np.asarray(cd_map, dtype=float)
    p, q = cd_map.shape
    i, j = _check_pixel(pixel, p, q)
    di = (np.arange(p) - i)[:, None]
    dj = (np.arange(q) - j)[None, :]
    w = gauss_kernel(di / (p * h)) * gauss_kernel(dj / (q * h))
    if radius is not None:
        w = w * ((np.abs(di) <= radius[0]) & (np.abs(dj) <= radius[1]))
    total = w.sum()
    if total <= 0.0:
        raise ArithmeticError("spatial weights sum to zero")
    return float((w * cd_map).sum() / total)


def ds_smooth(cd_values, h: float, trunc_radius_bandwidths: float | None = DEFAULT_TRUNCATION) -> np.ndarray:
    """Spatial smoothing of every grid slice with truncated, renormalised Gaussian weights.

    The window is a rectangle and the kernel a product, so both the weighted
    sum and the in-bounds weight total factor into two 1-D passes.
    """
    _check_h(h)
    a = np.asarray(cd_values, dtype=float)
    squeeze = a.ndim == 2
    if squeeze:
        a = a[None]
    _, p, q = a.shape
    r1, r2 = spatial_radius(h, p, q, trunc_radius_bandwidths)
    w1 = gauss_kernel(np.arange(-r1, r1 + 1) / (p * h))
    w2 = gauss_kernel(np.arange(-r2, r2 + 1) / (q * h))
    # zero fill outside the lattice; dividing by the smoothed indicator renormalises
    num = ndimage.correlate1d(a, w2, axis=2, mode="constant")
    num = ndimage.correlate1d(num, w1, axis=1, mode="constant")
    den1 = ndimage.correlate1d(np.ones(p), w1, mode="constant")
    den2 = ndimage.correlate1d(np.ones(q), w2, mode="constant")
    out = num / np.multiply.outer(den1, den2)
    return out[0] if squeeze else out


def draw_grid(g_star: int, seed: int, kind: str = "random") -> np.ndarray:
    """Sorted value-grid points strictly inside (0, 1)."""
    if g_star < 2:
        raise ValueError(f"g_star must be at least 2, got {g_star}")
    if kind == "even":
        return (np.arange(g_star) + 0.5) / g_star
    if kind != "random":
        raise ValueError(f"unknown grid kind {kind!r}")
    rng = np.random.default_rng(seed)
    grid = np.sort(rng.uniform(0.0, 1.0, g_star))
    while grid[0] <= 0.0 or np.any(np.diff(grid) <= 0):
        grid = np.sort(rng.uniform(0.0, 1.0, g_star))
    return grid


def gpa_fit(
    stack: FrameStack,
    g_star: int,
    plan: BandwidthPlan,
    variant: str = "ds",
    seed: int = 0,
    grid_kind: str = "random",
    trunc_radius_bandwidths: float | None = DEFAULT_TRUNCATION,
) -> GpaTable:
    """Precompute CD (and, for ``variant="ds"``, spatially smoothed) estimates on a value grid."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
    if stack.values.min() == stack.values.max():
        raise DegenerateInputError("constant stack has zero spread")
    grid = draw_grid(g_star, seed, grid_kind)
    table = cd_grid(stack, grid, plan.h)
    if variant == "ds":
        table = ds_smooth(table, plan.h, trunc_radius_bandwidths)
    return GpaTable(grid=grid, table=table, plan=plan, variant=variant, seed=seed)


@numba.njit(cache=True)
def _query(grid, columns, xs, h_star, exact):
    # columns: (n_pix, G) pixel-major table; xs: one query value per pixel
    g_star = grid.shape[0]
    out = np.empty(xs.shape[0])
    for k in range(xs.shape[0]):
        x = xs[k]
        idx = np.searchsorted(grid, x)
        d0 = np.inf
        if idx < g_star:
            d0 = grid[idx] - x
        if idx > 0:
            d0 = min(d0, x - grid[idx - 1])
        if exact:
            lo, hi = 0, g_star
        else:
            reach = math.sqrt(d0 * d0 + 2.0 * h_star * h_star * (_QUERY_TAIL_LOG + math.log(g_star)))
            lo = np.searchsorted(grid, x - reach)
            hi = np.searchsorted(grid, x + reach, side="right")
        # weights relative to the nearest grid point so they never all underflow
        base = (d0 / h_star) ** 2
        num = 0.0
        den = 0.0
        col = columns[k]
        for g in range(lo, hi):
            t = (grid[g] - x) / h_star
            w = math.exp(-0.5 * (t * t - base))
            num += w * col[g]
            den += w
        out[k] = num / den
    return out


def gpa_query(table: GpaTable, x_bar: float, pixel, exact: bool = False) -> float:
    """Kernel-weighted average of a pixel's precomputed estimates around ``x_bar``.

    The default mode sums only grid points whose weight is within a factor
    1e-16 of the nearest one; ``exact=True`` sums all G* points.
    """
    p, q = table.shape
    i, j = _check_pixel(pixel, p, q)
    k = i * q + j
    res = _query(table.grid, table._pixel_major[k:k + 1], np.array([float(x_bar)]), table.plan.h_star, exact)
    return float(res[0])


def density_map(table: GpaTable, frame, exact: bool = False) -> DensityMap:
    """Density of each pixel's own observed value under the fitted model."""
    frame = np.asarray(frame, dtype=float)
    if frame.shape != table.shape:
        raise ValueError(f"frame shape {frame.shape} does not match model shape {table.shape}")
    xs = np.ascontiguousarray(frame.ravel())
    vals = _query(table.grid, table._pixel_major, xs, table.plan.h_star, exact)
    return DensityMap(vals.reshape(frame.shape))


def gpa_query_grid(table: GpaTable, xs) -> np.ndarray:
    """Query every pixel at each value in ``xs``; returns shape (len(xs), p, q)."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    p, q = table.shape
    out = np.empty((xs.size, p, q))
    for g, x in enumerate(xs):
        out[g] = density_map(table, np.full((p, q), x)).values
    return out
