"""Anomaly-region extraction: density map to a single bounding box.

Stages: rescale to [0, 1], push background pixels to 1, average-pool blur,
binarise, label connected components, drop small ones, keep the largest.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .estimators import DensityMap, GpaTable, density_map

REFERENCE_AREA = 540 * 960


@dataclass(frozen=True)
class BBox:
    """Half-open pixel rectangle ``[r0, r1) x [c0, c1)``."""

    r0: int
    r1: int
    c0: int
    c1: int

    def __post_init__(self):
        if not (0 <= self.r0 < self.r1 and 0 <= self.c0 < self.c1):
            raise ValueError(f"invalid box {self}")

    @property
    def area(self) -> int:
        return (self.r1 - self.r0) * (self.c1 - self.c0)


@dataclass(frozen=True)
class DetectionParams:
    alpha1: float = 0.06
    alpha2: float = 0.42
    pool: int = 33
    min_area: float = 5500
    connectivity: int = 8
    scale_min_area: bool = True

    def __post_init__(self):
        if not 0.0 < self.alpha1 < self.alpha2 < 1.0:
            raise ValueError("need 0 < alpha1 < alpha2 < 1")
        if self.pool < 1 or self.pool % 2 == 0:
            raise ValueError(f"pool must be odd and positive, got {self.pool}")
        if self.min_area < 1:
            raise ValueError("min_area must be at least 1")
        if self.connectivity not in (4, 8):
            raise ValueError("connectivity must be 4 or 8")

    def effective_min_area(self, p: int, q: int) -> float:
        """``min_area`` rescaled from a 540x960 lattice to ``p x q``."""
        if not self.scale_min_area or p * q == REFERENCE_AREA:
            return float(self.min_area)
        return max(1.0, self.min_area * (p * q) / REFERENCE_AREA)


@dataclass(frozen=True)
class Component:
    label: int
    area: int
    bbox: BBox
    pixels: np.ndarray = field(repr=False, compare=False)


def _values(m) -> np.ndarray:
    return np.asarray(getattr(m, "values", m), dtype=float)


def rescale01(dmap) -> DensityMap:
    v = _values(dmap)
    lo, hi = v.min(), v.max()
    if hi == lo:
        return DensityMap(np.ones_like(v))
    return DensityMap((v - lo) / (hi - lo))


def remove_background(map01, alpha1: float) -> DensityMap:
    """Pixels above ``alpha1`` are background and become 1.0."""
    v = _values(map01)
    return DensityMap(np.where(v > alpha1, 1.0, v))


def avg_pool_blur(dmap, pool: int) -> DensityMap:
    """Mean over the in-bounds ``pool x pool`` window, via a summed-area table."""
    if pool < 1 or pool % 2 == 0:
        raise ValueError(f"pool must be odd and positive, got {pool}")
    v = _values(dmap)
    p, q = v.shape
    r = pool // 2
    sat = np.zeros((p + 1, q + 1))
    sat[1:, 1:] = v.cumsum(0).cumsum(1)
    rows = np.arange(p)
    cols = np.arange(q)
    top = np.clip(rows - r, 0, p)[:, None]
    bot = np.clip(rows + r + 1, 0, p)[:, None]
    left = np.clip(cols - r, 0, q)[None, :]
    right = np.clip(cols + r + 1, 0, q)[None, :]
    total = sat[bot, right] - sat[top, right] - sat[bot, left] + sat[top, left]
    count = (bot - top) * (right - left)
    return DensityMap(total / count)


def binarize(dmap, alpha2: float) -> np.ndarray:
    return (_values(dmap) < alpha2).astype(np.uint8)


def connected_components(mask, connectivity: int = 8) -> list[Component]:
    """Maximal connected sets of 1-pixels, ordered by their first pixel in row-major order."""
    mask = np.asarray(mask).astype(bool)
    if connectivity == 8:
        structure = np.ones((3, 3), dtype=bool)
    elif connectivity == 4:
        structure = ndimage.generate_binary_structure(2, 1)
    else:
        raise ValueError("connectivity must be 4 or 8")
    labels, count = ndimage.label(mask, structure=structure)
    if count == 0:
        return []
    flat = labels.ravel()
    fg = np.flatnonzero(flat)
    first = np.full(count + 1, flat.size)
    np.minimum.at(first, flat[fg], fg)
    order = np.argsort(first[1:], kind="stable") + 1
    slices = ndimage.find_objects(labels)
    areas = np.bincount(flat, minlength=count + 1)
    out = []
    for new_label, old in enumerate(order, start=1):
        sl = slices[old - 1]
        box = BBox(sl[0].start, sl[0].stop, sl[1].start, sl[1].stop)
        out.append(Component(new_label, int(areas[old]), box, np.flatnonzero(flat == old)))
    return out


@dataclass
class DetectionStages:
    """Every intermediate product of :func:`detect`, for debugging and replay."""

    density: DensityMap
    rescaled: DensityMap
    foreground: DensityMap
    blurred: DensityMap
    mask: np.ndarray
    components: list[Component]
    kept: list[Component]
    bbox: BBox | None


def select_box(components: list[Component], min_area: float) -> tuple[list[Component], BBox | None]:
    kept = [c for c in components if c.area >= min_area]
    if not kept:
        return kept, None
    # max() keeps the first of equal areas, i.e. the earliest row-major label
    return kept, max(kept, key=lambda c: c.area).bbox


def detect_stages(table: GpaTable, frame, params: DetectionParams | None = None) -> DetectionStages:
    params = params or DetectionParams()
    dens = density_map(table, frame)
    rescaled = rescale01(dens)
    fg = remove_background(rescaled, params.alpha1)
    blurred = avg_pool_blur(fg, params.pool)
    mask = binarize(blurred, params.alpha2)
    comps = connected_components(mask, params.connectivity)
    kept, box = select_box(comps, params.effective_min_area(*dens.values.shape))
    return DetectionStages(dens, rescaled, fg, blurred, mask, comps, kept, box)


def detect(table: GpaTable, frame, params: DetectionParams | None = None) -> BBox | None:
    """Bounding box of the largest sufficiently large low-density region, or ``None``."""
    return detect_stages(table, frame, params).bbox
