"""Rule-of-thumb bandwidths for the CD, DS and grid-query layers."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernel import kernel_moments

SILVERMAN_CONSTANT = 1.06


class DegenerateInputError(ValueError):
    """Raised when a bandwidth cannot be formed (zero spread, too few samples)."""


@dataclass(frozen=True)
class BandwidthPlan:
    """Bandwidths used to fit one model.

    ``h`` smooths both the value domain and the unit-square spatial domain;
    ``h_star`` is the grid-query bandwidth. ``n`` may be ``None`` for a plan
    restored from a model file, which does not record the frame count.
    """

    h: float
    h_star: float
    sigma_hat: float
    n: int | None
    m: int

    def __post_init__(self):
        if not 0.0 < self.h < 1.0:
            raise ValueError(f"h must lie in (0, 1), got {self.h}")
        if not 0.0 < self.h_star < self.h:
            raise ValueError(f"h_star must lie in (0, h), got {self.h_star} with h={self.h}")
        if not self.sigma_hat > 0.0:
            raise ValueError(f"sigma_hat must be positive, got {self.sigma_hat}")


def empirical_sigma(values) -> float:
    """Pooled population standard deviation of every pixel value in a stack.

    ``values`` is a :class:`~dskde.estimators.FrameStack` or any array.
    """
    arr = np.asarray(getattr(values, "values", values), dtype=float)
    if arr.size == 0:
        raise DegenerateInputError("empty stack")
    if arr.min() == arr.max():
        return 0.0
    return float(arr.std())


def _check_sigma(sigma: float) -> None:
    if not sigma > 0.0 or not math.isfinite(sigma):
        raise DegenerateInputError(f"sigma must be positive and finite, got {sigma}")


def mse_constants(sigma: float) -> tuple[float, float]:
    """Integrated-MSE constants ``(C1, C2)`` under the truncated-normal working density.

    C1 = nu_0^3 = pi^(-3/2)/8 does not depend on sigma;
    C2 = (3/32) pi^(-1/2) sigma^(-5), with the truncation constant taken as 1.
    """
    _check_sigma(sigma)
    c1 = kernel_moments().nu[0] ** 3
    c2 = 3.0 / 32.0 / math.sqrt(math.pi) * sigma**-5
    return c1, c2


def ds_bandwidth(n: int, m: int, sigma: float) -> float:
    """h = pi^(-1/7) sigma^(5/7) (n m)^(-1/7)."""
    if n < 2 or m < 1:
        raise DegenerateInputError(f"need n >= 2 and m >= 1, got n={n}, m={m}")
    _check_sigma(sigma)
    return math.pi ** (-1.0 / 7.0) * sigma ** (5.0 / 7.0) * (float(n) * float(m)) ** (-1.0 / 7.0)


def ds_bandwidth_from_constants(n: int, m: int, sigma: float) -> float:
    """Same bandwidth routed through ``{3 C1 / (4 C2)}^(1/7)``."""
    c1, c2 = mse_constants(sigma)
    return (3.0 * c1 / (4.0 * c2)) ** (1.0 / 7.0) * (float(n) * float(m)) ** (-1.0 / 7.0)


def cd_bandwidth(n: int, sigma: float, constant: float = SILVERMAN_CONSTANT) -> float:
    """Silverman-style ``constant * sigma * n^(-1/5)``."""
    if n < 2:
        raise DegenerateInputError(f"need n >= 2, got {n}")
    _check_sigma(sigma)
    return constant * sigma * float(n) ** -0.2


def gpa_bandwidth(h: float) -> float:
    if not 0.0 < h < 1.0:
        raise ValueError(f"h must lie in (0, 1), got {h}")
    return 5.0 * h * h


def imse_leading_term(h: float, n: int, m: int, c1: float, c2: float) -> float:
    """L(h) = C1 / (n m h^3) + C2 h^4."""
    return c1 / (n * m * h**3) + c2 * h**4


def imse_at_optimum(n: int, m: int, c1: float, c2: float) -> float:
    """Closed-form minimum of :func:`imse_leading_term` over h."""
    return ((4.0 / 3.0) ** (3.0 / 7.0) + (3.0 / 4.0) ** (4.0 / 7.0)) * (
        c1 ** (4.0 / 7.0) * c2 ** (3.0 / 7.0) * (float(n) * m) ** (-4.0 / 7.0)
    )


def plan_bandwidths(
    n: int,
    m: int,
    sigma: float,
    variant: str = "ds",
    cd_constant: float = SILVERMAN_CONSTANT,
    h: float | None = None,
) -> BandwidthPlan:
    """Build the plan for a GPA fit; ``variant`` is ``"ds"`` or ``"cd"``.

    An explicit ``h`` overrides the rule of thumb; ``h_star`` is always 5 h^2.
    """
    _check_sigma(sigma)
    if h is None:
        if variant == "ds":
            h = ds_bandwidth(n, m, sigma)
        elif variant == "cd":
            h = cd_bandwidth(n, sigma, cd_constant)
        else:
            raise ValueError(f"unknown variant {variant!r}")
    return BandwidthPlan(h=h, h_star=gpa_bandwidth(h), sigma_hat=sigma, n=n, m=m)
