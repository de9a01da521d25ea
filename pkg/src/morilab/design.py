"""Designed coefficient families: decay and damped-oscillation chains.

All designs end in an affine tail b_n = alpha*n + gamma, the asymptotics
demanded of generic non-integrable dynamics; the head encodes the decay
class (square-root growth for Gaussian decay, a small leading coefficient
for slow exponential decay, a two-coefficient head for the oscillating
variant).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .chain import LanczosChain

__all__ = [
    "DesignParams",
    "gaussian_chain",
    "exponential_chain",
    "edo_chain",
    "linear_continuation",
    "ContinuationResult",
    "q_ratio",
    "tangent_slope",
    "tangent_intercept",
]


def tangent_slope(n_star: int) -> float:
    """Slope of the affine tail continuing sqrt(n) smoothly past n_star."""
    return 1.0 / (2.0 * np.sqrt(n_star))


def tangent_intercept(n_star: int) -> float:
    """Intercept of the same tangent line, sqrt(n_star)/2."""
    return np.sqrt(n_star) / 2.0


@dataclass(frozen=True)
class DesignParams:
    """Knobs shared by the designed families."""

    n_star: int = 10
    a: float = 1.2
    b1: float = 2.0
    b2: float = 1.6
    d: int = 2000

    def __post_init__(self):
        if self.n_star < 1:
            raise ValueError("n_star must be >= 1")
        if self.a <= 0 or self.b1 <= 0 or self.b2 <= 0:
            raise ValueError("head coefficients must be positive")
        if self.d < 2:
            raise ValueError("d must be >= 2")

    @property
    def alpha(self) -> float:
        return tangent_slope(self.n_star)

    @property
    def gamma(self) -> float:
        return tangent_intercept(self.n_star)


def gaussian_chain(n_star: int = 10, d: int = 2000) -> LanczosChain:
    """sqrt(n) head continued tangentially by alpha*n + gamma past n_star.

    The pure sqrt(n) chain generates exp(-t^2/2) exactly; the tangent
    continuation enforces asymptotically linear growth without strongly
    affecting the Gaussian decay.
    """
    if not 1 <= n_star < d:
        raise ValueError("require 1 <= n_star < d")
    n = np.arange(1, d)
    al, ga = tangent_slope(n_star), tangent_intercept(n_star)
    b = np.where(n <= n_star, np.sqrt(n), al * n + ga)
    return LanczosChain(b, label="g")


def exponential_chain(a: float = 1.2, n_star: int = 10, d: int = 2000) -> LanczosChain:
    """Small first coefficient a, then the same affine tail from n = 2 on.

    The weak entry coupling followed by the jump to the tail produces a slow
    decay that is exponential after a short initial window.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    if not 1 <= n_star < d:
        raise ValueError("require 1 <= n_star < d")
    n = np.arange(1, d)
    b = tangent_slope(n_star) * n + tangent_intercept(n_star)
    b[0] = a
    return LanczosChain(b, label="e")


def edo_chain(b1: float = 2.0, b2: float = 1.6,
              slope_params: tuple[float, float] | None = None,
              d: int = 2000) -> LanczosChain:
    """Two-coefficient head, then a jump onto an affine ramp from n = 3.

    `slope_params` is (slope, intercept) of the ramp; pass the tail fitted to
    the reverse-engineered oscillation chain so both oscillating designs share
    one asymptote (and hence comparable spectral width).
    """
    if b1 <= 0 or b2 <= 0:
        raise ValueError("head coefficients must be positive")
    if slope_params is None:
        raise ValueError("slope_params (slope, intercept) is required")
    slope, intercept = slope_params
    if slope <= 0:
        raise ValueError("ramp slope must be positive")
    if d < 4:
        raise ValueError("d must be >= 4")
    n = np.arange(1, d)
    b = slope * n + intercept
    b[0], b[1] = b1, b2
    return LanczosChain(b, label="edo")


class ContinuationResult(NamedTuple):
    chain: LanczosChain
    slope: float
    intercept: float


def linear_continuation(prefix, d: int, fit_points: int = 10,
                        blend: int = 10, label: str = "") -> ContinuationResult:
    """Extend a coefficient prefix to length d-1 with a fitted affine tail.

    The tail line is the least-squares fit to the last `fit_points` prefix
    entries; the residual offset of the final prefix point is damped linearly
    over `blend` indices so no jump is injected at the seam.

    Raises
    ------
    ValueError
        If the fitted slope is nonpositive (the continuation would violate
        asymptotically linear growth) or the tail would be nonpositive.
    """
    prefix = np.asarray(prefix, dtype=float)
    if prefix.size == 0:
        raise ValueError("prefix must be non-empty")
    if np.any(prefix <= 0):
        raise ValueError("prefix coefficients must be positive")
    if d - 1 < prefix.size:
        raise ValueError("d too small for the given prefix")
    m = min(fit_points, prefix.size)
    p = prefix.size
    idx = np.arange(p - m + 1, p + 1, dtype=float)
    slope, intercept = np.polyfit(idx, prefix[-m:], 1) if m > 1 else (0.0, prefix[-1])
    if slope <= 0:
        raise ValueError(f"fitted tail slope {slope:.4g} <= 0 violates linear growth")
    n_tail = np.arange(p + 1, d, dtype=float)
    tail = slope * n_tail + intercept
    residual = prefix[-1] - (slope * p + intercept)
    j = np.arange(1, tail.size + 1, dtype=float)
    tail += residual * np.clip(1.0 - j / (blend + 1.0), 0.0, None)
    if tail.size and tail.min() <= 0:
        raise ValueError("continuation produced nonpositive coefficients")
    return ContinuationResult(
        LanczosChain(np.concatenate([prefix, tail]), label=label),
        float(slope), float(intercept))


def q_ratio(chain_a: LanczosChain, chain_b: LanczosChain) -> float:
    """Ratio of summed squared coefficients (spectral-width proxy)."""
    return float(np.sum(chain_a.b**2) / np.sum(chain_b.b**2))
