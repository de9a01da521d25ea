"""Band-limited random alterations of the chain coefficients.

The noise is a truncated random Fourier series over the chain index: the
cutoff keeps a minimal correlation length in the perturbed coefficients,
and lifting it (cutoff = d) reproduces the uncorrelated white-noise case
that localizes the dynamics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .chain import LanczosChain

__all__ = [
    "PerturbationDraw",
    "PerturbedChain",
    "ScalingReport",
    "draw_noise",
    "apply_draw",
    "scaling_check",
    "POSITIVITY_FLOOR",
]

POSITIVITY_FLOOR = 1e-6


@dataclass(frozen=True)
class PerturbationDraw:
    """One realization of the truncated Fourier noise v_n, n = 1..d-1."""

    d: int
    n_f: int
    seed: int
    x: np.ndarray
    y: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        for name in ("x", "y", "v"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if not 1 <= self.n_f <= self.d:
            raise ValueError("require 1 <= n_f <= d")
        if self.x.size != self.n_f or self.y.size != self.n_f:
            raise ValueError("amplitude arrays must have n_f entries")
        if self.v.size != self.d - 1:
            raise ValueError("v must cover n = 1..d-1")

    @property
    def amplitude_norm(self) -> float:
        """sum(x^2 + y^2); unity by construction."""
        return float(np.sum(self.x**2) + np.sum(self.y**2))

    @property
    def v0(self) -> float:
        """Value of the underlying periodic signal at n = 0 (= sum of x_k)."""
        return float(np.sum(self.x))

    @property
    def sum_v2(self) -> float:
        return float(np.sum(self.v**2))

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({"d": self.d, "n_f": self.n_f, "seed": self.seed,
                       "x": [float(a) for a in self.x],
                       "y": [float(a) for a in self.y]}, fh)

    @classmethod
    def from_json(cls, path) -> "PerturbationDraw":
        with open(path) as fh:
            data = json.load(fh)
        x = np.array(data["x"], dtype=float)
        y = np.array(data["y"], dtype=float)
        v = _assemble(data["d"], data["n_f"], x, y)
        return cls(data["d"], data["n_f"], data["seed"], x, y, v)


def _assemble(d: int, n_f: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """v_n = sum_k x_k cos(2pi n k/d) + y_k sin(2pi n k/d) for n = 1..d-1.

    Evaluated as the real part of an inverse FFT of x_k - i y_k placed at
    bins k mod d (the k = d term of the white-noise limit aliases to the
    constant bin, whose sine part never enters v).
    """
    coeff = np.zeros(d, dtype=complex)
    np.add.at(coeff, np.arange(1, n_f + 1) % d, x - 1j * y)
    full = d * np.real(np.fft.ifft(coeff))
    return full[1:].copy()


def draw_noise(d: int, n_f: int, seed) -> PerturbationDraw:
    """Draw Gaussian Fourier amplitudes, normalize them jointly, assemble v.

    Deterministic for a fixed seed (numpy PCG64 stream); the seed may be an
    int or anything `numpy.random.default_rng` accepts.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    if not 1 <= n_f <= d:
        raise ValueError("require 1 <= n_f <= d")
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n_f)
    y = rng.standard_normal(n_f)
    scale = np.sqrt(np.sum(x**2) + np.sum(y**2))
    x /= scale
    y /= scale
    v = _assemble(d, n_f, x, y)
    seed_int = int(seed) if np.isscalar(seed) and not isinstance(seed, bool) else -1
    return PerturbationDraw(d, n_f, seed_int, x, y, v)


@dataclass(frozen=True)
class PerturbedChain:
    """Coefficients after adding strength*v, floored at the positivity limit."""

    base: LanczosChain
    strength: float
    draw: PerturbationDraw
    chain: LanczosChain
    clamp_count: int

    @property
    def invalid(self) -> bool:
        """True when clamping dominated the draw (>1% of entries floored)."""
        return self.clamp_count > 0.01 * self.base.d


def apply_draw(base: LanczosChain, strength: float, draw: PerturbationDraw,
               floor: float = POSITIVITY_FLOOR) -> PerturbedChain:
    """Elementwise b + strength*v with clamping below `floor`.

    Clamped entries are counted rather than redrawn: resampling would bias
    the ensemble, while the count flags draws that overwhelm the chain.
    """
    if strength < 0:
        raise ValueError("perturbation strength must be nonnegative")
    if draw.d != base.d:
        raise ValueError(f"draw is for d={draw.d}, chain has d={base.d}")
    b = base.b + strength * draw.v
    clamped = b < floor
    if clamped.any():
        b = np.where(clamped, floor, b)
    label = f"{base.label}~{strength:g}" if base.label else f"~{strength:g}"
    return PerturbedChain(base, float(strength), draw,
                          LanczosChain(b, label=label), int(clamped.sum()))


class ScalingReport(NamedTuple):
    relative_cross_term: float
    cross_term: float


def scaling_check(base: LanczosChain, perturbed: PerturbedChain) -> ScalingReport:
    """Decompose sum(b~^2) - sum(b^2) against the lambda^2 * sum(v^2) law.

    Returns the cross-term 2*lambda*sum(b v) and its size relative to the
    quadratic term; the additive noise design makes the relative part small
    for a single draw and zero on ensemble average.
    """
    lam = perturbed.strength
    sum_b2 = float(np.sum(base.b**2))
    sum_bt2 = float(np.sum(perturbed.chain.b**2))
    quad = lam**2 * perturbed.draw.sum_v2
    cross = 2.0 * lam * float(np.sum(base.b * perturbed.draw.v))
    rel = 0.0 if quad == 0.0 else (sum_bt2 - sum_b2 - quad) / quad
    return ScalingReport(rel, cross)
