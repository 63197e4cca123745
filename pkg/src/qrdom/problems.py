"""Manufactured-solution test problems on the unit square.

Pointwise functions take ``(x1, x2, s)`` where ``x1, x2`` are arrays and ``s``
is a :class:`~qrdom.directions.Direction`; exact moments take ``(x1, x2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .directions import Direction
from .transport import Medium, PhaseCoefficients

DirectionalFunction = Callable[[np.ndarray, np.ndarray, Direction], np.ndarray]
SpatialFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    bounds: tuple[float, float, float, float]
    medium: Medium
    phase: PhaseCoefficients
    source: DirectionalFunction  # kappa * I_b(x, s)
    inflow: DirectionalFunction
    exact_intensity: Optional[DirectionalFunction] = None
    exact_gradient: Optional[Callable] = None
    exact_moments: Optional[tuple[SpatialFunction, SpatialFunction, SpatialFunction]] = None

    @property
    def has_exact(self) -> bool:
        return self.exact_moments is not None

    def with_phase(self, a0: float, a1: float) -> "ProblemSpec":
        return replace(self, phase=PhaseCoefficients(a0, a1))


def problem1(kappa: float = 1.0, sigma_s: Optional[float] = None, a0: float = 1.0, a1: float = 0.5) -> ProblemSpec:
    """Direction-independent intensity 1 + sin(2 pi kappa x1) sin(2 pi sigma_s x2).

    ``sigma_s`` defaults to ``2 * kappa``.
    """
    if kappa <= 0:
        raise ValueError(f"problem1 needs kappa > 0, got {kappa}")
    ss = 2.0 * kappa if sigma_s is None else sigma_s
    if ss < 0:
        raise ValueError(f"problem1 needs sigma_s >= 0, got {ss}")
    wk, ws = 2.0 * math.pi * kappa, 2.0 * math.pi * ss

    def exact(x1, x2, s=None):
        return 1.0 + np.sin(wk * x1) * np.sin(ws * x2)

    def gradient(x1, x2, s=None):
        return (
            wk * np.cos(wk * x1) * np.sin(ws * x2),
            ws * np.sin(wk * x1) * np.cos(ws * x2),
        )

    def source(x1, x2, s):
        return (
            wk * s.s1 * np.cos(wk * x1) * np.sin(ws * x2)
            + ws * s.s2 * np.sin(wk * x1) * np.cos(ws * x2)
            + kappa * exact(x1, x2)
        )

    def zero(x1, x2):
        return np.zeros(np.broadcast(x1, x2).shape)

    def psi0(x1, x2):
        return exact(x1, x2)

    return ProblemSpec(
        name="problem1",
        bounds=(0.0, 1.0, 0.0, 1.0),
        medium=Medium(kappa, ss),
        phase=PhaseCoefficients(a0, a1),
        source=source,
        inflow=exact,
        exact_intensity=exact,
        exact_gradient=gradient,
        exact_moments=(psi0, zero, zero),
    )


def problem2(kappa: float = 0.1, sigma_s: float = 0.9, a0: float = 1.0, a1: float = 0.5) -> ProblemSpec:
    """Direction-dependent intensity (1 + s1) exp(-kappa x1 - sigma_s x2)."""
    if kappa <= 0 or sigma_s <= 0:
        raise ValueError(f"problem2 needs kappa > 0 and sigma_s > 0, got {kappa}, {sigma_s}")

    def decay(x1, x2):
        return np.exp(-kappa * x1 - sigma_s * x2)

    def exact(x1, x2, s):
        return (1.0 + s.s1) * decay(x1, x2)

    def gradient(x1, x2, s):
        e = (1.0 + s.s1) * decay(x1, x2)
        return -kappa * e, -sigma_s * e

    def source(x1, x2, s):
        s1, s2 = s.s1, s.s2
        return ((kappa - kappa * s1 - sigma_s * s2) * (1.0 + s1) + 5.0 / 6.0 * sigma_s * s1) * decay(x1, x2)

    def psi1(x1, x2):
        return decay(x1, x2) / 3.0

    def psi2(x1, x2):
        return np.zeros(np.broadcast(x1, x2).shape)

    return ProblemSpec(
        name="problem2",
        bounds=(0.0, 1.0, 0.0, 1.0),
        medium=Medium(kappa, sigma_s),
        phase=PhaseCoefficients(a0, a1),
        source=source,
        inflow=exact,
        exact_intensity=exact,
        exact_gradient=gradient,
        exact_moments=(decay, psi1, psi2),
    )


PROBLEMS = {"problem1": problem1, "problem2": problem2}


def get_problem(name: str, **overrides) -> ProblemSpec:
    """Look up a problem by name; ``None``-valued overrides are ignored."""
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; valid options: {', '.join(sorted(PROBLEMS))}") from None
    return factory(**{k: v for k, v in overrides.items() if v is not None})


def residual_check(spec: ProblemSpec, d: Direction, x: tuple[float, float]) -> float:
    """Pointwise residual of the transport equation for the exact solution."""
    if spec.exact_intensity is None or spec.exact_gradient is None or spec.exact_moments is None:
        raise ValueError(f"{spec.name} carries no exact solution")
    x1, x2 = np.asarray(x[0], dtype=float), np.asarray(x[1], dtype=float)
    g1, g2 = spec.exact_gradient(x1, x2, d)
    m = spec.medium
    p0, p1, p2 = (f(x1, x2) for f in spec.exact_moments)
    scattered = spec.phase.a0 * p0 + spec.phase.a1 * (d.s1 * p1 + d.s2 * p2)
    res = (
        d.s1 * g1
        + d.s2 * g2
        + m.sigma_t * spec.exact_intensity(x1, x2, d)
        - m.sigma_s * scattered
        - spec.source(x1, x2, d)
    )
    return float(res) if np.ndim(res) == 0 else res


def exact_functional(f: SpatialFunction, bounds=(0.0, 1.0, 0.0, 1.0), cells: int = 64, order: int = 8) -> float:
    """Domain mean of ``f`` by composite tensor Gauss quadrature."""
    a, b, c, d = bounds
    g, w = np.polynomial.legendre.leggauss(order)
    g, w = 0.5 * (g + 1.0), 0.5 * w
    t = (np.arange(cells)[:, None] + g[None, :]).ravel() / cells
    wt = np.tile(w, cells) / cells
    x1, x2 = np.meshgrid(a + (b - a) * t, c + (d - c) * t, indexing="xy")
    return float(np.einsum("i,j,ij->", wt, wt, f(x1, x2)))
