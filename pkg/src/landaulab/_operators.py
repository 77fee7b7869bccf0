"""Shared discrete gradient / divergence stencils on uniform tensor grids.

``grad`` is the centered second-order difference with second-order one-sided
rows at the domain boundary.  That choice makes the discrete gradient exact
on the polynomials 1, v_a and |v|^2 at *every* node, which is what the
conservative solvers rely on: divergence is defined as minus the transpose
of ``grad`` (summation by parts with no boundary term), so discrete mass,
momentum and kinetic-energy budgets close to roundoff whenever the flux has
the right pointwise algebra.

All functions operate along one axis of a d-dimensional array and need at
least 7 points on that axis.
"""

from __future__ import annotations

import numpy as np


class CflError(RuntimeError):
    """Requested time step violates the explicit stability bound."""


def _sl(ndim: int, axis: int, lo, hi) -> tuple:
    s = [slice(None)] * ndim
    s[axis] = slice(lo, hi)
    return tuple(s)


def grad(f: np.ndarray, h: float, axis: int, boundary: str = "second") -> np.ndarray:
    """Centered gradient along ``axis`` with one-sided rows at the two ends.

    ``boundary="second"`` uses the second-order one-sided stencil, which is
    exact on quadratics everywhere (and hence on 1, v, |v|^2: the pairwise
    collision solver needs that for roundoff-level conservation).
    ``boundary="first"`` uses the first-order stencil, whose smaller row
    norm keeps large diffusion coefficients inside the RK4 stability region
    at the usual CFL factor; the reduced solver uses it and restores the
    invariants by projection instead.
    """
    if f.shape[axis] < 7:
        raise ValueError("grad/div stencils need at least 7 points per axis")
    S = lambda lo, hi: _sl(f.ndim, axis, lo, hi)
    out = np.empty_like(f)
    out[S(1, -1)] = (f[S(2, None)] - f[S(None, -2)]) / (2.0 * h)
    if boundary == "second":
        out[S(0, 1)] = (-3.0 * f[S(0, 1)] + 4.0 * f[S(1, 2)] - f[S(2, 3)]) / (2.0 * h)
        out[S(-1, None)] = (3.0 * f[S(-1, None)] - 4.0 * f[S(-2, -1)] + f[S(-3, -2)]) / (2.0 * h)
    elif boundary == "first":
        out[S(0, 1)] = (f[S(1, 2)] - f[S(0, 1)]) / h
        out[S(-1, None)] = (f[S(-1, None)] - f[S(-2, -1)]) / h
    else:
        raise ValueError(f"unknown boundary variant {boundary!r}")
    return out


def div_adjoint(u: np.ndarray, h: float, axis: int, boundary: str = "second") -> np.ndarray:
    """Minus the transpose of :func:`grad` (the conservative divergence).

    Satisfies sum(grad(f) * u) == -sum(f * div_adjoint(u)) exactly for the
    matching ``boundary`` variant, hence summing ``div_adjoint`` of any flux
    over the grid gives identically zero.
    """
    if u.shape[axis] < 7:
        raise ValueError("grad/div stencils need at least 7 points per axis")
    S = lambda lo, hi: _sl(u.ndim, axis, lo, hi)
    out = np.empty_like(u)
    if boundary == "second":
        out[S(3, -3)] = (u[S(4, -2)] - u[S(2, -4)]) / (2.0 * h)
        out[S(0, 1)] = (3.0 * u[S(0, 1)] + u[S(1, 2)]) / (2.0 * h)
        out[S(1, 2)] = (-4.0 * u[S(0, 1)] + u[S(2, 3)]) / (2.0 * h)
        out[S(2, 3)] = (u[S(0, 1)] - u[S(1, 2)] + u[S(3, 4)]) / (2.0 * h)
        out[S(-3, -2)] = (-u[S(-4, -3)] + u[S(-2, -1)] - u[S(-1, None)]) / (2.0 * h)
        out[S(-2, -1)] = (-u[S(-3, -2)] + 4.0 * u[S(-1, None)]) / (2.0 * h)
        out[S(-1, None)] = (-u[S(-2, -1)] - 3.0 * u[S(-1, None)]) / (2.0 * h)
    elif boundary == "first":
        out[S(2, -2)] = (u[S(3, -1)] - u[S(1, -3)]) / (2.0 * h)
        out[S(0, 1)] = u[S(0, 1)] / h + u[S(1, 2)] / (2.0 * h)
        out[S(1, 2)] = -u[S(0, 1)] / h + u[S(2, 3)] / (2.0 * h)
        out[S(-2, -1)] = -u[S(-3, -2)] / (2.0 * h) + u[S(-1, None)] / h
        out[S(-1, None)] = -u[S(-2, -1)] / (2.0 * h) - u[S(-1, None)] / h
    else:
        raise ValueError(f"unknown boundary variant {boundary!r}")
    return out


def gradient_fields(f: np.ndarray, h: float, boundary: str = "second") -> list[np.ndarray]:
    """Gradient along every axis."""
    return [grad(f, h, ax, boundary) for ax in range(f.ndim)]


class MomentProjector:
    """Minimal multiplicative correction restoring mass/momentum/energy.

    Solvers account conservation in the uniform inner product (cell volume
    h^d per node).  After a step the correction  f <- f * (c0 + c.v + c4 |v|^2)
    is solved for so that the d+2 collision invariants return exactly to
    their reference values; the correction is f-weighted, so it vanishes
    where the density vanishes and the coefficients stay at roundoff size
    for a conservative flux.
    """

    def __init__(self, grid):
        self.fields = [np.ones(grid.shape)] + list(grid.coords) + [grid.squared_radius]
        self.cell = grid.cell_volume

    def invariants(self, values: np.ndarray) -> np.ndarray:
        return np.array([float(np.sum(b * values)) * self.cell for b in self.fields])

    def project(self, values: np.ndarray, reference: np.ndarray) -> np.ndarray:
        delta = reference - self.invariants(values)
        k = len(self.fields)
        gram = np.empty((k, k))
        for i in range(k):
            for j in range(i, k):
                gram[i, j] = gram[j, i] = float(np.sum(self.fields[i] * self.fields[j] * values)) * self.cell
        coef = np.linalg.solve(gram, delta)
        factor = 1.0 + sum(c * b for c, b in zip(coef, self.fields))
        return values * factor
