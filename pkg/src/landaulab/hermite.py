"""Probabilists' Hermite polynomials and Gaussian-weighted spectral tools.

Everything is expressed against the standard Gaussian weight
m(x) = (2*pi)^(-d/2) exp(-|x|^2/2).  The stored coefficients are with
respect to the orthonormal tensor basis H_alpha = prod He_{alpha_i}/sqrt(alpha_i!),
so Parseval reads  sum a_alpha^2 = integral phi^2 m.

Two exact ladder identities drive the coefficient-space integrals:

    x He_n  = He_{n+1} + n He_{n-1}        (orthonormal: sqrt(n+1) up, sqrt(n) down)
    He_n'   = n He_{n-1}                   (orthonormal: sqrt(n) down)

``poincare_check`` evaluates the Gaussian-weighted moment bound

    int x_i^2 phi^2 m  <=  c1 * int (d_i phi)^2 m + c2 * int phi^2 m

for the constant pairs (c1, c2) = (2, 2) and (4, 2), plus the Poincare
inequality  int phi^2 m <= int |grad phi|^2 m  for zero-average phi.  The
(2, 2) pair is the commonly quoted one but is *false* in general: for
phi = H_0 + H_2 the left side is 6 + 2*sqrt(2) while the right side is 8.
The ladder expansion gives the valid pair (4, 2):

    ||x phi||^2 = ||up(phi) + down(phi)||^2 <= 2(||phi||^2 + ||d phi||^2) + 2||d phi||^2.

Reports carry the slack for both pairs so the failure is measurable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "hermite_eval", "hermite_orthonormal", "recurrence_check",
    "HermiteCoefficients", "hermite_transform", "inverse_transform",
    "multiply_by_coordinate", "differentiate", "PoincareReport", "poincare_check",
    "gauss_hermite_rule",
]


def hermite_eval(n: int, x):
    """He_n(x) by the three-term recurrence He_{n+1} = x He_n - n He_{n-1}."""
    if n < 0:
        raise ValueError("degree must be nonnegative")
    x = np.asarray(x, dtype=float)
    prev = np.ones_like(x)
    if n == 0:
        return prev
    cur = x.copy()
    for k in range(1, n):
        prev, cur = cur, x * cur - k * prev
    return cur


def hermite_orthonormal(n: int, x):
    """He_n(x) / sqrt(n!), orthonormal against the standard Gaussian."""
    return hermite_eval(n, x) / math.sqrt(math.factorial(n))


def recurrence_check(n: int, x) -> tuple[float, float]:
    """Residuals of the product and derivative identities at degree n.

    Returns (|x He_n - He_{n+1} - n He_{n-1}|, |He_n' - n He_{n-1}|) where
    the derivative is evaluated from the polynomial coefficients, not from
    the recurrence being tested.
    """
    if n < 1:
        raise ValueError("recurrence check needs degree >= 1")
    x = np.asarray(x, dtype=float)
    he_n = hermite_eval(n, x)
    he_np = hermite_eval(n + 1, x)
    he_nm = hermite_eval(n - 1, x)
    r1 = np.abs(x * he_n - he_np - n * he_nm)
    coeffs = np.zeros(n + 1)
    coeffs[n] = 1.0
    dcoeffs = np.polynomial.hermite_e.hermeder(coeffs)
    he_prime = np.polynomial.hermite_e.hermeval(x, dcoeffs)
    r2 = np.abs(he_prime - n * he_nm)
    return float(np.max(r1)), float(np.max(r2))


def gauss_hermite_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss rule for the standard Gaussian probability measure on R."""
    x, w = np.polynomial.hermite_e.hermegauss(order)
    return x, w / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class HermiteCoefficients:
    """Coefficients a_alpha over the orthonormal tensor Hermite basis."""

    dim: int
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (self.degree + 1,) * self.dim:
            raise ValueError(f"coefficient block of shape {c.shape} does not match "
                             f"degree {self.degree} in dimension {self.dim}")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite coefficients")
        object.__setattr__(self, "coeffs", c)

    def norm_squared(self) -> float:
        """Parseval: integral of phi^2 against the Gaussian weight."""
        return float(np.sum(self.coeffs ** 2))

    def average(self) -> float:
        """a_0 = integral of phi against the Gaussian weight."""
        return float(self.coeffs[(0,) * self.dim])


def hermite_transform(phi: Callable, dim: int, degree: int,
                      quad_order: int | None = None) -> HermiteCoefficients:
    """Project a function onto the orthonormal Hermite basis.

    ``phi`` is called with ``dim`` coordinate arrays (tensor Gauss-Hermite
    nodes, generated internally).  The rule must integrate phi * H_alpha
    exactly for polynomial phi of degree <= ``degree``, which needs a rule
    of polynomial exactness above 2*degree.
    """
    if degree < 1:
        raise ValueError("degree must be >= 1")
    if quad_order is None:
        quad_order = degree + 8
    if 2 * quad_order - 1 < 2 * degree:
        raise ValueError(
            f"quadrature order {quad_order} cannot resolve degree {degree}: "
            f"polynomial exactness {2 * quad_order - 1} <= {2 * degree}")
    x, w = gauss_hermite_rule(quad_order)
    basis = np.stack([hermite_orthonormal(k, x) for k in range(degree + 1)], axis=1)
    wb = basis * w[:, None]                       # (order, degree+1)
    mesh = np.meshgrid(*([x] * dim), indexing="ij")
    vals = np.asarray(phi(*mesh), dtype=float)
    if vals.shape != mesh[0].shape:
        vals = np.broadcast_to(vals, mesh[0].shape).astype(float)
    out = vals
    for _ in range(dim):
        # contract the leading quadrature axis, cycling axes
        out = np.tensordot(wb, out, axes=(0, 0))
        out = np.moveaxis(out, 0, dim - 1)
    return HermiteCoefficients(dim=dim, degree=degree, coeffs=out)


def inverse_transform(c: HermiteCoefficients, *points: np.ndarray) -> np.ndarray:
    """Evaluate the Hermite series at coordinate arrays (one per axis)."""
    if len(points) != c.dim:
        raise ValueError(f"need {c.dim} coordinate arrays")
    pts = np.broadcast_arrays(*[np.asarray(p, dtype=float) for p in points])
    out = np.zeros(pts[0].shape)
    basis = [np.stack([hermite_orthonormal(k, p) for k in range(c.degree + 1)], axis=-1)
             for p in pts]
    it = np.ndindex(*c.coeffs.shape)
    for alpha in it:
        a = c.coeffs[alpha]
        if a == 0.0:
            continue
        term = a
        for ax, k in enumerate(alpha):
            term = term * basis[ax][..., k]
        out += term
    return out


def multiply_by_coordinate(c: HermiteCoefficients, axis: int) -> HermiteCoefficients:
    """Coefficients of x_axis * phi (degree grows by one)."""
    N = c.degree
    new = np.zeros((N + 2,) * c.dim)
    src = np.moveaxis(c.coeffs, axis, 0)
    dst = np.moveaxis(new, axis, 0)
    sub = tuple(slice(0, N + 1) for _ in range(c.dim - 1))
    n = np.arange(N + 1, dtype=float)
    up = np.sqrt(n + 1.0).reshape((-1,) + (1,) * (c.dim - 1))
    down = np.sqrt(n).reshape((-1,) + (1,) * (c.dim - 1))
    dst[(slice(1, N + 2),) + sub] += up * src
    dst[(slice(0, N),) + sub] += (down * src)[1:]
    return HermiteCoefficients(dim=c.dim, degree=N + 1, coeffs=new)


def differentiate(c: HermiteCoefficients, axis: int) -> HermiteCoefficients:
    """Coefficients of d/dx_axis phi (same block size, top band zero)."""
    N = c.degree
    new = np.zeros_like(c.coeffs)
    src = np.moveaxis(c.coeffs, axis, 0)
    dst = np.moveaxis(new, axis, 0)
    n = np.arange(1, N + 1)
    dst[:N] = np.sqrt(n).reshape((-1,) + (1,) * (c.dim - 1)) * src[1:]
    return HermiteCoefficients(dim=c.dim, degree=N, coeffs=new)


@dataclass(frozen=True)
class PoincareReport:
    """Gaussian-weighted inequality check along one axis."""

    axis: int
    norm_sq: float             # ||phi||^2
    deriv_sq: float            # ||d_axis phi||^2
    grad_sq: float             # sum over axes of ||d_a phi||^2
    x_moment: float            # ||x_axis phi||^2
    average: float             # a_0
    slack_22: float            # 2*deriv + 2*norm - x_moment   (quoted constants)
    slack_42: float            # 4*deriv + 2*norm - x_moment   (valid constants)
    zero_average: bool
    poincare_slack: float | None   # grad_sq - norm_sq when zero_average

    def to_dict(self) -> dict:
        return {
            "axis": self.axis,
            "norm_sq": self.norm_sq,
            "deriv_sq": self.deriv_sq,
            "grad_sq": self.grad_sq,
            "x_moment": self.x_moment,
            "average": self.average,
            "slack_22": self.slack_22,
            "slack_42": self.slack_42,
            "zero_average": self.zero_average,
            "poincare_slack": self.poincare_slack,
        }


def poincare_check(c: HermiteCoefficients, axis: int,
                   zero_average_tol: float = 1e-12) -> PoincareReport:
    """Evaluate both Gaussian-weighted inequalities in coefficient space.

    All four integrals come from the exact ladder identities, so the report
    is quadrature-free.  ``slack_22`` may be negative (the (2, 2) constant
    pair does not hold in general); ``slack_42`` is provably nonnegative.
    """
    if not 0 <= axis < c.dim:
        raise ValueError(f"axis {axis} out of range for dimension {c.dim}")
    norm_sq = c.norm_squared()
    deriv = differentiate(c, axis)
    deriv_sq = deriv.norm_squared()
    grad_sq = sum(differentiate(c, a).norm_squared() for a in range(c.dim))

    # ||x phi||^2 via the exact ladder x H_n = sqrt(n+1) H_{n+1} + sqrt(n) H_{n-1}
    N = c.degree
    src = np.moveaxis(c.coeffs, axis, 0)
    shifted = np.zeros((N + 2,) + src.shape[1:])
    n = np.arange(N + 1, dtype=float)
    up = np.sqrt(n + 1.0).reshape((-1,) + (1,) * (c.dim - 1))
    down = np.sqrt(n).reshape((-1,) + (1,) * (c.dim - 1))
    shifted[1:] += up * src
    shifted[:N] += (down * src)[1:]
    x_moment = float(np.sum(shifted ** 2))

    avg = c.average()
    zero_avg = abs(avg) <= zero_average_tol
    return PoincareReport(
        axis=axis,
        norm_sq=norm_sq,
        deriv_sq=deriv_sq,
        grad_sq=grad_sq,
        x_moment=x_moment,
        average=avg,
        slack_22=2.0 * deriv_sq + 2.0 * norm_sq - x_moment,
        slack_42=4.0 * deriv_sq + 2.0 * norm_sq - x_moment,
        zero_average=zero_avg,
        poincare_slack=(grad_sq - norm_sq) if zero_avg else None,
    )
