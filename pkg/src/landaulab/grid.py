"""Truncated velocity-space grids, densities, moments, and normalization.

The velocity domain is the cube [-L, L]^d (d = 2 or 3) sampled on a uniform
tensor grid with trapezoid quadrature weights.  Densities are nonnegative
node values with cached moments; initial data is normalized to the standing
assumptions

    mass = 1,   mean = 0,   second-moment trace = d,   P diagonal,

by an affine change of variables applied to the analytic description of the
density, so the normalized moments hold to quadrature accuracy rather than
interpolation accuracy.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "VelocityGrid", "Density", "MomentMatrix", "Moments",
    "MaxwellianSpec", "GaussianSpec", "MixtureSpec", "TabulatedSpec",
    "make_grid", "discretize", "moments", "normalize_to_standard", "lp_norm",
    "maxwellian_values", "save_snapshot", "load_snapshot",
]


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VelocityGrid:
    """Uniform tensor grid on the cube [-extent, extent]^dim."""

    dim: int
    extent: float
    npts: int

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.dim}")
        if self.npts < 4:
            raise ValueError(f"need at least 4 points per axis, got {self.npts}")
        if not self.extent > 0:
            raise ValueError(f"extent must be positive, got {self.extent}")

    @property
    def h(self) -> float:
        return 2.0 * self.extent / (self.npts - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.npts,) * self.dim

    @property
    def size(self) -> int:
        return self.npts ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        x = np.linspace(-self.extent, self.extent, self.npts)
        x.flags.writeable = False
        return x

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Full coordinate fields v_1 .. v_d, each of shape ``self.shape``."""
        fields = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        for f in fields:
            f.flags.writeable = False
        return tuple(fields)

    @cached_property
    def squared_radius(self) -> np.ndarray:
        r2 = sum(c * c for c in self.coords)
        r2.flags.writeable = False
        return r2

    @cached_property
    def quad_weights(self) -> np.ndarray:
        """Trapezoid weights: h^d in the interior, halved per boundary face."""
        w1 = np.full(self.npts, self.h)
        w1[0] = w1[-1] = 0.5 * self.h
        w = w1
        for _ in range(self.dim - 1):
            w = np.multiply.outer(w, w1)
        w.flags.writeable = False
        return w

    def points(self) -> np.ndarray:
        """All nodes as an (n^d, d) array, last axis fastest."""
        return np.stack([c.ravel() for c in self.coords], axis=-1)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.quad_weights * values))


def make_grid(dim: int, extent: float, npts: int) -> VelocityGrid:
    """Build a velocity grid; see :class:`VelocityGrid` for the invariants."""
    return VelocityGrid(dim=dim, extent=float(extent), npts=int(npts))


def maxwellian_values(grid: VelocityGrid) -> np.ndarray:
    """Standard Maxwellian (2*pi)^(-d/2) exp(-|v|^2/2) sampled on the grid."""
    return (2.0 * np.pi) ** (-0.5 * grid.dim) * np.exp(-0.5 * grid.squared_radius)


# ---------------------------------------------------------------------------
# analytic density descriptions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MaxwellianSpec:
    """The standard Gaussian equilibrium."""

    def __call__(self, grid: VelocityGrid) -> np.ndarray:
        return maxwellian_values(grid)

    def total_mass(self) -> float:
        return 1.0


@dataclass(frozen=True)
class GaussianSpec:
    """Gaussian with given mean and covariance (diagonal sequence or matrix)."""

    cov: tuple
    mean: tuple = None  # type: ignore[assignment]
    weight: float = 1.0

    def __post_init__(self):
        cov = np.atleast_1d(np.asarray(self.cov, dtype=float))
        if cov.ndim == 1:
            cov = np.diag(cov)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError("covariance must be a vector of variances or a square matrix")
        evals = np.linalg.eigvalsh(cov)
        if evals.min() <= 0:
            raise ValueError(f"covariance must be positive definite, eigenvalues {evals}")
        mean = np.zeros(cov.shape[0]) if self.mean is None else np.asarray(self.mean, dtype=float)
        object.__setattr__(self, "cov", tuple(map(tuple, cov)))
        object.__setattr__(self, "mean", tuple(mean))

    def _cov_matrix(self) -> np.ndarray:
        return np.asarray(self.cov, dtype=float)

    def __call__(self, grid: VelocityGrid) -> np.ndarray:
        cov = self._cov_matrix()
        if cov.shape[0] != grid.dim:
            raise ValueError("covariance dimension does not match grid")
        inv = np.linalg.inv(cov)
        det = np.linalg.det(cov)
        mu = np.asarray(self.mean)
        diffs = [c - mu[a] for a, c in enumerate(grid.coords)]
        quad = sum(inv[a, b] * diffs[a] * diffs[b] for a in range(grid.dim) for b in range(grid.dim))
        norm = self.weight / np.sqrt((2.0 * np.pi) ** grid.dim * det)
        return norm * np.exp(-0.5 * quad)

    def total_mass(self) -> float:
        return self.weight


@dataclass(frozen=True)
class MixtureSpec:
    """Finite Gaussian mixture (e.g. a two-Gaussian bump pair)."""

    components: tuple[GaussianSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise ValueError("mixture needs at least one component")

    def __call__(self, grid: VelocityGrid) -> np.ndarray:
        out = self.components[0](grid)
        for c in self.components[1:]:
            out = out + c(grid)
        return out

    def total_mass(self) -> float:
        return sum(c.total_mass() for c in self.components)


@dataclass(frozen=True)
class TabulatedSpec:
    """User-supplied node values; no analytic form available."""

    values: np.ndarray

    def __call__(self, grid: VelocityGrid) -> np.ndarray:
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != grid.shape:
            raise ValueError(f"tabulated values of shape {vals.shape} do not fit grid {grid.shape}")
        return vals.copy()

    def total_mass(self) -> float:
        raise NotImplementedError


DensitySpec = Callable[[VelocityGrid], np.ndarray]


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentMatrix:
    """Second-moment matrix P_ij = integral of v_i v_j f."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def symmetry_error(self) -> float:
        return float(np.abs(self.matrix - self.matrix.T).max())

    def is_positive_semidefinite(self, tol: float = 1e-10) -> bool:
        return bool(self.eigenvalues.min() >= -tol)

    def off_diagonal_max(self) -> float:
        off = self.matrix - np.diag(np.diag(self.matrix))
        return float(np.abs(off).max())


@dataclass(frozen=True)
class Moments:
    mass: float
    mean: np.ndarray
    matrix: MomentMatrix

    @property
    def energy(self) -> float:
        return self.matrix.trace


@dataclass(frozen=True)
class Density:
    """Nonnegative density values on a velocity grid.

    Negative input values are clamped to zero and the clamped quadrature
    mass is recorded in ``clamped_mass`` (explicit policy instead of silent
    NaN propagation downstream).
    """

    grid: VelocityGrid
    values: np.ndarray
    spec: DensitySpec | None = field(default=None, compare=False)
    clamped_mass: float = field(default=0.0, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values of shape {vals.shape} do not fit grid {self.grid.shape}")
        clamped = 0.0
        if np.any(vals < 0):
            neg = vals < 0
            clamped = -float(np.sum((vals * self.grid.quad_weights)[neg]))
            vals = np.where(neg, 0.0, vals)
        vals = np.ascontiguousarray(vals)
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "clamped_mass", self.clamped_mass + clamped)

    @cached_property
    def moments(self) -> Moments:
        return moments(self)

    @property
    def mass(self) -> float:
        return self.moments.mass

    @property
    def mean(self) -> np.ndarray:
        return self.moments.mean

    @property
    def moment_matrix(self) -> MomentMatrix:
        return self.moments.matrix

    @property
    def energy(self) -> float:
        return self.moments.energy

    def with_values(self, values: np.ndarray, keep_spec: bool = False) -> "Density":
        return Density(grid=self.grid, values=values, spec=self.spec if keep_spec else None)

    def integrate(self, integrand: np.ndarray) -> float:
        return self.grid.integrate(integrand)


def moments(f: Density) -> Moments:
    """Quadrature mass, mean, second-moment matrix (energy = its trace)."""
    g = f.grid
    w = g.quad_weights * f.values
    mass = float(np.sum(w))
    first = np.array([np.sum(w * c) for c in g.coords])
    mean = first / mass if mass != 0.0 else np.zeros(g.dim)
    P = np.empty((g.dim, g.dim))
    for a in range(g.dim):
        for b in range(a, g.dim):
            P[a, b] = P[b, a] = np.sum(w * g.coords[a] * g.coords[b])
    return Moments(mass=mass, mean=mean, matrix=MomentMatrix(P))


def discretize(spec: DensitySpec, grid: VelocityGrid, standardize: bool = False,
               min_domain_mass: float = 0.99) -> Density:
    """Sample an analytic density description on the grid.

    Raises if the quadrature mass captured by the truncated domain falls
    below ``min_domain_mass`` of the description's total mass (the domain
    extent is too small for the requested tails).
    """
    values = spec(grid)
    if np.any(~np.isfinite(values)):
        raise ValueError("density description produced non-finite values")
    f = Density(grid=grid, values=values, spec=spec)
    try:
        total = spec.total_mass()  # type: ignore[union-attr]
    except (AttributeError, NotImplementedError):
        total = None
    if total is not None:
        if f.mass < min_domain_mass * total:
            raise ValueError(
                f"domain captures only {f.mass / total:.4f} of the density mass; "
                f"increase the grid extent")
    if standardize:
        f = normalize_to_standard(f)
    return f


# ---------------------------------------------------------------------------
# normalization to the standing assumptions
# ---------------------------------------------------------------------------

def _affine_spec(spec, scale: float, rot: np.ndarray, shift: np.ndarray, wscale: float):
    """Pushforward of an analytic spec under v -> scale * rot @ (v - shift)."""
    if isinstance(spec, MaxwellianSpec):
        d = rot.shape[0]
        spec = GaussianSpec(cov=tuple(map(tuple, np.eye(d))), mean=(0.0,) * d)
    if isinstance(spec, GaussianSpec):
        cov = spec._cov_matrix()
        mu = np.asarray(spec.mean)
        new_cov = scale ** 2 * rot @ cov @ rot.T
        new_mu = scale * rot @ (mu - shift)
        return GaussianSpec(cov=tuple(map(tuple, new_cov)), mean=tuple(new_mu),
                            weight=spec.weight * wscale)
    if isinstance(spec, MixtureSpec):
        return MixtureSpec(tuple(_affine_spec(c, scale, rot, shift, wscale)
                                 for c in spec.components))
    raise TypeError(f"cannot transform spec of type {type(spec).__name__}")


def _ordered_eigh(P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    evals, evecs = np.linalg.eigh(P)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    for k in range(evecs.shape[1]):      # deterministic sign convention
        j = np.argmax(np.abs(evecs[:, k]))
        if evecs[j, k] < 0:
            evecs[:, k] = -evecs[:, k]
    return evals, evecs


def normalize_to_standard(f: Density, max_iter: int = 6) -> Density:
    """Rotate (diagonalizing P), recenter and rescale to mass 1, mean 0, energy d.

    The affine map is applied to the analytic description of the density and
    the grid is resampled, so the output meets the tolerances below at
    quadrature accuracy.  Tabulated densities without an analytic form are
    accepted only if they are already centered and diagonal; only the exact
    mass rescaling is applied to them.
    """
    d = f.grid.dim
    if f.mass <= 0:
        raise ValueError("cannot normalize a density with nonpositive mass")

    if f.spec is None or isinstance(f.spec, TabulatedSpec):
        mom = f.moments
        central = mom.matrix.matrix / mom.mass - np.outer(mom.mean, mom.mean)
        off = np.abs(central - np.diag(np.diag(central))).max()
        if (np.abs(mom.mean).max() > 1e-9 or off > 1e-8
                or abs(np.trace(central) - d) > 1e-6):
            raise ValueError(
                "tabulated density is not already standard up to mass; an "
                "analytic description is required for rotation/rescaling")
        return f.with_values(f.values / mom.mass)

    spec = f.spec
    cur = f
    for _ in range(max_iter):
        mom = cur.moments
        mean = mom.mean
        central = mom.matrix.matrix / mom.mass - np.outer(mean, mean)
        off = np.abs(central - np.diag(np.diag(central))).max()
        if off <= 1e-12 * np.abs(np.diag(central)).max():
            # already diagonal: keep the caller's axis order, no rotation
            evals = np.diag(central).copy()
            rot = np.eye(d)
        else:
            evals, evecs = _ordered_eigh(central)
            rot = evecs.T
        if evals.min() <= 1e-14:
            raise ValueError(f"singular second-moment matrix, eigenvalues {evals}")
        scale = np.sqrt(d / np.sum(evals))
        spec = _affine_spec(spec, scale, rot, mean, 1.0 / mom.mass)
        cur = Density(grid=f.grid, values=spec(f.grid), spec=spec)
        mom = cur.moments
        if (abs(mom.mass - 1.0) < 1e-12
                and np.abs(mom.mean).max() < 1e-12
                and abs(mom.energy - d) < 1e-10
                and mom.matrix.off_diagonal_max() < 1e-10):
            break

    mom = cur.moments
    if abs(mom.mass - 1.0) > 1e-8:
        raise ValueError(f"normalization failed: mass {mom.mass}")
    if abs(mom.energy - d) > 1e-6:
        raise ValueError(f"normalization failed: energy {mom.energy}")
    if mom.matrix.off_diagonal_max() > 1e-8:
        raise ValueError(f"normalization failed: off-diagonal {mom.matrix.off_diagonal_max()}")
    return cur


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def lp_norm(f: Density, p: float) -> float:
    """Quadrature L^p norm of the density; p = inf gives the max node value."""
    if p != np.inf and p < 1:
        raise ValueError(f"p must be >= 1 or inf, got {p}")
    if p == np.inf:
        return float(f.values.max())
    return float(np.sum(f.grid.quad_weights * f.values ** p) ** (1.0 / p))


# ---------------------------------------------------------------------------
# snapshot files
# ---------------------------------------------------------------------------

_BIN_HEADER = struct.Struct("<iidd")   # dim, npts, extent, time


def save_snapshot(f: Density, path, time: float = 0.0, binary: bool = False) -> None:
    """Write a density snapshot.

    Text format: header line ``d n L time`` followed by the n^d node values
    in row-major order (last axis fastest), whitespace-separated.  Binary
    format: the same header packed as little-endian int32/int32/float64/
    float64, then the values as little-endian float64 in the same order.
    """
    g = f.grid
    if binary:
        with open(path, "wb") as fh:
            fh.write(_BIN_HEADER.pack(g.dim, g.npts, g.extent, time))
            fh.write(f.values.astype("<f8").tobytes(order="C"))
        return
    with open(path, "w") as fh:
        fh.write(f"{g.dim} {g.npts} {float(g.extent):.17g} {float(time):.17g}\n")
        flat = f.values.ravel(order="C")
        for i in range(0, flat.size, 6):
            fh.write(" ".join(format(float(x), ".17g") for x in flat[i:i + 6]) + "\n")


def load_snapshot(path, binary: bool = False) -> tuple[Density, float]:
    """Read a snapshot written by :func:`save_snapshot`."""
    if binary:
        with open(path, "rb") as fh:
            dim, npts, extent, time = _BIN_HEADER.unpack(fh.read(_BIN_HEADER.size))
            vals = np.frombuffer(fh.read(), dtype="<f8").reshape((npts,) * dim)
    else:
        with open(path) as fh:
            head = fh.readline().split()
            dim, npts, extent, time = int(head[0]), int(head[1]), float(head[2]), float(head[3])
            vals = np.array(fh.read().split(), dtype=float).reshape((npts,) * dim)
    grid = make_grid(dim, extent, npts)
    return Density(grid=grid, values=vals), time
