"""Spacelike hyperplanes: parameter domain, embeddings and quadrature grids.

A hyperplane is parameterized by a base point y in R^4, a tilt alpha in R^3
with |alpha| < 1 and a rotation phi in R^3 with |phi| < pi.  The embedding is

    sigma(u) = (y0 + alpha . R_phi u,  yvec + R_phi u),   u in R^3,

with R_phi the right-hand-rule rotation by |phi| about phi/|phi|.  Grids are
uniform Cartesian lattices in u with trapezoidal quadrature weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from diraclab.algebra import _rotation_matrix3


class HyperplaneError(ValueError):
    """Raised for parameters outside the admissible domain."""


@dataclass(frozen=True)
class HyperplaneParams:
    """(y, alpha, phi) with |alpha| < 1 and |phi| < pi, both strict."""

    y: np.ndarray = field(default_factory=lambda: np.zeros(4))
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(3))
    phi: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        a = np.asarray(self.alpha, dtype=float)
        p = np.asarray(self.phi, dtype=float)
        if y.shape != (4,) or a.shape != (3,) or p.shape != (3,):
            raise HyperplaneError("y must be a 4-vector, alpha and phi 3-vectors")
        if np.linalg.norm(a) >= 1.0:
            raise HyperplaneError(f"|alpha| = {np.linalg.norm(a):.6g} must be < 1")
        if np.linalg.norm(p) >= np.pi:
            raise HyperplaneError(f"|phi| = {np.linalg.norm(p):.6g} must be < pi")
        for name, v in (("y", y), ("alpha", a), ("phi", p)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @staticmethod
    def lab_plane(t: float = 0.0, origin=None) -> "HyperplaneParams":
        """Constant-time plane x0 = t (plus an optional spatial base point)."""
        y = np.zeros(4)
        y[0] = t
        if origin is not None:
            y[1:] = np.asarray(origin, dtype=float)
        return HyperplaneParams(y=y)

    @property
    def rotation3(self) -> np.ndarray:
        n = np.linalg.norm(self.phi)
        if n == 0.0:
            return np.eye(3)
        return _rotation_matrix3(self.phi / n, n)

    @property
    def is_lab_plane(self) -> bool:
        return bool(np.all(self.alpha == 0.0) and np.all(self.phi == 0.0))


def sigma(params: HyperplaneParams, u) -> np.ndarray:
    """Embed parameter points u (..., 3) into spacetime (..., 4)."""
    u = np.asarray(u, dtype=float)
    ru = u @ params.rotation3.T
    out = np.empty(u.shape[:-1] + (4,))
    out[..., 0] = params.y[0] + ru @ params.alpha
    out[..., 1:] = params.y[1:] + ru
    return out


def surface_element(params: HyperplaneParams) -> np.ndarray:
    """The covector (1, -alpha) multiplying du in flux integrals."""
    return np.concatenate(([1.0], -params.alpha))


@dataclass(frozen=True)
class HyperplaneGrid:
    """Uniform N^3 lattice over [-R, R]^3 in u with trapezoid weights.

    Points are ordered C-style over (i, j, k) -> (u1[i], u1[j], u1[k]); that
    ordering is part of the serialization contract.
    """

    params: HyperplaneParams
    radius: float
    n: int
    axis: np.ndarray
    axis_weights: np.ndarray

    @property
    def spacing(self) -> float:
        return float(self.axis[1] - self.axis[0])

    @property
    def npoints(self) -> int:
        return self.n ** 3

    @property
    def shape(self):
        return (self.n, self.n, self.n)

    def points_u(self) -> np.ndarray:
        """Lattice points in u coordinates, shape (N, N, N, 3)."""
        xi, yj, zk = np.meshgrid(self.axis, self.axis, self.axis, indexing="ij")
        return np.stack([xi, yj, zk], axis=-1)

    def points_spacetime(self) -> np.ndarray:
        return sigma(self.params, self.points_u())

    def weights(self) -> np.ndarray:
        """Quadrature weights, shape (N, N, N)."""
        w = self.axis_weights
        return w[:, None, None] * w[None, :, None] * w[None, None, :]

    def boundary_mask(self) -> np.ndarray:
        """Outermost lattice shell, the tail-mass monitor region."""
        m = np.zeros(self.shape, dtype=bool)
        m[0, :, :] = m[-1, :, :] = True
        m[:, 0, :] = m[:, -1, :] = True
        m[:, :, 0] = m[:, :, -1] = True
        return m

    def with_params(self, params: HyperplaneParams) -> "HyperplaneGrid":
        return HyperplaneGrid(params, self.radius, self.n, self.axis, self.axis_weights)


def make_grid(params: HyperplaneParams, radius: float, n: int) -> HyperplaneGrid:
    """Build the uniform lattice grid; rejects radius <= 0 and n < 2."""
    if radius <= 0:
        raise HyperplaneError(f"truncation radius must be positive, got {radius}")
    if n < 2:
        raise HyperplaneError(f"per-axis sample count must be >= 2, got {n}")
    axis = np.linspace(-radius, radius, n)
    du = axis[1] - axis[0]
    w = np.full(n, du)
    w[0] *= 0.5
    w[-1] *= 0.5
    axis.setflags(write=False)
    w.setflags(write=False)
    return HyperplaneGrid(params=params, radius=float(radius), n=int(n), axis=axis, axis_weights=w)
