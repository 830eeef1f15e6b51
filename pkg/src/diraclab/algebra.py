"""Gamma-matrix algebra, spinor representations and charge conjugation.

Conventions (fixed once, used everywhere):

* metric signature (+, -, -, -), natural units hbar = c = 1 unless a
  c parameter is threaded through explicitly;
* Dirac representation of the gamma matrices, gamma0 = diag(1, 1, -1, -1);
* ``boost_x(eta)`` maps a rest four-momentum (m, 0) to
  (m cosh eta, m sinh eta, 0, 0), i.e. Lambda[0][1] = +sinh eta, and pairs
  with the spinor matrix S = cosh(eta/2) I + sinh(eta/2) gamma0 gamma1;
* rotations follow the right-hand rule, S = cos(th/2) I + sin(th/2) G(axis)
  with G(z) = gamma1 gamma2 (cyclic);
* the residual global sign of S for a composed transform is fixed by the
  canonical factoring (rotation)(x-boost)(rotation) with rotation angles in
  [0, pi]; probabilities never see it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MINKOWSKI = np.diag([1.0, -1.0, -1.0, -1.0])

_METRIC_TOL = 1e-12


class TransformError(ValueError):
    """Raised for matrices outside the restricted Lorentz group."""


def _pauli():
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.array([[1, 0], [0, -1]], dtype=complex)
    return sx, sy, sz


def _frozen(a):
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GammaSet:
    """The four gamma matrices of one representation, signature (+,-,-,-)."""

    gamma0: np.ndarray
    gamma1: np.ndarray
    gamma2: np.ndarray
    gamma3: np.ndarray

    def __iter__(self):
        return iter((self.gamma0, self.gamma1, self.gamma2, self.gamma3))

    def __getitem__(self, mu):
        return (self.gamma0, self.gamma1, self.gamma2, self.gamma3)[mu]

    def slash(self, p):
        """gamma^mu p_mu for a four-vector p with upper indices."""
        p = np.asarray(p)
        return p[0] * self.gamma0 - p[1] * self.gamma1 - p[2] * self.gamma2 - p[3] * self.gamma3

    def boost_generator(self, direction):
        """n . (gamma0 gamma_vec), the generator entering x-direction boosts."""
        n = np.asarray(direction, dtype=float)
        return self.gamma0 @ (n[0] * self.gamma1 + n[1] * self.gamma2 + n[2] * self.gamma3)

    def rotation_generator(self, axis):
        """n . (gamma2 gamma3, gamma3 gamma1, gamma1 gamma2), rotation half-angle generator."""
        n = np.asarray(axis, dtype=float)
        return (
            n[0] * self.gamma2 @ self.gamma3
            + n[1] * self.gamma3 @ self.gamma1
            + n[2] * self.gamma1 @ self.gamma2
        )

    def weight_matrix(self, alpha):
        """1 - gamma0 gamma_vec . alpha, the hyperplane inner-product weight."""
        a = np.asarray(alpha, dtype=float)
        return np.eye(4, dtype=complex) - self.boost_generator(a)


def build_gamma_dirac() -> GammaSet:
    """Dirac-representation gamma matrices."""
    sx, sy, sz = _pauli()
    z2 = np.zeros((2, 2), dtype=complex)
    i2 = np.eye(2, dtype=complex)
    g0 = np.block([[i2, z2], [z2, -i2]])

    def spatial(s):
        return np.block([[z2, s], [-s, z2]])

    return GammaSet(
        gamma0=_frozen(g0),
        gamma1=_frozen(spatial(sx)),
        gamma2=_frozen(spatial(sy)),
        gamma3=_frozen(spatial(sz)),
    )


DIRAC = build_gamma_dirac()

_AXES = {"x": np.array([1.0, 0, 0]), "y": np.array([0, 1.0, 0]), "z": np.array([0, 0, 1.0])}


def _axis_vector(axis):
    if isinstance(axis, str):
        try:
            return _AXES[axis]
        except KeyError:
            raise TransformError(f"unknown axis {axis!r}, expected x, y or z") from None
    v = np.asarray(axis, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise TransformError("axis vector must be nonzero")
    return v / n


def _rotation_matrix3(axis, angle):
    """Rodrigues rotation by `angle` about unit `axis` (right-hand rule)."""
    if angle == 0.0:
        return np.eye(3)
    n = np.asarray(axis, dtype=float)
    k = np.array([[0, -n[2], n[1]], [n[2], 0, -n[0]], [-n[1], n[0], 0]])
    return np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)


def _boost_matrix(direction, rapidity):
    n = np.asarray(direction, dtype=float)
    ch, sh = np.cosh(rapidity), np.sinh(rapidity)
    m = np.eye(4)
    m[0, 0] = ch
    m[0, 1:] = sh * n
    m[1:, 0] = sh * n
    m[1:, 1:] = np.eye(3) + (ch - 1.0) * np.outer(n, n)
    return m


@dataclass(frozen=True)
class LorentzTransform:
    """A restricted Poincare transform x -> Lambda x + a.

    ``factors`` is the decomposition record: primitive factors whose matrix
    product (left to right, leftmost applied last) reproduces the transform.
    Each factor is ("rotation", axis, angle), ("boost_x", rapidity) or
    ("translation", a).
    """

    matrix: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(4))
    factors: tuple = ()

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        a = np.asarray(self.translation, dtype=float)
        if m.shape != (4, 4) or a.shape != (4,):
            raise TransformError("Lambda must be 4x4 and a a 4-vector")
        err = np.max(np.abs(m.T @ MINKOWSKI @ m - MINKOWSKI))
        if err > _METRIC_TOL:
            raise TransformError(f"Lambda^T g Lambda != g (error {err:.2e})")
        if m[0, 0] < 1.0 - _METRIC_TOL:
            raise TransformError("Lambda is not orthochronous (Lambda[0][0] < 1)")
        if abs(np.linalg.det(m) - 1.0) > 1e-10:
            raise TransformError("det Lambda != +1")
        object.__setattr__(self, "matrix", _frozen(m))
        object.__setattr__(self, "translation", _frozen(a))

    # -- constructors -------------------------------------------------------

    @staticmethod
    def identity() -> "LorentzTransform":
        return LorentzTransform(np.eye(4), np.zeros(4), ())

    @staticmethod
    def boost_x(rapidity: float) -> "LorentzTransform":
        m = _boost_matrix(_AXES["x"], rapidity)
        return LorentzTransform(m, np.zeros(4), (("boost_x", float(rapidity)),))

    @staticmethod
    def boost(axis, rapidity: float) -> "LorentzTransform":
        """Boost with given rapidity along an axis ('x','y','z' or 3-vector)."""
        n = _axis_vector(axis)
        m = _boost_matrix(n, rapidity)
        factors = _boost_factors(n, float(rapidity))
        return LorentzTransform(m, np.zeros(4), factors)

    @staticmethod
    def rotation(axis, angle: float) -> "LorentzTransform":
        n = _axis_vector(axis)
        m = np.eye(4)
        m[1:, 1:] = _rotation_matrix3(n, angle)
        return LorentzTransform(m, np.zeros(4), (("rotation", tuple(n), float(angle)),))

    @staticmethod
    def translate(a) -> "LorentzTransform":
        a = np.asarray(a, dtype=float)
        return LorentzTransform(np.eye(4), a, (("translation", tuple(a)),))

    @staticmethod
    def from_matrix(matrix, translation=None) -> "LorentzTransform":
        """Wrap a raw matrix, factoring it as (rotation)(x-boost)(rotation)."""
        a = np.zeros(4) if translation is None else np.asarray(translation, dtype=float)
        m = np.asarray(matrix, dtype=float)
        probe = LorentzTransform(m, a, ())  # validates membership in the group
        factors = _factor_matrix(m)
        if np.any(a != 0.0):
            factors = (("translation", tuple(a)),) + factors
        return LorentzTransform(probe.matrix, a, factors)

    # -- algebra -------------------------------------------------------------

    def compose(self, other: "LorentzTransform") -> "LorentzTransform":
        """self after other: x -> self(other(x))."""
        m = self.matrix @ other.matrix
        a = self.matrix @ other.translation + self.translation
        return LorentzTransform(m, a, self.factors + other.factors)

    def inverse(self) -> "LorentzTransform":
        minv = MINKOWSKI @ self.matrix.T @ MINKOWSKI
        ainv = -minv @ self.translation
        return LorentzTransform(minv, ainv, _invert_factors(self.factors))

    def apply(self, x):
        """Transform spacetime points; x has shape (..., 4)."""
        x = np.asarray(x, dtype=float)
        return x @ self.matrix.T + self.translation

    @property
    def is_translation_only(self) -> bool:
        return bool(np.allclose(self.matrix, np.eye(4), atol=1e-15))


def _boost_factors(n, rapidity):
    """Factor a boost along unit vector n as (rotation)(boost_x)(rotation)."""
    if rapidity == 0.0:
        return ()
    x = _AXES["x"]
    c = float(np.clip(np.dot(x, n), -1.0, 1.0))
    if c > 1.0 - 1e-14:
        return (("boost_x", rapidity),)
    if c < -1.0 + 1e-14:
        # rotate by pi about z to reverse the x-axis
        rot = ("rotation", (0.0, 0.0, 1.0), float(np.pi))
        return (rot, ("boost_x", rapidity), _invert_factors((rot,))[0])
    axis = np.cross(x, n)
    axis = axis / np.linalg.norm(axis)
    angle = float(np.arccos(c))
    rot = ("rotation", tuple(axis), angle)
    rot_inv = ("rotation", tuple(axis), -angle)
    return (rot, ("boost_x", rapidity), rot_inv)


def _invert_factors(factors):
    out = []
    for kind, *args in reversed(factors):
        if kind == "rotation":
            out.append(("rotation", args[0], -args[1]))
        elif kind == "boost_x":
            out.append(("boost_x", -args[0]))
        elif kind == "translation":
            out.append(("translation", tuple(-np.asarray(args[0]))))
        else:
            raise TransformError(f"unknown factor kind {kind!r}")
    return tuple(out)


def _axis_angle_from_rotation3(r):
    """Axis-angle of a 3x3 rotation matrix, angle in [0, pi]."""
    tr = np.trace(r)
    c = float(np.clip((tr - 1.0) / 2.0, -1.0, 1.0))
    angle = float(np.arccos(c))
    if angle < 1e-12:
        return np.array([0.0, 0.0, 1.0]), 0.0
    if np.pi - angle < 1e-7:
        # near pi: axis from the symmetric part
        m = (r + np.eye(3)) / 2.0
        axis = np.sqrt(np.clip(np.diag(m), 0.0, None))
        k = int(np.argmax(axis))
        if axis[k] > 0:
            axis = m[:, k] / axis[k]
        axis = axis / np.linalg.norm(axis)
        return axis, angle
    axis = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    axis = axis / (2.0 * np.sin(angle))
    return axis / np.linalg.norm(axis), angle


def _factor_matrix(m):
    """Polar-decompose Lambda = (pure boost)(pure rotation) and flatten to
    (rotation)(boost_x)(rotation)(rotation) primitive factors."""
    # Lambda Lambda^T is symmetric positive definite; its square root is the
    # unique pure boost with the same velocity content.
    sym = m @ m.T
    evals, evecs = np.linalg.eigh(sym)
    boost = evecs @ np.diag(np.sqrt(np.clip(evals, 0.0, None))) @ evecs.T
    rot4 = np.linalg.solve(boost, m)
    ch = boost[0, 0]
    rapidity = float(np.arccosh(max(ch, 1.0)))
    factors = ()
    if rapidity > 1e-14:
        n = boost[0, 1:] / np.sinh(rapidity)
        n = n / np.linalg.norm(n)
        factors += _boost_factors(n, rapidity)
    axis, angle = _axis_angle_from_rotation3(rot4[1:, 1:])
    if angle > 1e-14:
        factors += (("rotation", tuple(axis), angle),)
    return factors


@dataclass(frozen=True)
class SpinorRep:
    """Spinor matrix S with S^-1 gamma^mu S = Lambda^mu_nu gamma^nu."""

    matrix: np.ndarray
    transform: LorentzTransform

    def inverse_matrix(self, gammas: GammaSet = DIRAC) -> np.ndarray:
        # S^-1 = gamma0 S^+ gamma0
        return gammas.gamma0 @ self.matrix.conj().T @ gammas.gamma0


def _factor_spinor(factor, gammas: GammaSet):
    kind, *args = factor
    if kind == "translation":
        return np.eye(4, dtype=complex)
    if kind == "boost_x":
        eta = args[0]
        return np.cosh(eta / 2.0) * np.eye(4) + np.sinh(eta / 2.0) * gammas.boost_generator(_AXES["x"])
    if kind == "rotation":
        axis, angle = args
        return np.cos(angle / 2.0) * np.eye(4) + np.sin(angle / 2.0) * gammas.rotation_generator(axis)
    raise TransformError(f"unknown factor kind {kind!r}")


def spinor_rep(t: LorentzTransform, gammas: GammaSet = DIRAC) -> SpinorRep:
    """Spinor representation of a restricted transform.

    Composes closed-form exponentials over the transform's decomposition
    record; a transform built from a raw matrix is factored first.
    Translations contribute the identity.
    """
    factors = t.factors
    if not factors and not t.is_translation_only:
        factors = _factor_matrix(t.matrix)
    s = np.eye(4, dtype=complex)
    for f in factors:
        s = s @ _factor_spinor(f, gammas)
    return SpinorRep(matrix=_frozen(s), transform=t)


@dataclass(frozen=True)
class ChargeConjugator:
    """Unitary matrix C with C gamma^mu^T C^-1 = -gamma^mu."""

    matrix: np.ndarray
    gammas: GammaSet

    @property
    def conjugation_matrix(self) -> np.ndarray:
        """C gamma0^T, the matrix applied to conjugated spinor values."""
        return self.matrix @ self.gammas.gamma0.T


def charge_conjugator(gammas: GammaSet = DIRAC) -> ChargeConjugator:
    """C = i gamma2 gamma0 for the Dirac representation."""
    c = 1j * gammas.gamma2 @ gammas.gamma0
    return ChargeConjugator(matrix=_frozen(c), gammas=gammas)


def minkowski_sq(x):
    """Minkowski interval x.x = (x0)^2 - |xvec|^2, over the last axis."""
    x = np.asarray(x, dtype=float)
    return x[..., 0] ** 2 - np.sum(x[..., 1:] ** 2, axis=-1)


def random_restricted_transform(rng, max_rapidity=2.0, translate_scale=0.0) -> LorentzTransform:
    """Random element of the restricted group, for randomized invariant tests."""
    t = LorentzTransform.rotation(_random_unit(rng), rng.uniform(0.0, np.pi))
    t = LorentzTransform.boost(_random_unit(rng), rng.uniform(-max_rapidity, max_rapidity)).compose(t)
    t = LorentzTransform.rotation(_random_unit(rng), rng.uniform(0.0, np.pi)).compose(t)
    if translate_scale:
        t = LorentzTransform.translate(rng.normal(scale=translate_scale, size=4)).compose(t)
    return t


def _random_unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)
