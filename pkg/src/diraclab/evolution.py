"""Dynamics: spectral free propagation, split-step potential evolution,
detector worldlines and coupling operators.

The fixed-frame Hamiltonian is

    H = -i c gamma0 gamma^k d/dx^k + e gamma0 gamma^mu A_mu + gamma0 m c^2,

acting on constant-time lab slices.  Free propagation is exact per Fourier
mode: exp(-i H(k) dt) = cos(E dt) - i sin(E dt) H(k)/E with
E = c sqrt((mc)^2 + k^2), since H(k)^2 = E^2.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from diraclab.algebra import DIRAC, GammaSet, minkowski_sq
from diraclab.hyperplane import HyperplaneGrid
from diraclab.states import (
    GridSliceState,
    ModeListState,
    StateError,
    NyquistError,
    _apply_h_over_p0,
    _free_spectral_data,
    inner_product_on,
    lift,
    nyquist_fraction,
    restrict,
)

log = logging.getLogger(__name__)


class CouplingSupportError(StateError):
    """Detector profile does not fit inside the grid truncation radius."""


@dataclass(frozen=True)
class StaticPotential:
    """Static external potential A_mu(xvec) sampled on the lab grid.

    Components are the lower-index A_0..A_3; ``charge`` is the coupling e and
    flips sign under charge conjugation of a scenario.
    """

    components: np.ndarray  # (4, N, N, N) real
    charge: float = 1.0

    def __post_init__(self):
        a = np.asarray(self.components, dtype=float)
        if a.ndim != 4 or a.shape[0] != 4:
            raise StateError("potential must be (4, N, N, N)")
        a.setflags(write=False)
        object.__setattr__(self, "components", a)

    @property
    def is_scalar(self) -> bool:
        return bool(np.all(self.components[1:] == 0.0))

    def conjugated(self) -> "StaticPotential":
        return replace(self, charge=-self.charge)


@dataclass
class DiracHamiltonian:
    """Fixed-frame Dirac Hamiltonian with optional static potential."""

    mass: float
    c: float = 1.0
    potential: StaticPotential | None = None

    def potential_matrix(self, gammas: GammaSet = DIRAC) -> np.ndarray | None:
        """e gamma0 gamma^mu A_mu as a per-point (..., 4, 4) Hermitian field."""
        if self.potential is None:
            return None
        a = self.potential.components
        e = self.potential.charge
        n = a.shape[1:]
        out = np.zeros(n + (4, 4), dtype=complex)
        out += a[0][..., None, None] * np.eye(4)
        for k in range(3):
            gk = gammas.gamma0 @ (gammas.gamma1, gammas.gamma2, gammas.gamma3)[k]
            out += a[k + 1][..., None, None] * gk
        return e * out


class FreePropagator:
    """Cached spectral data for exp(-i H_free dt) on one lattice grid.

    Besides the direct ``apply``, the propagator exposes the spectral
    eigenbasis: ``to_eigen``/``from_eigen`` map slice values to coefficients
    in the per-wavevector energy eigenbasis, where propagation is the
    diagonal phase exp(-i omega dt) with omega = +-E(k).  Coefficients are
    scaled so that their plain square sum equals the periodic-cell norm
    (du^3 sum |values|^2), the quadrature in which the propagator is exactly
    unitary.
    """

    def __init__(self, grid: HyperplaneGrid, mass: float, c: float = 1.0,
                 gammas: GammaSet = DIRAC):
        if not grid.params.is_lab_plane:
            raise StateError("spectral propagation requires a lab-plane grid")
        self.grid = grid
        self.mass = mass
        self.c = c
        self.gammas = gammas
        self.kvecs, self.p0 = _free_spectral_data(grid, mass, c)
        self.energy = c * self.p0
        self._eigen = None

    def apply(self, values: np.ndarray, dt: float) -> np.ndarray:
        if dt == 0.0:
            return values.copy()
        vk = np.fft.fftn(values, axes=(0, 1, 2))
        hv = _apply_h_over_p0(vk, self.kvecs, self.p0, self.mass, self.c, self.gammas)
        ph = self.energy * dt
        out = np.cos(ph)[..., None] * vk - 1j * np.sin(ph)[..., None] * hv
        return np.fft.ifftn(out, axes=(0, 1, 2))

    # -- eigenbasis interface ------------------------------------------------

    def _eigen_data(self):
        if self._eigen is None:
            kx, ky, kz = self.kvecs
            g = self.gammas
            mc = self.mass * self.c
            hk = (np.multiply.outer(kx, (g.gamma0 @ g.gamma1))
                  + np.multiply.outer(ky, (g.gamma0 @ g.gamma2))
                  + np.multiply.outer(kz, (g.gamma0 @ g.gamma3))
                  + np.multiply.outer(mc * np.ones_like(kx), np.asarray(g.gamma0)))
            evals, evecs = np.linalg.eigh(hk)  # ascending: (-p0, -p0, +p0, +p0)
            omega = self.c * evals
            scale = np.sqrt(self.grid.spacing ** 3 / self.grid.npoints)
            self._eigen = (omega, evecs, scale)
        return self._eigen

    @property
    def omega(self) -> np.ndarray:
        """Eigenfrequencies per wavevector and branch, shape (N, N, N, 4)."""
        return self._eigen_data()[0]

    def to_eigen(self, values: np.ndarray) -> np.ndarray:
        omega, u, scale = self._eigen_data()
        vk = np.fft.fftn(values, axes=(0, 1, 2))
        return np.einsum("...ba,...b->...a", u.conj(), vk) * scale

    def from_eigen(self, coeffs: np.ndarray) -> np.ndarray:
        omega, u, scale = self._eigen_data()
        vk = np.einsum("...ab,...b->...a", u, coeffs)
        return np.fft.ifftn(vk, axes=(0, 1, 2)) / scale


def _shift_plane(grid: HyperplaneGrid, dx0: float) -> HyperplaneGrid:
    p = grid.params
    from diraclab.hyperplane import HyperplaneParams
    y = p.y.copy()
    y[0] += dx0
    return grid.with_params(HyperplaneParams(y=y, alpha=p.alpha, phi=p.phi))


def evolve_free(slice_state: GridSliceState, dt: float,
                check_nyquist: bool = True, nyquist_threshold: float = 1e-6,
                propagator: FreePropagator = None) -> GridSliceState:
    """Exact spectral free evolution by coordinate time dt.

    The returned slice lives on the advanced plane x0 -> x0 + c dt, so
    lifting before or after evolving yields the same solution element.
    """
    if slice_state.potential is not None:
        raise StateError("state carries a potential; use evolve_potential")
    if check_nyquist:
        frac = nyquist_fraction(slice_state.grid, slice_state.values)
        if frac > nyquist_threshold:
            raise NyquistError(f"outer-band spectral fraction {frac:.3e}")
    prop = propagator or FreePropagator(slice_state.grid, slice_state.mass, slice_state.c)
    values = prop.apply(slice_state.values, dt)
    return GridSliceState(grid=_shift_plane(slice_state.grid, slice_state.c * dt),
                          values=values, mass=slice_state.mass, c=slice_state.c)


class _PotentialStep:
    """Cached pointwise exp(-i H_V dt) factors for one (hamiltonian, dt)."""

    def __init__(self, h: DiracHamiltonian, dt: float):
        self.scalar = h.potential.is_scalar
        if self.scalar:
            phase = h.potential.charge * h.potential.components[0] * dt
            self.factor = np.exp(-1j * phase)[..., None]
        else:
            hv = h.potential_matrix()
            evals, evecs = np.linalg.eigh(hv)
            ph = np.exp(-1j * evals * dt)
            self.factor = np.einsum("...ab,...b,...cb->...ac", evecs, ph, evecs.conj())

    def apply(self, values):
        if self.scalar:
            return values * self.factor
        return np.einsum("...ab,...b->...a", self.factor, values)


def evolve_potential(slice_state: GridSliceState, dt: float, h: DiracHamiltonian,
                     steps: int = 1, check_nyquist: bool = True,
                     norm_drift_warn: float = 1e-8) -> GridSliceState:
    """Second-order Strang splitting between the spectral kinetic step and the
    pointwise potential phase; converges at O(dt^2) in the step count."""
    if h.potential is None:
        out = evolve_free(slice_state, dt, check_nyquist=check_nyquist)
        return replace(out, potential=slice_state.potential)
    if steps < 1:
        raise StateError("steps must be >= 1")
    if check_nyquist:
        frac = nyquist_fraction(slice_state.grid, slice_state.values)
        if frac > 1e-6:
            raise NyquistError(f"outer-band spectral fraction {frac:.3e}")
    sub = dt / steps
    prop = FreePropagator(slice_state.grid, h.mass, h.c)
    half = _PotentialStep(h, sub / 2.0)
    values = slice_state.values
    norm_in = np.sqrt(inner_product_on(slice_state.grid, values, values).real)
    for _ in range(steps):
        values = half.apply(values)
        values = prop.apply(values, sub)
        values = half.apply(values)
    norm_out = np.sqrt(inner_product_on(slice_state.grid, values, values).real)
    if norm_in > 0 and abs(norm_out - norm_in) / norm_in > norm_drift_warn * steps:
        log.warning("per-step norm drift %.2e exceeds %.1e", abs(norm_out - norm_in) / norm_in / steps,
                    norm_drift_warn)
    return GridSliceState(grid=_shift_plane(slice_state.grid, h.c * dt), values=values,
                          mass=h.mass, c=h.c, potential=h.potential)


def apply_hamiltonian(slice_state: GridSliceState, h: DiracHamiltonian) -> np.ndarray:
    """H psi on the slice values; used by the Hermiticity checks."""
    vk = np.fft.fftn(slice_state.values, axes=(0, 1, 2))
    kvecs, p0 = _free_spectral_data(slice_state.grid, h.mass, h.c)
    hv = _apply_h_over_p0(vk, kvecs, p0, h.mass, h.c)
    out = np.fft.ifftn((h.c * p0)[..., None] * hv, axes=(0, 1, 2))
    pm = h.potential_matrix()
    if pm is not None:
        out = out + np.einsum("...ab,...b->...a", pm, slice_state.values)
    return out


# ---------------------------------------------------------------------------
# detectors


@dataclass(frozen=True)
class DetectorSpec:
    """A detector: piecewise-linear worldline plus a Gaussian coupling window.

    ``taus`` are strictly increasing proper times, ``points`` the matching
    spacetime nodes; between nodes the worldline interpolates linearly and
    beyond the ends it extrapolates with the end segment's velocity.  A
    ``width`` of ``inf`` means uniform coupling (the profile is kappa
    everywhere), used by the analytic oracles.
    """

    id: int
    taus: np.ndarray
    points: np.ndarray
    kappa: float
    width: float

    def __post_init__(self):
        taus = np.atleast_1d(np.asarray(self.taus, dtype=float))
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape != (taus.shape[0], 4):
            raise StateError("worldline needs one 4-point per node")
        if taus.shape[0] < 1:
            raise StateError("worldline needs at least one node")
        if np.any(np.diff(taus) <= 0):
            raise StateError("worldline proper times must increase strictly")
        if self.kappa < 0:
            raise StateError("coupling strength must be nonnegative")
        if not (self.width > 0):
            raise StateError("profile width must be positive (inf allowed)")
        taus.setflags(write=False)
        pts.setflags(write=False)
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "points", pts)

    @staticmethod
    def at_rest(det_id: int, position, kappa: float, width: float,
                tau0: float, x00: float, tau1: float, c: float = 1.0) -> "DetectorSpec":
        """Static detector between proper times tau0 and tau1 with x0 = c tau."""
        pos = np.asarray(position, dtype=float)
        p0 = np.concatenate([[x00], pos])
        p1 = np.concatenate([[x00 + c * (tau1 - tau0)], pos])
        return DetectorSpec(det_id, np.array([tau0, tau1]), np.stack([p0, p1]), kappa, width)

    def position(self, tau: float) -> np.ndarray:
        """Worldline point at proper time tau (4-vector)."""
        if self.taus.shape[0] == 1:
            return self.points[0]
        i = int(np.clip(np.searchsorted(self.taus, tau) - 1, 0, len(self.taus) - 2))
        t0, t1 = self.taus[i], self.taus[i + 1]
        lam = (tau - t0) / (t1 - t0)
        return self.points[i] + lam * (self.points[i + 1] - self.points[i])

    def validate_subluminal(self) -> list:
        """FTL segments are rejected: each must be future-directed causal."""
        problems = []
        for i in range(len(self.taus) - 1):
            dz = self.points[i + 1] - self.points[i]
            if dz[0] <= 0:
                problems.append(f"detector {self.id}: segment {i} does not advance in x0")
            elif minkowski_sq(dz) < 0:
                problems.append(f"detector {self.id}: segment {i} is faster than light")
        return problems

    def validate_start_cone(self, x0, tau0: float) -> list:
        """Worldline start must lie on or inside the preparation point's
        backward light cone: ||x0 - z(tau0)||^2 >= 0 and z0 <= x0^0."""
        z = self.position(tau0)
        d = np.asarray(x0, dtype=float) - z
        problems = []
        if minkowski_sq(d) < -1e-12:
            problems.append(f"detector {self.id}: start is spacelike to the preparation point")
        if z[0] > np.asarray(x0, dtype=float)[0] + 1e-12:
            problems.append(f"detector {self.id}: start lies after the preparation time")
        return problems


def detector_profile(det: DetectorSpec, tau: float, grid: HyperplaneGrid,
                     support_sigmas: float = 4.0) -> np.ndarray:
    """kappa exp(-|x - z(tau)|^2 / (2 w^2)) sampled on the grid, shape (N,N,N)."""
    if not np.isfinite(det.width):
        return np.full(grid.shape, det.kappa)
    z = det.position(tau)[1:]
    center = z - grid.params.y[1:]
    reach = np.max(np.abs(center)) + support_sigmas * det.width
    if reach > grid.radius:
        raise CouplingSupportError(
            f"detector {det.id} profile support (|center| + {support_sigmas} w = {reach:.3g}) "
            f"exceeds the grid radius {grid.radius:.3g}")
    ax = grid.axis
    dx2 = (ax - center[0]) ** 2
    dy2 = (ax - center[1]) ** 2
    dz2 = (ax - center[2]) ** 2
    r2 = dx2[:, None, None] + dy2[None, :, None] + dz2[None, None, :]
    return det.kappa * np.exp(-r2 / (2.0 * det.width ** 2))


@dataclass(frozen=True)
class CouplingOperator:
    """G(tau): multiplication by the detector window on the x0 = c tau slice,
    conjugated by the restriction maps."""

    detector: DetectorSpec
    tau: float

    def profile(self, grid: HyperplaneGrid) -> np.ndarray:
        return detector_profile(self.detector, self.tau, grid)


def _slice_at_coupling_plane(state, op: CouplingOperator, grid: HyperplaneGrid, c: float):
    """Restrict/propagate a state to the plane x0 = c tau on the given grid."""
    x0 = c * op.tau
    target = _shift_plane(grid, x0 - grid.params.y[0])
    if isinstance(state, GridSliceState):
        if state.grid.params.y[0] == x0 and state.grid.params.is_lab_plane:
            return state, True
        dt = (x0 - state.grid.params.y[0]) / c
        if state.potential is not None:
            raise StateError("coupling a potential-bound slice off its own plane")
        return evolve_free(state, dt, check_nyquist=False), True
    return restrict(state, grid=target), False


def apply_coupling(state, op: CouplingOperator, grid: HyperplaneGrid = None):
    """G(tau) applied to a state; the result is unnormalized.

    Mode lists are restricted to the coupling plane, multiplied and lifted
    back; slices stay slices.
    """
    if grid is None:
        if not isinstance(state, GridSliceState):
            raise StateError("pass a grid to couple a mode-list state")
        grid = state.grid
    sl, keep_slice = _slice_at_coupling_plane(state, op, grid, state.c)
    g = op.profile(sl.grid)
    multiplied = replace(sl, values=sl.values * g[..., None])
    if keep_slice or sl.potential is not None:
        return multiplied
    return lift(multiplied, check_nyquist=False)


def total_coupling(state, detectors, tau: float, grid: HyperplaneGrid = None):
    """Total detection rate <Psi|sum_j G_j^+ G_j Psi> and per-detector norms.

    Returns (rate, [||G_j Psi||^2 per detector]); both are computed on the
    coupling plane where each G_j is plain multiplication.
    """
    if grid is None:
        if not isinstance(state, GridSliceState):
            raise StateError("pass a grid to evaluate couplings on a mode-list state")
        grid = state.grid
    if not detectors:
        return 0.0, []
    sl, _ = _slice_at_coupling_plane(state, CouplingOperator(detectors[0], tau), grid, state.c)
    dens = np.sum(np.abs(sl.values) ** 2, axis=-1)
    w = sl.grid.weights()
    norms = []
    for det in detectors:
        g = detector_profile(det, tau, sl.grid)
        norms.append(float(np.sum(w * g * g * dens)))
    rate = float(sum(norms))
    if rate < 0:
        raise StateError("negative total coupling rate; broken coupling operator")
    return rate, norms
