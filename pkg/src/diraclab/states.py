"""Quantum states of the particle and the hyperplane inner product.

Two interchangeable representations are provided:

* ``ModeListState``: a finite superposition of on-shell plane-wave modes.
  Every transform (Poincare action, charge conjugation) is analytic per
  mode, so covariance identities hold to roundoff in this form.
* ``GridSliceState``: sampled values on one hyperplane grid.  This is the
  working form for local couplings and for evolution with a potential.

A mode is (spatial momentum pvec, energy sign s, spinor amplitude a,
weight w > 0); the on-shell zeroth component p0 = sqrt((mc)^2 + |pvec|^2)
is always taken positive and the mode's contribution to the state value is

    w * a * exp(-i s (p0 x0 - pvec . xvec)),

which solves the free Dirac equation exactly when (gamma.p - s mc) a = 0.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from diraclab import algebra
from diraclab.algebra import DIRAC, GammaSet, LorentzTransform, spinor_rep, charge_conjugator
from diraclab.hyperplane import HyperplaneGrid, HyperplaneParams, make_grid

log = logging.getLogger(__name__)

DEFAULT_TAIL_FRACTION = 1e-8
_MODE_MATCH_TOL = 1e-9


class StateError(ValueError):
    pass


class NyquistError(StateError):
    """Slice grid too coarse for the state's momentum content."""


def _gamma_dot_k(gammas: GammaSet):
    """Stack gamma0 gamma^j, j = 1..3, used by the momentum-space Hamiltonian."""
    return np.stack([gammas.gamma0 @ gammas.gamma1,
                     gammas.gamma0 @ gammas.gamma2,
                     gammas.gamma0 @ gammas.gamma3])


_G0GK = _gamma_dot_k(DIRAC)


@dataclass(frozen=True)
class ModeListState:
    """On-shell plane-wave superposition; see module docstring for semantics."""

    momenta: np.ndarray      # (n, 3) spatial momenta
    signs: np.ndarray        # (n,) +1 / -1 energy sign
    amplitudes: np.ndarray   # (n, 4) complex spinor amplitudes
    weights: np.ndarray      # (n,) positive quadrature weights
    mass: float
    c: float = 1.0

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.momenta, dtype=float))
        s = np.atleast_1d(np.asarray(self.signs, dtype=np.int8))
        a = np.atleast_2d(np.asarray(self.amplitudes, dtype=complex))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        n = p.shape[0]
        if p.shape != (n, 3) or s.shape != (n,) or a.shape != (n, 4) or w.shape != (n,):
            raise StateError("inconsistent mode array shapes")
        if n and np.any(w <= 0):
            raise StateError("mode weights must be positive")
        if n and not np.all(np.abs(s) == 1):
            raise StateError("energy signs must be +1 or -1")
        for name, v in (("momenta", p), ("signs", s), ("amplitudes", a), ("weights", w)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    # -- kinematics ----------------------------------------------------------

    @property
    def n_modes(self) -> int:
        return self.momenta.shape[0]

    @property
    def p0(self) -> np.ndarray:
        """Positive on-shell zeroth components sqrt((mc)^2 + |p|^2)."""
        mc = self.mass * self.c
        return np.sqrt(mc * mc + np.sum(self.momenta ** 2, axis=1))

    @property
    def four_momenta(self) -> np.ndarray:
        return np.concatenate([self.p0[:, None], self.momenta], axis=1)

    def on_shell_residual(self, gammas: GammaSet = DIRAC) -> float:
        """max_i ||(gamma.p - s mc) a_i|| / ||a_i|| over the modes."""
        if self.n_modes == 0:
            return 0.0
        mc = self.mass * self.c
        worst = 0.0
        p4 = self.four_momenta
        for i in range(self.n_modes):
            op = gammas.slash(p4[i]) - self.signs[i] * mc * np.eye(4)
            na = np.linalg.norm(self.amplitudes[i])
            if na == 0.0:
                continue
            worst = max(worst, np.linalg.norm(op @ self.amplitudes[i]) / na)
        return worst

    def validate(self, tol: float = 1e-10):
        res = self.on_shell_residual()
        if res > tol:
            raise StateError(f"mode list violates the on-shell condition (residual {res:.2e})")
        _check_distinct(self.momenta, self.signs)
        return self

    def scaled(self, factor: complex) -> "ModeListState":
        return replace(self, amplitudes=self.amplitudes * factor)

    def pruned(self, rel_tol: float = 0.0) -> "ModeListState":
        """Drop modes whose weighted amplitude is at or below rel_tol * max."""
        contrib = self.weights * np.linalg.norm(self.amplitudes, axis=1)
        if contrib.size == 0:
            return self
        keep = contrib > rel_tol * contrib.max()
        return replace(self, momenta=self.momenta[keep], signs=self.signs[keep],
                       amplitudes=self.amplitudes[keep], weights=self.weights[keep])


def _check_distinct(momenta, signs, tol=_MODE_MATCH_TOL):
    keys = _match_keys(momenta, signs, tol)
    if len(np.unique(keys, axis=0)) != len(keys):
        raise StateError(f"modes closer than the documented separation {tol} (colliding wavevectors)")


def _match_keys(momenta, signs, tol=_MODE_MATCH_TOL):
    k = np.round(np.asarray(momenta) / tol).astype(np.int64)
    return np.concatenate([np.asarray(signs, dtype=np.int64)[:, None], k], axis=1)


@dataclass(frozen=True)
class GridSliceState:
    """State values sampled on one hyperplane grid."""

    grid: HyperplaneGrid
    values: np.ndarray       # (N, N, N, 4) complex
    mass: float
    c: float = 1.0
    potential: object = None  # DiracPotential or None; fixes the lab frame

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape + (4,):
            raise StateError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def norm_sq(self) -> float:
        return float(inner_product_on(self.grid, self.values, self.values).real)

    def tail_fraction(self) -> float:
        """Boundary-shell fraction of the total density, the decay monitor."""
        dens = np.sum(np.abs(self.values) ** 2, axis=-1)
        w = self.grid.weights()
        total = float(np.sum(w * dens))
        if total == 0.0:
            return 0.0
        edge = self.grid.boundary_mask()
        return float(np.sum((w * dens)[edge]) / total)

    def check_tail(self, eps_tail: float = DEFAULT_TAIL_FRACTION):
        frac = self.tail_fraction()
        if frac > eps_tail:
            log.warning("slice tail mass fraction %.3e exceeds eps_tail %.1e", frac, eps_tail)
        return frac

    def scaled(self, factor: complex) -> "GridSliceState":
        return replace(self, values=self.values * factor)


@dataclass
class SystemState:
    """Pair of classical label and quantum state at a proper time."""

    omega: int
    psi: object
    tau: float


# ---------------------------------------------------------------------------
# evaluation


def evaluate(state: ModeListState, x) -> np.ndarray:
    """Evaluate the plane-wave superposition at spacetime points (..., 4)."""
    x = np.asarray(x, dtype=float)
    scalar = x.shape == (4,)
    pts = x.reshape(-1, 4)
    out = np.zeros((pts.shape[0], 4), dtype=complex)
    p0 = state.p0
    for i in range(state.n_modes):
        phase = state.signs[i] * (p0[i] * pts[:, 0] - pts[:, 1:] @ state.momenta[i])
        out += np.exp(-1j * phase)[:, None] * (state.weights[i] * state.amplitudes[i])
    out = out.reshape(x.shape[:-1] + (4,))
    return out[()] if not scalar else out.reshape(4)


def _effective_wavevectors(state: ModeListState, params: HyperplaneParams):
    """Per-mode base phase and lattice wavevector on a hyperplane.

    The mode phase on the plane is exp(-i s p.y) * exp(i k_eff . u) with
    k_eff = s R^T (pvec - p0 alpha); affine in u, so grid evaluation
    factorizes over the three axes.
    """
    p0 = state.p0
    rot = params.rotation3
    k_eff = state.signs[:, None] * ((state.momenta - p0[:, None] * params.alpha) @ rot)
    p_dot_y = p0 * params.y[0] - state.momenta @ params.y[1:]
    base = np.exp(-1j * state.signs * p_dot_y)
    return base, k_eff


def evaluate_on_grid(state: ModeListState, grid: HyperplaneGrid,
                     chunk_bytes: int = 192 * 2 ** 20) -> np.ndarray:
    """Evaluate on a lattice grid, shape (N, N, N, 4).

    The phase factorizes per axis on a lattice, so the mode sum reduces to
    one complex matmul per mode chunk: out[ij, kc] += B[ij, m] C[m, kc] with
    B the xy phase table and C the z phases times weighted amplitudes.
    """
    n = grid.n
    out = np.zeros((n * n, n * 4), dtype=complex)
    if state.n_modes:
        base, k_eff = _effective_wavevectors(state, grid.params)
        coef = (state.weights * base)[:, None] * state.amplitudes  # (m, 4)
        axis = grid.axis
        chunk = max(1, int(chunk_bytes // (16 * n * n)))
        for lo in range(0, state.n_modes, chunk):
            hi = min(lo + chunk, state.n_modes)
            ex = np.exp(1j * np.outer(k_eff[lo:hi, 0], axis))   # (m, N)
            ey = np.exp(1j * np.outer(k_eff[lo:hi, 1], axis))
            ez = np.exp(1j * np.outer(k_eff[lo:hi, 2], axis))
            b = (ex[:, :, None] * ey[:, None, :]).reshape(hi - lo, n * n)
            c = (ez[:, :, None] * coef[lo:hi, None, :]).reshape(hi - lo, n * 4)
            out += b.T @ c
    return out.reshape(n, n, n, 4)


# ---------------------------------------------------------------------------
# inner products


def inner_product_on(grid: HyperplaneGrid, f_values, g_values, gammas: GammaSet = DIRAC) -> complex:
    """<f|g> on one grid: sum_i w_i f^+(u_i) (1 - gamma0 gammavec.alpha) g(u_i).

    Conjugate-linear in f.  Summation is numpy's pairwise reduction over the
    fixed C-order lattice, so the result is deterministic for a given grid.
    """
    f = np.asarray(f_values, dtype=complex)
    g = np.asarray(g_values, dtype=complex)
    if f.shape != g.shape:
        raise StateError(f"value arrays disagree: {f.shape} vs {g.shape}")
    if f.shape[:-1] != grid.shape or f.shape[-1] != 4:
        if f.shape != (grid.npoints, 4):
            raise StateError(f"value arrays do not match the grid ({f.shape})")
        f = f.reshape(grid.shape + (4,))
        g = g.reshape(grid.shape + (4,))
    b = gammas.weight_matrix(grid.params.alpha)
    integrand = np.einsum("...a,ab,...b->...", f.conj(), b, g)
    return complex(np.sum(grid.weights() * integrand))


def values_on_grid(state, grid: HyperplaneGrid) -> np.ndarray:
    """State values on a grid, dispatching on representation."""
    if isinstance(state, ModeListState):
        fft_values = _lattice_fft_values(state, grid)
        return fft_values if fft_values is not None else evaluate_on_grid(state, grid)
    if isinstance(state, GridSliceState):
        if _same_grid(state.grid, grid):
            return state.values
        if state.potential is not None:
            raise StateError("a slice with an external potential is bound to its own grid")
        return values_on_grid(lift(state), grid)
    raise StateError(f"not a quantum state: {type(state).__name__}")


def _same_grid(a: HyperplaneGrid, b: HyperplaneGrid) -> bool:
    return (a.n == b.n and a.radius == b.radius
            and np.array_equal(a.params.y, b.params.y)
            and np.array_equal(a.params.alpha, b.params.alpha)
            and np.array_equal(a.params.phi, b.params.phi))


def inner_product(state_a, state_b, params: HyperplaneParams = None,
                  radius: float = None, n: int = None, grid: HyperplaneGrid = None) -> complex:
    """Hyperplane-quadrature inner product of two states.

    The defining integral is hyperplane-independent for exact solutions; the
    grid value carries quadrature plus truncation error, quantified by
    :func:`inner_product_error_bound`.
    """
    if grid is None:
        if params is None or radius is None or n is None:
            raise StateError("pass either a grid or (params, radius, n)")
        grid = make_grid(params, radius, n)
    return inner_product_on(grid, values_on_grid(state_a, grid), values_on_grid(state_b, grid))


def inner_product_error_bound(grid: HyperplaneGrid, tail_fraction: float) -> float:
    """Reported error model: O(N^-2) quadrature term plus tail/(1 - |alpha|)."""
    alpha = float(np.linalg.norm(grid.params.alpha))
    return (1.0 / grid.n) ** 2 + tail_fraction / (1.0 - alpha)


def mode_inner_product(state_a: ModeListState, state_b: ModeListState,
                       match_tol: float = _MODE_MATCH_TOL) -> complex:
    """Exact pairing of two mode lists sharing a momentum lattice.

    Modes pair only when energy sign and spatial momentum agree (within
    ``match_tol``); each matched pair contributes w_a w_b s a^+ gamma0 b.
    This pairing is preserved exactly by the Poincare action (gamma0 S^+
    gamma0 S = 1) and conjugated exactly by charge conjugation, which makes
    it the sharp form for the covariance checks.
    """
    if state_a.n_modes == 0 or state_b.n_modes == 0:
        return 0.0 + 0.0j
    keys_a = _match_keys(state_a.momenta, state_a.signs, match_tol)
    keys_b = _match_keys(state_b.momenta, state_b.signs, match_tol)
    index = {tuple(k): i for i, k in enumerate(keys_a)}
    g0 = np.real(np.diag(DIRAC.gamma0))
    total = 0.0 + 0.0j
    for j, key in enumerate(map(tuple, keys_b)):
        i = index.get(key)
        if i is None:
            continue
        pair = np.sum(state_a.amplitudes[i].conj() * g0 * state_b.amplitudes[j])
        total += state_a.weights[i] * state_b.weights[j] * state_a.signs[i] * pair
    return complex(total)


def mode_norm(state: ModeListState) -> float:
    return float(np.sqrt(mode_inner_product(state, state).real))


# ---------------------------------------------------------------------------
# restriction and lifting


def restrict(state, params: HyperplaneParams = None, radius: float = None,
             n: int = None, grid: HyperplaneGrid = None,
             eps_tail: float = DEFAULT_TAIL_FRACTION) -> GridSliceState:
    """Sample a state on a hyperplane grid (the restriction map)."""
    if grid is None:
        grid = make_grid(params, radius, n)
    values = values_on_grid(state, grid)
    out = GridSliceState(grid=grid, values=values, mass=state.mass, c=state.c,
                         potential=getattr(state, "potential", None))
    out.check_tail(eps_tail)
    return out


def momentum_lattice(grid: HyperplaneGrid) -> np.ndarray:
    """FFT wavevector axis of a lattice grid."""
    return 2.0 * np.pi * np.fft.fftfreq(grid.n, d=grid.spacing)


def _origin_phase_axes(grid: HyperplaneGrid, sign: float):
    """Per-axis factors exp(sign * i k u0) mapping FFT indices to the
    physical lattice origin u0 = -R."""
    k1 = momentum_lattice(grid)
    return np.exp(sign * 1j * k1 * grid.axis[0])


def _apply_origin_phase(vk: np.ndarray, grid: HyperplaneGrid, sign: float) -> np.ndarray:
    ph = _origin_phase_axes(grid, sign)
    return vk * ph[:, None, None, None] * ph[None, :, None, None] * ph[None, None, :, None]


def _free_spectral_data(grid: HyperplaneGrid, mass: float, c: float):
    """k lattice, on-shell p0(k) and H(k)/p0 contraction helper arrays."""
    k1 = momentum_lattice(grid)
    kx, ky, kz = np.meshgrid(k1, k1, k1, indexing="ij")
    mc = mass * c
    p0 = np.sqrt(mc * mc + kx ** 2 + ky ** 2 + kz ** 2)
    return (kx, ky, kz), p0


def _apply_h_over_p0(vk, kvecs, p0, mass, c, gammas: GammaSet = DIRAC):
    """Apply H(k)/(c p0) = (gamma0 gammavec.k + gamma0 mc) / p0 to (..., 4) data."""
    kx, ky, kz = kvecs
    mc = mass * c
    g = _G0GK if gammas is DIRAC else _gamma_dot_k(gammas)
    out = np.einsum("ab,...b->...a", g[0], vk) * (kx / p0)[..., None]
    out += np.einsum("ab,...b->...a", g[1], vk) * (ky / p0)[..., None]
    out += np.einsum("ab,...b->...a", g[2], vk) * (kz / p0)[..., None]
    out += np.einsum("ab,...b->...a", gammas.gamma0, vk) * (mc / p0)[..., None]
    return out


def nyquist_fraction(grid: HyperplaneGrid, values) -> float:
    """Spectral mass fraction in the outer quarter of the Nyquist cube."""
    vk = np.fft.fftn(np.asarray(values), axes=(0, 1, 2))
    k1 = np.abs(momentum_lattice(grid))
    knyq = np.pi / grid.spacing
    outer = (k1 > 0.75 * knyq)
    mask = outer[:, None, None] | outer[None, :, None] | outer[None, None, :]
    total = float(np.sum(np.abs(vk) ** 2))
    if total == 0.0:
        return 0.0
    return float(np.sum(np.abs(vk[mask]) ** 2) / total)


def lift(slice_state: GridSliceState, check_nyquist: bool = True,
         nyquist_threshold: float = 1e-6, prune_rel: float = 1e-14,
         gammas: GammaSet = DIRAC) -> ModeListState:
    """Invert the restriction map on a lab-frame lattice slice (free case).

    The slice is decomposed by FFT and split into the two energy branches
    with the spectral projectors (1 +- H(k)/E)/2, which are complete, so any
    lattice data lifts exactly to a free solution.  A Nyquist check guards
    against treating aliased data as band-limited; it can be disabled for
    objects defined directly on the simulation lattice.
    """
    grid = slice_state.grid
    if not grid.params.is_lab_plane:
        raise StateError("lift requires a constant-time lab plane (alpha = 0, phi = 0)")
    if slice_state.potential is not None:
        raise StateError("lift is defined for the free case only (A_mu = 0)")
    if check_nyquist:
        frac = nyquist_fraction(grid, slice_state.values)
        if frac > nyquist_threshold:
            raise NyquistError(
                f"outer-band spectral fraction {frac:.3e} exceeds {nyquist_threshold:.1e}; "
                "grid too coarse for this state's momentum content")
    n = grid.n
    vk = np.fft.fftn(slice_state.values, axes=(0, 1, 2)) / n ** 3
    vk = _apply_origin_phase(vk, grid, -1.0)  # coefficients of exp(i k u), physical u
    kvecs, p0 = _free_spectral_data(grid, slice_state.mass, slice_state.c)
    hv = _apply_h_over_p0(vk, kvecs, p0, slice_state.mass, slice_state.c, gammas)
    plus = 0.5 * (vk + hv)
    minus = 0.5 * (vk - hv)

    kx, ky, kz = kvecs
    kflat = np.stack([kx.ravel(), ky.ravel(), kz.ravel()], axis=1)
    p0flat = p0.ravel()
    y0, yvec = grid.params.y[0], grid.params.y[1:]
    k_dot_y = kflat @ yvec

    amp_plus = plus.reshape(-1, 4) * np.exp(1j * (p0flat * y0 - k_dot_y))[:, None]
    amp_minus = minus.reshape(-1, 4) * np.exp(-1j * (p0flat * y0 + k_dot_y))[:, None]

    momenta = np.concatenate([kflat, -kflat])
    signs = np.concatenate([np.ones(len(kflat), dtype=np.int8), -np.ones(len(kflat), dtype=np.int8)])
    amplitudes = np.concatenate([amp_plus, amp_minus])
    weights = np.ones(2 * len(kflat))

    state = ModeListState(momenta=momenta, signs=signs, amplitudes=amplitudes,
                          weights=weights, mass=slice_state.mass, c=slice_state.c)
    # drop roundoff dust far below the representable content
    return state.pruned(rel_tol=prune_rel)


def _lattice_fft_values(state: ModeListState, grid: HyperplaneGrid):
    """FFT fast path for mode lists living on the grid's own wavevector lattice.

    Returns None when the state is not lattice-compatible with the grid.
    """
    if not grid.params.is_lab_plane or state.n_modes == 0:
        return None
    n = grid.n
    dk = 2.0 * np.pi / (n * grid.spacing)
    keff = state.signs[:, None] * state.momenta
    idx = np.round(keff / dk).astype(np.int64)
    if np.max(np.abs(keff - idx * dk)) > 1e-9 * dk:
        return None
    if np.any(idx < -(n // 2)) or np.any(idx > (n - 1) // 2):
        return None
    idx = idx % n
    p0 = state.p0
    y0, yvec = grid.params.y[0], grid.params.y[1:]
    anchors = state.weights * np.exp(-1j * state.signs * (p0 * y0 - state.momenta @ yvec))
    vk = np.zeros(grid.shape + (4,), dtype=complex)
    np.add.at(vk, (idx[:, 0], idx[:, 1], idx[:, 2]), anchors[:, None] * state.amplitudes)
    vk = _apply_origin_phase(vk, grid, +1.0)
    return np.fft.ifftn(vk, axes=(0, 1, 2)) * n ** 3


# ---------------------------------------------------------------------------
# symmetry actions


def poincare_transform(state, t: LorentzTransform, gammas: GammaSet = DIRAC):
    """The unitary action (W F)(x) = S F(Lambda^-1 (x - a)) on states.

    A mode list transforms analytically: momentum Lambda p, amplitude
    S a exp(+i s (Lambda p).a).  A free grid slice is lifted first.
    """
    if isinstance(state, GridSliceState):
        return poincare_transform(lift(state), t, gammas)
    if not isinstance(state, ModeListState):
        raise StateError(f"not a quantum state: {type(state).__name__}")
    if state.n_modes == 0:
        return state
    s_mat = spinor_rep(t, gammas).matrix
    p4 = state.four_momenta @ t.matrix.T
    mc = state.mass * state.c
    p0_check = np.sqrt(mc * mc + np.sum(p4[:, 1:] ** 2, axis=1))
    if np.max(np.abs(p4[:, 0] - p0_check)) > 1e-9 * max(1.0, mc):
        raise StateError("transform left the mass shell; Lambda is not restricted")
    phase = np.exp(1j * state.signs * (p4[:, 0] * t.translation[0] - p4[:, 1:] @ t.translation[1:]))
    amplitudes = (state.amplitudes @ s_mat.T) * phase[:, None]
    return replace(state, momenta=p4[:, 1:], amplitudes=amplitudes)


def charge_conjugate(state, gammas: GammaSet = DIRAC):
    """Antiunitary map F -> C gamma0^T F^*; flips the energy sign per mode."""
    cg0 = charge_conjugator(gammas).conjugation_matrix
    if isinstance(state, ModeListState):
        return replace(state, signs=-state.signs,
                       amplitudes=state.amplitudes.conj() @ cg0.T)
    if isinstance(state, GridSliceState):
        if state.potential is not None:
            raise StateError("conjugate the scenario, not a potential-bound slice")
        return replace(state, values=np.einsum("ab,...b->...a", cg0, state.values.conj()))
    raise StateError(f"not a quantum state: {type(state).__name__}")


# ---------------------------------------------------------------------------
# packet construction


def positive_spinor(momentum, spin, mass, c=1.0, sign=1, gammas: GammaSet = DIRAC) -> np.ndarray:
    """Unit-norm on-shell amplitude for the requested energy branch.

    The spin argument is a 2-component complex vector seeding the upper
    (lower, for the negative branch) components at rest.
    """
    chi = np.asarray(spin, dtype=complex)
    if chi.shape != (2,):
        raise StateError("spin must be a 2-component vector")
    mc = mass * c
    p = np.asarray(momentum, dtype=float)
    p4 = np.array([np.sqrt(mc * mc + p @ p), *p])
    seed = np.zeros(4, dtype=complex)
    if sign > 0:
        seed[:2] = chi
        a = (gammas.slash(p4) + mc * np.eye(4)) @ seed
    else:
        seed[2:] = chi
        a = (mc * np.eye(4) - gammas.slash(p4)) @ seed
    na = np.linalg.norm(a)
    if na == 0.0:
        raise StateError("spin seed is annihilated by the on-shell projector")
    return a / na


def _smooth_cut(t):
    """C-infinity step: 1 for t <= 0, 0 for t >= 1, smooth in between."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        f = np.where(t > 0.0, np.exp(-1.0 / np.where(t > 0.0, t, 1.0)), 0.0)
        g = np.where(t < 1.0, np.exp(-1.0 / np.where(t < 1.0, 1.0 - t, 1.0)), 0.0)
    return g / (f + g)


def gaussian_packet(mass: float, sigma_p: float, mean_momentum=(0.0, 0.0, 0.0),
                    spin=(1.0, 0.0), c: float = 1.0, sign: int = 1,
                    dp: float = None, cutoff: float = 4.5,
                    window_start: float = 2.5) -> ModeListState:
    """Gaussian wave packet as a momentum-lattice mode list.

    The momentum-space profile exp(-|p - p0|^2 / (4 sigma_p^2)) is sampled on
    a cubic lattice of spacing ``dp`` inside |p - p0| <= cutoff * sigma_p and
    tapered to zero with a compactly supported C-infinity window starting at
    ``window_start`` sigmas, so the lattice cut does not ring in position
    space.  Periodic lattice images sit at distance 2 pi / dp; keep grids
    well inside half that.  The returned state is not normalized; use
    :func:`normalize_on`.
    """
    if dp is None:
        dp = 0.75 * sigma_p
    p0 = np.asarray(mean_momentum, dtype=float)
    m = int(np.ceil(cutoff * sigma_p / dp))
    axis = dp * np.arange(-m, m + 1)
    gx, gy, gz = np.meshgrid(axis, axis, axis, indexing="ij")
    offsets = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    r = np.linalg.norm(offsets, axis=1)
    keep = r <= cutoff * sigma_p
    offsets, r = offsets[keep], r[keep]
    envelope = np.exp(-r ** 2 / (4.0 * sigma_p ** 2))
    envelope *= _smooth_cut((r / sigma_p - window_start) / (cutoff - window_start))
    momenta = p0 + offsets
    amplitudes = np.empty((len(momenta), 4), dtype=complex)
    for i, p in enumerate(momenta):
        amplitudes[i] = positive_spinor(p, spin, mass, c, sign)
    amplitudes *= envelope[:, None]
    return ModeListState(momenta=momenta, signs=np.full(len(momenta), sign, dtype=np.int8),
                         amplitudes=amplitudes, weights=np.full(len(momenta), dp ** 3),
                         mass=mass, c=c)


def normalize_on(state, grid: HyperplaneGrid):
    """Rescale a state to unit norm measured on the given grid."""
    nrm = np.sqrt(inner_product(state, state, grid=grid).real)
    if nrm <= 0.0:
        raise StateError("cannot normalize a null state")
    return state.scaled(1.0 / nrm)


def gram_schmidt_on(states, grid: HyperplaneGrid):
    """Orthonormalize states against each other in the grid inner product."""
    out = []
    for s in states:
        for q in out:
            s = _subtract(s, q, inner_product(q, s, grid=grid))
        out.append(normalize_on(s, grid))
    return out


def _subtract(state, other, coef):
    if isinstance(state, GridSliceState) and isinstance(other, GridSliceState):
        if not _same_grid(state.grid, other.grid):
            raise StateError("slice combination requires a shared grid")
        return replace(state, values=state.values - coef * other.values)
    if isinstance(state, ModeListState) and isinstance(other, ModeListState):
        return combine_modes(state, other, 1.0, -coef)
    raise StateError("states must share a representation to combine")


def combine_modes(a: ModeListState, b: ModeListState, ca: complex, cb: complex) -> ModeListState:
    """ca * a + cb * b as a mode list over the union of the two mode sets."""
    if a.mass != b.mass or a.c != b.c:
        raise StateError("states live on different mass shells")
    index = {tuple(k): i for i, k in enumerate(_match_keys(a.momenta, a.signs))}
    momenta = [a.momenta.copy()]
    signs = [a.signs.copy()]
    weights = [a.weights.copy()]
    amplitudes = ca * a.amplitudes.copy()
    extra_rows = []
    for j, key in enumerate(map(tuple, _match_keys(b.momenta, b.signs))):
        i = index.get(key)
        if i is None:
            extra_rows.append(j)
        else:
            # contributions add in w * amplitude space
            amplitudes[i] += cb * (b.weights[j] / a.weights[i]) * b.amplitudes[j]
    if extra_rows:
        momenta.append(b.momenta[extra_rows])
        signs.append(b.signs[extra_rows])
        weights.append(b.weights[extra_rows])
        amplitudes = np.concatenate([amplitudes, cb * b.amplitudes[extra_rows]])
    return ModeListState(momenta=np.concatenate(momenta), signs=np.concatenate(signs),
                         amplitudes=amplitudes, weights=np.concatenate(weights),
                         mass=a.mass, c=a.c)
