"""Event generation: the ideal-measurement sampler and the piecewise
deterministic detection process.

Both engines advance in proper time tau.  Between events the quantum state,
as a solution element, changes only through the detection damping

    d Psi / d tau = -1/2 Lambda(tau) Psi,   Lambda = sum_j G_j^+ G_j;

the engine integrates this in coordinates by pinning the state to a fixed
reference slice: with Xi(tau) = (restriction at the reference plane) Psi_tau
and K(tau) the exact spectral propagator from the reference plane to the
coupling plane x0 = c tau,

    d Xi / d tau = -1/2 K(tau)^-1 [ (sum_j g_j(tau)^2) K(tau) Xi ],

where each g_j is the detector's scalar window on its coupling plane.  The
right-hand side is smooth and small (order kappa^2), so an adaptive embedded
Runge-Kutta pair with dense output integrates it efficiently; jump times are
localized on the dense output by bisection.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import RK45

from diraclab.algebra import minkowski_sq
from diraclab.hyperplane import HyperplaneGrid
from diraclab.states import (
    GridSliceState,
    ModeListState,
    StateError,
    inner_product,
    inner_product_on,
    restrict,
    values_on_grid,
)
from diraclab.evolution import DetectorSpec, FreePropagator, detector_profile, _shift_plane

log = logging.getLogger(__name__)


class SchedulingError(ValueError):
    """A schedule or detector layout violates the event ordering rules."""


class IncompleteObservableError(ValueError):
    pass


# ---------------------------------------------------------------------------
# reproducible randomness


class RandomStream:
    """Counter-based random stream (Philox keyed by seed and trajectory).

    One engine draw is one ``uniform()`` call; the consumed-draw counter is
    part of every event record so that transformed or conjugated reruns can
    be checked draw for draw.
    """

    def __init__(self, seed: int, trajectory: int = 0):
        self.seed = int(seed)
        self.trajectory = int(trajectory)
        self._gen = np.random.Generator(np.random.Philox(key=[self.seed, self.trajectory]))
        self.draws_consumed = 0

    def uniform(self) -> float:
        self.draws_consumed += 1
        return float(self._gen.random())

    def spawn(self, trajectory: int) -> "RandomStream":
        return RandomStream(self.seed, trajectory)


# ---------------------------------------------------------------------------
# event records


EVENT_LOG_HEADER = "kind,tau,z0,z1,z2,z3,omega_before,omega_after,detail,seed,draws_consumed"


@dataclass(frozen=True)
class EventRecord:
    kind: str                 # preparation | measurement | detection
    tau: float
    z: np.ndarray             # spacetime point, shape (4,)
    omega_before: int
    omega_after: int
    detail: int               # outcome index or detector id; -1 for preparation
    rng_draws_consumed: int
    seed: int = 0

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    def csv_row(self) -> str:
        nums = ",".join(format(v, ".17g") for v in (self.tau, *self.z))
        return (f"{self.kind},{nums},{self.omega_before},{self.omega_after},"
                f"{self.detail},{self.seed},{self.rng_draws_consumed}")


def backward_cone_violation(z_prev, z_new, tol: float = 0.0) -> bool:
    """True when z_new lies in the closed backward light cone of z_prev
    (and is not the same point): the forbidden configuration."""
    z_prev = np.asarray(z_prev, dtype=float)
    z_new = np.asarray(z_new, dtype=float)
    if np.array_equal(z_prev, z_new):
        return False
    return bool(minkowski_sq(z_new - z_prev) >= -tol and z_new[0] <= z_prev[0] + tol)


def validate_event_points(points) -> list:
    """All pairwise-in-sequence ordering violations (empty when clean)."""
    problems = []
    for i in range(1, len(points)):
        if backward_cone_violation(points[i - 1], points[i]):
            problems.append(
                f"event point {i} at {np.asarray(points[i])} lies in the closed backward "
                f"light cone of event point {i - 1}")
    return problems


def write_event_log(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(EVENT_LOG_HEADER + "\n")
        for r in records:
            fh.write(r.csv_row() + "\n")


# ---------------------------------------------------------------------------
# observables and the ideal-measurement engine


@dataclass(frozen=True)
class Observable:
    """Discrete observable sum_j lambda_j |Phi_j><Phi_j| with an implicit
    complement projector completing the identity on the simulated subspace."""

    eigenvalues: tuple
    projectors: tuple  # orthonormal quantum states

    def __post_init__(self):
        if len(self.eigenvalues) != len(self.projectors):
            raise StateError("one eigenvalue per projector state")

    def validate_on(self, grid: HyperplaneGrid, tol: float = 1e-10) -> float:
        """Largest orthonormality defect |<Phi_j|Phi_k> - delta_jk| on the grid."""
        vals = [values_on_grid(p, grid) for p in self.projectors]
        worst = 0.0
        for j in range(len(vals)):
            for k in range(j, len(vals)):
                ip = inner_product_on(grid, vals[j], vals[k])
                worst = max(worst, abs(ip - (1.0 if j == k else 0.0)))
        if worst > tol:
            raise StateError(f"projector family is not orthonormal (defect {worst:.2e})")
        return worst

    def probabilities(self, psi, grid: HyperplaneGrid) -> np.ndarray:
        """Born probabilities |<Phi_j|psi>|^2 evaluated on the given plane."""
        psi_vals = values_on_grid(psi, grid)
        return np.array([
            abs(inner_product_on(grid, values_on_grid(p, grid), psi_vals)) ** 2
            for p in self.projectors
        ])

    def completeness_defect(self, psi, grid: HyperplaneGrid) -> float:
        """||psi||^2 - sum_j p_j, the complement projector's share."""
        psi_vals = values_on_grid(psi, grid)
        nrm = inner_product_on(grid, psi_vals, psi_vals).real
        return float(nrm - np.sum(self.probabilities(psi, grid)))


@dataclass(frozen=True)
class MeasurementSpec:
    tau: float
    z: np.ndarray
    observable: Observable

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        z.setflags(write=False)
        object.__setattr__(self, "z", z)


def _select_cumulative(probs, draw) -> int:
    """Index of the first cumulative bucket exceeding the draw; the residual
    band left by an incomplete sum (at most the completeness tolerance) falls
    to the last outcome."""
    cum = np.cumsum(probs)
    return min(int(np.searchsorted(cum, draw)), len(probs) - 1)


def run_measurement_sequence(psi0, schedule, rng: RandomStream, grid: HyperplaneGrid,
                             x0, tau0: float = 0.0,
                             completeness_tol: float = 1e-8):
    """Sample one trajectory of the ideal-measurement process.

    The system state is (omega, Psi); it is constant in tau except at the
    scheduled measurements, where outcome j is chosen with probability
    |<Phi_j|Psi>|^2 from one uniform draw and the state collapses to
    (j, Phi_j).  Returns (trajectory, event records).
    """
    schedule = sorted(schedule, key=lambda m: m.tau)
    taus = [tau0] + [m.tau for m in schedule]
    if np.any(np.diff(taus) <= 0):
        raise SchedulingError("measurement proper times must increase strictly from tau0")
    problems = validate_event_points([np.asarray(x0)] + [m.z for m in schedule])
    if problems:
        raise SchedulingError("; ".join(problems))

    from diraclab.states import SystemState
    state = SystemState(omega=0, psi=psi0, tau=tau0)
    trajectory = [replace_system(state)]
    records = [EventRecord("preparation", tau0, np.asarray(x0), 0, 0, -1,
                           rng.draws_consumed, rng.seed)]
    for m in schedule:
        probs = m.observable.probabilities(state.psi, grid)
        total = float(np.sum(probs))
        if total < 1.0 - completeness_tol:
            raise IncompleteObservableError(
                f"probabilities sum to {total:.12f} < 1 - {completeness_tol}; "
                "observable incomplete on the reachable subspace")
        draw = rng.uniform()
        j = _select_cumulative(probs, draw)
        state = SystemState(omega=j, psi=m.observable.projectors[j], tau=m.tau)
        trajectory.append(replace_system(state))
        records.append(EventRecord("measurement", m.tau, m.z, records[-1].omega_after, j, j,
                                   rng.draws_consumed, rng.seed))
    return trajectory, records


def replace_system(s):
    from diraclab.states import SystemState
    return SystemState(omega=s.omega, psi=s.psi, tau=s.tau)


def measurement_probability_tree(psi0, schedule, grid: HyperplaneGrid, branch=()):
    """Probability arrays along one outcome branch of the covariant engine.

    Entry i is the probability vector at measurement i conditioned on the
    outcomes ``branch[:i]``; no sampling is involved.
    """
    out = []
    psi = psi0
    for i, m in enumerate(sorted(schedule, key=lambda m: m.tau)):
        out.append(m.observable.probabilities(psi, grid))
        if i >= len(branch):
            break
        psi = m.observable.projectors[branch[i]]
    return out


# ---------------------------------------------------------------------------
# standard reduction reference (fixed frame)


@dataclass(frozen=True)
class SliceObservable:
    """Observable given by orthonormal slice-space functions phi_j."""

    eigenvalues: tuple
    functions: tuple  # arrays (N, N, N, 4) orthonormal in the slice L2


def standard_reduction_reference(psi0_slice: GridSliceState, schedule, hamiltonian=None,
                                 branch=(), steps_per_unit_time: int = 64):
    """Fixed-frame reduction-postulate probabilities, the oracle for the
    covariant engine.

    ``schedule`` is a list of (t_i, SliceObservable) with increasing times;
    the slice evolves with exp(-i t H) between measurements (spectral when
    free, split-step with a static potential) and probabilities are plain
    slice inner products.  Returns probability arrays along ``branch``.
    """
    from diraclab.evolution import evolve_free, evolve_potential, DiracHamiltonian

    grid = psi0_slice.grid
    t_now = 0.0
    sl = psi0_slice
    out = []
    for i, (t_i, obs) in enumerate(schedule):
        if t_i < t_now:
            raise SchedulingError("reference schedule times must be nondecreasing")
        dt = t_i - t_now
        if dt > 0:
            if hamiltonian is None or hamiltonian.potential is None:
                sl = evolve_free(sl, dt, check_nyquist=False)
            else:
                sl = evolve_potential(sl, dt, hamiltonian,
                                      steps=max(1, int(np.ceil(dt * steps_per_unit_time))),
                                      check_nyquist=False)
        t_now = t_i
        probs = np.array([abs(inner_product_on(grid.with_params(sl.grid.params), f, sl.values)) ** 2
                          for f in obs.functions])
        out.append(probs)
        if i >= len(branch):
            break
        sl = replace(sl, values=np.asarray(obs.functions[branch[i]], dtype=complex))
    return out


# ---------------------------------------------------------------------------
# the detection process


@dataclass
class PdpSettings:
    rtol: float = 1e-9
    atol: float = 1e-13
    tau_tol: float = 1e-10          # bisection tolerance for jump times
    survival_floor: float = 1e-10   # stop integrating below this norm^2
    max_step: float = np.inf
    bookkeeping_factor: float = 2.0


class DampedFlow:
    """The deterministic no-jump segment of the detection process.

    Integrates the conjugated damping equation from (tau_start, Xi0) with an
    adaptive embedded Runge-Kutta pair (Dormand-Prince 4(5)), keeping every
    accepted step's dense interpolant so that jump times can be bisected and
    ensembles can reuse one flow.  The augmented last component accumulates
    the total rate integral, giving the bookkeeping identity

        1 - ||Xi(tau)||^2 = integral of <Xi|Lambda Xi>  (start norm 1)

    which is checked on every accepted step.
    """

    def __init__(self, xi0: GridSliceState, detectors, tau_start: float,
                 tau_end: float, settings: PdpSettings = None,
                 stop_normsq: float = None):
        self.grid = xi0.grid
        self.c = xi0.c
        self.detectors = list(detectors)
        self.tau_start = float(tau_start)
        self.tau_end = float(tau_end)
        self.settings = settings or PdpSettings()
        self.stop_normsq = stop_normsq
        self.prop = FreePropagator(self.grid, xi0.mass, xi0.c)
        # periodic cell weight: the spectral propagator is exactly unitary in
        # this quadrature, which makes the norm-loss bookkeeping identity exact
        self._weights = self.grid.spacing ** 3
        self._static_profiles = {}
        for d in self.detectors:
            if np.all(d.points[:, 1:] == d.points[0, 1:]):
                self._static_profiles[d.id] = detector_profile(d, d.taus[0], self.grid)
        self.shape = xi0.values.shape
        self.mass = xi0.mass
        self.segments = []   # (t_a, t_b, dense)
        self.accepted = []   # (tau, normsq, acc)
        self.bookkeeping_max_gap = 0.0
        self.bookkeeping_budget = 0.0
        # the ODE state lives in the propagator's spectral eigenbasis, where
        # moving between the reference and coupling planes is a diagonal phase
        self._integrate(self.prop.to_eigen(xi0.values))

    # -- damping generator ---------------------------------------------------

    def _profiles(self, tau: float):
        out = []
        for d in self.detectors:
            cached = self._static_profiles.get(d.id)
            out.append(cached if cached is not None else detector_profile(d, tau, self.grid))
        return out

    def _damping(self, tau: float):
        total = np.zeros(self.grid.shape)
        for g in self._profiles(tau):
            total += g * g
        return total

    def _phase(self, tau: float) -> np.ndarray:
        return np.exp(-1j * self.prop.omega * (tau - self.tau_start))

    def _coupling_plane_values(self, coeffs: np.ndarray, tau: float) -> np.ndarray:
        """Position values of the state on the x0 = c tau coupling plane."""
        return self.prop.from_eigen(self._phase(tau) * coeffs)

    def _rhs(self, tau: float, y: np.ndarray) -> np.ndarray:
        coeffs = y[:-2].view(complex).reshape(self.shape)
        phase = self._phase(tau)
        phi = self.prop.from_eigen(phase * coeffs)
        d2 = self._damping(tau)
        back = self.prop.to_eigen(d2[..., None] * phi)
        dens = np.sum(np.abs(phi) ** 2, axis=-1)
        rate = float(np.sum(self._weights * d2 * dens))
        out = np.empty_like(y)
        out[:-2] = (-0.5 * phase.conj() * back).ravel().view(float)
        out[-2] = rate
        out[-1] = 0.0
        return out

    # -- integration -----------------------------------------------------------

    def _pack(self, coeffs):
        y = np.empty(coeffs.size * 2 + 2)
        y[:-2] = np.ascontiguousarray(coeffs).ravel().view(float)
        y[-2] = 0.0
        y[-1] = 0.0
        return y

    def _normsq(self, y) -> float:
        coeffs = y[:-2].view(complex)
        return float(np.sum(np.abs(coeffs) ** 2))

    def _integrate(self, coeffs0):
        s = self.settings
        y0 = self._pack(coeffs0)
        start_norm = self._normsq(y0)
        rk = RK45(self._rhs, self.tau_start, y0, self.tau_end,
                  rtol=s.rtol, atol=s.atol, max_step=s.max_step)
        self.accepted.append((self.tau_start, start_norm, 0.0))
        while rk.status == "running":
            rk.step()
            dense = rk.dense_output()
            self.segments.append((dense.t_min, dense.t_max, dense))
            nsq = self._normsq(rk.y)
            acc = float(rk.y[-2])
            self.accepted.append((rk.t, nsq, acc))
            gap = abs((start_norm - nsq) - acc)
            self.bookkeeping_max_gap = max(self.bookkeeping_max_gap, gap)
            self.bookkeeping_budget += s.bookkeeping_factor * (s.atol + s.rtol * max(1.0, acc))
            if gap > self.bookkeeping_budget:
                raise StateError(
                    f"norm-loss bookkeeping identity violated: gap {gap:.3e} exceeds "
                    f"{self.bookkeeping_budget:.3e}; the coupling operator is inconsistent")
            if nsq < s.survival_floor:
                break
            if self.stop_normsq is not None and nsq <= self.stop_normsq:
                break  # the crossing is bracketed by this accepted step
        self.tau_reached = rk.t

    # -- dense queries -----------------------------------------------------------

    def _y_at(self, tau: float) -> np.ndarray:
        if tau <= self.tau_start:
            tau = self.tau_start
        for (a, b, dense) in self.segments:
            if a - 1e-14 <= tau <= b + 1e-14:
                return dense(tau)
        if not self.segments:
            raise StateError("flow has no integrated segments")
        a, b, dense = self.segments[-1]
        if tau > b:
            raise StateError(f"tau {tau} beyond the integrated range {b}")
        return dense(tau)

    def _coeffs_at(self, tau: float) -> np.ndarray:
        y = self._y_at(tau)
        return y[:-2].view(complex).reshape(self.shape)

    def state_values_at(self, tau: float) -> np.ndarray:
        """Xi(tau): the state's values at the flow's reference plane."""
        return self.prop.from_eigen(self._coeffs_at(tau))

    def normsq_at(self, tau: float) -> float:
        if tau <= self.tau_start:
            return self.accepted[0][1]
        return self._normsq(self._y_at(tau))

    def survival_curve(self, taus) -> np.ndarray:
        return np.array([self.normsq_at(t) for t in np.asarray(taus, dtype=float)])

    def accepted_curve(self) -> np.ndarray:
        return np.array(self.accepted)

    def detector_norms_at(self, tau: float):
        """||g_j K Xi||^2 per detector at tau (the selection weights)."""
        phi = self._coupling_plane_values(self._coeffs_at(tau), tau)
        dens = np.sum(np.abs(phi) ** 2, axis=-1)
        return [float(np.sum(self._weights * g * g * dens)) for g in self._profiles(tau)]

    def find_crossing(self, threshold: float) -> float | None:
        """First tau with ||Xi||^2 = threshold, bisected on the dense output."""
        start = self.accepted[0][1]
        if start <= threshold:
            return self.tau_start
        for i in range(1, len(self.accepted)):
            tau_b, nsq_b, _ = self.accepted[i]
            if nsq_b <= threshold:
                tau_a = self.accepted[i - 1][0]
                dense = self.segments[i - 1][2]
                lo, hi = tau_a, tau_b
                while hi - lo > self.settings.tau_tol:
                    mid = 0.5 * (lo + hi)
                    if self._normsq(dense(mid)) <= threshold:
                        hi = mid
                    else:
                        lo = mid
                return 0.5 * (lo + hi)
        return None

    def collapsed_values_at(self, tau: float, detector_index: int) -> np.ndarray:
        """Apply G_l and renormalize; returned values live on the x0 = c tau plane."""
        phi = self._coupling_plane_values(self._coeffs_at(tau), tau)
        g = self._profiles(tau)[detector_index]
        collapsed = g[..., None] * phi
        nrm = np.sqrt(np.sum(self._weights * np.sum(np.abs(collapsed) ** 2, axis=-1)))
        if nrm == 0.0:
            raise StateError("collapse onto a null state")
        return collapsed / nrm


@dataclass
class DetectionResult:
    trajectory: list
    records: list
    survival: np.ndarray        # accepted steps (tau, norm^2, accumulated rate)
    escaped: bool
    final_state: GridSliceState
    flags: list = field(default_factory=list)


def _initial_slice(psi0, x0, tau0, grid, c):
    plane_x0 = c * tau0
    target = _shift_plane(grid, plane_x0 - grid.params.y[0])
    if isinstance(psi0, GridSliceState) and psi0.grid.params.y[0] == plane_x0:
        sl = psi0
    else:
        sl = restrict(psi0, grid=target)
    # the engines track norms in the periodic cell quadrature (see DampedFlow)
    nsq = float(np.sum(np.abs(sl.values) ** 2)) * sl.grid.spacing ** 3
    if abs(nsq - 1.0) > 1e-6:
        log.warning("initial state norm^2 = %.8f on the preparation plane; renormalizing", nsq)
    return replace(sl, values=sl.values / np.sqrt(nsq))


def run_detection(psi0, x0, detectors, tau_max: float, rng: RandomStream,
                  grid: HyperplaneGrid = None, tau0: float = 0.0,
                  settings: PdpSettings = None, max_events: int = None,
                  rearm: str = "keep", replacements: dict = None):
    """Sample one trajectory of the piecewise deterministic detection process.

    Per segment: one uniform draw r fixes the norm-loss threshold; the damped
    flow is integrated until ||Psi||^2 crosses 1 - r (bisected on the dense
    output); one more draw selects the firing detector with probability
    ||G_k Psi||^2 / sum_j ||G_j Psi||^2; the state collapses to the
    normalized G_l Psi and the classical label becomes l.  If the survival
    norm stays above 1 - r up to tau_max, the particle escapes undetected
    and the final damped state is recorded.  ``rearm`` is one of keep, drop,
    replace (with a ``replacements`` map detector id -> new DetectorSpec
    list).
    """
    from diraclab.states import SystemState

    settings = settings or PdpSettings()
    x0 = np.asarray(x0, dtype=float)
    if grid is None:
        if not isinstance(psi0, GridSliceState):
            raise StateError("pass a grid to run a mode-list preparation")
        grid = psi0.grid
    if rearm not in ("keep", "drop", "replace"):
        raise SchedulingError(f"unknown re-arm policy {rearm!r}")
    if rearm == "replace" and not replacements:
        raise SchedulingError("re-arm policy 'replace' needs a replacements map")
    problems = []
    for d in detectors:
        problems += d.validate_subluminal()
        problems += d.validate_start_cone(x0, tau0)
    if problems:
        raise SchedulingError("; ".join(problems))

    sl = _initial_slice(psi0, x0, tau0, grid, psi0.c)
    detectors = list(detectors)
    omega = 0
    tau = tau0
    records = [EventRecord("preparation", tau0, x0, 0, 0, -1, rng.draws_consumed, rng.seed)]
    trajectory = [SystemState(omega=0, psi=sl, tau=tau0)]
    survival_rows = []
    flags = []
    escaped = False

    while True:
        if not detectors or tau >= tau_max or (max_events is not None
                                               and len(records) - 1 >= max_events):
            escaped = not detectors or tau >= tau_max
            break
        r = rng.uniform()
        flow = DampedFlow(sl, detectors, tau, tau_max, settings, stop_normsq=1.0 - r)
        survival_rows.extend(flow.accepted)
        tau1 = flow.find_crossing(1.0 - r)
        if tau1 is None:
            # survival stayed above 1 - r: the particle escapes undetected
            escaped = True
            final_values = flow.state_values_at(flow.tau_reached)
            plane = _shift_plane(grid, psi0.c * tau - grid.params.y[0])
            sl = GridSliceState(grid=plane, values=final_values, mass=sl.mass, c=sl.c)
            tau = flow.tau_reached
            break
        norms = flow.detector_norms_at(tau1)
        total = sum(norms)
        if total <= 0:
            raise StateError("no detector has support on the collapsing state")
        draw = rng.uniform()
        l = _select_cumulative(np.asarray(norms) / total, draw)
        z_l = detectors[l].position(tau1)
        if backward_cone_violation(records[-1].z, z_l):
            flags.append(f"detection at tau={tau1:.9g} lies in the closed backward cone "
                         f"of the previous event")
            log.warning("%s", flags[-1])
        if z_l[0] < x0[0] and not backward_cone_violation(x0, z_l):
            flags.append(f"detection at tau={tau1:.9g} happens before the preparation time "
                         "(allowed: outside the backward cone)")
        collapsed = flow.collapsed_values_at(tau1, l)
        plane = _shift_plane(grid, psi0.c * tau1 - grid.params.y[0])
        sl = GridSliceState(grid=plane, values=collapsed, mass=sl.mass, c=sl.c)
        det_id = detectors[l].id
        records.append(EventRecord("detection", tau1, z_l, omega, det_id, det_id,
                                   rng.draws_consumed, rng.seed))
        omega = det_id
        trajectory.append(SystemState(omega=omega, psi=sl, tau=tau1))
        tau = tau1
        if rearm == "drop":
            detectors = detectors[:l] + detectors[l + 1:]
        elif rearm == "replace":
            detectors = detectors[:l] + list(replacements.get(det_id, [])) + detectors[l + 1:]

    return DetectionResult(trajectory=trajectory, records=records,
                           survival=np.asarray(survival_rows), escaped=escaped,
                           final_state=sl, flags=flags)


class PauliFlow:
    """Two-component damping reference: Schrodinger kinetic term plus the
    same detector windows, the small-velocity limit of the detection flow.

    Integrates i d phi / d tau = [k^2 / 2m - (i/2) sum_j g_j^2] phi on the
    upper spinor components in the interaction picture, with the rest phase
    removed.  Used to check that the relativistic survival curve converges
    to this one as the c parameter grows.
    """

    def __init__(self, slice0: GridSliceState, detectors, tau_start: float,
                 tau_end: float, settings: PdpSettings = None,
                 lower_fraction_warn: float = 1e-3):
        from diraclab.states import momentum_lattice

        self.grid = slice0.grid
        self.settings = settings or PdpSettings()
        self.detectors = list(detectors)
        self.tau_start = float(tau_start)
        self._weights = self.grid.spacing ** 3
        dens_all = np.sum(np.abs(slice0.values) ** 2, axis=-1)
        dens_low = np.sum(np.abs(slice0.values[..., 2:]) ** 2, axis=-1)
        total = float(np.sum(self._weights * dens_all))
        low = float(np.sum(self._weights * dens_low))
        self.lower_fraction = low / total if total else 0.0
        if self.lower_fraction > lower_fraction_warn:
            log.warning("lower-component fraction %.3e breaks the small-velocity "
                        "assumption (> %.1e)", self.lower_fraction, lower_fraction_warn)
        phi0 = slice0.values[..., :2].copy()
        nrm = np.sqrt(np.sum(self._weights * np.sum(np.abs(phi0) ** 2, axis=-1)))
        phi0 /= nrm
        k1 = momentum_lattice(self.grid)
        kx, ky, kz = np.meshgrid(k1, k1, k1, indexing="ij")
        self._kinetic = (kx ** 2 + ky ** 2 + kz ** 2) / (2.0 * slice0.mass)
        self.shape = phi0.shape
        self._scale = np.sqrt(self._weights / self.grid.npoints)
        self._static_profiles = {}
        for d in self.detectors:
            if np.all(d.points[:, 1:] == d.points[0, 1:]):
                self._static_profiles[d.id] = detector_profile(d, d.taus[0], self.grid)
        self.segments = []
        self.accepted = []
        self._integrate(np.fft.fftn(phi0, axes=(0, 1, 2)) * self._scale, tau_end)

    def _damping(self, tau):
        total = np.zeros(self.grid.shape)
        for d in self.detectors:
            g = self._static_profiles.get(d.id)
            if g is None:
                g = detector_profile(d, tau, self.grid)
            total += g * g
        return total

    def _rhs(self, tau, y):
        coeffs = y.view(complex).reshape(self.shape)
        phase = np.exp(-1j * self._kinetic * (tau - self.tau_start))[..., None]
        phi = np.fft.ifftn(phase * coeffs, axes=(0, 1, 2))
        back = np.fft.fftn(self._damping(tau)[..., None] * phi, axes=(0, 1, 2))
        return (-0.5 * phase.conj() * back).ravel().view(float)

    def _normsq(self, y):
        return float(np.sum(np.abs(y.view(complex)) ** 2))

    def _integrate(self, phi0, tau_end):
        s = self.settings
        y0 = np.ascontiguousarray(phi0).ravel().view(float).copy()
        rk = RK45(self._rhs, self.tau_start, y0, tau_end, rtol=s.rtol, atol=s.atol)
        self.accepted.append((self.tau_start, self._normsq(y0)))
        while rk.status == "running":
            rk.step()
            self.segments.append((rk.t_old, rk.t, rk.dense_output()))
            self.accepted.append((rk.t, self._normsq(rk.y)))

    def survival_curve(self, taus) -> np.ndarray:
        out = []
        for tau in np.asarray(taus, dtype=float):
            if tau <= self.tau_start:
                out.append(self.accepted[0][1])
                continue
            for (a, b, dense) in self.segments:
                if a - 1e-14 <= tau <= b + 1e-14:
                    out.append(self._normsq(dense(tau)))
                    break
            else:
                raise StateError(f"tau {tau} beyond the integrated range")
        return np.asarray(out)


def nonrelativistic_reference(psi0, x0, detectors, taus, grid: HyperplaneGrid = None,
                              tau0: float = 0.0, settings: PdpSettings = None) -> np.ndarray:
    """Survival probability curve of the two-component limit dynamics."""
    if grid is None:
        grid = psi0.grid
    sl = _initial_slice(psi0, x0, tau0, grid, psi0.c)
    taus = np.asarray(taus, dtype=float)
    flow = PauliFlow(sl, detectors, tau0, float(taus.max()), settings)
    return flow.survival_curve(taus)


def damped_survival_curve(psi0, x0, detectors, taus, grid: HyperplaneGrid = None,
                          tau0: float = 0.0, settings: PdpSettings = None) -> np.ndarray:
    """Survival curve of the relativistic no-jump damped flow."""
    if grid is None:
        grid = psi0.grid
    sl = _initial_slice(psi0, x0, tau0, grid, psi0.c)
    taus = np.asarray(taus, dtype=float)
    flow = DampedFlow(sl, list(detectors), tau0, float(taus.max()), settings)
    return flow.survival_curve(taus)


def detection_ensemble_first_jump(psi0, x0, detectors, tau_max: float, seed: int,
                                  n_trajectories: int, grid: HyperplaneGrid = None,
                                  tau0: float = 0.0, settings: PdpSettings = None):
    """First-detection statistics over an ensemble of seeded trajectories.

    All trajectories share the deterministic no-jump flow, so it is
    integrated once and each trajectory only bisects its own threshold and
    draws its own detector, exactly as a full per-trajectory run would.
    Returns (jump times, detector ids, escaped flags); entries with no jump
    carry tau = nan and id = -1.
    """
    settings = settings or PdpSettings()
    if grid is None:
        grid = psi0.grid
    sl = _initial_slice(psi0, x0, tau0, grid, psi0.c)
    flow = DampedFlow(sl, list(detectors), tau0, tau_max, settings)
    taus = np.full(n_trajectories, np.nan)
    ids = np.full(n_trajectories, -1, dtype=int)
    norm_cache = {}
    for traj in range(n_trajectories):
        rng = RandomStream(seed, traj)
        r = rng.uniform()
        tau1 = flow.find_crossing(1.0 - r)
        if tau1 is None:
            continue
        key = round(tau1 / settings.tau_tol)
        if key not in norm_cache:
            norm_cache[key] = np.asarray(flow.detector_norms_at(tau1))
        norms = norm_cache[key]
        draw = rng.uniform()
        l = _select_cumulative(norms / norms.sum(), draw)
        taus[traj] = tau1
        ids[traj] = detectors[l].id
    return taus, ids, np.isnan(taus)
