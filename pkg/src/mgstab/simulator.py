"""Nonlinear dynamic-phasor simulation of the single-bus microgrid.

Each line current is a dynamic phasor ``I e^{jδ}`` in a stationary frame,
so the angles advance at roughly the grid frequency. The load bus is
eliminated exactly: ``V_L = Z_L * sum(I_i e^{jδ_i})``.

Two state layouts are used:

* simulation layout ``[p_f, q_f, Φ, I, δ]`` (filtered powers), stored in
  :class:`SimState` and traces;
* analysis layout ``[ω, E, Φ, I, δ]``, the ordering of the small-signal
  matrix. ``ω = ω_s - m p_f`` and ``E = E_s - n q_f`` map one to the other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import io
from .equilibrium import EquilibriumPoint
from .errors import DegenerateNetworkError, SingularityError
from .model import SimplifiedModel
from .numdiff import central_jacobian

EPS_CURRENT = 1e-6
DEFAULT_DT = 5e-5


@dataclass(frozen=True)
class SimState:
    p_f: np.ndarray
    q_f: np.ndarray
    phi: np.ndarray
    i: np.ndarray
    delta: np.ndarray

    def as_vector(self):
        return np.concatenate([self.p_f, self.q_f, self.phi, self.i, self.delta])

    @classmethod
    def from_vector(cls, y):
        y = np.asarray(y, dtype=float)
        n = y.size // 5
        return cls(*(y[k * n:(k + 1) * n].copy() for k in range(5)))


class Dynamics:
    """Right-hand sides bound to one model; arrays are precomputed once."""

    def __init__(self, model: SimplifiedModel, eps_current=EPS_CURRENT):
        if model.y_load == 0:
            raise DegenerateNetworkError("dynamic-phasor simulation needs a finite load impedance")
        prm = model.param_arrays()
        self.model = model
        self.n = model.n_dgs
        self.m, self.nq = prm["m"], prm["n"]
        self.omega_set, self.e_set = prm["omega_set"], prm["e_set"]
        self.w_f, self.L, self.r = prm["w_f"], prm["L"], prm["r"]
        self.z_load = 1.0 / model.y_load
        self.p = model.p
        self.bus_side = model.droop_power == "bus"
        self.eps = eps_current

    def network(self, e, phi, i, delta):
        """Bus voltage, droop powers and line derivatives for given sources."""
        if i.min() <= self.eps:
            k = int(np.argmin(i))
            raise SingularityError(f"DG {k + 1}: line current {i[k]:.3e} A at or below {self.eps} A", dg=k)
        # real arithmetic throughout; this is the integrator's inner loop
        cd, sd = np.cos(delta), np.sin(delta)
        i_re, i_im = i * cd, i * sd
        v = self.z_load * complex(i_re.sum(), i_im.sum())
        v_re, v_im = v.real, v.imag
        a = phi - delta
        es_re, es_im = e * np.cos(a), e * np.sin(a)     # E e^{j(Φ-δ)}
        vr_re = v_re * cd + v_im * sd                    # V e^{j(φ_L-δ)}
        vr_im = v_im * cd - v_re * sd
        if self.bus_side:
            p, q = self.p * i * vr_re, self.p * i * vr_im
        else:
            p, q = self.p * i * es_re, self.p * i * es_im
        di = (es_re - vr_re - self.r * i) / self.L
        ddelta = (es_im - vr_im) / (self.L * i)
        return v, p, q, di, ddelta

    def sim_rhs(self, y):
        n = self.n
        p_f, q_f, phi, i, delta = y[:n], y[n:2 * n], y[2 * n:3 * n], y[3 * n:4 * n], y[4 * n:]
        omega = self.omega_set - self.m * p_f
        e = self.e_set - self.nq * q_f
        _, p, q, di, dd = self.network(e, phi, i, delta)
        return np.concatenate([self.w_f * (p - p_f), self.w_f * (q - q_f), omega, di, dd])

    def analysis_rhs(self, x):
        n = self.n
        omega, e, phi, i, delta = x[:n], x[n:2 * n], x[2 * n:3 * n], x[3 * n:4 * n], x[4 * n:]
        _, p, q, di, dd = self.network(e, phi, i, delta)
        return np.concatenate([
            self.w_f * (self.omega_set - self.m * p - omega),
            self.w_f * (self.e_set - self.nq * q - e),
            omega, di, dd,
        ])

    def observables(self, y):
        n = self.n
        p_f, q_f, phi, i, delta = y[:n], y[n:2 * n], y[2 * n:3 * n], y[3 * n:4 * n], y[4 * n:]
        omega = self.omega_set - self.m * p_f
        e = self.e_set - self.nq * q_f
        i_ph = i * np.exp(1j * delta)
        v = self.z_load * i_ph.sum()
        s_bus = self.p * v * np.conj(i_ph)
        return omega, e, abs(v), np.angle(v), s_bus.real, s_bus.imag


def rhs(state: SimState, model: SimplifiedModel, eps_current=EPS_CURRENT) -> SimState:
    """Time derivative of a simulation state.

    Raises:
        SingularityError: a line current is at or below ``eps_current``.
    """
    return SimState.from_vector(Dynamics(model, eps_current).sim_rhs(state.as_vector()))


def equilibrium_state(eq: EquilibriumPoint, model: SimplifiedModel) -> SimState:
    """Simulation state sitting on the solved operating point."""
    if model.droop_power == "bus":
        p_f, q_f = eq.p_bus, eq.q_bus
    else:
        p_f, q_f = eq.p_e, eq.q_e
    return SimState(p_f.copy(), q_f.copy(), eq.phi_e.copy(), eq.i_e.copy(), eq.delta_e.copy())


def cold_start_state(model: SimplifiedModel, i_seed=1e-3) -> SimState:
    """Unloaded start: zero filtered powers and angles, near-zero currents.

    The polar current coordinates are singular at exactly zero current, so
    the lines start from ``i_seed`` amperes in phase with the sources.
    """
    n = model.n_dgs
    z = np.zeros(n)
    return SimState(z.copy(), z.copy(), z.copy(), np.full(n, float(i_seed)), z.copy())


def perturbed_state(eq: EquilibriumPoint, model: SimplifiedModel, rel=1e-3, angle=None) -> SimState:
    """Equilibrium plus an alternating-sign offset of relative size ``rel``.

    Powers and currents move by ``rel`` times their equilibrium magnitude,
    angles by ``angle`` radians (default ``rel``). Signs alternate across DGs
    so that both common and differential modes are excited.
    """
    base = equilibrium_state(eq, model)
    angle = rel if angle is None else angle
    sign = np.where(np.arange(model.n_dgs) % 2 == 0, 1.0, -1.0)
    return SimState(
        p_f=base.p_f + sign * rel * np.abs(base.p_f),
        q_f=base.q_f - sign * rel * np.abs(base.q_f),
        phi=base.phi + sign * angle,
        i=base.i + sign * rel * base.i,
        delta=base.delta - sign * angle,
    )


def to_analysis(state: SimState, model: SimplifiedModel):
    """Simulation state in the analysis ordering ``[ω, E, Φ, I, δ]``."""
    prm = model.param_arrays()
    return np.concatenate([prm["omega_set"] - prm["m"] * state.p_f, prm["e_set"] - prm["n"] * state.q_f,
                           state.phi, state.i, state.delta])


@dataclass
class SimTrace:
    """Sampled trajectory; per-DG arrays have shape (samples, N)."""

    times: np.ndarray
    states: np.ndarray
    omega: np.ndarray
    e: np.ndarray
    p: np.ndarray
    q: np.ndarray
    v_l: np.ndarray
    phi_l: np.ndarray
    dt: float
    stride: int
    diverged: bool = False
    diverged_at: float | None = None
    reason: str = ""
    n_dgs: int = field(init=False)

    def __post_init__(self):
        self.n_dgs = self.states.shape[1] // 5 if self.states.ndim == 2 else 0

    def _block(self, k):
        n = self.n_dgs
        return self.states[:, k * n:(k + 1) * n]

    @property
    def p_f(self):
        return self._block(0)

    @property
    def q_f(self):
        return self._block(1)

    @property
    def phi(self):
        return self._block(2)

    @property
    def i(self):
        return self._block(3)

    @property
    def delta(self):
        return self._block(4)

    @property
    def delta_rel(self):
        """Current angles relative to the bus voltage, wrapped to (-π, π]."""
        return _wrap(self.delta - self.phi_l[:, None])

    @property
    def phi_rel(self):
        return _wrap(self.phi - self.phi_l[:, None])

    def __len__(self):
        return self.times.size


def _wrap(a):
    w = np.mod(a + np.pi, 2 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


def integrate(x0: SimState, model: SimplifiedModel, t_end, dt=DEFAULT_DT, stride=1,
              eps_current=EPS_CURRENT) -> SimTrace:
    """Classical fixed-step RK4 from ``x0`` to ``t_end``.

    Samples are recorded at t = 0 and every ``stride`` steps. Integration
    halts early, returning the partial trace flagged ``diverged``, when the
    state becomes non-finite or a line current drops to ``eps_current``.

    Raises:
        SingularityError: the initial state itself is singular.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt!r}")
    if not t_end >= dt:
        raise ValueError(f"t_end must be >= dt, got t_end={t_end!r}, dt={dt!r}")
    if int(stride) < 1:
        raise ValueError(f"stride must be >= 1, got {stride!r}")
    stride = int(stride)
    dyn = Dynamics(model, eps_current)
    y = x0.as_vector().astype(float)
    try:
        dyn.sim_rhs(y)
    except SingularityError as exc:
        exc.time = 0.0
        raise

    n_steps = int(round(t_end / dt))
    n_samples = n_steps // stride + 1
    n = model.n_dgs
    times = np.empty(n_samples)
    states = np.empty((n_samples, 5 * n))
    obs = [np.empty((n_samples, n)) for _ in range(2)] + [np.empty(n_samples) for _ in range(2)] \
        + [np.empty((n_samples, n)) for _ in range(2)]

    def record(k, t, y):
        times[k] = t
        states[k] = y
        for arr, val in zip(obs, dyn.observables(y)):
            arr[k] = val

    record(0, 0.0, y)
    k = 1
    diverged, diverged_at, reason = False, None, ""
    f = dyn.sim_rhs
    h2, h6 = dt / 2, dt / 6
    for step in range(1, n_steps + 1):
        try:
            k1 = f(y)
            k2 = f(y + h2 * k1)
            k3 = f(y + h2 * k2)
            k4 = f(y + dt * k3)
        except SingularityError as exc:
            diverged, diverged_at, reason = True, (step - 1) * dt, str(exc)
            break
        y = y + h6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            diverged, diverged_at, reason = True, step * dt, "non-finite state"
            break
        if y[3 * n:4 * n].min() <= eps_current:
            diverged, diverged_at, reason = True, step * dt, "line current collapsed"
            break
        if step % stride == 0:
            record(k, step * dt, y)
            k += 1

    omega, e, v_l, phi_l, p, q = (a[:k] for a in obs)
    return SimTrace(times=times[:k], states=states[:k], omega=omega, e=e, p=p, q=q, v_l=v_l, phi_l=phi_l,
                    dt=dt, stride=stride, diverged=diverged, diverged_at=diverged_at, reason=reason)


def fd_jacobian(model: SimplifiedModel, eq: EquilibriumPoint, h=1e-6):
    """Central-difference Jacobian of the analysis-layout rhs at equilibrium."""
    dyn = Dynamics(model)
    return central_jacobian(dyn.analysis_rhs, eq.state_vector(), h=h)


def bus_power_mismatch(trace: SimTrace, model: SimplifiedModel):
    """Largest relative gap between summed DG bus powers and load consumption."""
    s_load = model.p * trace.v_l**2 / model.z_load_mag
    p_load = s_load * np.cos(model.theta_z)
    q_load = s_load * np.sin(model.theta_z)
    dp = np.abs(trace.p.sum(axis=1) - p_load) / np.maximum(np.abs(p_load), np.finfo(float).tiny)
    dq = np.abs(trace.q.sum(axis=1) - q_load) / np.maximum(np.abs(q_load), np.finfo(float).tiny)
    return float(max(dp.max(initial=0.0), dq.max(initial=0.0)))


def trace_columns(n_dgs):
    cols = ["t"]
    for k in range(1, n_dgs + 1):
        cols += [f"omega_{k}", f"e_{k}", f"p_{k}", f"q_{k}", f"i_{k}", f"delta_rel_{k}"]
    return cols + ["v_l", "phi_l"]


def write_trace_csv(path, trace: SimTrace | None, n_dgs, digest=None):
    """Trace CSV; ``trace=None`` writes the header only."""
    rows = []
    footer = []
    if trace is not None:
        d_rel = trace.delta_rel
        phi_l = _wrap(trace.phi_l)
        for s in range(len(trace)):
            row = [trace.times[s]]
            for k in range(n_dgs):
                row += [trace.omega[s, k], trace.e[s, k], trace.p[s, k], trace.q[s, k], trace.i[s, k], d_rel[s, k]]
            rows.append(row + [trace.v_l[s], phi_l[s]])
        if trace.diverged:
            footer.append(f"diverged_at={io.fmt(trace.diverged_at)} reason={trace.reason}")
    return io.write_csv(path, trace_columns(n_dgs), rows, comments=io.provenance(digest), footer=footer)
