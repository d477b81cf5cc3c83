"""Linearization coefficients and state matrices.

The dynamic-phasor model has five states per DG, stacked block-wise as
``[dω_1..N, dE_1..N, dΦ_1..N, dI_1..N, dδ_1..N]``. The frame is stationary:
angles advance at the equilibrium frequency, so the current-angle couplings
carry omega_e itself.

Coefficients are indexed as in the classical derivation: ``k[1]..k[8]`` are
the power sensitivities, ``kp[1]..kp[8]`` their droop-filtered versions and
``k[9]..k[20]`` the line sensitivities. Index 0 is unused.

Two power sets enter. Sensitivities of the bus-side powers (``p V conj(I)``)
use the bus equilibrium powers; those written through the inverter voltage use
the inverter-terminal powers.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .equilibrium import EquilibriumPoint
from .errors import DegenerateEquilibriumError, DegenerateLinearizationError
from .model import SimplifiedModel
from .network import bus_voltage_from_sources, powers
from .numdiff import central_jacobian

I_MIN = 1e-6
STATE_BLOCKS = ("omega", "E", "Phi", "I", "delta")
STATIC_BLOCKS = ("P_f", "Q_f", "Phi")


def state_names(n_dgs, blocks=STATE_BLOCKS):
    return [f"{b}_{i + 1}" for b in blocks for i in range(n_dgs)]


@dataclass(frozen=True)
class DgCoefficients:
    """All coefficients of one DG; ``k`` has 21 slots, ``kp`` has 9."""

    k: np.ndarray
    kp: np.ndarray


@dataclass(frozen=True)
class SmallSignalModel:
    coeffs: tuple[DgCoefficients, ...]
    a_l: np.ndarray
    a_sys: np.ndarray
    a_static: np.ndarray | None
    states: tuple[str, ...]


def _check_point(eq: EquilibriumPoint, i):
    if not 0 <= i < eq.n_dgs:
        raise IndexError(f"DG index {i} out of range for {eq.n_dgs} DGs")
    if eq.i_e[i] <= I_MIN:
        raise DegenerateEquilibriumError(f"DG {i + 1}: equilibrium current {eq.i_e[i]:.3e} A is below {I_MIN} A")
    if eq.v_le <= 0:
        raise DegenerateEquilibriumError("bus voltage is zero at equilibrium")


def power_coefficients(eq: EquilibriumPoint, i, p):
    """k1..k8 of DG ``i`` (0-based) from the trigonometric expressions.

    Returns an array of 8 values; ``k1`` and ``k5`` in A, ``k3`` and ``k7``
    in V, the rest in W or var.
    """
    _check_point(eq, i)
    v, cur = eq.v_le, eq.i_e[i]
    a = eq.phi_le - eq.delta_e[i]
    c, s = np.cos(a), np.sin(a)
    return np.array([
        p * cur * c,
        -p * v * cur * s,
        p * v * c,
        p * v * cur * s,
        p * cur * s,
        p * v * cur * c,
        p * v * s,
        -p * v * cur * c,
    ])


def power_coefficients_power_form(eq: EquilibriumPoint, i, p=None):
    """k1..k8 rewritten through the bus equilibrium powers."""
    _check_point(eq, i)
    pb, qb, v, cur = eq.p_bus[i], eq.q_bus[i], eq.v_le, eq.i_e[i]
    return np.array([pb / v, -qb, pb / cur, qb, qb / v, pb, qb / cur, -pb])


def droop_coefficients(k, m, n, w_f):
    """Droop-filtered coefficients kp1..kp8 from k1..k8."""
    k = np.asarray(k, dtype=float)
    return np.concatenate([-m * w_f * k[:4], -n * w_f * k[4:8]])


def line_coefficients(eq: EquilibriumPoint, i, L, r, p=None):
    """k9..k20 of DG ``i`` (0-based) from the trigonometric expressions."""
    _check_point(eq, i)
    e, cur, v = eq.e_e[i], eq.i_e[i], eq.v_le
    a = eq.phi_e[i] - eq.delta_e[i]
    b = eq.phi_le - eq.delta_e[i]
    ca, sa, cb, sb = np.cos(a), np.sin(a), np.cos(b), np.sin(b)
    return np.array([
        ca / L,                                  # k9
        -e / L * sa,                             # k10
        -r / L,                                  # k11
        e / L * sa - v / L * sb,                 # k12
        -cb / L,                                 # k13
        v / L * sb,                              # k14
        sa / (L * cur),                          # k15
        e / (L * cur) * ca,                      # k16
        -eq.omega_e / cur,                       # k17
        -e / (L * cur) * ca + v / (L * cur) * cb,  # k18
        -sb / (L * cur),                         # k19
        -v / (L * cur) * cb,                     # k20
    ])


def line_coefficients_power_form(eq: EquilibriumPoint, i, L, r, p):
    """k9..k20 through equilibrium powers, current and frequency.

    Terms written with the inverter voltage use inverter-terminal powers,
    terms written with the bus voltage use bus powers.
    """
    _check_point(eq, i)
    pi, qi = eq.p_e[i], eq.q_e[i]
    pb, qb = eq.p_bus[i], eq.q_bus[i]
    e, cur, v, w = eq.e_e[i], eq.i_e[i], eq.v_le, eq.omega_e
    return np.array([
        pi / (p * L * e * cur),
        -qi / (p * L * cur),
        -r / L,
        cur * w,
        -pb / (p * L * cur * v),
        qb / (p * L * cur),
        qi / (p * L * e * cur**2),
        pi / (p * L * cur**2),
        -w / cur,
        -r / L,
        -qb / (p * L * v * cur**2),
        -pb / (p * L * cur**2),
    ])


def dg_coefficients(model: SimplifiedModel, eq: EquilibriumPoint, i) -> DgCoefficients:
    dg = model.dgs[i]
    k = np.zeros(21)
    k[1:9] = power_coefficients(eq, i, model.p)
    k[9:21] = line_coefficients(eq, i, dg.L, dg.r, model.p)
    kp = np.zeros(9)
    kp[1:9] = droop_coefficients(k[1:9], dg.m, dg.n, dg.w_f)
    return DgCoefficients(k=k, kp=kp)


def all_coefficients(model: SimplifiedModel, eq: EquilibriumPoint):
    return tuple(dg_coefficients(model, eq, i) for i in range(model.n_dgs))


def dual_form_deviation(model: SimplifiedModel, eq: EquilibriumPoint):
    """Largest relative gap between trigonometric and power forms of k1..k20."""
    worst = 0.0
    for i, dg in enumerate(model.dgs):
        trig = np.concatenate([power_coefficients(eq, i, model.p), line_coefficients(eq, i, dg.L, dg.r, model.p)])
        pw = np.concatenate([power_coefficients_power_form(eq, i, model.p),
                             line_coefficients_power_form(eq, i, dg.L, dg.r, model.p)])
        scale = np.maximum(np.maximum(np.abs(trig), np.abs(pw)), np.finfo(float).tiny)
        worst = max(worst, float(np.max(np.abs(trig - pw) / scale)))
    return worst


def _stack(coeffs, j, attr="k"):
    return np.array([getattr(c, attr)[j] for c in coeffs])


def assemble_load_matrix(coeffs, eq: EquilibriumPoint):
    """2 x 5N map from state deviations to (dV_L, dφ_L).

    Obtained by linearizing the bus power balance: the load draws
    ``2 P_Le / V_Le dV_L`` (and likewise for Q), which must equal the summed
    DG power deviations.
    """
    n = len(coeffs)
    p_le = eq.p_bus.sum()
    q_le = eq.q_bus.sum()
    pivot = np.array([
        [2 * p_le / eq.v_le - _stack(coeffs, 1).sum(), -_stack(coeffs, 2).sum()],
        [2 * q_le / eq.v_le - _stack(coeffs, 5).sum(), -_stack(coeffs, 6).sum()],
    ])
    if not np.all(np.isfinite(pivot)) or np.linalg.cond(pivot) > 1e12:
        raise DegenerateLinearizationError("load elimination pivot is singular")
    zero = np.zeros(n)
    rhs = np.array([
        np.concatenate([zero, zero, zero, _stack(coeffs, 3), _stack(coeffs, 4)]),
        np.concatenate([zero, zero, zero, _stack(coeffs, 7), _stack(coeffs, 8)]),
    ])
    return np.linalg.solve(pivot, rhs)


def assemble_system_matrix(coeffs, a_l, w_f):
    """5N x 5N dynamic-phasor state matrix.

    Block-diagonal state couplings plus the bus-voltage feedback
    ``B @ a_l`` where ``B`` holds the sensitivities to (dV_L, dφ_L).
    The current-angle row uses k16 as the dΦ coupling.
    """
    n = len(coeffs)
    w_f = np.broadcast_to(np.asarray(w_f, dtype=float), (n,))
    d = np.diag
    o = np.zeros((n, n))
    k = lambda j: _stack(coeffs, j)  # noqa: E731
    kp = lambda j: _stack(coeffs, j, "kp")  # noqa: E731
    a = np.block([
        [d(-w_f), o, o, d(kp(3)), d(kp(4))],
        [o, d(-w_f), o, d(kp(7)), d(kp(8))],
        [np.eye(n), o, o, o, o],
        [o, d(k(9)), d(k(10)), d(k(11)), d(k(12))],
        [o, d(k(15)), d(k(16)), d(k(17)), d(k(18))],
    ])
    zero = np.zeros(n)
    b = np.column_stack([
        np.concatenate([kp(1), kp(5), zero, k(13), k(19)]),
        np.concatenate([kp(2), kp(6), zero, k(14), k(20)]),
    ])
    return a + b @ a_l


def static_rhs(model: SimplifiedModel):
    """Right-hand side of the static-phasor model over ``[P_f, Q_f, Φ]``.

    Lines are algebraic impedances at the nominal frequency; the only
    dynamics are the power filters and the angle integrators.
    """
    prm = model.param_arrays()
    n = model.n_dgs
    z_lines = prm["r"] + 1j * model.omega_nominal * prm["L"]

    def f(z):
        p_f, q_f, phi = z[:n], z[n:2 * n], z[2 * n:]
        e = prm["e_set"] - prm["n"] * q_f
        e_ph = e * np.exp(1j * phi)
        v = bus_voltage_from_sources(e_ph, z_lines, model.y_load)
        i_ph = (e_ph - v) / z_lines
        p, q = powers(v if model.droop_power == "bus" else e_ph, i_ph, model.p)
        return np.concatenate([prm["w_f"] * (p - p_f), prm["w_f"] * (q - q_f), prm["omega_set"] - prm["m"] * p_f])

    return f


def static_phasor_matrix(model: SimplifiedModel, eq: EquilibriumPoint, h=1e-6):
    """3N x 3N static-phasor baseline matrix by central differences."""
    if model.droop_power == "bus":
        p0, q0 = eq.p_bus, eq.q_bus
    else:
        p0, q0 = eq.p_e, eq.q_e
    z0 = np.concatenate([p0, q0, eq.phi_e])
    return central_jacobian(static_rhs(model), z0, h=h)


def uniform_angle_direction(n_dgs):
    """Unit shift of every Φ and δ state; the structural null direction."""
    u = np.zeros(5 * n_dgs)
    u[2 * n_dgs:3 * n_dgs] = 1.0
    u[4 * n_dgs:] = 1.0
    return u


def build_small_signal(model: SimplifiedModel, eq: EquilibriumPoint, static=True) -> SmallSignalModel:
    coeffs = all_coefficients(model, eq)
    a_l = assemble_load_matrix(coeffs, eq)
    a_sys = assemble_system_matrix(coeffs, a_l, model.param_arrays()["w_f"])
    a_static = static_phasor_matrix(model, eq) if static else None
    return SmallSignalModel(coeffs=coeffs, a_l=a_l, a_sys=a_sys, a_static=a_static,
                            states=tuple(state_names(model.n_dgs)))


def write_matrix_csv(path, a, states, digest=None):
    """Row-major matrix CSV plus a ``.states.txt`` sidecar with the ordering."""
    path = Path(path)
    io.write_csv(path, [f"c{j}" for j in range(a.shape[1])], a.tolist(),
                 comments=io.provenance(digest) + ["states: " + ",".join(states)])
    sidecar = path.with_suffix(".states.txt")
    sidecar.write_text("\n".join(states) + "\n")
    return path, sidecar
