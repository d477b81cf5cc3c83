"""Self-certification: each analytic result against an independent oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eigen import eigen_decompose, classify, modal_response, matrix_norm
from .equilibrium import EquilibriumPoint, equilibrium_current, solve_equilibrium
from .model import SimplifiedModel
from .simulator import (DEFAULT_DT, bus_power_mismatch, equilibrium_state, fd_jacobian, integrate,
                        perturbed_state, to_analysis)
from .smallsignal import (I_MIN, all_coefficients, assemble_load_matrix, assemble_system_matrix,
                          dual_form_deviation, static_phasor_matrix, uniform_angle_direction)

TOLERANCES = {
    "equilibrium_residual": 1e-9,
    "eq35_current": 1e-9,
    "dual_form": 1e-9,
    "fd_jacobian": 1e-6,
    "rotational_invariance": 1e-8,
    "static_rotational_invariance": 1e-8,
    "fixed_point": 1e-9,
    "bus_power_balance": 1e-9,
    "modal_vs_nonlinear": 0.02,
}


@dataclass(frozen=True)
class CheckResult:
    name: str
    deviation: float
    tolerance: float
    skipped: bool = False
    note: str = ""

    @property
    def passed(self):
        return self.skipped or self.deviation <= self.tolerance


def fd_deviation(a_sys, jac):
    """Elementwise ``|A - J| / (1 + |A|)``, maximised."""
    return float(np.max(np.abs(a_sys - jac) / (1.0 + np.abs(a_sys))))


def fixed_point_drift(trace):
    """Largest change of any observable relative to its own magnitude."""
    worst = 0.0
    for arr in (trace.omega, trace.e, trace.v_l, trace.p, trace.q, trace.i):
        ref = arr[0]
        scale = max(float(np.max(np.abs(ref))), np.finfo(float).tiny)
        worst = max(worst, float(np.max(np.abs(arr - ref))) / scale)
    return worst


def envelope_growth(trace, omega_e, early, late):
    """Ratio of peak DG-frequency deviation in window ``late`` to window ``early``.

    Windows are ``(t0, t1)`` in seconds. Above 1 the oscillation grows; a
    diverged trace that ends before ``late`` counts as growth (``inf``).
    """
    def peak(t0, t1):
        sel = (trace.times >= t0) & (trace.times <= t1)
        return float(np.max(np.abs(trace.omega[sel] - omega_e))) if np.any(sel) else None

    a, b = peak(*early), peak(*late)
    if b is None:
        return np.inf if trace.diverged else np.nan
    return b / a if a > 0 else np.inf


def linear_nonlinear_agreement(model: SimplifiedModel, eq: EquilibriumPoint, a_sys, rel=1e-3, horizon=0.5,
                               dt=DEFAULT_DT, stride=10):
    """Relative RMS gap between modal and simulated DG frequencies.

    Both start from the same small offset of the equilibrium; the error is
    normalised by the RMS of the simulated frequency deviation.

    Returns:
        (relative RMS, trace, linear trajectory)
    """
    n = model.n_dgs
    x0_state = perturbed_state(eq, model, rel=rel)
    trace = integrate(x0_state, model, horizon, dt=dt, stride=stride)
    eig = eigen_decompose(a_sys)
    lin = modal_response(eig, to_analysis(x0_state, model), eq.state_vector(), trace.times)
    w_lin = lin[:, :n]
    dev = trace.omega - eq.omega_e
    err = trace.omega - w_lin
    return float(np.sqrt(np.mean(err**2)) / np.sqrt(np.mean(dev**2))), trace, lin


def run_checks(model: SimplifiedModel, coefficient_hook=None, fixed_point_horizon=1.0, modal_horizon=0.5,
               dt=DEFAULT_DT):
    """Run the oracle suite and return one CheckResult per check.

    ``coefficient_hook`` receives the per-DG coefficient tuple before the
    system matrix is assembled and may return a modified tuple; it exists
    for fault injection.
    """
    results = []
    eq = solve_equilibrium(model)
    results.append(CheckResult("equilibrium_residual", eq.residual, TOLERANCES["equilibrium_residual"]))

    if np.any(eq.i_e <= I_MIN) or model.y_load == 0:
        note = "zero-current equilibrium: linearization excluded"
        for name in list(TOLERANCES)[1:]:
            results.append(CheckResult(name, 0.0, TOLERANCES[name], skipped=True, note=note))
        return results

    i35 = equilibrium_current(eq.p_e, eq.q_e, eq.e_e, model.p)
    results.append(CheckResult("eq35_current", float(np.max(np.abs(i35 - eq.i_e) / eq.i_e)),
                               TOLERANCES["eq35_current"]))
    results.append(CheckResult("dual_form", dual_form_deviation(model, eq), TOLERANCES["dual_form"]))

    coeffs = all_coefficients(model, eq)
    if coefficient_hook is not None:
        coeffs = tuple(coefficient_hook(coeffs))
    a_l = assemble_load_matrix(coeffs, eq)
    a_sys = assemble_system_matrix(coeffs, a_l, model.param_arrays()["w_f"])
    results.append(CheckResult("fd_jacobian", fd_deviation(a_sys, fd_jacobian(model, eq)),
                               TOLERANCES["fd_jacobian"]))

    u = uniform_angle_direction(model.n_dgs)
    results.append(CheckResult("rotational_invariance",
                               float(np.linalg.norm(a_sys @ u) / np.linalg.norm(u) / matrix_norm(a_sys)),
                               TOLERANCES["rotational_invariance"]))
    a_static = static_phasor_matrix(model, eq)
    u_s = np.zeros(3 * model.n_dgs)
    u_s[2 * model.n_dgs:] = 1.0
    results.append(CheckResult("static_rotational_invariance",
                               float(np.linalg.norm(a_static @ u_s) / np.linalg.norm(u_s) / matrix_norm(a_static)),
                               TOLERANCES["static_rotational_invariance"]))

    trace = integrate(equilibrium_state(eq, model), model, fixed_point_horizon, dt=dt, stride=20)
    results.append(CheckResult("fixed_point", fixed_point_drift(trace), TOLERANCES["fixed_point"]))
    results.append(CheckResult("bus_power_balance", bus_power_mismatch(trace, model),
                               TOLERANCES["bus_power_balance"]))

    verdict = classify(eigen_decompose(a_sys))
    if verdict.stable:
        rms, _, _ = linear_nonlinear_agreement(model, eq, a_sys, horizon=modal_horizon, dt=dt)
        results.append(CheckResult("modal_vs_nonlinear", rms, TOLERANCES["modal_vs_nonlinear"]))
    else:
        results.append(CheckResult("modal_vs_nonlinear", 0.0, TOLERANCES["modal_vs_nonlinear"], skipped=True,
                                   note=f"dynamic model is {verdict.classification}"))
    return results
