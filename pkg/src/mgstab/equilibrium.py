"""Steady-state operating point of the single-bus microgrid.

The operating point is the exact solution of the droop laws combined with the
steady-state line equations, where each line carries the impedance
``r_i + j omega_e L_i`` at the common equilibrium frequency. The bus voltage
angle is the reference (zero).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import io
from .errors import SolverError
from .model import SimplifiedModel
from .network import bus_voltage_from_sources, powers
from .numdiff import central_jacobian

MAX_ITER = 50
TOL = 1e-9


@dataclass(frozen=True)
class EquilibriumPoint:
    """Operating point; angles are relative to the bus voltage.

    ``p_e``/``q_e`` are inverter-terminal powers, ``p_bus``/``q_bus`` the
    powers delivered at the load bus. They differ by the line losses.
    """

    omega_e: float
    v_le: float
    phi_le: float
    p_e: np.ndarray
    q_e: np.ndarray
    p_bus: np.ndarray
    q_bus: np.ndarray
    e_e: np.ndarray
    phi_e: np.ndarray
    i_e: np.ndarray
    delta_e: np.ndarray
    residual: float
    iterations: int

    @property
    def n_dgs(self):
        return self.e_e.size

    def state_vector(self):
        """Equilibrium in the analysis state ordering [omega, E, Phi, I, delta]."""
        return np.concatenate([np.full(self.n_dgs, self.omega_e), self.e_e, self.phi_e, self.i_e, self.delta_e])

    def unknowns(self):
        return np.concatenate([[self.omega_e], self.e_e, self.phi_e])


def equilibrium_current(p_e, q_e, e_e, p):
    """Line current amplitude from inverter-terminal powers."""
    return np.hypot(p_e, q_e) / (p * e_e)


def steady_state_circuit(model: SimplifiedModel, omega, e, phi):
    """Bus voltage, line currents and both power sets for given sources."""
    prm = model.param_arrays()
    z_lines = prm["r"] + 1j * omega * prm["L"]
    e_ph = e * np.exp(1j * phi)
    v = bus_voltage_from_sources(e_ph, z_lines, model.y_load)
    i_ph = (e_ph - v) / z_lines
    p_bus, q_bus = powers(v, i_ph, model.p)
    p_inv, q_inv = powers(e_ph, i_ph, model.p)
    return v, i_ph, (p_bus, q_bus), (p_inv, q_inv)


def _residual(model, prm, x):
    n = model.n_dgs
    omega, e, phi = x[0], x[1:n + 1], x[n + 1:]
    v, _, bus, inv = steady_state_circuit(model, omega, e, phi)
    p, q = bus if model.droop_power == "bus" else inv
    return np.concatenate([
        (prm["omega_set"] - prm["m"] * p - omega) / model.omega_nominal,
        (prm["e_set"] - prm["n"] * q - e) / model.v_nominal,
        [v.imag / model.v_nominal],
    ])


def solve_equilibrium(model: SimplifiedModel, initial=None, tol=TOL, max_iter=MAX_ITER) -> EquilibriumPoint:
    """Damped Newton solve of the 2N+1 steady-state equations.

    Unknowns are the common frequency, the DG voltage amplitudes and the DG
    voltage angles. Residuals are per-unit (frequency over omega_nominal,
    voltages over v_nominal) and converge when their max-norm is <= ``tol``.

    Args:
        initial: optional EquilibriumPoint used as warm start.

    Raises:
        SolverError: no convergence within ``max_iter`` iterations.
        DegenerateNetworkError: singular bus relation.
    """
    n = model.n_dgs
    prm = model.param_arrays()
    if initial is not None and initial.n_dgs == n:
        x = initial.unknowns().astype(float)
    else:
        x = np.concatenate([[prm["omega_set"].mean()], prm["e_set"], np.zeros(n)])

    def f(z):
        return _residual(model, prm, z)

    r = f(x)
    norm = np.max(np.abs(r))
    it = 0
    while norm > tol:
        if it >= max_iter:
            raise SolverError(f"equilibrium did not converge in {max_iter} iterations (residual {norm:.3e})",
                              residual=norm, iterations=it)
        it += 1
        jac = central_jacobian(f, x, h=1e-7)
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            raise SolverError("singular Newton Jacobian", residual=norm, iterations=it) from None
        alpha = 1.0
        while True:
            x_new = x + alpha * step
            r_new = f(x_new)
            norm_new = np.max(np.abs(r_new))
            if np.isfinite(norm_new) and norm_new < norm:
                break
            alpha *= 0.5
            if alpha < 1e-6:
                raise SolverError(f"line search failed (residual {norm:.3e})", residual=norm, iterations=it)
        x, r, norm = x_new, r_new, norm_new

    # polish towards machine precision so the point is a clean fixed point
    for _ in range(2):
        jac = central_jacobian(f, x, h=1e-7)
        x_new = x + np.linalg.solve(jac, -r)
        r_new = f(x_new)
        if not np.max(np.abs(r_new)) < norm:
            break
        x, r, norm = x_new, r_new, np.max(np.abs(r_new))

    omega, e, phi = x[0], x[1:n + 1], x[n + 1:]
    v, i_ph, (p_bus, q_bus), (p_inv, q_inv) = steady_state_circuit(model, omega, e, phi)
    v_angle = np.angle(v)
    # the residual pins Im(V) to ~1e-9; rotate exactly onto the reference
    return EquilibriumPoint(
        omega_e=float(omega),
        v_le=float(abs(v)),
        phi_le=0.0,
        p_e=p_inv,
        q_e=q_inv,
        p_bus=p_bus,
        q_bus=q_bus,
        e_e=e.copy(),
        phi_e=phi - v_angle,
        i_e=np.abs(i_ph),
        delta_e=np.angle(i_ph) - v_angle,
        residual=float(norm),
        iterations=it,
    )


def write_equilibrium_csv(path, eq: EquilibriumPoint, digest=None):
    rows = [(i + 1, eq.p_e[i], eq.q_e[i], eq.e_e[i], eq.phi_e[i], eq.i_e[i], eq.delta_e[i])
            for i in range(eq.n_dgs)]
    comments = io.provenance(digest) + [f"omega_e={io.fmt(eq.omega_e)} v_le={io.fmt(eq.v_le)}"]
    return io.write_csv(path, ["index", "p_e", "q_e", "e_e", "phi_e", "i_e", "delta_e"], rows, comments)
