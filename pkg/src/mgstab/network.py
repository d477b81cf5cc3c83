"""Phasor relations of the single-bus network shared by all solvers."""

from __future__ import annotations

import numpy as np

from .errors import DegenerateNetworkError


def bus_voltage_from_sources(e_phasors, z_lines, y_load):
    """Bus voltage when every DG drives its line as a static impedance.

    Solves ``V (y_L + sum Y_i) = sum E_i Y_i``, the admittance form of
    ``V (1 + Z_L sum Y_i) = Z_L sum E_i / Z_i``.
    """
    y_lines = 1.0 / z_lines
    denom = y_load + y_lines.sum()
    if abs(denom) <= 1e-12 * (abs(y_load) + np.abs(y_lines).sum()):
        raise DegenerateNetworkError("bus relation 1 + Z_L * sum(Y_i) is singular")
    return (e_phasors * y_lines).sum() / denom


def bus_voltage_from_currents(i_phasors, y_load):
    """Bus voltage of the constant-impedance load fed by the line currents."""
    if y_load == 0:
        raise DegenerateNetworkError("unloaded bus: voltage is not determined by the line currents")
    return i_phasors.sum() / y_load


def powers(v, i_phasors, p):
    """Active and reactive power ``p * V * conj(I)`` per DG."""
    s = p * v * np.conj(i_phasors)
    return s.real, s.imag
