"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the summary lines are
repeated under "acceptance criteria" at the end of the session.
"""

import time

import numpy as np
import pytest

from mgstab.checks import (envelope_growth, fd_deviation, fixed_point_drift, linear_nonlinear_agreement)
from mgstab.cli import main
from mgstab.eigen import analyze_matrix
from mgstab.equilibrium import solve_equilibrium
from mgstab.errors import BracketingError
from mgstab.model import DgParams, LoadSpec, MicrogridConfig, build_simplified_model, ratio_pattern
from mgstab.simulator import bus_power_mismatch, equilibrium_state, fd_jacobian, integrate, perturbed_state
from mgstab.smallsignal import build_small_signal, dual_form_deviation
from mgstab.sweep import find_boundary, scaled_model

from conftest import ACCEPTANCE_LINES, M_BASE, N_BASE, table1_model

SCALES = (1.0, 2.0, 3.4)
UNSTABLE_SCALE = 8.5e-3 / M_BASE


def report(tag, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {tag}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


@pytest.fixture(scope="module")
def points():
    out = {}
    for s in SCALES + (UNSTABLE_SCALE,):
        model = table1_model(s)
        eq = solve_equilibrium(model)
        out[s] = (model, eq, build_small_signal(model, eq, static=True))
    return out


def test_c1_stable_case(points, tmp_path):
    _, _, ss = points[1.0]
    _, dyn = analyze_matrix(ss.a_sys)
    _, sta = analyze_matrix(ss.a_static)
    start = time.perf_counter()
    code = main(["analyze", "--fixture", "table1", "--m-base", "2.5e-3", "--n-base", "5e-3", "--static",
                 "--out", str(tmp_path)])
    elapsed = time.perf_counter() - start
    ok = (dyn.stable and dyn.zero_mode_count == 1 and sta.stable and sta.zero_mode_count == 1
          and code == 0 and elapsed < 1.0)
    assert report("C1 stable case", ok,
                  f"dynamic {dyn.classification} max_re={dyn.max_re:.4g} zeros={dyn.zero_mode_count}; "
                  f"static {sta.classification} max_re={sta.max_re:.4g} zeros={sta.zero_mode_count}; "
                  f"exit={code}; runtime={elapsed:.3f} s")


def test_c2_instability_detection(points):
    _, _, ss = points[UNSTABLE_SCALE]
    _, dyn = analyze_matrix(ss.a_sys)
    _, sta = analyze_matrix(ss.a_static)
    ok = dyn.classification == "unstable" and dyn.n_unstable >= 1 and sta.stable
    assert report("C2 instability detection (m-base 8.5e-3)", ok,
                  f"dynamic {dyn.classification} max_re={dyn.max_re:.4g}; "
                  f"static {sta.classification} max_re={sta.max_re:.4g}")


def test_c3_jacobian_certification(points):
    devs = {s: fd_deviation(points[s][2].a_sys, fd_jacobian(points[s][0], points[s][1])) for s in SCALES}
    ok = all(d <= 1e-6 for d in devs.values())
    assert report("C3 FD Jacobian", ok, ", ".join(f"s={s}: {d:.2e}" for s, d in devs.items()) + " (tol 1e-6)")


def test_c4_dual_forms(points):
    devs = {s: dual_form_deviation(points[s][0], points[s][1]) for s in SCALES}
    ok = all(d <= 1e-9 for d in devs.values())
    assert report("C4 dual-form identities", ok,
                  ", ".join(f"s={s}: {d:.2e}" for s, d in devs.items()) + " (tol 1e-9)")


def test_c5_linear_nonlinear(points):
    model, eq, ss = points[1.0]
    rms, trace, _ = linear_nonlinear_agreement(model, eq, ss.a_sys, rel=1e-3, horizon=0.5)
    ok = rms <= 0.02 and not trace.diverged
    assert report("C5 modal vs nonlinear", ok, f"relative RMS {rms:.3e} over 0.5 s (tol 2e-2)")


@pytest.fixture(scope="module")
def stable_trace(points):
    model, eq, _ = points[1.0]
    return integrate(perturbed_state(eq, model, rel=1e-3), model, 2.0, stride=20)


def test_c6_nonlinear_confirmation(points, stable_trace):
    model, eq, _ = points[1.0]
    w = stable_trace.omega
    start_dev = np.abs(w[:20] - eq.omega_e).max()
    tail = w[stable_trace.times >= 1.9]
    end_dev = np.abs(tail - eq.omega_e).max()
    spread = np.ptp(tail[-1])
    settles = (not stable_trace.diverged and end_dev <= 1e-2 * start_dev and spread <= 1e-6 * eq.omega_e)

    model2, eq2, _ = points[UNSTABLE_SCALE]
    trace2 = integrate(perturbed_state(eq2, model2, rel=1e-3), model2, 2.0, stride=20)
    growth = envelope_growth(trace2, eq2.omega_e, (0.25, 0.5), (1.75, 2.0))
    grows = trace2.diverged or growth > 1.0
    report("C6 case 1 settles", settles,
           f"peak |w-w_e| {start_dev:.3e} -> {end_dev:.3e} rad/s, final spread {spread:.2e}")
    report("C6 case 2 grows", grows,
           f"envelope ratio late/early {growth:.3g}, diverged={trace2.diverged}")
    assert settles and grows


def test_c7_conservation_and_fixed_point(points, stable_trace):
    model, eq, _ = points[1.0]
    fixed = integrate(equilibrium_state(eq, model), model, 1.0, stride=20)
    balance = max(bus_power_mismatch(stable_trace, model), bus_power_mismatch(fixed, model))
    drift = fixed_point_drift(fixed)
    ok = balance <= 1e-9 and drift < 1e-9
    assert report("C7 conservation and fixed point", ok,
                  f"bus balance {balance:.2e} (tol 1e-9), drift over 1 s {drift:.2e} (tol 1e-9)")


def test_c8_boundary_certificate():
    model = table1_model(1.0)
    m, n = ratio_pattern(M_BASE, 3), ratio_pattern(N_BASE, 3)
    tol = 1e-3
    try:
        res = find_boundary(model, m, n, 1.0, 3.4, tol=tol)
    except BracketingError as exc:
        assert report("C8 boundary certificate", False, f"bracketing error: {exc}")
        return
    certified = res.verdict_below.classification == "stable" and res.verdict_above.classification == "unstable"
    agree = True
    notes = []
    for factor, grows in ((0.95, False), (1.05, True)):
        mdl = scaled_model(model, m, n, res.s_star * factor)
        eq = solve_equilibrium(mdl)
        trace = integrate(perturbed_state(eq, mdl), mdl, 1.5, stride=20)
        ratio = envelope_growth(trace, eq.omega_e, (0.5, 0.75), (1.25, 1.5))
        agree &= (ratio > 1.0 or trace.diverged) if grows else ratio < 1.0
        notes.append(f"x{factor}: envelope ratio {ratio:.3g}")
    assert report("C8 boundary certificate", certified and agree,
                  f"s_star={res.s_star:.6g}; below {res.verdict_below.classification} "
                  f"(max_re {res.verdict_below.max_re:.3g}), above {res.verdict_above.classification} "
                  f"(max_re {res.verdict_above.max_re:.3g}); " + ", ".join(notes))


def test_c9_trivial_equilibria():
    # unequal droop gains and lines, shared set values: no load means no current anywhere
    dgs = (DgParams(2e-3, 3e-3, 380.0, 180.0, 31.85, 1.6e-3, 0.2),
           DgParams(1e-3, 1.5e-3, 380.0, 180.0, 31.85, 2.4e-3, 0.3))
    eq = solve_equilibrium(build_simplified_model(MicrogridConfig(dgs=dgs, loads=())))
    unloaded = (abs(eq.omega_e - 380.0) <= 1e-9 * 380.0 and np.all(np.abs(eq.e_e - 180.0) <= 1e-9 * 180.0)
                and np.all(eq.i_e <= 1e-9))

    sym = (DgParams(1e-3, 1e-3, 380.0, 180.0, 31.85, 2e-3, 0.2),) * 3
    eq_s = solve_equilibrium(build_simplified_model(MicrogridConfig(dgs=sym, loads=(LoadSpec(9e3, 5e3),))))
    sharing = max(np.ptp(eq_s.p_e) / np.abs(eq_s.p_e).max(), np.ptp(eq_s.q_e) / np.abs(eq_s.q_e).max())
    ok = unloaded and sharing <= 1e-9
    assert report("C9 trivial equilibria", ok,
                  f"unloaded w_e={eq.omega_e:.12g}, max I={eq.i_e.max():.1e}; symmetric sharing spread {sharing:.1e}")
