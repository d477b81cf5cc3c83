"""Command-line entry point.

Exit codes: 0 success (stable for ``analyze``), 1 error, 2 unstable
(``analyze``), 3 diverged trajectory (``simulate``), 4 failed certification
(``check``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .checks import run_checks
from .eigen import analyze_matrix, write_eigen_csv
from .equilibrium import solve_equilibrium, write_equilibrium_csv
from .errors import ConfigError, MgstabError, SolverError
from .model import (FIXTURES, build_simplified_model, config_digest, load_config, ratio_pattern, with_droop,
                    with_e_set)
from .simulator import (DEFAULT_DT, cold_start_state, equilibrium_state, integrate, perturbed_state,
                        write_trace_csv)
from .smallsignal import build_small_signal, state_names, STATIC_BLOCKS, write_matrix_csv
from .sweep import SweepSpec, disagreement_scales, find_boundary, sweep, write_boundary_csv, write_locus_csv, \
    write_sweep_csv

log = logging.getLogger("mgstab")

EXIT_OK, EXIT_ERROR, EXIT_UNSTABLE, EXIT_DIVERGED, EXIT_CHECK_FAILED = 0, 1, 2, 3, 4


@dataclass
class RunManifest:
    command: str
    config_digest: str
    outputs: list = field(default_factory=list)
    version: str = __version__
    duration_s: float = 0.0

    def write(self, out_dir):
        path = Path(out_dir) / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2) + "\n")
        return path


def resolve_config(args):
    if args.config and args.fixture:
        raise ConfigError("use either --config or --fixture, not both")
    if args.config:
        cfg = load_config(args.config)
    elif args.fixture:
        cfg = FIXTURES[args.fixture]()
    else:
        raise ConfigError("one of --config or --fixture is required")
    if args.m_base is not None or args.n_base is not None:
        m = ratio_pattern(args.m_base, cfg.n_dgs) if args.m_base is not None else [dg.m for dg in cfg.dgs]
        n = ratio_pattern(args.n_base, cfg.n_dgs) if args.n_base is not None else [dg.n for dg in cfg.dgs]
        cfg = with_droop(cfg, m, n)
    if args.e_set is not None:
        cfg = with_e_set(cfg, args.e_set)
    if args.droop_power is not None:
        cfg = replace(cfg, droop_power=args.droop_power)
    return cfg


def _fmt_verdict(tag, v):
    return f"{tag:8s} {v.classification:9s} max_re={v.max_re:+.6g} 1/s  zero_modes={v.zero_mode_count}"


def cmd_analyze(args, cfg, digest, out, manifest):
    model = build_simplified_model(cfg)
    try:
        eq = solve_equilibrium(model)
    except SolverError as exc:
        print(f"equilibrium failed: {exc} (residual={exc.residual})", file=sys.stderr)
        return EXIT_ERROR
    ss = build_small_signal(model, eq, static=args.static)
    manifest.outputs.append(str(write_equilibrium_csv(out / "equilibrium.csv", eq, digest)))
    manifest.outputs.extend(str(p) for p in write_matrix_csv(out / "a_sys.csv", ss.a_sys, ss.states, digest))
    eig, verdict = analyze_matrix(ss.a_sys)
    manifest.outputs.append(str(write_eigen_csv(out / "eigen_dynamic.csv", eig, digest)))
    print(f"omega_e={eq.omega_e:.6f} rad/s  v_le={eq.v_le:.4f} V")
    print(_fmt_verdict("dynamic", verdict))
    if args.static:
        eig_s, verdict_s = analyze_matrix(ss.a_static)
        manifest.outputs.append(str(write_eigen_csv(out / "eigen_static.csv", eig_s, digest)))
        manifest.outputs.extend(str(p) for p in write_matrix_csv(
            out / "a_static.csv", ss.a_static, state_names(cfg.n_dgs, STATIC_BLOCKS), digest))
        print(_fmt_verdict("static", verdict_s))
    return EXIT_OK if verdict.stable else EXIT_UNSTABLE


def cmd_simulate(args, cfg, digest, out, manifest):
    model = build_simplified_model(cfg)
    path = out / "trace.csv"
    if args.t_end == 0:
        manifest.outputs.append(str(write_trace_csv(path, None, cfg.n_dgs, digest)))
        print("zero-length horizon: header-only trace")
        return EXIT_OK
    if args.init == "zero":
        x0 = cold_start_state(model)
    else:
        eq = solve_equilibrium(model)
        x0 = equilibrium_state(eq, model) if args.init == "equilibrium" else \
            perturbed_state(eq, model, rel=args.perturbation)
    trace = integrate(x0, model, args.t_end, dt=args.dt, stride=args.stride)
    manifest.outputs.append(str(write_trace_csv(path, trace, cfg.n_dgs, digest)))
    final = trace.omega[-1]
    print(f"samples={len(trace)}  final omega=" + ", ".join(f"{w:.6f}" for w in final))
    if trace.diverged:
        print(f"diverged at t={trace.diverged_at:.6g} s: {trace.reason}")
        return EXIT_DIVERGED
    return EXIT_OK


def _base_droop(cfg):
    return np.array([dg.m for dg in cfg.dgs]), np.array([dg.n for dg in cfg.dgs])


def cmd_sweep(args, cfg, digest, out, manifest):
    model = build_simplified_model(cfg)
    m, n = _base_droop(cfg)
    spec = SweepSpec(m, n, args.lo, args.hi, args.samples, models=args.models, co_scale_n=args.co_scale_n)
    samples = sweep(spec, model)
    manifest.outputs.append(str(write_sweep_csv(out / "sweep.csv", samples, digest)))
    manifest.outputs.append(str(write_locus_csv(out / "locus.csv", samples, digest)))
    for smp in samples:
        if smp.verdict is None:
            print(f"s={smp.s:.6g} {smp.model_tag:8s} error: {smp.error}")
        else:
            print(f"s={smp.s:.6g} " + _fmt_verdict(smp.model_tag, smp.verdict))
    if args.models == "both":
        dis = disagreement_scales(samples)
        print(f"dynamic/static verdicts disagree at {len(dis)} scale(s)" + (f", first s={dis[0]:.6g}" if dis else ""))
    return EXIT_OK


def cmd_boundary(args, cfg, digest, out, manifest):
    model = build_simplified_model(cfg)
    m, n = _base_droop(cfg)
    res = find_boundary(model, m, n, args.lo, args.hi, tol=args.tol, co_scale_n=args.co_scale_n)
    manifest.outputs.append(str(write_boundary_csv(out / "boundary.csv", res, digest)))
    print(f"s_star={res.s_star:.8g}  (m_1 = {res.s_star * m[0]:.6g})  width={res.width:.3g}")
    print(f"below: {res.verdict_below.classification} (max_re={res.verdict_below.max_re:+.4g})  "
          f"above: {res.verdict_above.classification} (max_re={res.verdict_above.max_re:+.4g})")
    if res.reversals:
        print(f"warning: non-monotone verdicts near {res.reversals}")
    return EXIT_OK


def cmd_check(args, cfg, digest, out, manifest):
    model = build_simplified_model(cfg)
    results = run_checks(model, fixed_point_horizon=args.horizon)
    failed = [r for r in results if not r.passed]
    for r in results:
        status = "skip" if r.skipped else ("PASS" if r.passed else "FAIL")
        extra = f"  ({r.note})" if r.note else ""
        print(f"{status}  {r.name:30s} deviation={r.deviation:.3e}  tol={r.tolerance:.1e}{extra}")
    if failed:
        print("failed: " + ", ".join(r.name for r in failed))
        return EXIT_CHECK_FAILED
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "sweep": cmd_sweep, "boundary": cmd_boundary,
            "check": cmd_check}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_argument_group("network")
    src.add_argument("--config", help="JSON network description")
    src.add_argument("--fixture", choices=sorted(FIXTURES), help="built-in network")
    src.add_argument("--m-base", type=float, help="set m_i = m_base / i")
    src.add_argument("--n-base", type=float, help="set n_i = n_base / i")
    src.add_argument("--e-set", type=float, help="override every DG voltage set value [V]")
    src.add_argument("--droop-power", choices=("bus", "inverter"), help="power fed to the droop filters")
    common.add_argument("--out", default="mgstab_out", help="output directory")
    common.add_argument("--static", action="store_true", help="also analyze the static-phasor baseline")
    common.add_argument("--seed", type=int, default=0, help="reserved; all computations are deterministic")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mgstab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mgstab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("analyze", parents=[common], help="equilibrium, eigenvalues and verdict")

    p = sub.add_parser("simulate", parents=[common], help="nonlinear dynamic-phasor simulation")
    p.add_argument("--t-end", type=float, default=2.0, help="horizon [s]")
    p.add_argument("--dt", type=float, default=DEFAULT_DT, help="RK4 step [s]")
    p.add_argument("--stride", type=int, default=20, help="steps per recorded sample")
    p.add_argument("--init", choices=("perturbed", "equilibrium", "zero"), default="perturbed",
                   help="initial condition")
    p.add_argument("--perturbation", type=float, default=1e-3, help="relative offset for --init perturbed")

    for name, hlp in (("sweep", "eigen-analysis over droop scales"), ("boundary", "bisect the stability boundary")):
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.add_argument("--lo", type=float, default=1.0, help="lowest droop scale")
        p.add_argument("--hi", type=float, default=3.4, help="highest droop scale")
        p.add_argument("--co-scale-n", action="store_true", help="scale voltage droop gains too")
        if name == "sweep":
            p.add_argument("--samples", type=int, default=25)
            p.add_argument("--models", choices=("dynamic", "static", "both"), default="dynamic")
        else:
            p.add_argument("--tol", type=float, default=1e-3, help="relative bracket width")

    p = sub.add_parser("check", parents=[common], help="run the oracle certification suite")
    p.add_argument("--horizon", type=float, default=1.0, help="fixed-point integration horizon [s]")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    start = time.perf_counter()
    try:
        cfg = resolve_config(args)
        digest = config_digest(cfg)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(command=args.command, config_digest=digest)
        code = COMMANDS[args.command](args, cfg, digest, out, manifest)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except MgstabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    manifest.duration_s = time.perf_counter() - start
    manifest.outputs.append(str(manifest.write(out)))
    return code


if __name__ == "__main__":
    sys.exit(main())
