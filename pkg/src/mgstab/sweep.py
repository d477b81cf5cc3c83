"""Droop-gain sweeps, eigenvalue loci and instability-boundary bisection.

A scale ``s`` multiplies every frequency-droop gain (and optionally every
voltage-droop gain), preserving the ratios between DGs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import io
from .eigen import EigenResult, StabilityVerdict, analyze_matrix
from .equilibrium import EquilibriumPoint, solve_equilibrium
from .errors import BracketingError, MgstabError
from .model import SimplifiedModel
from .smallsignal import build_small_signal

log = logging.getLogger(__name__)

MODELS = ("dynamic", "static")


@dataclass(frozen=True)
class SweepSpec:
    m_base: np.ndarray
    n_base: np.ndarray
    s_lo: float
    s_hi: float
    samples: int
    models: str = "dynamic"
    co_scale_n: bool = False

    def __post_init__(self):
        object.__setattr__(self, "m_base", np.asarray(self.m_base, dtype=float))
        object.__setattr__(self, "n_base", np.asarray(self.n_base, dtype=float))
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.samples == 1:
            if not self.s_lo > 0:
                raise ValueError("scale must be > 0")
        elif not 0 < self.s_lo < self.s_hi:
            raise ValueError(f"need 0 < s_lo < s_hi, got {self.s_lo}, {self.s_hi}")
        if self.models not in ("dynamic", "static", "both"):
            raise ValueError(f"models must be dynamic, static or both, got {self.models!r}")

    @property
    def scales(self):
        if self.samples == 1:
            return np.array([float(self.s_lo)])
        return np.linspace(self.s_lo, self.s_hi, self.samples)

    @property
    def model_tags(self):
        return MODELS if self.models == "both" else (self.models,)


@dataclass(frozen=True)
class SweepSample:
    s: float
    model_tag: str
    eig: EigenResult | None
    verdict: StabilityVerdict | None
    error: str = ""


def scaled_model(model: SimplifiedModel, m_base, n_base, s, co_scale_n=False):
    n = np.asarray(n_base, dtype=float) * (s if co_scale_n else 1.0)
    return model.with_droop(np.asarray(m_base, dtype=float) * s, n)


def analyze(model: SimplifiedModel, static=True, initial: EquilibriumPoint | None = None):
    """Equilibrium, matrices, eigenpairs and verdicts for one model.

    Returns ``(eq, small_signal, {tag: (EigenResult, StabilityVerdict)})``.
    """
    eq = solve_equilibrium(model, initial=initial)
    ss = build_small_signal(model, eq, static=static)
    out = {"dynamic": analyze_matrix(ss.a_sys)}
    if static:
        out["static"] = analyze_matrix(ss.a_static)
    return eq, ss, out


def sweep(spec: SweepSpec, model: SimplifiedModel):
    """Eigen-analysis at each scale, ordered by scale then model tag.

    Samples whose equilibrium or linearization fails are kept with
    ``error`` set and no verdict; the sweep carries on. Each equilibrium is
    warm-started from the previous successful one.
    """
    results = []
    warm = None
    need_static = "static" in spec.model_tags
    for s in spec.scales:
        mdl = scaled_model(model, spec.m_base, spec.n_base, s, spec.co_scale_n)
        try:
            eq, _, res = analyze(mdl, static=need_static, initial=warm)
        except MgstabError as exc:
            log.warning("sweep sample s=%g failed: %s", s, exc)
            results.extend(SweepSample(float(s), tag, None, None, str(exc)) for tag in spec.model_tags)
            continue
        warm = eq
        for tag in spec.model_tags:
            eig, verdict = res[tag]
            results.append(SweepSample(float(s), tag, eig, verdict))
    return results


def disagreement_scales(samples):
    """Scales where the dynamic and static verdicts differ."""
    by_s = {}
    for smp in samples:
        if smp.verdict is not None:
            by_s.setdefault(smp.s, {})[smp.model_tag] = smp.verdict.classification
    return [s for s, v in sorted(by_s.items()) if len(v) == 2 and v["dynamic"] != v["static"]]


@dataclass(frozen=True)
class BoundaryResult:
    s_star: float
    s_lo: float
    s_hi: float
    width: float
    verdict_below: StabilityVerdict
    verdict_above: StabilityVerdict
    evaluations: tuple = ()
    reversals: tuple = field(default=())


def _relative_width(lo, hi):
    return (hi - lo) / (0.5 * (hi + lo))


def dynamic_verdict(model, m_base, n_base, s, co_scale_n=False, initial=None):
    mdl = scaled_model(model, m_base, n_base, s, co_scale_n)
    eq, _, res = analyze(mdl, static=False, initial=initial)
    return eq, res["dynamic"][1]


def find_boundary(model: SimplifiedModel, m_base, n_base, s_lo, s_hi, tol=1e-3, co_scale_n=False,
                  certify=True) -> BoundaryResult:
    """Bisect the droop scale where the dynamic model loses stability.

    The endpoints must be classified stable (``s_lo``) and not stable
    (``s_hi``). Inside the bracket the bisection follows the sign of the
    largest non-zero real part, so ``s_star`` is the eigenvalue crossing
    rather than the edge of the marginal band. ``tol`` bounds the relative
    bracket width ``(hi - lo) / mid``. The returned certificate holds the
    verdicts at ``s_star * (1 -/+ 2 tol)``.

    Raises:
        BracketingError: ``s_lo`` is not stable or ``s_hi`` is stable.
    """
    if not 0 < s_lo < s_hi:
        raise BracketingError(f"need 0 < s_lo < s_hi, got {s_lo}, {s_hi}")
    evaluations = []

    def verdict(s, warm=None):
        eq, v = dynamic_verdict(model, m_base, n_base, s, co_scale_n, warm)
        evaluations.append((float(s), v.classification, v.max_re))
        return eq, v

    eq_lo, v_lo = verdict(s_lo)
    if not v_lo.stable:
        raise BracketingError(f"lower scale {s_lo} is {v_lo.classification} (max Re {v_lo.max_re:.4g}), not stable")
    _, v_hi = verdict(s_hi, eq_lo)
    if v_hi.stable:
        raise BracketingError(f"upper scale {s_hi} is stable (max Re {v_hi.max_re:.4g}); no transition bracketed")

    lo, hi = float(s_lo), float(s_hi)
    warm = eq_lo
    while _relative_width(lo, hi) > tol:
        mid = 0.5 * (lo + hi)
        eq_mid, v_mid = verdict(mid, warm)
        if v_mid.max_re < 0:
            lo, warm = mid, eq_mid
        else:
            hi = mid
    s_star = 0.5 * (lo + hi)

    ordered = sorted(evaluations)
    reversals = tuple(
        (a[0], b[0]) for a, b in zip(ordered, ordered[1:])
        if a[2] >= 0 > b[2]
    )
    if reversals:
        log.warning("non-monotone verdicts between scales %s", reversals)

    if certify:
        _, below = verdict(s_star * (1 - 2 * tol), warm)
        _, above = verdict(s_star * (1 + 2 * tol), warm)
    else:
        below, above = v_lo, v_hi
    return BoundaryResult(s_star=s_star, s_lo=lo, s_hi=hi, width=_relative_width(lo, hi),
                          verdict_below=below, verdict_above=above,
                          evaluations=tuple(evaluations), reversals=reversals)


def write_sweep_csv(path, samples, digest=None):
    rows = []
    for smp in samples:
        if smp.verdict is None:
            rows.append((smp.s, smp.model_tag, "nan", "error", "", ""))
        else:
            v = smp.verdict
            rows.append((smp.s, smp.model_tag, v.max_re, v.classification, v.n_unstable, v.zero_mode_count))
    return io.write_csv(path, ["s", "model_tag", "max_re", "verdict", "n_unstable", "zero_modes"], rows,
                        comments=io.provenance(digest))


def write_locus_csv(path, samples, digest=None):
    rows = []
    for smp in samples:
        if smp.eig is None:
            continue
        for k, lam in enumerate(smp.eig.lambdas):
            rows.append((smp.s, smp.model_tag, k + 1, lam.real, lam.imag))
    return io.write_csv(path, ["s", "model_tag", "eig_index", "re", "im"], rows, comments=io.provenance(digest))


def write_boundary_csv(path, result: BoundaryResult, digest=None):
    rows = [(s, v, mr) for s, v, mr in result.evaluations]
    comments = io.provenance(digest) + [
        f"s_star={io.fmt(result.s_star)} width={io.fmt(result.width)}",
        f"below={result.verdict_below.classification} above={result.verdict_above.classification}",
    ]
    return io.write_csv(path, ["s", "verdict", "max_re"], rows, comments=comments)
