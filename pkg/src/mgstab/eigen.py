"""Eigen-analysis, stability verdicts and modal time response."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import io
from .errors import EigenSolverError, ModalDecompositionError

ZERO_MODE_RTOL = 1e-6
RESIDUAL_RTOL = 1e-8
MAX_EIGVEC_COND = 1e10


@dataclass(frozen=True)
class EigenResult:
    lambdas: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    norm: float


@dataclass(frozen=True)
class StabilityVerdict:
    classification: str
    max_re: float
    zero_mode_count: int
    n_unstable: int

    @property
    def stable(self):
        return self.classification == "stable"


def matrix_norm(a):
    return float(np.linalg.norm(a, 2))


def _sort_key(lambdas):
    # deterministic order: descending real part, then descending imaginary part
    return np.lexsort((-lambdas.imag, -lambdas.real))


def eigen_decompose(a) -> EigenResult:
    """All eigenpairs of a real square matrix.

    LAPACK ``geev`` (balancing, Hessenberg reduction, shifted QR) does the
    work; the result is checked against ``|A v - λ v| <= 1e-8 |A|``.
    Eigenvectors have unit 2-norm.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    try:
        lam, vec = np.linalg.eig(a)
    except np.linalg.LinAlgError as exc:
        raise EigenSolverError(str(exc)) from None
    lam = lam.astype(complex)
    vec = vec.astype(complex)
    order = _sort_key(lam)
    lam, vec = lam[order], vec[:, order]
    vec = vec / np.linalg.norm(vec, axis=0)
    norm = matrix_norm(a)
    res = np.linalg.norm(a @ vec - vec * lam, axis=0)
    if np.any(res > RESIDUAL_RTOL * max(norm, np.finfo(float).tiny)):
        raise EigenSolverError(f"eigenpair residual {res.max():.3e} exceeds bound")
    return EigenResult(lambdas=lam, vectors=vec, residuals=res, norm=norm)


def zero_mode_mask(eig: EigenResult, scale=None):
    scale = eig.norm if scale is None else scale
    return np.abs(eig.lambdas) <= ZERO_MODE_RTOL * scale


def classify(eig: EigenResult, scale=None) -> StabilityVerdict:
    """Stable / unstable / marginal, ignoring structural zero modes.

    Eigenvalues with ``|λ| <= 1e-6 * scale`` are structural zeros; the rest
    decide the verdict through ``max Re λ`` against ``±1e-6 * scale``.
    ``scale`` defaults to the matrix 2-norm.
    """
    scale = eig.norm if scale is None else scale
    zero = zero_mode_mask(eig, scale)
    rest = eig.lambdas[~zero]
    thr = ZERO_MODE_RTOL * scale
    max_re = float(rest.real.max()) if rest.size else 0.0
    n_unstable = int(np.sum(rest.real > thr))
    if rest.size and max_re < -thr:
        cls = "stable"
    elif max_re > thr:
        cls = "unstable"
    else:
        cls = "marginal"
    return StabilityVerdict(classification=cls, max_re=max_re, zero_mode_count=int(zero.sum()), n_unstable=n_unstable)


def analyze_matrix(a):
    eig = eigen_decompose(a)
    return eig, classify(eig)


def modal_response(eig: EigenResult, x0, x_e, times):
    """Linear trajectory as a superposition of eigenmodes.

    ``X(t) = x_e + V diag(exp(λ t)) V^-1 (x0 - x_e)``, real part. Rows of the
    result correspond to ``times``.
    """
    v = eig.vectors
    cond = np.linalg.cond(v)
    if not np.isfinite(cond) or cond > MAX_EIGVEC_COND:
        raise ModalDecompositionError(f"eigenvector matrix condition number {cond:.3e} exceeds {MAX_EIGVEC_COND:.0e}")
    x0 = np.asarray(x0, dtype=float)
    x_e = np.asarray(x_e, dtype=float)
    c = np.linalg.solve(v, (x0 - x_e).astype(complex))
    t = np.asarray(times, dtype=float)
    modes = np.exp(np.outer(t, eig.lambdas)) * c
    return x_e + (modes @ v.T).real


def write_eigen_csv(path, eig: EigenResult, digest=None, extra_comments=()):
    zero = zero_mode_mask(eig)
    rows = [(k + 1, lam.real, lam.imag, bool(z)) for k, (lam, z) in enumerate(zip(eig.lambdas, zero))]
    return io.write_csv(path, ["index", "re", "im", "is_zero_mode"], rows,
                        comments=io.provenance(digest) + list(extra_comments))


def write_trajectory_csv(path, times, traj, states, digest=None):
    rows = [(t, *x) for t, x in zip(times, traj)]
    return io.write_csv(path, ["t", *states], rows, comments=io.provenance(digest))
