"""Polar-decomposition SCF solver and its subspace-accelerated variant.

The plain iteration repeatedly replaces P by the orthogonal polar factor of
the Euclidean gradient, followed by the objective's alignment rotation; it
ascends f monotonically whenever the objective declares the framework's
ascent guarantee.  The accelerated variant maximizes over the subspace
spanned by [P, Riemannian gradient, previous iterate], solving the reduced
problem with the plain iteration.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .alignment import align_rotation
from .kernels import (
    canonical_sin_theta,
    orthonormalize_against,
    polar_factor,
    require_stiefel,
    sym_part,
)
from .objective import ComposedObjective

__all__ = [
    "IterationRecord",
    "NpdoConfig",
    "SolveReport",
    "kkt_residuals",
    "npdo_locg",
    "npdo_scf",
    "npdo_scf_step",
    "reduced_objective",
]

logger = logging.getLogger("stiefelscf")

# Gradient norms below this count as an exactly stationary (degenerate) point.
ZERO_GRAD_FLOOR = 1e-300

# Monotonicity slack: ascent is exact in theory, rounding only in practice.
MONOTONE_SLACK = 1e-12

# Stagnation guard: stop after this many consecutive steps whose f-increase
# is below 1e-16 * |f| while the residual stays above tolerance.
STAGNATION_LIMIT = 50


@dataclass(frozen=True)
class NpdoConfig:
    """Solver knobs.

    ``normalization`` is the residual scaling: None uses the Frobenius norm
    of the gradient, a float fixes a constant.  ``tolerance_fraction`` and
    ``inner_max_iter`` only matter for the subspace-accelerated variant:
    each outer step solves its reduced problem to that fraction of the
    current residual.
    """

    tol: float = 1e-8
    max_iter: int = 5000
    normalization: float | None = None
    tolerance_fraction: float = 0.25
    inner_max_iter: int = 200

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not 0.0 < self.tolerance_fraction < 1.0:
            raise ValueError("tolerance_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class IterationRecord:
    """One row of a solve trace.

    ``sigma_min`` is the smallest singular value of the gradient (polar
    solver) and ``gap`` the eigenvalue gap lambda_k - lambda_{k+1} of the
    field (eigenvector solver); each trace fills the one that applies.
    ``eta`` is the trace gain of the inner step (the realized f-gain for
    accelerated outer steps); ``step_angle`` is the Frobenius sine distance
    between consecutive column spaces.
    """

    index: int
    f: float
    eps_kkt: float | None = None
    eps_sym: float | None = None
    eps_nepv: float | None = None
    sigma_min: float | None = None
    gap: float | None = None
    eta: float = 0.0
    step_angle: float = 0.0
    m_asymmetry: float | None = None
    gap_degenerate: bool = False
    inner_iters: int | None = None
    d_trace_norm: float | None = None
    d_cross: float | None = None


@dataclass
class SolveReport:
    """Outcome of a solve: final point, trace, and exit certificates.

    ``certificates`` holds the quantities the optimality theory makes
    testable at the returned point (multiplier spectrum / field spectrum
    agreement, mismatch asymmetry, alignment PSD margin, exit residuals).
    The recorded f sequence is non-decreasing up to rounding slack whenever
    the objective declares the framework's ascent guarantee.
    """

    point: np.ndarray
    f_final: float
    f_initial: float
    converged: bool
    stop_reason: str
    iterations: list[IterationRecord] = field(default_factory=list)
    certificates: dict = field(default_factory=dict)
    solver: str = ""

    @property
    def num_iterations(self) -> int:
        return len(self.iterations)


def kkt_residuals(obj: ComposedObjective, P, normalization: float | None = None):
    """Normalized KKT residual and multiplier-symmetry residual at P.

    eps_kkt = ||G - P (P'G)||_F / xi and eps_sym = ||P'G - (P'G)'||_F / xi
    with G the Euclidean gradient and xi = ||G||_F by default.  A vanished
    gradient returns (0, 0): the point is stationary of a degenerate kind.
    """
    P = require_stiefel(P)
    G = obj.euclidean_grad(P)
    return _kkt_residuals_from_grad(P, G, normalization)


def _kkt_residuals_from_grad(P, G, normalization):
    xi = np.linalg.norm(G) if normalization is None else float(normalization)
    if xi < ZERO_GRAD_FLOOR:
        return 0.0, 0.0
    PtG = P.T @ G
    eps_kkt = float(np.linalg.norm(G - P @ PtG) / xi)
    eps_sym = float(np.linalg.norm(PtG - PtG.T) / xi)
    return eps_kkt, eps_sym


def project_feasible(obj: ComposedObjective, P0) -> np.ndarray:
    """One alignment application, used to bring an infeasible start into the
    feasible subset (the same mechanism the iteration uses mid-run)."""
    P0 = require_stiefel(P0)
    rule = obj.alignment
    if rule is None:
        return P0
    try:
        if rule.is_feasible(obj, P0):
            return P0
    except ValueError:
        # Objective undefined outside the feasible subset (powered atoms):
        # that alone marks the start as infeasible.
        pass
    _, P = align_rotation(rule, P0, obj, P0)
    return P


def npdo_scf_step(obj: ComposedObjective, P):
    """One polar-SCF step: polar factor of the gradient, then alignment.

    Returns ``(P_next, record)`` with the record's residuals evaluated at the
    incoming P and its f evaluated at P_next.  A vanished gradient returns P
    unchanged with a record flagging the degenerate stationarity.
    """
    P = require_stiefel(P)
    G = obj.euclidean_grad(P)
    eps_kkt, eps_sym = _kkt_residuals_from_grad(P, G, None)
    if np.linalg.norm(G) < ZERO_GRAD_FLOOR:
        rec = IterationRecord(0, obj.value(P), eps_kkt=0.0, eps_sym=0.0,
                              sigma_min=0.0)
        return P, rec
    pol = polar_factor(G)
    sigma_min = float(np.linalg.eigvalsh(pol.psd_factor)[0])
    eta = pol.trace_norm - float(np.trace(P.T @ G))
    _, P_next = align_rotation(obj.alignment, pol.orthogonal_factor, obj, P)
    f_next = obj.value(P_next)
    _, step_angle = canonical_sin_theta(P, P_next)
    if __debug__ and obj.npdo_monotone:
        f_here = obj.value(P)
        assert f_next >= f_here - MONOTONE_SLACK * max(1.0, abs(f_here)), (
            f"ascent violated: {f_here} -> {f_next}")
    rec = IterationRecord(0, f_next, eps_kkt=eps_kkt, eps_sym=eps_sym,
                          sigma_min=sigma_min, eta=eta, step_angle=step_angle)
    return P_next, rec


def _npdo_certificates(obj: ComposedObjective, P, normalization) -> dict:
    G = obj.euclidean_grad(P)
    Lam = P.T @ G
    sym_lam = sym_part(Lam)
    eigs = np.linalg.eigvalsh(sym_lam)
    eps_kkt, eps_sym = _kkt_residuals_from_grad(P, G, normalization)
    certs = {
        "lambda_min_of_multiplier": float(eigs[0]),
        "multiplier_norm": float(np.linalg.norm(sym_lam, 2)),
        "multiplier_asymmetry": float(np.linalg.norm(Lam - Lam.T)),
        "eps_kkt": eps_kkt,
        "eps_sym": eps_sym,
    }
    if obj.alignment is not None:
        margin = obj.alignment.psd_margin(obj, P)
        if margin is not None:
            certs["alignment_psd_margin"], certs["alignment_matrix_norm"] = margin
    return certs


def npdo_scf(obj: ComposedObjective, P0, cfg: NpdoConfig | None = None,
             callback=None) -> SolveReport:
    """Polar-decomposition SCF loop.

    Iterates until eps_kkt + eps_sym <= tol or the iteration budget runs
    out; exit certificates are computed at the returned point.  Infeasible
    starts are projected by one alignment application.  ``callback``, if
    given, is called as callback(i, P_next) after every step.
    """
    cfg = cfg or NpdoConfig()
    P = project_feasible(obj, P0)
    f0 = obj.value(P)
    f_prev = f0
    records: list[IterationRecord] = []
    converged = False
    stop = "max_iter"
    stagnant = 0
    for i in range(cfg.max_iter):
        G = obj.euclidean_grad(P)
        eps_kkt, eps_sym = _kkt_residuals_from_grad(P, G, cfg.normalization)
        if eps_kkt + eps_sym <= cfg.tol:
            converged, stop = True, "converged"
            break
        if np.linalg.norm(G) < ZERO_GRAD_FLOOR:
            converged, stop = True, "zero_gradient"
            break
        pol = polar_factor(G)
        sigma_min = float(np.linalg.eigvalsh(pol.psd_factor)[0])
        eta = pol.trace_norm - float(np.trace(P.T @ G))
        _, P_next = align_rotation(obj.alignment, pol.orthogonal_factor, obj, P)
        f_next = obj.value(P_next)
        _, step_angle = canonical_sin_theta(P, P_next)
        if __debug__ and obj.npdo_monotone:
            assert f_next >= f_prev - MONOTONE_SLACK * max(1.0, abs(f_prev)), (
                f"ascent violated at iteration {i}: {f_prev} -> {f_next}")
        records.append(IterationRecord(
            i, f_next, eps_kkt=eps_kkt, eps_sym=eps_sym, sigma_min=sigma_min,
            eta=eta, step_angle=step_angle))
        if callback is not None:
            callback(i, P_next)
        logger.debug("npdo iter %d: f=%.12g eps=%.3e", i, f_next, eps_kkt + eps_sym)
        if f_next - f_prev < 1e-16 * max(1.0, abs(f_next)):
            stagnant += 1
            if stagnant >= STAGNATION_LIMIT:
                P, f_prev = P_next, f_next
                stop = "stagnated"
                break
        else:
            stagnant = 0
        P, f_prev = P_next, f_next
    report = SolveReport(
        point=P, f_final=obj.value(P), f_initial=f0, converged=converged,
        stop_reason=stop, iterations=records,
        certificates=_npdo_certificates(obj, P, cfg.normalization),
        solver="npdo")
    if stop == "max_iter":
        warnings.warn("polar SCF hit the iteration budget before tolerance",
                      stacklevel=2)
    return report


def reduced_objective(obj: ComposedObjective, W) -> ComposedObjective:
    """Restriction f~(Z) = f(W Z) to an orthonormal subspace basis W.

    The atomic structure survives the substitution (linear matrices become
    W'D, quadratic ones W'AW), so the reduced problem is again a composed
    objective over m-by-k Stiefel points.
    """
    W = require_stiefel(W, name="W")
    return obj.transform(W)


def _locg_loop(obj, P0, cfg, residual_fn, inner_solver, solver_name,
               callback=None) -> SolveReport:
    # Shared outer loop for both accelerated solvers: build the subspace
    # basis [P | gradient | previous iterate], solve the reduced problem,
    # lift back.  residual_fn(obj, P) -> (scalar residual, parts...).
    P = project_feasible(obj, P0)
    f0 = obj.value(P)
    f_prev = f0
    P_before = None
    records: list[IterationRecord] = []
    converged = False
    stop = "max_iter"
    k = obj.k
    for i in range(cfg.max_iter):
        res = residual_fn(obj, P)
        if res <= cfg.tol:
            converged, stop = True, "converged"
            break
        R = obj.riemannian_grad(P)
        V = R if P_before is None else np.hstack([R, P_before])
        W_extra = orthonormalize_against(P, V)
        W = np.hstack([P, W_extra]) if W_extra.shape[1] else P.copy()
        red = reduced_objective(obj, W)
        Z0 = np.eye(W.shape[1], k)
        inner_cfg = replace(cfg, tol=max(cfg.tolerance_fraction * res, 1e-15),
                            max_iter=cfg.inner_max_iter)
        with warnings.catch_warnings():
            # The reduced problem only needs an approximate solve; a spent
            # inner budget is not worth surfacing.
            warnings.simplefilter("ignore")
            inner = inner_solver(red, Z0, inner_cfg)
        P_next = W @ inner.point
        f_next = obj.value(P_next)
        _, step_angle = canonical_sin_theta(P, P_next)
        G = obj.euclidean_grad(P)
        sigma_min = float(np.linalg.eigvalsh(polar_factor(G).psd_factor)[0])
        records.append(IterationRecord(
            i, f_next, eps_kkt=res, sigma_min=sigma_min,
            eta=f_next - f_prev, step_angle=step_angle,
            inner_iters=inner.num_iterations))
        if callback is not None:
            callback(i, P_next)
        logger.debug("%s outer %d: f=%.12g res=%.3e inner=%d",
                     solver_name, i, f_next, res, inner.num_iterations)
        stalled = (np.linalg.norm(inner.point - Z0) <= 1e-14
                   and f_next - f_prev <= 1e-14 * max(1.0, abs(f_prev)))
        P_before, P, f_prev = P, P_next, f_next
        if stalled:
            # The subspace step could not move: the Riemannian gradient
            # vanishes on range(W), so P is already a KKT point.
            converged, stop = True, "converged"
            break
    return SolveReport(
        point=P, f_final=obj.value(P), f_initial=f0, converged=converged,
        stop_reason=stop, iterations=records, certificates={},
        solver=solver_name)


def npdo_locg(obj: ComposedObjective, P0, cfg: NpdoConfig | None = None,
              callback=None) -> SolveReport:
    """Subspace-accelerated polar SCF.

    Each outer step maximizes f over range([P, grad, previous P]) by running
    the plain polar SCF on the reduced problem from Z0 = the first k columns
    of the identity (the previous-iterate block is absent on the first
    step).  The inner tolerance is a fraction of the current outer residual.
    """
    cfg = cfg or NpdoConfig()

    def residual(o, P):
        e1, e2 = kkt_residuals(o, P, cfg.normalization)
        return e1 + e2

    report = _locg_loop(obj, P0, cfg, residual, npdo_scf, "npdo-locg", callback)
    report.certificates = _npdo_certificates(obj, report.point, cfg.normalization)
    return report
