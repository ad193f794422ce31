"""Decoders for the block-sparse transmission scheme.

Bob, who knows the secret partition, solves the group relaxation

    min sum_q ||x[q]||_2   s.t.  ||y - A x||_2 <= eps,

while a structure-blind receiver falls back to plain basis pursuit

    min ||x||_1            s.t.  ||y - A x||_2 <= eps.

Both are solved by the same operator-splitting (ADMM) iteration on the
constrained form; the only difference is the shrinkage: entrywise
soft-thresholding for the l1 norm, blockwise for the group norm.  A greedy
block matching pursuit with least-squares refitting is provided as a
non-convex alternative.

The ADMM splitting introduces ``v = x`` (regularized copy) and ``u = A x``
(residual copy):

    x-step : (I + A^T A) x = (v - dv) + A^T (u - du)   [Woodbury, one
             m x m Cholesky factored up front]
    v-step : shrinkage of x + dv with threshold 1/rho
    u-step : projection of A x + du onto the ball B(y, eps)

with scaled duals dv, du and optional over-relaxation.  The fixed points
are exactly the minimizers of the constrained programs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla

from .protocol import BlockStructure


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances and step parameters shared by the decoders.

    ``epsilon`` is the residual-ball radius.  ``rho`` is the ADMM penalty
    (adapted at runtime when ``adaptive_rho``) and ``over_relaxation`` in
    [1, 2) accelerates convergence.  Termination follows the usual
    relative criterion: primal and dual consensus residuals below
    ``step_tol`` times the iterate scale, plus feasibility of the
    returned point to within ``feas_tol``; only then is ``converged``
    set.  ``success_tol`` is the relative-error threshold used for
    exact-recovery bookkeeping.
    """

    epsilon: float = 1e-6
    max_iterations: int = 2000
    rho: float = 1.0
    over_relaxation: float = 1.7
    adaptive_rho: bool = True
    feas_tol: float = 1e-8
    step_tol: float = 1e-6
    success_tol: float = 1e-3

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        for name in ("rho", "feas_tol", "step_tol", "success_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if not 1.0 <= self.over_relaxation < 2.0:
            raise ValueError("over_relaxation must lie in [1, 2)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    def with_noise(self, sigma2: float, m: int) -> "SolverOptions":
        """Copy with ``epsilon`` set to the high-probability noise radius
        ``sigma * sqrt(m + 2 sqrt(m log m))``."""
        if sigma2 <= 0:
            return replace(self, epsilon=1e-6)
        eps = np.sqrt(sigma2) * np.sqrt(m + 2.0 * np.sqrt(m * np.log(m)))
        return replace(self, epsilon=float(eps))


@dataclass(frozen=True)
class RecoverySolution:
    """Decoder output: the estimate plus convergence bookkeeping."""

    x_hat: np.ndarray
    residual: float
    iterations: int
    converged: bool
    rel_error: float | None = None
    rank_warning: bool = False


def _finish(x_hat, y, A, iterations, converged, x_true, rank_warning=False):
    residual = float(np.linalg.norm(y - A @ x_hat))
    rel = None
    if x_true is not None:
        nx = np.linalg.norm(x_true)
        diff = np.linalg.norm(x_hat - x_true)
        rel = float(diff / nx) if nx > 0 else float(diff)
    return RecoverySolution(x_hat=x_hat, residual=residual, iterations=iterations,
                            converged=converged, rel_error=rel,
                            rank_warning=rank_warning)


def _soft_threshold(w, lam):
    return np.sign(w) * np.maximum(np.abs(w) - lam, 0.0)


def _group_soft_threshold(w, lam, blocks):
    out = np.zeros_like(w)
    for g in blocks:
        wg = w[g]
        nrm = np.linalg.norm(wg)
        if nrm > lam:
            out[g] = (1.0 - lam / nrm) * wg
    return out


def _admm_ball_constrained(A, y, opts: SolverOptions, blocks, x_true):
    """Shared ADMM core; ``blocks=None`` gives the l1 path."""
    m, n = A.shape
    if y.shape != (m,):
        raise ValueError(f"observation length {y.shape} does not match m={m}")
    # (I + A A^T) Cholesky once; the x-step then costs two mat-vecs.
    chol = sla.cho_factor(np.eye(m) + A @ A.T, lower=True)

    def ridge_solve(b):
        return b - A.T @ sla.cho_solve(chol, A @ b)

    rho = opts.rho
    alpha = opts.over_relaxation
    eps = opts.epsilon
    x = np.zeros(n)
    v = np.zeros(n)
    u = y.copy()
    dv = np.zeros(n)
    du = np.zeros(m)
    converged = False
    it = 0
    eps_abs = np.sqrt(n + m) * 1e-12
    for it in range(1, opts.max_iterations + 1):
        x = ridge_solve((v - dv) + A.T @ (u - du))
        Ax = A @ x
        # over-relaxed consensus inputs
        xr = alpha * x + (1.0 - alpha) * v
        Axr = alpha * Ax + (1.0 - alpha) * u
        lam = 1.0 / rho
        w = xr + dv
        if blocks is None:
            v_new = _soft_threshold(w, lam)
        else:
            v_new = _group_soft_threshold(w, lam, blocks)
        t = Axr + du - y
        nt = np.linalg.norm(t)
        u_new = y + (t if nt <= eps else t * (eps / nt))
        r1 = xr - v_new
        r2 = Axr - u_new
        dv += r1
        du += r2
        dual = rho * np.sqrt(np.linalg.norm(v_new - v) ** 2
                             + np.linalg.norm(u_new - u) ** 2)
        v, u = v_new, u_new
        primal = np.sqrt(np.linalg.norm(r1) ** 2 + np.linalg.norm(r2) ** 2)
        scale_pri = max(np.linalg.norm(xr) + np.linalg.norm(Axr),
                        np.linalg.norm(v) + np.linalg.norm(u), 1.0)
        scale_dual = max(rho * np.sqrt(np.linalg.norm(dv) ** 2
                                       + np.linalg.norm(du) ** 2), 1.0)
        if (primal <= eps_abs + opts.step_tol * scale_pri
                and dual <= eps_abs + opts.step_tol * scale_dual):
            if np.linalg.norm(A @ v - y) <= eps + opts.feas_tol:
                converged = True
                break
        if opts.adaptive_rho and it % 10 == 0:
            # residual balancing; duals are rescaled to keep them consistent
            if primal > 10.0 * dual and rho < 1e6:
                rho *= 2.0
                dv *= 0.5
                du *= 0.5
            elif dual > 10.0 * primal and rho > 1e-6:
                rho *= 0.5
                dv *= 2.0
                du *= 2.0
    return _finish(v, y, A, it, converged, x_true)


def basis_pursuit(ch, y, opts: SolverOptions | None = None,
                  x_true=None) -> RecoverySolution:
    """Structure-blind decoding: min ||x||_1 s.t. ||y - A x|| <= eps.

    Non-convergence within the iteration budget is reported through the
    ``converged`` flag, not an exception.
    """
    opts = opts or SolverOptions()
    return _admm_ball_constrained(ch.A, np.asarray(y, dtype=float), opts,
                                  blocks=None, x_true=x_true)


def _as_blocks(bs, n: int) -> list[np.ndarray]:
    """Accept a BlockStructure, a label array, or explicit index groups."""
    if isinstance(bs, BlockStructure):
        if bs.n != n:
            raise ValueError("block structure and channel disagree on n")
        return bs.blocks()
    if isinstance(bs, np.ndarray) and bs.ndim == 1 and bs.shape[0] == n:
        labels = bs.astype(int)
        return [np.flatnonzero(labels == q) for q in np.unique(labels)]
    blocks = [np.asarray(g, dtype=int) for g in bs]
    covered = np.concatenate(blocks) if blocks else np.array([], dtype=int)
    if len(np.unique(covered)) != n or covered.size != n:
        raise ValueError("groups must partition range(n)")
    return blocks


def block_basis_pursuit(ch, y, bs,
                        opts: SolverOptions | None = None,
                        x_true=None) -> RecoverySolution:
    """Block-aware decoding: min sum_q ||x[q]||_2 s.t. ||y - A x|| <= eps.

    ``bs`` may be a :class:`BlockStructure`, a length-n label array (for a
    decoder running on an estimated, possibly unbalanced clustering), or an
    explicit list of index groups partitioning ``range(n)``.
    """
    opts = opts or SolverOptions()
    return _admm_ball_constrained(ch.A, np.asarray(y, dtype=float), opts,
                                  blocks=_as_blocks(bs, ch.n), x_true=x_true)


def block_greedy(ch, y, bs: BlockStructure, k_max: int,
                 opts: SolverOptions | None = None,
                 x_true=None) -> RecoverySolution:
    """Block matching pursuit with least-squares refit.

    Repeatedly selects the block with the largest aggregated correlation
    ``||(A^T residual)[q]||_2``, refits on the union of selected blocks,
    and stops after ``k_max`` blocks or once the residual drops to eps.
    A rank-deficient selected submatrix falls back to a pseudoinverse
    solve and sets ``rank_warning``.
    """
    if bs.n != ch.n:
        raise ValueError("block structure and channel disagree on n")
    if k_max > bs.r:
        raise ValueError(f"k_max={k_max} exceeds block count r={bs.r}")
    opts = opts or SolverOptions()
    A = ch.A
    y = np.asarray(y, dtype=float)
    blocks = bs.blocks()
    selected: list[int] = []
    x_hat = np.zeros(ch.n)
    resid = y.copy()
    rank_warning = False
    it = 0
    while it < k_max and np.linalg.norm(resid) > opts.epsilon:
        corr = A.T @ resid
        scores = [np.linalg.norm(corr[g]) if q not in selected else -np.inf
                  for q, g in enumerate(blocks)]
        q_star = int(np.argmax(scores))
        if not np.isfinite(scores[q_star]) or scores[q_star] <= 0:
            break
        selected.append(q_star)
        it += 1
        support = np.concatenate([blocks[q] for q in selected])
        As = A[:, support]
        coef, _, rank, _ = np.linalg.lstsq(As, y, rcond=None)
        if rank < As.shape[1]:
            rank_warning = True
        x_hat = np.zeros(ch.n)
        x_hat[support] = coef
        resid = y - As @ coef
    converged = np.linalg.norm(resid) <= opts.epsilon + opts.feas_tol
    return _finish(x_hat, y, A, it, bool(converged), x_true,
                   rank_warning=rank_warning)


def recovery_success(sol: RecoverySolution, x_true, success_tol: float) -> bool:
    """Exact-recovery test: relative l2 error at most ``success_tol``.

    A zero ground truth counts as recovered iff the estimate's norm is
    itself below the threshold.
    """
    x_true = np.asarray(x_true, dtype=float)
    nx = np.linalg.norm(x_true)
    err = np.linalg.norm(sol.x_hat - x_true)
    if nx == 0:
        return bool(err <= success_tol)
    return bool(err / nx <= success_tol)


def ber_bpsk(x_hat, x_true) -> float:
    """Bit error rate over the active support of a +/-1 block message.

    Each active entry is decoded to sign(x_hat_i) when |x_hat_i| > 1/2 and
    to 0 otherwise (the midpoint rule between the constellation points);
    the result is the fraction of active entries whose decoded symbol
    differs from the transmitted one.  An all-zero message has no active
    entries and yields 0 by convention.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    x_true = np.asarray(x_true, dtype=float)
    if x_hat.shape != x_true.shape:
        raise ValueError("estimate and truth must have the same length")
    active = x_true != 0
    if not np.any(active):
        return 0.0
    decoded = np.where(np.abs(x_hat) > 0.5, np.sign(x_hat), 0.0)
    return float(np.mean(decoded[active] != x_true[active]))
