"""Statistical detection baseline for the structure-learning problem.

Conditioned on the set S of active blocks, the channel output is zero-mean
Gaussian with covariance ``sigma^2 I + sum_{q in S} A_q A_q^T``, so the
output distribution under a given partition is a 2^r-component Gaussian
mixture.  Distinguishing the true partition from an alternative is a
hypothesis test between two such mixtures, and an asymptotic lower bound
on any detector's failure probability after L observations is

    rate(L) = exp(-L * D*^2),   D* = min over candidate partitions of
                                     KL(true mixture || candidate mixture).

Mixture KL has no closed form; the pairwise variational approximation

    D(f||g) ~= sum_a w_a log( sum_a' w_a' exp(-KL(f_a||f_a'))
                              / sum_b v_b exp(-KL(f_a||g_b)) )

with closed-form Gaussian component KLs is used instead, clamped at zero.
The candidate search walks the single-swap neighborhood of the true
partition (exchange one pair of indices between two blocks), optionally
subsampled; subsampling can only raise D*, which only lowers the reported
bound, keeping it a valid lower bound.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.special import logsumexp

from .channel import ChannelMatrix
from .protocol import BlockStructure, _rng

#: Relative ridge added to a numerically singular component covariance.
SINGULAR_RIDGE = 1e-10

#: Hard cap on block count: the mixture has 2^r components.
MAX_BLOCKS = 20


@dataclass(frozen=True)
class OutputMixture:
    """Zero-mean Gaussian mixture: component weights and covariances.

    Component ``s`` (a bitmask over blocks) has weight
    ``p^|s| (1-p)^(r-|s|)`` and covariance
    ``sigma^2 I + sum_{q in s} A_q A_q^T``.
    """

    weights: np.ndarray
    covariances: np.ndarray  # (2^r, m, m)
    regularized: bool = False

    @property
    def m(self) -> int:
        return self.covariances.shape[1]

    def second_moment(self) -> np.ndarray:
        """Weight-averaged covariance; equals ``p A A^T + sigma^2 I``."""
        return np.einsum("s,sij->ij", self.weights, self.covariances)


def output_mixture(ch: ChannelMatrix, bs: BlockStructure, p: float,
                   sigma2: float) -> OutputMixture:
    """Mixture model of the channel output under one partition."""
    if bs.n != ch.n:
        raise ValueError("block structure and channel disagree on n")
    if bs.r > MAX_BLOCKS:
        raise ValueError(f"2^r components with r={bs.r} blocks exceeds the r <= {MAX_BLOCKS} guard")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    m, r = ch.m, bs.r
    gram = [ch.A[:, bs.block_indices(q)] @ ch.A[:, bs.block_indices(q)].T
            for q in range(r)]
    count = 1 << r
    covs = np.empty((count, m, m))
    w = np.empty(count)
    eye = np.eye(m)
    for s in range(count):
        C = sigma2 * eye.copy()
        bits = 0
        for q in range(r):
            if s >> q & 1:
                C += gram[q]
                bits += 1
        covs[s] = C
        w[s] = p**bits * (1.0 - p) ** (r - bits)
    return OutputMixture(weights=w, covariances=covs)


def _component_factors(mix: OutputMixture):
    """Cholesky factors and log-dets; singular components get a relative
    ridge and flag the mixture as regularized."""
    m = mix.m
    chols = []
    logdets = np.empty(len(mix.weights))
    regularized = False
    for idx, C in enumerate(mix.covariances):
        try:
            L = np.linalg.cholesky(C)
        except np.linalg.LinAlgError:
            ridge = SINGULAR_RIDGE * np.trace(C) / m
            if ridge <= 0:
                ridge = SINGULAR_RIDGE
            L = np.linalg.cholesky(C + ridge * np.eye(m))
            regularized = True
        chols.append(L)
        logdets[idx] = 2.0 * np.log(np.diag(L)).sum()
    return chols, logdets, regularized


def gaussian_kl_matrix(mix1: OutputMixture, mix2: OutputMixture) -> np.ndarray:
    """Pairwise KL(f_a || g_b) between zero-mean Gaussian components.

    ``KL = (tr(S2^-1 S1) - m + logdet S2 - logdet S1) / 2``, with the trace
    evaluated as ``||L2^-1 L1||_F^2`` from the component Cholesky factors.
    """
    if mix1.m != mix2.m:
        raise ValueError("mixtures live in different dimensions")
    return _kl_with_factors(_component_factors(mix1), _component_factors(mix2), mix1.m)


def variational_kl(mix1: OutputMixture, mix2: OutputMixture) -> float:
    """Pairwise variational approximation of KL(mix1 || mix2), clamped at 0.

    Exactly zero when the mixtures are identical, and exactly the Gaussian
    KL when both mixtures have a single component.
    """
    if mix1.m != mix2.m:
        raise ValueError("mixtures live in different dimensions")
    factors1 = _component_factors(mix1)
    factors2 = _component_factors(mix2)
    K11 = _kl_with_factors(factors1, factors1, mix1.m)
    K12 = _kl_with_factors(factors1, factors2, mix1.m)
    logw1 = np.log(np.maximum(mix1.weights, 1e-300))
    logw2 = np.log(np.maximum(mix2.weights, 1e-300))
    num = logsumexp(-K11 + logw1[None, :], axis=1)
    den = logsumexp(-K12 + logw2[None, :], axis=1)
    value = float(np.sum(mix1.weights * (num - den)))
    return max(0.0, value)


def _kl_with_factors(factors1, factors2, m: int) -> np.ndarray:
    chol1, logdet1, _ = factors1
    chol2, logdet2, _ = factors2
    n1, n2 = len(chol1), len(chol2)
    stacked = np.hstack(chol1)  # (m, n1*m)
    K = np.empty((n1, n2))
    for b in range(n2):
        W = sla.solve_triangular(chol2[b], stacked, lower=True)
        traces = np.einsum("ij,ij->j", W, W).reshape(n1, m).sum(axis=1)
        K[:, b] = 0.5 * (traces - m + logdet2[b] - logdet1)
    return np.maximum(K, 0.0)


def swap_candidates(bs: BlockStructure, count: int | None = None,
                    seed=None) -> list[BlockStructure]:
    """Partitions obtained by exchanging one index pair between two blocks.

    With ``count`` set, a uniform subsample of that many distinct swaps is
    drawn (seeded); otherwise the full neighborhood is enumerated.
    """
    blocks = bs.blocks()
    pairs = []
    for q1 in range(bs.r):
        for q2 in range(q1 + 1, bs.r):
            for i in blocks[q1]:
                for j in blocks[q2]:
                    pairs.append((int(i), int(j)))
    if count is not None and count < len(pairs):
        rng = _rng(seed)
        idx = rng.choice(len(pairs), size=count, replace=False)
        pairs = [pairs[k] for k in idx]
    out = []
    for i, j in pairs:
        assign = bs.assign.copy()
        assign[i], assign[j] = assign[j], assign[i]
        out.append(BlockStructure(n=bs.n, r=bs.r, assign=assign))
    return out


@dataclass(frozen=True)
class HoeffdingCurve:
    """Lower-bound curve ``exp(-L D*^2)`` with its minimizing candidate."""

    L_grid: np.ndarray
    rates: np.ndarray
    d_star: float
    argmin_swap: str
    candidates_evaluated: int
    search: str


def hoeffding_rate(ch: ChannelMatrix, bs: BlockStructure, p: float,
                   sigma2: float, L_grid, search: dict | None = None) -> HoeffdingCurve:
    """Detection lower bound over a snapshot grid.

    ``search`` configures the candidate set: ``{"neighborhood":
    "single-swap", "count": k, "seed": s}``; ``count=None`` enumerates all
    swaps.  The divergence order is KL(true || candidate).  The curve uses
    unit leading constant, so comparisons against empirical failure curves
    are on the decay rather than the intercept.
    """
    L_grid = np.asarray(list(L_grid), dtype=float)
    if L_grid.size == 0:
        raise ValueError("L grid must be non-empty")
    search = dict(search or {})
    neighborhood = search.get("neighborhood", "single-swap")
    if neighborhood != "single-swap":
        raise ValueError(f"unknown candidate neighborhood {neighborhood!r}")
    cands = swap_candidates(bs, count=search.get("count"), seed=search.get("seed", 0))
    if not cands:
        raise ValueError("candidate set is empty")
    true_mix = output_mixture(ch, bs, p, sigma2)
    factors_true = _component_factors(true_mix)
    K11 = _kl_with_factors(factors_true, factors_true, true_mix.m)
    logw = np.log(np.maximum(true_mix.weights, 1e-300))
    num = logsumexp(-K11 + logw[None, :], axis=1)

    best = np.inf
    best_idx = -1
    for idx, cand in enumerate(cands):
        cand_mix = output_mixture(ch, cand, p, sigma2)
        factors_c = _component_factors(cand_mix)
        K12 = _kl_with_factors(factors_true, factors_c, true_mix.m)
        den = logsumexp(-K12 + logw[None, :], axis=1)
        value = max(0.0, float(np.sum(true_mix.weights * (num - den))))
        if value < best:
            best = value
            best_idx = idx
    moved = np.flatnonzero(cands[best_idx].assign != bs.assign)
    descr = f"swap indices {moved.tolist()}"
    rates = np.exp(-L_grid * best * best)
    return HoeffdingCurve(L_grid=L_grid, rates=rates, d_star=best,
                          argmin_swap=descr, candidates_evaluated=len(cands),
                          search=f"{neighborhood}, count={search.get('count')}")
