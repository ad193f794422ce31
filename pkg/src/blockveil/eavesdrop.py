"""Eavesdropping the secret partition from fourth-order output moments.

The mean and covariance of the channel output carry no trace of the block
structure, but the entrywise square ``z = (A^T y) o (A^T y)`` does: with
``u = M x`` and ``wt = A^T w``, ``z = u o u + 2 u o wt + wt o wt`` and the
three parts are mutually uncorrelated, giving

    Cov(z) = P Cov(x o x) P + 2 p (1-p) E_B + 2 p^2 (F - E_B)
             + 4 p sigma^2 (M^2 o M) + 2 sigma^4 ((A o A)^T (A o A) + G)

where ``Cov(x o x) = (kappa - 1) p I + p (1-p) B`` with the constellation
kurtosis ``kappa`` (3 for Gaussian blocks, 1 for BPSK).  Collecting the
structure-free part into ``C`` yields

    Sigma_z = p (1-p) P B P + 2 p (1-p) E_B + C,
    C = (kappa - 1) p P^2 + 2 p^2 F + 4 p sigma^2 (M^2 o M)
        + 2 sigma^4 ((A o A)^T (A o A) + G).

An attacker who knows A, p, and sigma^2 inverts this model: estimate the
covariance of z, subtract ``K = C + 2 p (1-p) gamma I`` (gamma recenters
the E_B diagonal), and sandwich with P^{-1}.  With the exact covariance
the debiased estimate satisfies

    B_tilde = B + 2 P^{-1} (E_B - gamma I) P^{-1},

so the top-r eigenvectors of B_tilde approximate the normalized block
indicators and a single greedy K-means pass with acceptance radius
``1/sqrt(2 d)`` reads off the partition.
"""

from __future__ import annotations

import json
import pathlib
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .channel import ChannelMatrix, fourth_order_matrices, gamma_constant, save_channel
from .protocol import GAUSSIAN, BPSK, BlockStructure

#: Condition-number guard for applying P^{-1}.
MAX_CONDITION = 1e10

#: Eigen-gap below which eigenvector selection is flagged as unstable.
EIGEN_GAP_TOL = 1e-12

_KURTOSIS = {GAUSSIAN: 3.0, BPSK: 1.0}


class IllConditionedError(ValueError):
    """P is too ill-conditioned to invert the covariance model."""

    def __init__(self, condition: float):
        self.condition = condition
        super().__init__(f"P condition number {condition:.3e} exceeds {MAX_CONDITION:.0e}")


def hadamard_square_transform(ch: ChannelMatrix, Y: np.ndarray) -> np.ndarray:
    """Columnwise ``z = (A^T y) o (A^T y)``; output is n x L, entrywise >= 0."""
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != ch.m:
        raise ValueError(f"snapshot rows {Y.shape[0]} do not match channel m={ch.m}")
    V = ch.A.T @ Y
    return V * V


def mean_z(ch: ChannelMatrix, p: float, sigma2: float) -> np.ndarray:
    """Model mean of z: ``p diag(M^2) + sigma^2 diag(M)``."""
    return p * ch.P.sum(axis=1) + sigma2 * np.diag(ch.M)


@dataclass(frozen=True)
class CovarianceModel:
    """Analytic covariance of z, split into its three addends.

    ``components = (structure_term, fourth_order_term, C)`` where the first
    two carry the partition (``p(1-p) P B P`` and ``2p(1-p) E_B``) and ``C``
    is structure-free; ``sigma_z`` is their sum.
    """

    sigma_z: np.ndarray
    C: np.ndarray
    components: tuple


def structure_free_term(ch: ChannelMatrix, p: float, sigma2: float,
                        constellation: str = GAUSSIAN) -> np.ndarray:
    """The additive part of Cov(z) that does not depend on the partition.

    F and G are partition-free, so no block structure is needed here.
    """
    if constellation not in _KURTOSIS:
        raise ValueError(f"unknown constellation {constellation!r}")
    kappa = _KURTOSIS[constellation]
    M, P, A = ch.M, ch.P, ch.A
    M2 = M @ M
    F = M2 * M2 - P @ P
    AA = A * A
    G = P - AA.T @ AA
    C = ((kappa - 1.0) * p * (P @ P)
         + 2.0 * p * p * F
         + 4.0 * p * sigma2 * (M2 * M)
         + 2.0 * sigma2 * sigma2 * (AA.T @ AA + G))
    return 0.5 * (C + C.T)


def analytic_covariance(ch: ChannelMatrix, bs: BlockStructure, p: float,
                        sigma2: float,
                        constellation: str = GAUSSIAN) -> CovarianceModel:
    """Exact covariance of z under the block prior (see module docstring)."""
    if bs.n != ch.n:
        raise ValueError("block structure and channel disagree on n")
    fom = fourth_order_matrices(ch, bs)
    P = ch.P
    a = bs.assign
    B = (a[:, None] == a[None, :]).astype(float)
    structure = p * (1.0 - p) * (P @ B @ P)
    fourth = 2.0 * p * (1.0 - p) * fom.E_B
    C = structure_free_term(ch, p, sigma2, constellation)
    sigma_z = structure + fourth + C
    return CovarianceModel(sigma_z=0.5 * (sigma_z + sigma_z.T), C=C,
                           components=(structure, fourth, C))


def empirical_covariance(Z: np.ndarray, z_bar: np.ndarray) -> np.ndarray:
    """Known-mean covariance estimate ``(1/L) sum (z_l - z_bar)(z_l - z_bar)^T``.

    Centering is at the model mean, not the sample mean; the result is
    symmetric positive semidefinite by construction.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    L = Z.shape[1]
    if L < 1:
        raise ValueError("need at least one snapshot")
    Zc = Z - np.asarray(z_bar, dtype=float)[:, None]
    S = (Zc @ Zc.T) / L
    return 0.5 * (S + S.T)


def sample_mean_covariance(Z: np.ndarray) -> np.ndarray:
    """Sample-mean-centered variant of :func:`empirical_covariance`.

    Robustness option for when the attacker mistrusts the model mean.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    Zc = Z - Z.mean(axis=1, keepdims=True)
    S = (Zc @ Zc.T) / Z.shape[1]
    return 0.5 * (S + S.T)


class DebiasContext:
    """Reusable debiasing state for one (channel, p, d, sigma2) setting.

    Factoring P and assembling the structure-free constant once lets a
    Monte-Carlo harness debias many covariance estimates cheaply.
    """

    def __init__(self, ch: ChannelMatrix, p: float, d: int, sigma2: float,
                 constellation: str = GAUSSIAN):
        if not 0.0 < p < 1.0:
            raise ValueError("debiasing requires p in (0, 1)")
        evals = np.linalg.eigvalsh(ch.P)
        lam_min, lam_max = float(evals[0]), float(evals[-1])
        cond = np.inf if lam_min <= 0 else lam_max / lam_min
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            raise IllConditionedError(cond)
        self.ch = ch
        self.p = p
        self.d = d
        self.condition = cond
        gamma = gamma_constant(ch.n, ch.m, d)
        C = structure_free_term(ch, p, sigma2, constellation)
        self._K = C + 2.0 * p * (1.0 - p) * gamma * np.eye(ch.n)
        self._cho = sla.cho_factor(ch.P, lower=True)

    def apply(self, sigma_hat: np.ndarray) -> np.ndarray:
        sigma_hat = np.asarray(sigma_hat, dtype=float)
        if sigma_hat.shape != (self.ch.n, self.ch.n):
            raise ValueError("covariance estimate has wrong shape")
        W = sla.cho_solve(self._cho, sigma_hat - self._K)
        B_tilde = sla.cho_solve(self._cho, W.T).T / (self.p * (1.0 - self.p))
        return 0.5 * (B_tilde + B_tilde.T)


def debias(sigma_hat: np.ndarray, ch: ChannelMatrix, p: float, d: int,
           sigma2: float, constellation: str = GAUSSIAN) -> np.ndarray:
    """Invert the covariance model around the partition term.

    Computes ``(p(1-p))^{-1} P^{-1} (sigma_hat - C - 2 p (1-p) gamma I) P^{-1}``
    via two symmetric solves against a Cholesky factor of P (never an
    explicit inverse) and symmetrizes the result to remove round-off skew.
    Requires ``p`` in (0, 1) and cond(P) below ``MAX_CONDITION``.
    """
    return DebiasContext(ch, p, d, sigma2, constellation).apply(sigma_hat)


def leading_eigenvectors(b_tilde: np.ndarray, r: int) -> tuple[np.ndarray, bool]:
    """Orthonormal eigenvectors for the r algebraically largest eigenvalues.

    The input is symmetrized before the dense solve.  Each eigenvector's
    sign is fixed so its largest-magnitude coordinate is positive.  The
    second return value flags an eigen-gap below ``EIGEN_GAP_TOL`` between
    lambda_r and lambda_{r+1}, where the invariant subspace (and hence the
    clustering) is not well defined.
    """
    b_tilde = np.asarray(b_tilde, dtype=float)
    n = b_tilde.shape[0]
    if r > n:
        raise ValueError(f"cannot extract r={r} eigenvectors from an n={n} matrix")
    sym = 0.5 * (b_tilde + b_tilde.T)
    evals, evecs = np.linalg.eigh(sym)
    U = evecs[:, -r:][:, ::-1]
    gap_warning = False
    if r < n:
        gap_warning = bool(evals[-r] - evals[-r - 1] < EIGEN_GAP_TOL)
    for col in range(U.shape[1]):
        jmax = int(np.argmax(np.abs(U[:, col])))
        if U[jmax, col] < 0:
            U[:, col] = -U[:, col]
    return U, gap_warning


def greedy_kmeans(u_tilde: np.ndarray, d: int) -> np.ndarray:
    """One-pass clustering of eigenvector rows with radius ``1/sqrt(2d)``.

    Rows are visited in index order.  A row joins the nearest existing
    centroid when its distance is below the radius (the centroid then
    becomes the running mean of its members); otherwise it opens a new
    cluster.  Returns integer labels in discovery order; the cluster count
    is ``labels.max() + 1`` and may differ from the true block count.
    """
    U = np.asarray(u_tilde, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    n, width = U.shape
    radius = 1.0 / np.sqrt(2.0 * d)
    labels = np.empty(n, dtype=int)
    # preallocated centroid accumulators; at most n clusters can open
    sums = np.zeros((n, width))
    counts = np.zeros(n)
    opened = 0
    for j in range(n):
        row = U[j]
        if opened:
            cents = sums[:opened] / counts[:opened, None]
            dists = np.linalg.norm(cents - row, axis=1)
            q = int(np.argmin(dists))
            if dists[q] < radius:
                labels[j] = q
                sums[q] += row
                counts[q] += 1
                continue
        labels[j] = opened
        sums[opened] = row
        counts[opened] = 1
        opened += 1
    return labels


@dataclass(frozen=True)
class MomentEstimate:
    """Everything the attack pipeline produced, intermediates included."""

    sigma_hat: np.ndarray
    b_tilde: np.ndarray
    u_tilde: np.ndarray
    b_hat: np.ndarray
    clusters_found: int
    eigen_gap_warning: bool


def eavesdrop(Y: np.ndarray, ch: ChannelMatrix, p: float, r: int,
              sigma2: float, constellation: str = GAUSSIAN,
              center: str = "model") -> MomentEstimate:
    """Full attack: squared correlations -> covariance -> debias -> cluster.

    ``center`` selects the covariance centering: "model" uses the known
    mean of z (the estimator the analysis assumes), "sample" the empirical
    mean.  The recovered labels are permutation-free; compare them with
    :func:`structures_equal`.
    """
    if ch.n % r != 0:
        raise ValueError(f"r={r} must divide n={ch.n}")
    d = ch.n // r
    Z = hadamard_square_transform(ch, Y)
    if center == "model":
        sigma_hat = empirical_covariance(Z, mean_z(ch, p, sigma2))
    elif center == "sample":
        sigma_hat = sample_mean_covariance(Z)
    else:
        raise ValueError(f"unknown centering {center!r}")
    b_tilde = debias(sigma_hat, ch, p, d, sigma2, constellation)
    u_tilde, gap_warning = leading_eigenvectors(b_tilde, r)
    labels = greedy_kmeans(u_tilde, d)
    return MomentEstimate(sigma_hat=sigma_hat, b_tilde=b_tilde, u_tilde=u_tilde,
                          b_hat=labels, clusters_found=int(labels.max()) + 1,
                          eigen_gap_warning=gap_warning)


def _labels_of(structure) -> np.ndarray:
    if isinstance(structure, BlockStructure):
        return structure.assign
    return np.asarray(structure, dtype=int)


def structures_equal(bhat, btrue) -> bool:
    """Label-permutation-invariant equality of two partitions.

    True iff the two label arrays induce the same co-membership relation
    (identical indicator matrices).
    """
    a = _labels_of(bhat)
    b = _labels_of(btrue)
    if a.shape != b.shape:
        raise ValueError("partitions have different lengths")
    return bool(np.array_equal(a[:, None] == a[None, :], b[:, None] == b[None, :]))


def save_moment_estimate(directory, est: MomentEstimate, params: dict,
                         ch: ChannelMatrix | None = None) -> None:
    """Persist an attack result: binary matrices, eigenvectors as CSV,
    labels as JSON, and a manifest echoing all parameters."""
    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _write_matrix(directory / "sigma_hat.bin", est.sigma_hat)
    _write_matrix(directory / "b_tilde.bin", est.b_tilde)
    np.savetxt(directory / "u_tilde.csv", est.u_tilde, delimiter=",")
    (directory / "b_hat.json").write_text(json.dumps({
        "labels": est.b_hat.tolist(),
        "clusters_found": est.clusters_found,
    }))
    manifest = dict(params)
    manifest["eigen_gap_warning"] = est.eigen_gap_warning
    manifest["clusters_found"] = est.clusters_found
    manifest["row_order"] = "natural index order"
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    if ch is not None:
        save_channel(directory / "channel.bin", ch)


def load_moment_estimate(directory) -> tuple[MomentEstimate, dict]:
    directory = pathlib.Path(directory)
    sigma_hat = _read_matrix(directory / "sigma_hat.bin")
    b_tilde = _read_matrix(directory / "b_tilde.bin")
    u_tilde = np.loadtxt(directory / "u_tilde.csv", delimiter=",", ndmin=2)
    bh = json.loads((directory / "b_hat.json").read_text())
    manifest = json.loads((directory / "manifest.json").read_text())
    est = MomentEstimate(sigma_hat=sigma_hat, b_tilde=b_tilde, u_tilde=u_tilde,
                         b_hat=np.asarray(bh["labels"], dtype=int),
                         clusters_found=bh["clusters_found"],
                         eigen_gap_warning=manifest.get("eigen_gap_warning", False))
    return est, manifest


def _write_matrix(path, mat: np.ndarray) -> None:
    mat = np.ascontiguousarray(mat, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write((json.dumps({"rows": mat.shape[0], "cols": mat.shape[1]}) + "\n").encode())
        fh.write(mat.tobytes())


def _read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        data = np.frombuffer(fh.read(), dtype="<f8")
    return data.reshape(header["rows"], header["cols"])
