"""Channel matrices, their Gram products, and fourth-order diagnostics.

A channel is a fat real matrix ``A`` (m < n) with cached products
``M = A.T @ A`` and ``P = M * M`` (entrywise).  On top of these the module
builds the fourth-order matrices that drive the moment-based eavesdropper:

``E_B(i,j) = sum_k sum_{k' != k, same block} m_ik m_ik' m_jk m_jk'``
``F(i,j)   = sum_k sum_{k' != k}            m_ik m_ik' m_jk m_jk'``
``G(i,j)   = sum_k sum_{k' != k}            a_ki a_kj a_k'i a_k'j``

Rather than the literal O(n^4) sums, the production path uses per-block
square-difference identities:

``E_B = sum_q (M_q M_q^T)^2 - (M_q^2)(M_q^2)^T``  (entrywise square),
``F   = (M^2) o (M^2) - P^2``, and ``G = P - (A o A)^T (A o A)``,

which cost O(n^2 r d).  The literal transcription is kept as a small-n
test oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .protocol import BlockStructure, _rng

#: Relative eigenvalue threshold below which P is treated as singular.
SINGULAR_REL_TOL = 1e-10


@dataclass(frozen=True)
class ChannelMatrix:
    """An m x n channel with cached Gram products.

    Invariants: ``M = A.T @ A`` symmetric, ``P = M * M`` entrywise (hence
    symmetric nonnegative).  Generators enforce m < n; diagnostic matrices
    with m >= n can still be wrapped via :meth:`from_matrix`.
    """

    m: int
    n: int
    A: np.ndarray
    M: np.ndarray
    P: np.ndarray
    seed: int | None = None
    generator: str = "external"

    @classmethod
    def from_matrix(cls, A, seed=None, generator="external") -> "ChannelMatrix":
        A = np.asarray(A, dtype=float)
        if A.ndim != 2:
            raise ValueError("channel matrix must be 2-D")
        m, n = A.shape
        M = A.T @ A
        M = 0.5 * (M + M.T)
        return cls(m=m, n=n, A=A, M=M, P=M * M, seed=seed, generator=generator)


def _check_dims(m: int, n: int) -> None:
    if m <= 0 or n <= 0:
        raise ValueError(f"dimensions must be positive, got m={m}, n={n}")
    if m >= n:
        raise ValueError(f"underdetermined channel requires m < n, got m={m}, n={n}")


def gen_gaussian_channel(m: int, n: int, seed) -> ChannelMatrix:
    """i.i.d. Gaussian entries with variance 1/m (unit expected column norm)."""
    _check_dims(m, n)
    A = _rng(seed).normal(0.0, 1.0 / np.sqrt(m), (m, n))
    tag = seed if isinstance(seed, (int, np.integer)) else None
    return ChannelMatrix.from_matrix(A, seed=tag, generator="gaussian")


def gen_isotropic_channel(m: int, n: int, seed) -> ChannelMatrix:
    """Columns drawn i.i.d. uniformly on the unit sphere of dimension m.

    The Gram diagonal is exactly 1, and E[P] = I + (J - I)/m.
    """
    _check_dims(m, n)
    A = _rng(seed).standard_normal((m, n))
    A /= np.linalg.norm(A, axis=0)
    tag = seed if isinstance(seed, (int, np.integer)) else None
    return ChannelMatrix.from_matrix(A, seed=tag, generator="isotropic")


@dataclass(frozen=True)
class FourthOrderMatrices:
    """E_B, F, G together with the diagonal centering constant gamma.

    ``gamma = 2(d-1)/m + (n-2)(d-1)/m**2`` is the expected diagonal of E_B
    for unit-norm isotropic columns; it is what the attack subtracts before
    inverting the covariance model.
    """

    E_B: np.ndarray
    F: np.ndarray
    G: np.ndarray
    gamma: float


def gamma_constant(n: int, m: int, d: int) -> float:
    """Expected E_B diagonal under unit-norm isotropic columns."""
    return 2.0 * (d - 1) / m + (n - 2) * (d - 1) / m**2


def fourth_order_matrices(ch: ChannelMatrix, bs: BlockStructure) -> FourthOrderMatrices:
    """Fast closed-form evaluation of E_B, F, G for one block structure."""
    if bs.n != ch.n:
        raise ValueError("block structure and channel disagree on n")
    M, P, A = ch.M, ch.P, ch.A
    n = ch.n
    E_B = np.zeros((n, n))
    for q in range(bs.r):
        Mq = M[:, bs.assign == q]
        T = Mq @ Mq.T
        E_B += T * T - (Mq * Mq) @ (Mq * Mq).T
    M2 = M @ M
    F = M2 * M2 - P @ P
    AA = A * A
    G = P - AA.T @ AA
    E_B = 0.5 * (E_B + E_B.T)
    F = 0.5 * (F + F.T)
    G = 0.5 * (G + G.T)
    return FourthOrderMatrices(E_B=E_B, F=F, G=G,
                               gamma=gamma_constant(ch.n, ch.m, bs.d))


def fourth_order_naive(ch: ChannelMatrix, bs: BlockStructure) -> FourthOrderMatrices:
    """Literal entrywise double-sum transcription; test oracle only (n <= 64)."""
    if bs.n != ch.n:
        raise ValueError("block structure and channel disagree on n")
    if ch.n > 64:
        raise ValueError("naive evaluation is O(n^3 d); guard is n <= 64")
    M, A = ch.M, ch.A
    n = ch.n
    assign = bs.assign
    E_B = np.zeros((n, n))
    F = np.zeros((n, n))
    G = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            eb = fv = 0.0
            for k in range(n):
                for kp in range(n):
                    if kp == k:
                        continue
                    prod = M[i, k] * M[i, kp] * M[j, k] * M[j, kp]
                    fv += prod
                    if assign[kp] == assign[k]:
                        eb += prod
            E_B[i, j] = eb
            F[i, j] = fv
            gv = 0.0
            for k in range(ch.m):
                for kp in range(ch.m):
                    if kp == k:
                        continue
                    gv += A[k, i] * A[k, j] * A[kp, i] * A[kp, j]
            G[i, j] = gv
    return FourthOrderMatrices(E_B=E_B, F=F, G=G,
                               gamma=gamma_constant(ch.n, ch.m, bs.d))


@dataclass(frozen=True)
class CoherenceReport:
    """Per-bound coherence diagnostics for a channel matrix.

    ``mu_required[b]`` is the smallest mu making bound ``b`` hold (NaN for
    bound ``g``, which constrains nu instead).  ``nu_required`` is
    ``1 / lambda_min(P)``; it is +inf when P is numerically singular, in
    which case bound ``g`` is unsatisfiable.  ``satisfied[b]`` evaluates
    each bound at the user-supplied (mu, nu).

    The E_B bound is computed with the derived gamma scaling
    (:func:`gamma_constant`); ``gamma_quartic_variant`` records the
    alternative m^2 / m^4 scaling for reference.
    """

    mu_required: dict
    nu_required: float
    satisfied: dict
    lambda_min_p: float
    p_singular: bool
    gamma: float
    gamma_quartic_variant: float


def coherence_check(ch: ChannelMatrix, bs: BlockStructure,
                    mu: float, nu: float) -> CoherenceReport:
    """Evaluate the spectral / max-norm coherence bounds at (mu, nu).

    Bounds (natural log throughout; requires n >= 2):

    a. ``||A||_2      <= sqrt(n/m) mu``
    b. ``||A||_max    <= sqrt(n log(n) / m) mu``
    c. ``||M||_max    <= log(n) mu^2``
    d. ``||E_B - gamma I||_2 <= max(1/m^2, n/m^4) d sqrt(n) log(n) mu^8``
    e. ``||F||_2      <= (n^2/m^2) log(n)^2 mu^8``
    f. ``||G||_2      <= (n/m) log(n) mu^4``
    g. ``lambda_min(P) >= 1/nu`` with P invertible
    """
    if mu < 0 or nu <= 0:
        raise ValueError("mu must be >= 0 and nu > 0")
    n, m, d = ch.n, ch.m, bs.d
    if n < 2:
        raise ValueError("coherence bounds need n >= 2")
    logn = np.log(n)
    fom = fourth_order_matrices(ch, bs)
    gamma = fom.gamma

    lhs = {
        "a": np.linalg.norm(ch.A, 2),
        "b": np.max(np.abs(ch.A)),
        "c": np.max(np.abs(ch.M)),
        "d": np.linalg.norm(fom.E_B - gamma * np.eye(n), 2),
        "e": np.linalg.norm(fom.F, 2),
        "f": np.linalg.norm(fom.G, 2),
    }
    scale = {
        "a": np.sqrt(n / m),
        "b": np.sqrt(n * logn / m),
        "c": logn,
        "d": max(1.0 / m**2, n / m**4) * d * np.sqrt(n) * logn,
        "e": (n / m) ** 2 * logn**2,
        "f": (n / m) * logn,
    }
    power = {"a": 1, "b": 1, "c": 2, "d": 8, "e": 8, "f": 4}

    mu_required = {b: float((lhs[b] / scale[b]) ** (1.0 / power[b])) for b in lhs}
    mu_required["g"] = float("nan")

    evals = np.linalg.eigvalsh(ch.P)
    lam_min, lam_max = float(evals[0]), float(evals[-1])
    p_singular = lam_min < SINGULAR_REL_TOL * max(lam_max, 0.0)
    nu_required = float("inf") if p_singular else 1.0 / lam_min

    satisfied = {b: bool(lhs[b] <= scale[b] * mu**power[b]) for b in lhs}
    satisfied["g"] = bool(not p_singular and lam_min >= 1.0 / nu)

    gamma_quartic = 2.0 * (d - 1) / m**2 + (n - 2) * (d - 1) / m**4
    return CoherenceReport(mu_required=mu_required, nu_required=nu_required,
                           satisfied=satisfied, lambda_min_p=lam_min,
                           p_singular=p_singular, gamma=gamma,
                           gamma_quartic_variant=gamma_quartic)


def save_channel(path, ch: ChannelMatrix) -> None:
    """Write a channel as a one-line JSON header plus row-major float64 bytes."""
    header = {"m": ch.m, "n": ch.n, "seed": ch.seed, "generator": ch.generator}
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        fh.write(np.ascontiguousarray(ch.A, dtype="<f8").tobytes())


def load_channel(path) -> ChannelMatrix:
    """Read a channel written by :func:`save_channel`; Gram caches are rebuilt."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        data = np.frombuffer(fh.read(), dtype="<f8")
    m, n = header["m"], header["n"]
    if data.size != m * n:
        raise ValueError(f"payload has {data.size} values, expected {m * n}")
    A = data.reshape(m, n)
    return ChannelMatrix.from_matrix(A, seed=header.get("seed"),
                                     generator=header.get("generator", "external"))
