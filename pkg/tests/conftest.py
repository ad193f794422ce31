"""Shared test helpers: brute-force oracles kept independent of the library
code paths they check."""

import numpy as np
import pytest

from blockveil import BlockStructure


def labels_to_indicator(labels):
    labels = np.asarray(labels)
    return (labels[:, None] == labels[None, :]).astype(float)


def contiguous_structure(n, r):
    return BlockStructure(n=n, r=r, assign=np.repeat(np.arange(r), n // r))


def mc_hadamard_covariance(ch, bs, p, sigma2, L, rng, constellation="gaussian"):
    """Monte-Carlo oracle for the covariance of (A^T y)^2.

    Direct vectorized sampling from the signal model, centered at the
    sample mean; intentionally a separate code path from the library's
    snapshot generator and estimators.
    """
    active = rng.random((bs.r, L)) < p
    if constellation == "gaussian":
        values = rng.standard_normal((bs.n, L))
    else:
        values = rng.integers(0, 2, (bs.n, L)) * 2.0 - 1.0
    X = values * active[bs.assign, :]
    Y = ch.A @ X
    if sigma2 > 0:
        Y = Y + rng.normal(0.0, np.sqrt(sigma2), Y.shape)
    Z = (ch.A.T @ Y) ** 2
    Zc = Z - Z.mean(axis=1, keepdims=True)
    return (Zc @ Zc.T) / L, Z.mean(axis=1)


def procrustes_distance(U, V):
    """min over orthogonal O of ||U - V O||_F (closed form via SVD)."""
    _, s, _ = np.linalg.svd(V.T @ U)
    return float(np.sqrt(max(np.linalg.norm(U) ** 2 + np.linalg.norm(V) ** 2
                             - 2.0 * s.sum(), 0.0)))


def scaled_symmetric_perturbation(n, spectral_norm, rng):
    """Random symmetric matrix rescaled to an exact spectral norm."""
    G = rng.standard_normal((n, n))
    G = 0.5 * (G + G.T)
    return G * (spectral_norm / np.linalg.norm(G, 2))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
