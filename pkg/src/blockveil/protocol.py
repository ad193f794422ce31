"""Secret block structures and the block-sparse transmission scheme.

Alice partitions the signal indices into ``r`` equal blocks of length ``d``
(the shared secret), activates each block independently with probability
``p``, and fills active blocks with i.i.d. values from the chosen
constellation.  The channel output is ``y = A x + w`` with white Gaussian
noise.  Everything here is a pure function of its inputs plus an explicit
seed, so trials and snapshots can be generated independently and
reproducibly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

GAUSSIAN = "gaussian"
BPSK = "bpsk"

_CONSTELLATIONS = (GAUSSIAN, BPSK)


def _rng(seed):
    """Accept an int, SeedSequence, or Generator and return a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class BlockStructure:
    """A partition of ``range(n)`` into ``r`` blocks of equal length ``d``.

    ``assign[i]`` is the 0-based block label of index ``i``.  Every label
    occurs exactly ``d = n // r`` times.
    """

    n: int
    r: int
    assign: np.ndarray

    def __post_init__(self):
        assign = np.asarray(self.assign, dtype=int)
        object.__setattr__(self, "assign", assign)
        if self.n % self.r != 0:
            raise ValueError(f"r={self.r} must divide n={self.n}")
        if assign.shape != (self.n,):
            raise ValueError("assign must have length n")
        counts = np.bincount(assign, minlength=self.r)
        if len(counts) != self.r or not np.all(counts == self.d):
            raise ValueError("every block label must occur exactly d times")

    @property
    def d(self) -> int:
        return self.n // self.r

    def block_indices(self, q: int) -> np.ndarray:
        """Indices belonging to block ``q``, in increasing order."""
        return np.flatnonzero(self.assign == q)

    def blocks(self) -> list[np.ndarray]:
        """All blocks as a list of index arrays."""
        return [self.block_indices(q) for q in range(self.r)]

    def to_json(self) -> str:
        return json.dumps({"n": self.n, "r": self.r, "assign": self.assign.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "BlockStructure":
        obj = json.loads(text)
        return cls(n=obj["n"], r=obj["r"], assign=np.asarray(obj["assign"]))


@dataclass(frozen=True)
class SignalSpec:
    """Message prior: block activation probability and constellation.

    Any ``p`` in [0, 1] is a valid encoder setting; the privacy analysis and
    the moment attack assume the regime ``p <= 1/2``.
    """

    p: float
    constellation: str = GAUSSIAN

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"activation probability must be in [0, 1], got {self.p}")
        if self.constellation not in _CONSTELLATIONS:
            raise ValueError(f"unknown constellation {self.constellation!r}")


@dataclass(frozen=True)
class TransmissionConfig:
    """Noise level and key-reuse budget for a snapshot run."""

    spec: SignalSpec
    sigma2: float
    L: int = 1

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("noise variance must be >= 0")
        if self.L < 1:
            raise ValueError("snapshot count must be >= 1")


def random_block_structure(n: int, r: int, seed) -> BlockStructure:
    """Draw a uniformly random equal-size partition of ``range(n)``.

    Uniform over all assignments in which each of the ``r`` labels occurs
    exactly ``n/r`` times; deterministic given the seed.
    """
    if n % r != 0:
        raise ValueError(f"r={r} must divide n={n}")
    d = n // r
    rng = _rng(seed)
    perm = rng.permutation(n)
    assign = np.empty(n, dtype=int)
    for q in range(r):
        assign[perm[q * d:(q + 1) * d]] = q
    return BlockStructure(n=n, r=r, assign=assign)


def indicator_matrix(bs: BlockStructure) -> np.ndarray:
    """0/1 matrix with entry (i, j) = 1 iff i and j share a block.

    Symmetric with unit diagonal; satisfies B @ B = d * B and has
    eigenvalues d (multiplicity r) and 0 (multiplicity n - r).
    """
    a = bs.assign
    return (a[:, None] == a[None, :]).astype(np.int64)


def encode(bs: BlockStructure, spec: SignalSpec, seed) -> np.ndarray:
    """Draw one block-sparse message.

    Each block is zeroed with probability ``1 - p`` and otherwise filled
    with i.i.d. standard normal values (gaussian constellation) or
    equiprobable +/-1 symbols (bpsk).  Block activations are mutually
    independent.  The draw order is fixed (activations, then values), so
    results are bit-reproducible for a given seed.
    """
    rng = _rng(seed)
    active = rng.random(bs.r) < spec.p
    if spec.constellation == GAUSSIAN:
        values = rng.standard_normal(bs.n)
    else:
        values = rng.integers(0, 2, bs.n) * 2.0 - 1.0
    return values * active[bs.assign]


def transmit(ch, x: np.ndarray, sigma2: float, seed) -> np.ndarray:
    """One channel use: ``y = A x + w`` with ``w ~ N(0, sigma2 I)``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (ch.n,):
        raise ValueError(f"signal length {x.shape} does not match channel n={ch.n}")
    if sigma2 < 0:
        raise ValueError("noise variance must be >= 0")
    y = ch.A @ x
    if sigma2 > 0:
        y = y + _rng(seed).normal(0.0, np.sqrt(sigma2), ch.m)
    return y


def snapshot_seeds(seed, L: int) -> list[np.random.SeedSequence]:
    """Per-snapshot sub-seeds: children ``2l`` (message) and ``2l+1`` (noise).

    Children are derived by SeedSequence spawning, so snapshot ``l`` is
    identical no matter how many snapshots are generated and regardless of
    any parallel scheduling.
    """
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return root.spawn(2 * L)


def snapshots(ch, bs: BlockStructure, cfg: TransmissionConfig, seed) -> np.ndarray:
    """Generate ``L`` independent channel outputs under one fixed secret.

    Column ``l`` equals ``transmit(ch, encode(bs, spec, s_x), sigma2, s_w)``
    with the sub-seed pair for snapshot ``l`` from :func:`snapshot_seeds`.
    """
    if bs.n != ch.n:
        raise ValueError("block structure and channel disagree on n")
    seeds = snapshot_seeds(seed, cfg.L)
    Y = np.empty((ch.m, cfg.L))
    for ell in range(cfg.L):
        x = encode(bs, cfg.spec, seeds[2 * ell])
        Y[:, ell] = transmit(ch, x, cfg.sigma2, seeds[2 * ell + 1])
    return Y


def snr(p: float, n: int, m: int, sigma2: float) -> float:
    """Input-activity to noise ratio ``p n^2 / (sigma2 m^2)`` (linear)."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be > 0")
    return p * n * n / (sigma2 * m * m)


def snr_db(p: float, n: int, m: int, sigma2: float) -> float:
    return 10.0 * np.log10(snr(p, n, m, sigma2))


def sigma2_for_snr(p: float, n: int, m: int, snr_db_target: float) -> float:
    """Noise variance that realizes a target SNR in dB."""
    return p * n * n / (m * m * 10.0 ** (snr_db_target / 10.0))


def redundancy_beta(m: int, n: int, p: float) -> float:
    """Measurements per expected active coefficient: ``beta = m / (n p)``."""
    if p <= 0:
        raise ValueError("activation probability must be > 0")
    return m / (n * p)


def activation_for_beta(m: int, n: int, beta: float) -> float:
    """Activation probability that realizes a target redundancy ``beta``."""
    if beta <= 0:
        raise ValueError("beta must be > 0")
    return m / (n * beta)


def save_signals(path, X: np.ndarray, meta: dict | None = None) -> None:
    """Write signals/snapshots as CSV, one column per draw, with a
    ``# key=value`` metadata header."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    with open(path, "w") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write(f"# rows={X.shape[0]} cols={X.shape[1]}\n")
        for row in X:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_signals(path) -> tuple[np.ndarray, dict]:
    """Read a CSV written by :func:`save_signals`; returns (array, metadata)."""
    meta = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                for part in body.split():
                    if "=" in part:
                        key, value = part.split("=", 1)
                        meta[key] = value
                continue
            rows.append([float(v) for v in line.split(",")])
    return np.asarray(rows), meta
