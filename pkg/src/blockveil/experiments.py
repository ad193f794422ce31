"""Monte-Carlo harness: experiment configs, scenario runners, persistence.

Every scenario follows the same discipline: a master seed is split into
per-trial sub-seeds up front, each trial is a pure function of its
sub-seed, and aggregation happens in a fixed order.  Replaying a config
with the same seed therefore reproduces every output byte, and running
trials across processes cannot change the statistics.

Scenarios
---------
single-shot        Bob (block-aware) vs a blind receiver, success rate per
                   redundancy beta, noiseless.
moment-attack      failure rate of the fourth-moment attack per (beta, L),
                   with the detection lower-bound curve alongside.
ber-sweep          BPSK bit error rates for Bob (true partition) and an
                   eavesdropper decoding with her estimated partition.
covariance-verify  analytic vs empirical covariance of the squared
                   correlations on small instances.
coherence-report   per-bound coherence diagnostics of generated channels.
hoeffding          standalone detection lower-bound curves.

Activation modes: "bernoulli" draws messages exactly as the encoder does;
"fixed-count" activates exactly max(1, round(p r)) blocks chosen uniformly
(standard phase-transition methodology, and the default for the
recovery-rate and BER scenarios so that every trial carries a message).
"""

from __future__ import annotations

import concurrent.futures
import json
import pathlib
from dataclasses import dataclass, field, asdict

import numpy as np

from ._version import __version__
from .baseline import hoeffding_rate
from .channel import coherence_check, gen_gaussian_channel, gen_isotropic_channel
from .eavesdrop import (DebiasContext, analytic_covariance, eavesdrop,
                        greedy_kmeans, hadamard_square_transform,
                        leading_eigenvectors, mean_z, structures_equal)
from .protocol import (BPSK, GAUSSIAN, BlockStructure, SignalSpec,
                       TransmissionConfig, activation_for_beta, encode,
                       random_block_structure, sigma2_for_snr, snapshots,
                       transmit, _rng)
from .recovery import (SolverOptions, basis_pursuit, ber_bpsk,
                       block_basis_pursuit, recovery_success)

SCENARIOS = ("single-shot", "moment-attack", "ber-sweep",
             "covariance-verify", "coherence-report", "hoeffding")

_GENERATORS = {"gaussian": gen_gaussian_channel, "isotropic": gen_isotropic_channel}


@dataclass
class ExperimentConfig:
    """Everything a scenario run needs; mirrored by the key=value config files."""

    scenario: str
    n: int
    m: int
    r: int
    beta_list: list = field(default_factory=lambda: [2.5])
    L_list: list = field(default_factory=lambda: [1000])
    snr_db_list: list = field(default_factory=lambda: [0.0])
    trials: int = 100
    master_seed: int = 1
    constellation: str = GAUSSIAN
    activation: str = "bernoulli"
    channel: str = "gaussian"
    noiseless: bool = False
    p: float | None = None           # overrides beta-derived activation
    sigma2: float | None = None      # overrides SNR-derived noise power
    mu: float = 1.0                  # coherence-report evaluation point
    nu: float = 10.0
    hoeffding_swaps: int = 24
    hoeffding_instances: int = 3
    max_iterations: int = 2000
    success_tol: float = 1e-3
    threads: int = 1
    out_dir: str = "results"

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; pick one of {SCENARIOS}")
        if self.r <= 0 or self.n % self.r != 0:
            raise ValueError(f"block count r={self.r} must divide n={self.n}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for name in ("beta_list", "L_list", "snr_db_list"):
            if not list(getattr(self, name)):
                raise ValueError(f"{name} must be non-empty")
        if self.activation not in ("bernoulli", "fixed-count"):
            raise ValueError(f"unknown activation mode {self.activation!r}")
        if self.channel not in _GENERATORS:
            raise ValueError(f"unknown channel family {self.channel!r}")
        if self.constellation not in (GAUSSIAN, BPSK):
            raise ValueError(f"unknown constellation {self.constellation!r}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def solver_options(self, sigma2: float) -> SolverOptions:
        base = SolverOptions(max_iterations=self.max_iterations,
                             success_tol=self.success_tol)
        return base.with_noise(sigma2, self.m)


# ---------------------------------------------------------------------------
# presets


def preset(scenario: str, desk: bool = False) -> dict:
    """Default parameter sets per scenario; ``desk`` selects the scaled-down
    variant that finishes in minutes on one core."""
    native = {
        "single-shot": dict(n=800, m=200, r=20, trials=100, noiseless=True,
                            activation="fixed-count",
                            beta_list=[1.4, 2.0, 2.5, 3.3, 4.0, 5.0]),
        "moment-attack": dict(n=200, m=100, r=5, trials=500,
                              beta_list=[2.5, 5.0], snr_db_list=[0.0],
                              L_list=[1000, 3000, 5000, 7000, 9000, 12000]),
        "ber-sweep": dict(n=400, m=200, r=20, trials=200, constellation=BPSK,
                          activation="fixed-count", beta_list=[10.0],
                          snr_db_list=[0.0], L_list=[400]),
        "covariance-verify": dict(n=8, m=4, r=2, trials=5, p=0.3, sigma2=0.1,
                                  L_list=[1000, 10000, 100000, 200000]),
        "coherence-report": dict(n=64, m=32, r=16, trials=20,
                                 channel="isotropic", mu=1.2, nu=10.0),
        "hoeffding": dict(n=200, m=100, r=5, trials=3, beta_list=[2.5, 5.0],
                          snr_db_list=[0.0],
                          L_list=[1000, 3000, 5000, 7000, 9000, 12000]),
    }
    desk_overrides = {
        "single-shot": dict(n=240, m=60, r=10, trials=100,
                            beta_list=[2.0, 2.5, 3.0, 3.5, 4.0]),
        "moment-attack": dict(n=64, m=48, r=4, trials=50, channel="isotropic",
                              beta_list=[8.0 / 3.0], snr_db_list=[40.0],
                              L_list=[10, 1000, 3000, 10000],
                              hoeffding_swaps=12, hoeffding_instances=2),
        "ber-sweep": dict(n=128, m=64, r=8, trials=60, beta_list=[4.0],
                          snr_db_list=[20.0], L_list=[400]),
        "covariance-verify": dict(trials=3, L_list=[1000, 10000, 100000]),
        "coherence-report": dict(n=32, m=16, r=8, trials=10),
        "hoeffding": dict(n=64, m=48, r=4, trials=2, channel="isotropic",
                          beta_list=[8.0 / 3.0], snr_db_list=[40.0],
                          L_list=[10, 1000, 3000, 10000], hoeffding_swaps=12),
    }
    out = dict(native[scenario])
    if desk:
        out.update(desk_overrides.get(scenario, {}))
    return out


def make_config(scenario: str, desk: bool = False, **overrides) -> ExperimentConfig:
    params = preset(scenario, desk)
    params.update(overrides)
    return ExperimentConfig(scenario=scenario, **params)


# ---------------------------------------------------------------------------
# result table


@dataclass(frozen=True)
class ResultRow:
    params: dict
    metric: str
    value: float
    trials: int
    stderr: float


class ResultTable:
    """Flat (parameter point, metric, value, trials, stderr) records."""

    def __init__(self, rows: list[ResultRow] | None = None):
        self.rows: list[ResultRow] = rows or []

    def add(self, params: dict, metric: str, value: float, trials: int = 1,
            stderr: float = 0.0) -> None:
        self.rows.append(ResultRow(params=dict(params), metric=metric,
                                   value=float(value), trials=int(trials),
                                   stderr=float(stderr)))

    def param_keys(self) -> list[str]:
        keys: list[str] = []
        for row in self.rows:
            for key in row.params:
                if key not in keys:
                    keys.append(key)
        return keys

    def values(self, metric: str, **param_filter):
        """(params, value, stderr) triples for one metric, filtered."""
        out = []
        for row in self.rows:
            if row.metric != metric:
                continue
            if any(row.params.get(k) != v for k, v in param_filter.items()):
                continue
            out.append((row.params, row.value, row.stderr))
        return out

    def value(self, metric: str, **param_filter) -> float:
        hits = self.values(metric, **param_filter)
        if len(hits) != 1:
            raise KeyError(f"expected one row for {metric} / {param_filter}, got {len(hits)}")
        return hits[0][1]

    def to_csv(self, path) -> None:
        keys = self.param_keys()
        with open(path, "w") as fh:
            fh.write(",".join(keys + ["metric", "value", "trials", "stderr"]) + "\n")
            for row in self.rows:
                cells = [_csv_cell(row.params.get(k, "")) for k in keys]
                cells += [row.metric, repr(row.value), str(row.trials), repr(row.stderr)]
                fh.write(",".join(cells) + "\n")

    @classmethod
    def from_csv(cls, path) -> "ResultTable":
        rows = []
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            keys = header[:-4]
            for line in fh:
                cells = line.rstrip("\n").split(",")
                params = {k: _parse_scalar(c) for k, c in zip(keys, cells[:-4]) if c != ""}
                metric, value, trials, stderr = cells[-4:]
                rows.append(ResultRow(params=params, metric=metric,
                                      value=float(value), trials=int(trials),
                                      stderr=float(stderr)))
        return cls(rows)


def _csv_cell(value) -> str:
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def _parse_scalar(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


# ---------------------------------------------------------------------------
# config files (plain key = value lines)

_LIST_KEYS = {"beta": "beta_list", "beta_list": "beta_list",
              "L": "L_list", "L_list": "L_list",
              "snr": "snr_db_list", "snr_db": "snr_db_list",
              "snr_db_list": "snr_db_list"}
_ALIASES = {"seed": "master_seed", "out": "out_dir"}


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; '#' starts a comment, lists are
    comma-separated.  Returns a dict of ExperimentConfig overrides."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in _LIST_KEYS:
            out[_LIST_KEYS[key]] = [_parse_scalar(v.strip()) for v in value.split(",") if v.strip()]
            continue
        key = _ALIASES.get(key, key)
        if value.lower() in ("true", "false"):
            out[key] = value.lower() == "true"
        elif value.lower() in ("none", ""):
            out[key] = None
        else:
            out[key] = _parse_scalar(value)
    return out


def load_config(path) -> dict:
    return parse_config_text(pathlib.Path(path).read_text())


# ---------------------------------------------------------------------------
# shared trial plumbing


def _draw_message(bs: BlockStructure, spec: SignalSpec, activation: str, seed) -> np.ndarray:
    """Bernoulli messages use the encoder directly; fixed-count activates
    exactly max(1, round(p r)) uniformly chosen blocks."""
    if activation == "bernoulli":
        return encode(bs, spec, seed)
    rng = _rng(seed)
    k = max(1, int(round(spec.p * bs.r)))
    chosen = rng.choice(bs.r, size=k, replace=False)
    mask = np.zeros(bs.r, dtype=bool)
    mask[chosen] = True
    if spec.constellation == GAUSSIAN:
        values = rng.standard_normal(bs.n)
    else:
        values = rng.integers(0, 2, bs.n) * 2.0 - 1.0
    return values * mask[bs.assign]


def _map_trials(fn, payloads, threads: int):
    """Run trial payloads serially or over a process pool; results keep
    payload order either way, so aggregation is order-independent."""
    if threads <= 1:
        return [fn(payload) for payload in payloads]
    with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, payloads, chunksize=1))


def _point_seeds(master_seed: int, points: int, trials: int):
    """Independent sub-seed grid: one child per sweep point, spawning one
    grandchild per trial."""
    roots = np.random.SeedSequence(master_seed).spawn(points)
    return [root.spawn(trials) for root in roots]


# ---------------------------------------------------------------------------
# scenario: single-shot


def _single_shot_trial(payload):
    (n, m, r, p, activation, max_iter, success_tol, seed) = payload
    gen_seed, bs_seed, msg_seed = seed.spawn(3)
    ch = gen_gaussian_channel(m, n, gen_seed)
    bs = random_block_structure(n, r, bs_seed)
    x = _draw_message(bs, SignalSpec(p=p, constellation=GAUSSIAN), activation, msg_seed)
    y = ch.A @ x
    opts = SolverOptions(epsilon=1e-6, max_iterations=max_iter, success_tol=success_tol)
    sol_b = block_basis_pursuit(ch, y, bs, opts)
    sol_e = basis_pursuit(ch, y, opts)
    return (recovery_success(sol_b, x, success_tol),
            recovery_success(sol_e, x, success_tol),
            sol_b.iterations, sol_e.iterations)


def run_single_shot(cfg: ExperimentConfig) -> ResultTable:
    """Success rates of the block-aware and blind decoders per beta
    (noiseless single transmission, fresh channel and secret per trial)."""
    _expect_scenario(cfg, "single-shot")
    tbl = ResultTable()
    seeds = _point_seeds(cfg.master_seed, len(cfg.beta_list), cfg.trials)
    for b_idx, beta in enumerate(cfg.beta_list):
        p = cfg.p if cfg.p is not None else activation_for_beta(cfg.m, cfg.n, beta)
        payloads = [(cfg.n, cfg.m, cfg.r, p, cfg.activation, cfg.max_iterations,
                     cfg.success_tol, seeds[b_idx][t]) for t in range(cfg.trials)]
        results = _map_trials(_single_shot_trial, payloads, cfg.threads)
        bob = np.array([res[0] for res in results], dtype=float)
        eve = np.array([res[1] for res in results], dtype=float)
        iters_b = np.array([res[2] for res in results], dtype=float)
        iters_e = np.array([res[3] for res in results], dtype=float)
        params = {"beta": beta, "p": p, "n": cfg.n, "m": cfg.m, "r": cfg.r,
                  "epsilon": 1e-6, "success_tol": cfg.success_tol}
        tbl.add(params, "bob_success", bob.mean(), cfg.trials, _rate_se(bob))
        tbl.add(params, "eve_success", eve.mean(), cfg.trials, _rate_se(eve))
        tbl.add(params, "bob_iterations", iters_b.mean(), cfg.trials,
                iters_b.std(ddof=1) / np.sqrt(cfg.trials) if cfg.trials > 1 else 0.0)
        tbl.add(params, "eve_iterations", iters_e.mean(), cfg.trials,
                iters_e.std(ddof=1) / np.sqrt(cfg.trials) if cfg.trials > 1 else 0.0)
    return tbl


def _rate_se(values: np.ndarray) -> float:
    T = len(values)
    if T <= 1:
        return 0.0
    return float(values.std(ddof=1) / np.sqrt(T))


# ---------------------------------------------------------------------------
# scenario: moment-attack


def _moment_attack_trial(payload):
    (n, m, r, p, sigma2, L_grid, channel, seed) = payload
    gen_seed, bs_seed, snap_seed = seed.spawn(3)
    ch = _GENERATORS[channel](m, n, gen_seed)
    bs = random_block_structure(n, r, bs_seed)
    d = n // r
    L_max = int(max(L_grid))
    Y = snapshots(ch, bs, TransmissionConfig(SignalSpec(p=p), sigma2, L_max), snap_seed)
    Z = hadamard_square_transform(ch, Y)
    Zc = Z - mean_z(ch, p, sigma2)[:, None]
    ctx = DebiasContext(ch, p, d, sigma2)
    fails = []
    gram = np.zeros((n, n))
    done = 0
    for L in sorted(int(v) for v in L_grid):
        seg = Zc[:, done:L]
        gram += seg @ seg.T
        done = L
        sigma_hat = gram / L
        b_tilde = ctx.apply(sigma_hat)
        u_tilde, _ = leading_eigenvectors(b_tilde, r)
        labels = greedy_kmeans(u_tilde, d)
        fails.append(not structures_equal(labels, bs))
    return fails


def run_moment_attack(cfg: ExperimentConfig) -> ResultTable:
    """Attack failure frequency per (beta, L), with the detection
    lower-bound curve evaluated on held-out instances of the same size."""
    _expect_scenario(cfg, "moment-attack")
    tbl = ResultTable()
    snr_db = cfg.snr_db_list[0]
    L_grid = sorted(int(v) for v in cfg.L_list)
    roots = np.random.SeedSequence(cfg.master_seed).spawn(2 * len(cfg.beta_list))
    for b_idx, beta in enumerate(cfg.beta_list):
        trial_seeds = roots[b_idx].spawn(cfg.trials)
        p = cfg.p if cfg.p is not None else activation_for_beta(cfg.m, cfg.n, beta)
        sigma2 = cfg.sigma2 if cfg.sigma2 is not None else sigma2_for_snr(p, cfg.n, cfg.m, snr_db)
        payloads = [(cfg.n, cfg.m, cfg.r, p, sigma2, L_grid, cfg.channel,
                     trial_seeds[t]) for t in range(cfg.trials)]
        results = _map_trials(_moment_attack_trial, payloads, cfg.threads)
        fail_matrix = np.array(results, dtype=float)  # (trials, |L|)
        for l_idx, L in enumerate(L_grid):
            col = fail_matrix[:, l_idx]
            params = {"beta": beta, "p": p, "snr_db": snr_db, "L": L,
                      "n": cfg.n, "m": cfg.m, "r": cfg.r}
            tbl.add(params, "attack_failure", col.mean(), cfg.trials, _rate_se(col))
        d_star = _hoeffding_dstar(cfg, p, sigma2, roots[len(cfg.beta_list) + b_idx])
        for L in L_grid:
            params = {"beta": beta, "p": p, "snr_db": snr_db, "L": L,
                      "n": cfg.n, "m": cfg.m, "r": cfg.r}
            tbl.add(params, "hoeffding_rate", float(np.exp(-L * d_star**2)), cfg.trials, 0.0)
        tbl.add({"beta": beta, "p": p, "snr_db": snr_db, "n": cfg.n, "m": cfg.m,
                 "r": cfg.r}, "hoeffding_dstar", d_star, cfg.hoeffding_instances, 0.0)
    return tbl


def _hoeffding_dstar(cfg: ExperimentConfig, p: float, sigma2: float, seed) -> float:
    """Average minimized divergence over a few fresh instances."""
    values = []
    for inst_seed in seed.spawn(cfg.hoeffding_instances):
        gen_seed, bs_seed, search_seed = inst_seed.spawn(3)
        ch = _GENERATORS[cfg.channel](cfg.m, cfg.n, gen_seed)
        bs = random_block_structure(cfg.n, cfg.r, bs_seed)
        curve = hoeffding_rate(ch, bs, p, sigma2, [1],
                               {"neighborhood": "single-swap",
                                "count": cfg.hoeffding_swaps,
                                "seed": search_seed})
        values.append(curve.d_star)
    return float(np.mean(values))


# ---------------------------------------------------------------------------
# scenario: ber-sweep


def _ber_trial(payload):
    (n, m, r, p, sigma2, L, max_iter, success_tol, seed) = payload
    gen_seed, bs_seed, snap_seed, msg_seed, noise_seed = seed.spawn(5)
    ch = gen_gaussian_channel(m, n, gen_seed)
    bs = random_block_structure(n, r, bs_seed)
    spec = SignalSpec(p=p, constellation=BPSK)
    # Eve trains on honest protocol traffic, then both decode a fresh message
    Y = snapshots(ch, bs, TransmissionConfig(spec, sigma2, L), snap_seed)
    est = eavesdrop(Y, ch, p, r, sigma2, constellation=BPSK)
    x = _draw_message(bs, spec, "fixed-count", msg_seed)
    y = transmit(ch, x, sigma2, noise_seed)
    opts = SolverOptions(max_iterations=max_iter,
                         success_tol=success_tol).with_noise(sigma2, m)
    sol_bob = block_basis_pursuit(ch, y, bs, opts)
    sol_eve = block_basis_pursuit(ch, y, est.b_hat, opts)
    key_found = structures_equal(est.b_hat, bs)
    return (ber_bpsk(sol_bob.x_hat, x), ber_bpsk(sol_eve.x_hat, x), key_found)


def run_ber_sweep(cfg: ExperimentConfig) -> ResultTable:
    """Bob's and the eavesdropper's bit error rates per (beta, L) or
    (beta, SNR); the secret is reused for L snapshots before the test
    message is sent."""
    _expect_scenario(cfg, "ber-sweep")
    if cfg.constellation != BPSK:
        raise ValueError("BER sweeps require the bpsk constellation")
    tbl = ResultTable()
    sweep_snr = len(cfg.snr_db_list) > 1
    axis = cfg.snr_db_list if sweep_snr else cfg.L_list
    points = [(beta, v) for beta in cfg.beta_list for v in axis]
    seeds = _point_seeds(cfg.master_seed, len(points), cfg.trials)
    for idx, (beta, v) in enumerate(points):
        p = cfg.p if cfg.p is not None else activation_for_beta(cfg.m, cfg.n, beta)
        snr_db = v if sweep_snr else cfg.snr_db_list[0]
        L = int(cfg.L_list[0]) if sweep_snr else int(v)
        sigma2 = cfg.sigma2 if cfg.sigma2 is not None else sigma2_for_snr(p, cfg.n, cfg.m, snr_db)
        payloads = [(cfg.n, cfg.m, cfg.r, p, sigma2, L, cfg.max_iterations,
                     cfg.success_tol, seeds[idx][t]) for t in range(cfg.trials)]
        results = _map_trials(_ber_trial, payloads, cfg.threads)
        bob = np.array([res[0] for res in results])
        eve = np.array([res[1] for res in results])
        key = np.array([res[2] for res in results], dtype=float)
        params = {"beta": beta, "p": p, "snr_db": snr_db, "L": L, "n": cfg.n,
                  "m": cfg.m, "r": cfg.r, "sigma2": sigma2}
        tbl.add(params, "bob_ber", bob.mean(), cfg.trials, _rate_se(bob))
        tbl.add(params, "eve_ber", eve.mean(), cfg.trials, _rate_se(eve))
        tbl.add(params, "eve_key_rate", key.mean(), cfg.trials, _rate_se(key))
    return tbl


# ---------------------------------------------------------------------------
# scenario: covariance-verify


def _covariance_instance(payload):
    (n, m, r, p, sigma2, L_grid, channel, seed) = payload
    gen_seed, bs_seed, snap_seed = seed.spawn(3)
    ch = _GENERATORS[channel](m, n, gen_seed)
    bs = random_block_structure(n, r, bs_seed)
    model = analytic_covariance(ch, bs, p, sigma2)
    ref_norm = np.linalg.norm(model.sigma_z)
    L_max = int(max(L_grid))
    Y = snapshots(ch, bs, TransmissionConfig(SignalSpec(p=p), sigma2, L_max), snap_seed)
    Z = hadamard_square_transform(ch, Y)
    zbar = mean_z(ch, p, sigma2)
    Zc = Z - zbar[:, None]
    errors = []
    gram = np.zeros((n, n))
    done = 0
    for L in sorted(int(v) for v in L_grid):
        seg = Zc[:, done:L]
        gram += seg @ seg.T
        done = L
        errors.append(float(np.linalg.norm(gram / L - model.sigma_z) / ref_norm))
    mean_dev = float(np.max(np.abs(Z.mean(axis=1) - zbar)) / np.max(np.abs(zbar)))
    return errors, mean_dev


def run_covariance_verify(cfg: ExperimentConfig) -> ResultTable:
    """Relative Frobenius error between the model covariance and the
    empirical one, per snapshot count and instance (guarded to n <= 16)."""
    _expect_scenario(cfg, "covariance-verify")
    if cfg.n > 16:
        raise ValueError("covariance verification is O(n^2 L); guard is n <= 16")
    if cfg.p is None or cfg.sigma2 is None:
        raise ValueError("covariance-verify requires explicit p and sigma2")
    tbl = ResultTable()
    L_grid = sorted(int(v) for v in cfg.L_list)
    seeds = _point_seeds(cfg.master_seed, 1, cfg.trials)[0]
    payloads = [(cfg.n, cfg.m, cfg.r, cfg.p, cfg.sigma2, L_grid, cfg.channel,
                 seeds[t]) for t in range(cfg.trials)]
    results = _map_trials(_covariance_instance, payloads, cfg.threads)
    for inst, (errors, mean_dev) in enumerate(results):
        for L, err in zip(L_grid, errors):
            tbl.add({"instance": inst, "L": L, "p": cfg.p, "sigma2": cfg.sigma2,
                     "n": cfg.n, "m": cfg.m, "r": cfg.r},
                    "rel_frobenius_error", err)
        tbl.add({"instance": inst, "p": cfg.p, "sigma2": cfg.sigma2,
                 "n": cfg.n, "m": cfg.m, "r": cfg.r},
                "mean_rel_deviation", mean_dev)
    return tbl


# ---------------------------------------------------------------------------
# scenario: coherence-report


def run_coherence_report(cfg: ExperimentConfig) -> ResultTable:
    """Minimal coherence parameters per bound for freshly drawn channels."""
    _expect_scenario(cfg, "coherence-report")
    tbl = ResultTable()
    seeds = _point_seeds(cfg.master_seed, 1, cfg.trials)[0]
    for t in range(cfg.trials):
        gen_seed, bs_seed = seeds[t].spawn(2)
        ch = _GENERATORS[cfg.channel](cfg.m, cfg.n, gen_seed)
        bs = random_block_structure(cfg.n, cfg.r, bs_seed)
        report = coherence_check(ch, bs, cfg.mu, cfg.nu)
        params = {"instance": t, "n": cfg.n, "m": cfg.m, "r": cfg.r,
                  "mu": cfg.mu, "nu": cfg.nu}
        for bound, value in report.mu_required.items():
            if bound == "g":
                continue
            tbl.add(params, f"mu_required_{bound}", value)
        tbl.add(params, "nu_required", report.nu_required)
        tbl.add(params, "lambda_min_p", report.lambda_min_p)
        for bound, ok in report.satisfied.items():
            tbl.add(params, f"satisfied_{bound}", float(ok))
    return tbl


# ---------------------------------------------------------------------------
# scenario: hoeffding


def run_hoeffding(cfg: ExperimentConfig) -> ResultTable:
    """Standalone detection lower-bound curves per beta."""
    _expect_scenario(cfg, "hoeffding")
    tbl = ResultTable()
    snr_db = cfg.snr_db_list[0]
    seeds = _point_seeds(cfg.master_seed, len(cfg.beta_list), 1)
    for b_idx, beta in enumerate(cfg.beta_list):
        p = cfg.p if cfg.p is not None else activation_for_beta(cfg.m, cfg.n, beta)
        sigma2 = cfg.sigma2 if cfg.sigma2 is not None else sigma2_for_snr(p, cfg.n, cfg.m, snr_db)
        d_star = _hoeffding_dstar(cfg, p, sigma2, seeds[b_idx][0])
        for L in cfg.L_list:
            tbl.add({"beta": beta, "p": p, "snr_db": snr_db, "L": int(L),
                     "n": cfg.n, "m": cfg.m, "r": cfg.r},
                    "hoeffding_rate", float(np.exp(-int(L) * d_star**2)),
                    cfg.hoeffding_instances, 0.0)
        tbl.add({"beta": beta, "p": p, "snr_db": snr_db, "n": cfg.n,
                 "m": cfg.m, "r": cfg.r}, "hoeffding_dstar", d_star,
                cfg.hoeffding_instances, 0.0)
    return tbl


# ---------------------------------------------------------------------------
# dispatch, persistence, charts


_RUNNERS = {
    "single-shot": run_single_shot,
    "moment-attack": run_moment_attack,
    "ber-sweep": run_ber_sweep,
    "covariance-verify": run_covariance_verify,
    "coherence-report": run_coherence_report,
    "hoeffding": run_hoeffding,
}


def _expect_scenario(cfg: ExperimentConfig, expected: str) -> None:
    if cfg.scenario != expected:
        raise ValueError(f"config is for scenario {cfg.scenario!r}, not {expected!r}")


def run_scenario(cfg: ExperimentConfig) -> ResultTable:
    return _RUNNERS[cfg.scenario](cfg)


def write_outputs(cfg: ExperimentConfig, tbl: ResultTable) -> pathlib.Path:
    """Persist results.csv, manifest.json, and the scenario's charts."""
    out = pathlib.Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tbl.to_csv(out / "results.csv")
    manifest = asdict(cfg)
    manifest["version"] = __version__
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    for chart in default_charts(cfg.scenario):
        try:
            emit_charts(tbl, chart, out / chart.filename)
        except ValueError:
            continue  # chart metrics absent from this run
    return out


@dataclass(frozen=True)
class ChartSpec:
    """One line chart: a metric family against a swept parameter."""

    filename: str
    x: str
    metrics: tuple
    series_param: str | None = None
    dashed_metrics: tuple = ()
    log_x: bool = False
    log_y: bool = False
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""


def default_charts(scenario: str) -> list[ChartSpec]:
    charts = {
        "single-shot": [ChartSpec(filename="success_rates.svg", x="beta",
                                  metrics=("bob_success", "eve_success"),
                                  title="Recovery success vs redundancy",
                                  xlabel="beta", ylabel="success rate")],
        "moment-attack": [ChartSpec(filename="attack_failure.svg", x="L",
                                    metrics=("attack_failure", "hoeffding_rate"),
                                    series_param="beta",
                                    dashed_metrics=("hoeffding_rate",),
                                    log_x=True, log_y=True,
                                    title="Structure-learning failure vs snapshots",
                                    xlabel="snapshots L", ylabel="failure probability")],
        "ber-sweep": [ChartSpec(filename="ber.svg", x="L",
                                metrics=("bob_ber", "eve_ber"),
                                series_param="beta", log_y=True,
                                title="Bit error rate vs key reuse",
                                xlabel="snapshots L", ylabel="BER")],
        "covariance-verify": [ChartSpec(filename="covariance_error.svg", x="L",
                                        metrics=("rel_frobenius_error",),
                                        series_param="instance",
                                        log_x=True, log_y=True,
                                        title="Covariance model vs Monte Carlo",
                                        xlabel="snapshots L",
                                        ylabel="relative Frobenius error")],
        "coherence-report": [],
        "hoeffding": [ChartSpec(filename="hoeffding.svg", x="L",
                                metrics=("hoeffding_rate",), series_param="beta",
                                log_x=True, log_y=True,
                                title="Detection lower bound",
                                xlabel="snapshots L", ylabel="rate")],
    }
    return charts[scenario]


def emit_charts(tbl: ResultTable, chart: ChartSpec, path) -> pathlib.Path:
    """Render one chart to a self-contained SVG with deterministic bytes."""
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "blockveil"

    if not tbl.rows:
        raise ValueError("cannot chart an empty result table")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    plotted = 0
    for metric in chart.metrics:
        hits = tbl.values(metric)
        if not hits:
            continue
        if chart.series_param is not None:
            series_values = sorted({params.get(chart.series_param) for params, _, _ in hits},
                                   key=lambda v: (v is None, v))
        else:
            series_values = [None]
        for sv in series_values:
            pts = [(params[chart.x], value) for params, value, _ in hits
                   if chart.x in params and (sv is None or params.get(chart.series_param) == sv)]
            if not pts:
                continue
            pts.sort()
            xs = [pt[0] for pt in pts]
            ys = [max(pt[1], 1e-12) if chart.log_y else pt[1] for pt in pts]
            label = metric if sv is None else f"{metric} ({chart.series_param}={sv})"
            style = "--" if metric in chart.dashed_metrics else "-"
            ax.plot(xs, ys, style, marker="o", markersize=3, label=label)
            plotted += 1
    if plotted == 0:
        plt.close(fig)
        raise ValueError(f"no data for chart metrics {chart.metrics}")
    if chart.log_x:
        ax.set_xscale("log")
    if chart.log_y:
        ax.set_yscale("log")
    ax.set_title(chart.title)
    ax.set_xlabel(chart.xlabel or chart.x)
    ax.set_ylabel(chart.ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = pathlib.Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
