"""Monte Carlo simulation of the plant, the withholding coin, two Markov
links and the two mode-dependent current estimators.

Every trial owns independent random substreams derived from
``(base_seed, trial_index, stream)`` so results do not depend on how trials
are grouped or scheduled.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .channel import mode_distribution_step, mode_probs, stationary_distribution
from .errors import DimensionMismatch, NumericalError, ValidationError
from .riccati import _check_recursion_inputs, _optimal_gains, _recursion, enforce_psd

AGENTS = ("user", "eve")
STREAMS = ("x0", "nu", "mode_user", "mode_eve", "xi_user", "xi_eve", "w", "v")


@dataclass(frozen=True)
class SimConfig:
    horizon: int = 200
    num_trials: int = 1000
    base_seed: int = 0
    lam: float = 1.0
    record_trajectories: bool = False

    def __post_init__(self):
        for name in ("horizon", "num_trials", "base_seed"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool):
                raise ValidationError(name, f"must be an integer, got {value!r}")
        if self.horizon < 1:
            raise ValidationError("horizon", "must be at least 1")
        if self.num_trials < 1:
            raise ValidationError("num_trials", "must be at least 1")
        if not 0 <= self.base_seed < 2 ** 64:
            raise ValidationError("base_seed", "must be a 64-bit unsigned integer")
        if not isinstance(self.lam, (int, float)) or isinstance(self.lam, bool) or not 0.0 <= self.lam <= 1.0:
            raise ValidationError("lambda", f"must be a probability, got {self.lam!r}")
        if not isinstance(self.record_trajectories, bool):
            raise ValidationError("record_trajectories", "must be true or false")

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "lambda" in data:
            data["lam"] = data.pop("lambda")
        return cls(**data)

    def to_dict(self):
        return {
            "horizon": self.horizon,
            "num_trials": self.num_trials,
            "base_seed": self.base_seed,
            "lambda": self.lam,
            "record_trajectories": self.record_trajectories,
        }


@dataclass
class TrajectoryRecord:
    """One trial.  Arrays indexed by step k; per-agent arrays keyed by agent name.

    ``x``, ``xbar``, ``err`` and ``mode`` have K+1 rows (k = 0..K); the coin,
    arrivals, estimates and noises have K rows (k = 0..K-1).
    """

    x: np.ndarray
    nu: np.ndarray
    w: np.ndarray
    v: np.ndarray
    mode: Dict[str, np.ndarray]
    xi: Dict[str, np.ndarray]
    phi: Dict[str, np.ndarray]
    xbar: Dict[str, np.ndarray]
    xhat: Dict[str, np.ndarray]
    err: Dict[str, np.ndarray]


@dataclass
class MonteCarloSummary:
    mse: Dict[str, np.ndarray]
    stderr: Dict[str, np.ndarray]
    component_mse: Dict[str, np.ndarray]
    num_trials: int
    base_seed: int
    trajectories: Optional[dict] = None


def _bmv(M, x):
    # row-wise matrix-vector product with a fixed reduction order per row, so a
    # trial's arithmetic does not depend on how many trials share the batch
    return (M * x[..., None, :]).sum(axis=-1)


def _chol(M):
    return np.linalg.cholesky(np.asarray(M, dtype=float))


def trial_streams(base_seed, trial_index):
    root = np.random.SeedSequence(base_seed, spawn_key=(trial_index,))
    return dict(zip(STREAMS, (np.random.default_rng(s) for s in root.spawn(len(STREAMS)))))


def _initial_probs(channel):
    if channel.initial_dist is not None:
        return channel.initial_dist
    return stationary_distribution(channel).probs


def _sample_modes(channel, uniforms):
    """Mode paths for a batch; uniforms[:, 0] picks the initial mode."""
    T, K1 = uniforms.shape
    N = channel.num_modes
    init_cum = np.cumsum(_initial_probs(channel))
    cum = np.cumsum(channel.tpm, axis=1)
    modes = np.empty((T, K1), dtype=np.int64)
    modes[:, 0] = np.minimum(np.searchsorted(init_cum, uniforms[:, 0], side="right"), N - 1)
    for k in range(1, K1):
        rows = cum[modes[:, k - 1]]
        modes[:, k] = np.minimum((uniforms[:, k, None] >= rows).sum(axis=1), N - 1)
    return modes


def _gain_lookup(gains, horizon, channel, plant, agent):
    G = np.asarray(gains, dtype=float)
    N, nx, ny = channel.num_modes, plant.nx, plant.ny
    if G.shape == (N, nx, ny):
        return lambda k: G
    if G.shape == (horizon, N, nx, ny):
        return lambda k: G[k]
    raise DimensionMismatch(
        f"gains_{agent}",
        f"expected shape ({N}, {nx}, {ny}) or ({horizon}, {N}, {nx}, {ny}), got {G.shape}",
    )


def _simulate_batch(plant, channels, gains, cfg, trials, keep_states=False):
    A, L = plant.A, plant.L
    nx, ny, K, T = plant.nx, plant.ny, cfg.horizon, len(trials)
    cS0, cQ, cR = _chol(plant.Sigma0), _chol(plant.Q), _chol(plant.R)
    lookups = {a: _gain_lookup(gains[a], K, channels[a], plant, a) for a in AGENTS}

    x0 = np.empty((T, nx))
    nu = np.empty((T, K), dtype=bool)
    w = np.empty((T, K, nx))
    v = np.empty((T, K, ny))
    mode_u = {a: np.empty((T, K + 1)) for a in AGENTS}
    xi_u = {a: np.empty((T, K)) for a in AGENTS}
    for t, trial in enumerate(trials):
        rng = trial_streams(cfg.base_seed, trial)
        x0[t] = cS0 @ rng["x0"].standard_normal(nx)
        nu[t] = rng["nu"].random(K) < cfg.lam
        for a in AGENTS:
            mode_u[a][t] = rng[f"mode_{a}"].random(K + 1)
            xi_u[a][t] = rng[f"xi_{a}"].random(K)
        w[t] = rng["w"].standard_normal((K, nx)) @ cQ.T
        v[t] = rng["v"].standard_normal((K, ny)) @ cR.T

    modes = {a: _sample_modes(channels[a], mode_u[a]) for a in AGENTS}
    xi = {}
    for a in AGENTS:
        rec = channels[a].reception
        xi[a] = xi_u[a] < rec[modes[a][:, :K]]
    phi = {a: nu & xi[a] for a in AGENTS}

    x = x0
    xbar = {a: np.zeros((T, nx)) for a in AGENTS}
    err = {a: np.empty((T, K + 1, nx)) for a in AGENTS}
    states = {"x": np.empty((T, K + 1, nx))} if keep_states else None
    if keep_states:
        states.update({f"xbar_{a}": np.empty((T, K + 1, nx)) for a in AGENTS})
        states.update({f"xhat_{a}": np.empty((T, K, nx)) for a in AGENTS})
    for k in range(K):
        y = _bmv(L, x) + v[:, k]
        if keep_states:
            states["x"][:, k] = x
        for a in AGENTS:
            err[a][:, k] = x - xbar[a]
            M = lookups[a](k)[modes[a][:, k]]
            innov = y - _bmv(L, xbar[a])
            xhat = xbar[a] - phi[a][:, k, None] * _bmv(M, innov)
            if keep_states:
                states[f"xbar_{a}"][:, k] = xbar[a]
                states[f"xhat_{a}"][:, k] = xhat
            xbar[a] = _bmv(A, xhat)
        x = _bmv(A, x) + w[:, k]
    for a in AGENTS:
        err[a][:, K] = x - xbar[a]
        if keep_states:
            states[f"xbar_{a}"][:, K] = xbar[a]
    if keep_states:
        states["x"][:, K] = x
    return {
        "err": err, "modes": modes, "nu": nu, "xi": xi, "phi": phi,
        "w": w, "v": v, "states": states,
    }


def _check_gain_modes(gains_user, gains_eve, ch_user, ch_eve):
    for agent, G, ch in (("user", gains_user, ch_user), ("eve", gains_eve, ch_eve)):
        G = np.asarray(G)
        if G.ndim not in (3, 4) or G.shape[-3] != ch.num_modes:
            raise DimensionMismatch(f"gains_{agent}", f"need one gain per mode ({ch.num_modes})")


def simulate_trajectory(plant, ch_user, ch_eve, gains_user, gains_eve, cfg, trial_index=0):
    """Simulate one trial.

    Gains are either fixed per mode, shape ``(N, n_x, n_y)``, or a per-step
    schedule of shape ``(K, N, n_x, n_y)``.
    """
    _check_gain_modes(gains_user, gains_eve, ch_user, ch_eve)
    out = _simulate_batch(
        plant, {"user": ch_user, "eve": ch_eve}, {"user": gains_user, "eve": gains_eve},
        cfg, [trial_index], keep_states=True,
    )
    st = out["states"]
    return TrajectoryRecord(
        x=st["x"][0],
        nu=out["nu"][0].astype(int),
        w=out["w"][0],
        v=out["v"][0],
        mode={a: out["modes"][a][0] for a in AGENTS},
        xi={a: out["xi"][a][0].astype(int) for a in AGENTS},
        phi={a: out["phi"][a][0].astype(int) for a in AGENTS},
        xbar={a: st[f"xbar_{a}"][0] for a in AGENTS},
        xhat={a: st[f"xhat_{a}"][0] for a in AGENTS},
        err={a: out["err"][a][0] for a in AGENTS},
    )


def monte_carlo(plant, ch_user, ch_eve, gains_user, gains_eve, cfg, workers=1, chunk_size=None):
    """Empirical per-step MSE over ``cfg.num_trials`` trials.

    Trials are split into chunks that may run on `workers` threads; the
    per-trial results are reassembled in trial order before averaging, so the
    summary is identical for any worker count or chunk size.
    """
    _check_gain_modes(gains_user, gains_eve, ch_user, ch_eve)
    T = cfg.num_trials
    if chunk_size is None:
        chunk_size = max(1, -(-T // max(1, workers)))
    chunks = [list(range(s, min(T, s + chunk_size))) for s in range(0, T, chunk_size)]
    channels = {"user": ch_user, "eve": ch_eve}
    gains = {"user": gains_user, "eve": gains_eve}

    def run(chunk):
        return _simulate_batch(plant, channels, gains, cfg, chunk)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]

    mse, stderr, comp = {}, {}, {}
    traj = {} if cfg.record_trajectories else None
    for a in AGENTS:
        sq = np.concatenate([p["err"][a] ** 2 for p in parts], axis=0)  # (T, K+1, nx)
        total = sq.sum(axis=2)
        mse[a] = total.mean(axis=0)
        stderr[a] = total.std(axis=0, ddof=1) / np.sqrt(T) if T > 1 else np.zeros_like(mse[a])
        comp[a] = sq.mean(axis=0)
        if traj is not None:
            traj[a] = {
                "err_sq_trace": total,
                "mode": np.concatenate([p["modes"][a] for p in parts]),
                "xi": np.concatenate([p["xi"][a] for p in parts]).astype(int),
                "phi": np.concatenate([p["phi"][a] for p in parts]).astype(int),
            }
    if traj is not None:
        traj["nu"] = np.concatenate([p["nu"] for p in parts]).astype(int)
    return MonteCarloSummary(mse, stderr, comp, T, cfg.base_seed, traj)


def _theory_blocks(plant, channel, lam, pi0, horizon):
    probs = np.array(mode_probs(pi0), dtype=float)
    Z = probs[:, None, None] * plant.Sigma0
    blocks = [Z]
    pi = probs
    for _ in range(horizon):
        _check_recursion_inputs(Z, pi, channel, plant)
        with np.errstate(all="ignore"):
            Z = _recursion(Z, pi, lam, channel, plant)
        if not np.all(np.isfinite(Z)):
            raise NumericalError(f"covariance recursion overflowed after {len(blocks)} steps")
        # a divergent sequence accumulates rounding; clip rather than reject
        Z = enforce_psd(Z, tol=np.inf)
        pi = mode_distribution_step(pi, channel).probs
        blocks.append(Z)
    return np.stack(blocks)


def theoretical_mse_curve(plant, channel, lam, pi0=None, horizon=100, return_blocks=False):
    """Per-step total trace of the covariance recursion started at Z_m(0) = pi_m(0) Sigma0."""
    if pi0 is None:
        pi0 = _initial_probs(channel)
    blocks = _theory_blocks(plant, channel, lam, pi0, horizon)
    curve = np.trace(blocks, axis1=2, axis2=3).sum(axis=1)
    return (curve, blocks) if return_blocks else curve


def gain_schedule(plant, channel, lam, pi0=None, horizon=100):
    """Offline per-step gains that make the simulated error follow the recursion exactly.

    Step k uses M_m(k) = -Z_m(k) L' (L Z_m(k) L' + pi_m(k) R)^{-1}; the result has
    shape ``(horizon, N, n_x, n_y)``.
    """
    if pi0 is None:
        pi0 = _initial_probs(channel)
    blocks = _theory_blocks(plant, channel, lam, pi0, horizon - 1)
    pi = np.array(mode_probs(pi0), dtype=float)
    out = []
    for k in range(horizon):
        out.append(_optimal_gains(blocks[k], pi, plant.L, plant.R))
        pi = mode_distribution_step(pi, channel).probs
    return np.stack(out)
