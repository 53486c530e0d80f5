"""Finite-state Markov channels.

A link is a Markov chain over `num_modes` modes with a row-stochastic
transition matrix; in mode ``m`` a packet gets through with probability
``reception[m]``.  Modes are indexed from 0.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, NoConvergence, NonErgodic, OutOfRange, ValidationError

STOCHASTIC_TOL = 1e-12


def _as_matrix(value, path):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(path, f"not a numeric matrix ({exc})") from None
    if arr.ndim != 2:
        raise DimensionMismatch(path, f"expected a 2-d matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(path, "non-finite entries")
    return arr


def _as_vector(value, path):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(path, f"not a numeric vector ({exc})") from None
    if arr.ndim != 1:
        raise DimensionMismatch(path, f"expected a 1-d vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(path, "non-finite entries")
    return arr


def is_primitive(tpm):
    """Wielandt test: a nonnegative N x N matrix is primitive iff its
    ((N-1)^2 + 1)-th power is entrywise positive."""
    pattern = (np.asarray(tpm) > 0).astype(np.int64)
    n = pattern.shape[0]
    power = (n - 1) ** 2 + 1
    result = np.eye(n, dtype=np.int64)
    base = pattern
    while power:
        if power & 1:
            result = np.minimum(result @ base, 1)
        base = np.minimum(base @ base, 1)
        power >>= 1
    return bool(np.all(result > 0))


@dataclass(frozen=True, eq=False)
class FsmcModel:
    """N-mode Markov channel: transition matrix plus per-mode reception."""

    num_modes: int
    tpm: np.ndarray
    reception: np.ndarray
    initial_dist: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.num_modes
        if not isinstance(n, (int, np.integer)) or isinstance(n, bool) or n < 1:
            raise ValidationError("num_modes", f"must be a positive integer, got {n!r}")
        tpm = _as_matrix(self.tpm, "tpm")
        if tpm.shape != (n, n):
            raise DimensionMismatch("tpm", f"expected shape ({n}, {n}), got {tpm.shape}")
        for i, row in enumerate(tpm):
            if np.any(row < 0) or np.any(row > 1):
                raise OutOfRange(f"tpm[{i}]", "entries must lie in [0, 1]")
            if abs(row.sum() - 1.0) > STOCHASTIC_TOL:
                raise ValidationError(f"tpm[{i}]", f"row sums to {row.sum():.15g}, not 1")
        if not is_primitive(tpm):
            raise NonErgodic("tpm", "transition matrix is not primitive (chain not ergodic)")
        rec = _as_vector(self.reception, "reception")
        if rec.shape != (n,):
            raise DimensionMismatch("reception", f"expected length {n}, got {rec.shape[0]}")
        if np.any(rec < 0) or np.any(rec > 1):
            raise OutOfRange("reception", "entries must lie in [0, 1]")
        init = self.initial_dist
        if init is not None:
            init = _as_vector(init, "initial_dist")
            if init.shape != (n,):
                raise DimensionMismatch("initial_dist", f"expected length {n}, got {init.shape[0]}")
            # boundary values are allowed at load time; only negative / >1 entries are rejected
            if np.any(init < 0) or np.any(init > 1):
                raise OutOfRange("initial_dist", "entries must lie in [0, 1]")
            if abs(init.sum() - 1.0) > STOCHASTIC_TOL:
                raise ValidationError("initial_dist", f"sums to {init.sum():.15g}, not 1")
            init.setflags(write=False)
        tpm.setflags(write=False)
        rec.setflags(write=False)
        object.__setattr__(self, "num_modes", int(n))
        object.__setattr__(self, "tpm", tpm)
        object.__setattr__(self, "reception", rec)
        object.__setattr__(self, "initial_dist", init)

    @classmethod
    def from_dict(cls, data):
        return cls(
            num_modes=data["num_modes"],
            tpm=data["tpm"],
            reception=data["reception"],
            initial_dist=data.get("initial_dist"),
        )

    def to_dict(self):
        out = {
            "num_modes": self.num_modes,
            "tpm": self.tpm.tolist(),
            "reception": self.reception.tolist(),
        }
        if self.initial_dist is not None:
            out["initial_dist"] = self.initial_dist.tolist()
        return out

    def __eq__(self, other):
        if not isinstance(other, FsmcModel):
            return NotImplemented
        same_init = (self.initial_dist is None and other.initial_dist is None) or (
            self.initial_dist is not None
            and other.initial_dist is not None
            and np.array_equal(self.initial_dist, other.initial_dist)
        )
        return (
            self.num_modes == other.num_modes
            and np.array_equal(self.tpm, other.tpm)
            and np.array_equal(self.reception, other.reception)
            and same_init
        )

    __hash__ = None


@dataclass(frozen=True)
class ModeDistribution:
    """Mode probabilities pi(k) at step k."""

    probs: np.ndarray
    step_index: int = field(default=0)

    def __post_init__(self):
        p = _as_vector(self.probs, "probs")
        if np.any(p < 0) or np.any(p > 1):
            raise OutOfRange("probs", "entries must lie in [0, 1]")
        if abs(p.sum() - 1.0) > STOCHASTIC_TOL:
            raise ValidationError("probs", f"sums to {p.sum():.15g}, not 1")
        if self.step_index < 0:
            raise ValidationError("step_index", "must be nonnegative")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)


def mode_probs(pi):
    """Return the probability vector of a ModeDistribution or array-like."""
    if isinstance(pi, ModeDistribution):
        return pi.probs
    return np.asarray(pi, dtype=float)


def stationary_distribution(channel, tol=1e-12, max_iter=1_000_000):
    """Stationary mode distribution by power iteration of pi' <- pi' P.

    Starts from the uniform distribution and stops once successive iterates
    differ by less than `tol` in the max norm.
    """
    P = np.asarray(channel.tpm)
    if not is_primitive(P):
        raise NonErgodic("tpm", "transition matrix is not primitive (chain not ergodic)")
    n = P.shape[0]
    pi = np.full(n, 1.0 / n)
    PT = P.T.copy()
    for _ in range(max_iter):
        nxt = PT @ pi
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - pi)) <= tol:
            pi = nxt
            break
        pi = nxt
    else:
        raise NoConvergence(f"power iteration did not reach {tol:g} in {max_iter} iterations")
    return ModeDistribution(pi, 0)


def avg_reception(pi, channel):
    """Average interception probability: sum_m pi_m * reception_m."""
    p = mode_probs(pi)
    if p.shape != channel.reception.shape:
        raise DimensionMismatch("probs", f"length {p.shape} does not match {channel.num_modes} modes")
    return float(p @ channel.reception)


def effective_reception(psi, lam):
    """Rate of useful measurements when transmitting with probability `lam`."""
    if not 0.0 <= psi <= 1.0:
        raise OutOfRange("psi", f"{psi} is not a probability")
    if not 0.0 <= lam <= 1.0:
        raise OutOfRange("lambda", f"{lam} is not a probability")
    return psi * lam


def mode_distribution_step(pi, channel):
    """One Chapman-Kolmogorov step: pi(k+1)' = pi(k)' P."""
    if isinstance(pi, ModeDistribution):
        probs, k = pi.probs, pi.step_index
    else:
        probs, k = np.asarray(pi, dtype=float), 0
    if probs.shape != (channel.num_modes,):
        raise DimensionMismatch("probs", f"length {probs.shape} does not match {channel.num_modes} modes")
    nxt = probs @ channel.tpm
    # keep the vector exactly on the simplex
    nxt = np.clip(nxt, 0.0, 1.0)
    nxt /= nxt.sum()
    return ModeDistribution(nxt, k + 1)


def sample_step(mode, channel, rng):
    """Draw (next_mode, arrival) from `mode`.

    The arrival bit is a Bernoulli(reception[mode]) draw, independent of the
    transition.
    """
    u_next, u_arrival = rng.random(2)
    row = np.cumsum(channel.tpm[mode])
    next_mode = int(min(np.searchsorted(row, u_next, side="right"), channel.num_modes - 1))
    xi = int(u_arrival < channel.reception[mode])
    return next_mode, xi
