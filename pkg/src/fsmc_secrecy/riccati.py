"""Mode-coupled filtering Riccati machinery.

Block sequences are stored as arrays of shape ``(N, n_x, n_x)``, one
symmetric PSD block per channel mode; gains as ``(N, n_x, n_y)``.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .channel import _as_matrix, mode_probs, stationary_distribution
from .errors import (
    DimensionMismatch,
    Inconclusive,
    NonPositiveAlpha,
    NumericalError,
    OutOfRange,
    ValidationError,
    ZeroModeProbability,
)

SYM_TOL = 1e-12
PSD_TOL = 1e-10


def _check_spd(M, path):
    if np.max(np.abs(M - M.T), initial=0.0) > SYM_TOL * max(1.0, np.max(np.abs(M))):
        raise ValidationError(path, "matrix is not symmetric")
    if np.linalg.eigvalsh(M).min() <= 0:
        raise ValidationError(path, "matrix is not positive definite")


@dataclass(frozen=True, eq=False)
class LinearPlant:
    """x(k+1) = A x(k) + w(k),  y(k) = L x(k) + v(k);  w ~ N(0, Q), v ~ N(0, R), x(0) ~ N(0, Sigma0)."""

    A: np.ndarray
    L: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Sigma0: np.ndarray

    def __post_init__(self):
        A = _as_matrix(self.A, "A")
        L = _as_matrix(self.L, "L")
        Q = _as_matrix(self.Q, "Q")
        R = _as_matrix(self.R, "R")
        S0 = _as_matrix(self.Sigma0, "Sigma0")
        nx = A.shape[0]
        if A.shape != (nx, nx):
            raise DimensionMismatch("A", f"must be square, got {A.shape}")
        if L.shape[1] != nx:
            raise DimensionMismatch("L", f"expected {nx} columns, got {L.shape[1]}")
        ny = L.shape[0]
        for name, M, size in (("Q", Q, nx), ("R", R, ny), ("Sigma0", S0, nx)):
            if M.shape != (size, size):
                raise DimensionMismatch(name, f"expected shape ({size}, {size}), got {M.shape}")
            _check_spd(M, name)
        for name, M in (("A", A), ("L", L), ("Q", Q), ("R", R), ("Sigma0", S0)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)

    @property
    def nx(self):
        return self.A.shape[0]

    @property
    def ny(self):
        return self.L.shape[0]

    @classmethod
    def from_dict(cls, data):
        return cls(A=data["A"], L=data["L"], Q=data["Q"], R=data["R"], Sigma0=data["Sigma0"])

    def to_dict(self):
        return {k: getattr(self, k).tolist() for k in ("A", "L", "Q", "R", "Sigma0")}

    def __eq__(self, other):
        if not isinstance(other, LinearPlant):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("A", "L", "Q", "R", "Sigma0"))

    __hash__ = None


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-10
    max_iter: int = 50_000
    divergence_threshold: float = 1e12
    bracket_tol: float = 1e-3
    # how often a stalled iteration falls back on the growth-rate test
    rate_check_every: int = 500
    rate_margin: float = 1e-9


@dataclass
class CareOutcome:
    verdict: str  # "Converged" or "Diverged"
    iterations: int
    final_trace: float
    solution: Optional[np.ndarray] = None
    gains: Optional[np.ndarray] = None
    residual: Optional[float] = None
    method: str = "recursion"
    growth_rate: Optional[float] = None

    @property
    def converged(self):
        return self.verdict == "Converged"


def _swap(M):
    return np.swapaxes(M, -1, -2)


def _sym(M):
    return 0.5 * (M + _swap(M))


def as_blocks(Z, n=None):
    """Validate and return a block sequence as an ``(N, n, n)`` float array."""
    Z = np.array(Z, dtype=float)
    if Z.ndim == 2:
        Z = Z[None]
    if Z.ndim != 3 or Z.shape[1] != Z.shape[2]:
        raise DimensionMismatch("blocks", f"expected shape (N, n, n), got {Z.shape}")
    if n is not None and Z.shape[1] != n:
        raise DimensionMismatch("blocks", f"blocks are {Z.shape[1]}x{Z.shape[1]}, expected {n}x{n}")
    return Z


def enforce_psd(Z, tol=PSD_TOL):
    """Symmetrize and clip tiny negative eigenvalues.

    Eigenvalues below ``-tol * max(1, |Z|)`` mean something upstream is wrong
    and raise instead of being clipped.
    """
    Z = _sym(Z)
    w = np.linalg.eigvalsh(Z)
    if w.min() >= 0:
        return Z
    scale = max(1.0, float(np.abs(w).max()))
    if w.min() < -tol * scale:
        raise NumericalError(f"block lost positive semidefiniteness (eigenvalue {w.min():.3e})")
    w, U = np.linalg.eigh(Z)
    return _sym(U @ (np.clip(w, 0.0, None)[..., None] * _swap(U)))


def _cho_solve(C, B):
    """Solve (C C') X = B for square factors C (batched)."""
    return np.linalg.solve(_swap(C), np.linalg.solve(C, B))


def _innovation_factor(Z, alpha, L, R):
    """A square factor C with C C' = L X L' + alpha R (Cholesky when possible).

    A failed factorization is an error, except when X is so large that alpha R
    falls below its rounding level (divergent sequences); the exact sum is
    bounded below by alpha R, so the eigenvalues are floored there instead.
    """
    S = _sym(L @ Z @ L.T + alpha[:, None, None] * R)
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        pass
    floor = alpha[:, None] * np.linalg.eigvalsh(R)[0]
    w, U = np.linalg.eigh(S)
    if np.any(floor <= 0) or np.any(np.abs(w).max(axis=-1) < 1e12 * floor.min(axis=-1)):
        raise NumericalError("innovation covariance L X L' + alpha R is not positive definite")
    return U * np.sqrt(np.maximum(w, floor))[..., None, :]


def _optimal_gains(Z, alpha, L, R):
    C = _innovation_factor(Z, alpha, L, R)
    # K = -Z L' S^{-1}; S is symmetric so K' = -S^{-1} L Z
    return -_swap(_cho_solve(C, L @ Z))


def _x_lambda_batch(Z, alpha, phi, lam, plant):
    A, L, Q, R = plant.A, plant.L, plant.Q, plant.R
    a = alpha[:, None, None]
    w = (lam * phi)[:, None, None]
    # square-root form: with Z = C C', the corrected covariance
    # Z - Z L' (L Z L' + a R)^{-1} L Z equals C (I + C' L' (a R)^{-1} L C)^{-1} C',
    # a Gram matrix, so it stays PSD even when Z is huge and badly conditioned
    ev, U = np.linalg.eigh(_sym(Z))
    C = U * np.sqrt(np.clip(ev, 0.0, None))[..., None, :]
    # I + B'B with B = (a R)^{-1/2} L C is factored by a QR of [B; I] rather
    # than formed, since forming it rounds away the identity when Z is large
    B = np.linalg.solve(np.linalg.cholesky(R), L @ C) / np.sqrt(a)
    stacked = np.concatenate([B, np.broadcast_to(np.eye(Z.shape[-1]), C.shape)], axis=-2)
    T = np.linalg.qr(stacked, mode="r")
    D = _swap(np.linalg.solve(_swap(T), _swap(C)))
    AC, AD = A @ C, A @ D
    open_loop = AC @ _swap(AC) + a * Q
    corrected = AD @ _swap(AD) + a * Q
    return _sym((1.0 - w) * open_loop + w * corrected)


def _check_prob(value, name):
    if not 0.0 <= value <= 1.0:
        raise OutOfRange(name, f"{value} is not in [0, 1]")


def x_lambda(X, alpha, phi, lam, plant):
    """Expected one-step error covariance of the current estimator.

    Mixes the open-loop prediction ``A X A' + alpha Q`` (weight ``1 - lam*phi``)
    with its measurement-corrected version (weight ``lam*phi``).
    """
    X = np.asarray(X, dtype=float)
    if X.shape != (plant.nx, plant.nx):
        raise DimensionMismatch("X", f"expected shape ({plant.nx}, {plant.nx}), got {X.shape}")
    if not alpha > 0:
        raise NonPositiveAlpha("alpha", f"must be positive, got {alpha}")
    _check_prob(phi, "phi")
    _check_prob(lam, "lambda")
    out = _x_lambda_batch(X[None], np.array([float(alpha)]), np.array([float(phi)]), lam, plant)[0]
    return enforce_psd(out)


def _check_recursion_inputs(Z, probs, channel, plant):
    N = channel.num_modes
    if Z.shape != (N, plant.nx, plant.nx):
        raise DimensionMismatch("Z", f"expected shape ({N}, {plant.nx}, {plant.nx}), got {Z.shape}")
    if probs.shape != (N,):
        raise DimensionMismatch("pi", f"expected {N} mode probabilities, got {probs.shape}")
    if np.any(probs <= 0):
        raise ZeroModeProbability("pi", "every mode probability must be strictly positive")


def _recursion(Z, probs, lam, channel, plant):
    X = _x_lambda_batch(Z, probs, channel.reception, lam, plant)
    # block n = sum_m p_mn X_m
    return np.tensordot(channel.tpm, X, axes=([0], [0]))


def covariance_recursion_step(Z, pi, lam, channel, plant):
    """Z_n <- sum_m p_mn X_lam(Z_m, pi_m, reception_m)."""
    Z = as_blocks(Z)
    probs = mode_probs(pi)
    _check_recursion_inputs(Z, probs, channel, plant)
    _check_prob(lam, "lambda")
    return enforce_psd(_recursion(Z, probs, lam, channel, plant))


def gains_from_solution(Z, pi, plant):
    """Mode-dependent filter gains M_m = -Z_m L' (L Z_m L' + pi_m R)^{-1}."""
    Z = as_blocks(Z, plant.nx)
    probs = mode_probs(pi)
    if probs.shape != (Z.shape[0],):
        raise DimensionMismatch("pi", f"expected {Z.shape[0]} mode probabilities, got {probs.shape}")
    if np.any(probs <= 0):
        raise ZeroModeProbability("pi", "every mode probability must be strictly positive")
    return _optimal_gains(Z, probs, plant.L, plant.R)


def _schur_complement(V, L, rtol=1e-12):
    """V - V L' (L V L')^+ L V for PSD blocks, computed via a square-root factor."""
    out = np.empty_like(V)
    for m, Vm in enumerate(V):
        w, U = np.linalg.eigh(Vm)
        C = U * np.sqrt(np.clip(w, 0.0, None))
        M = C.T @ L.T
        W, s, _ = np.linalg.svd(M, full_matrices=False)
        keep = s > rtol * max(s.max(initial=0.0), np.finfo(float).tiny)
        Wr = W[:, keep]
        CP = C - (C @ Wr) @ Wr.T
        out[m] = CP @ CP.T
    return out


def _growth_map(V, lam, channel, plant):
    A = plant.A
    w = (lam * channel.reception)[:, None, None]
    inner = (1.0 - w) * V + w * _schur_complement(V, plant.L)
    return _sym(np.tensordot(channel.tpm, A @ inner @ A.T, axes=([0], [0])))


def asymptotic_growth_rate(plant, channel, lam, start=None, max_iter=20_000, tol=1e-14, window=64):
    """Per-step growth factor of the noise-free covariance recursion.

    This is the cone spectral radius of the positively homogeneous map the
    recursion approaches for large covariances: the recursion stays bounded
    iff the returned rate is below 1.  Computed by normalized power iteration;
    returns ``(rate, spread)`` where `spread` bounds the variation of the
    windowed estimate over its last window.
    """
    N, n = channel.num_modes, plant.nx
    if start is None:
        V = np.broadcast_to(np.eye(n), (N, n, n)).copy()
    else:
        V = _sym(np.array(start, dtype=float))
        if np.trace(V, axis1=1, axis2=2).sum() <= 0:
            V = np.broadcast_to(np.eye(n), (N, n, n)).copy()
    V /= np.trace(V, axis1=1, axis2=2).sum()
    logs = []
    prev_mean = None
    stable_hits = 0
    for j in range(max_iter):
        G = _growth_map(V, lam, channel, plant)
        t = np.trace(G, axis1=1, axis2=2).sum()
        if t <= 0:
            return 0.0, 0.0
        logs.append(np.log(t))
        V = G / t
        if len(logs) >= window:
            mean = float(np.mean(logs[-window:]))
            if prev_mean is not None and abs(mean - prev_mean) < tol:
                stable_hits += 1
                if stable_hits >= 3:
                    break
            else:
                stable_hits = 0
            prev_mean = mean
    tail = np.array(logs[-window:])
    rate = float(np.exp(tail.mean()))
    spread = float(np.exp(tail.max()) - np.exp(tail.min())) if len(logs) < max_iter else float(
        abs(np.exp(np.mean(logs[-window:])) - np.exp(np.mean(logs[-2 * window:-window])))
    )
    return rate, spread


def closed_loop_operator(gains, lam, channel, plant):
    """Lifted (column-major vec) second-moment operator of the error system under fixed gains."""
    A, L = plant.A, plant.L
    n2 = plant.nx ** 2
    N = channel.num_modes
    blocks = []
    AA = np.kron(A, A)
    for m in range(N):
        w = lam * channel.reception[m]
        Acl = A + A @ gains[m] @ L
        blocks.append((1.0 - w) * AA + w * np.kron(Acl, Acl))
    big = np.zeros((N * n2, N * n2))
    for n_ in range(N):
        for m in range(N):
            p = channel.tpm[m, n_]
            if p:
                big[n_ * n2:(n_ + 1) * n2, m * n2:(m + 1) * n2] = p * blocks[m]
    return big


def _fixed_gain_noise(gains, probs, lam, channel, plant):
    A, Q, R = plant.A, plant.Q, plant.R
    AK = A @ gains
    w = (lam * channel.reception)[:, None, None]
    per_mode = probs[:, None, None] * (Q + w * (AK @ R @ _swap(AK)))
    return np.tensordot(channel.tpm, per_mode, axes=([0], [0]))


def _vec2(Z):
    return np.concatenate([Zm.reshape(-1, order="F") for Zm in Z])


def _unvec2(v, N, n):
    return np.stack([v[m * n * n:(m + 1) * n * n].reshape(n, n, order="F") for m in range(N)])


def _policy_iteration(Z, probs, lam, channel, plant, tol, max_steps=60):
    """Refine a bounded iterate to the fixed point with stabilizing gains.

    Alternates gain updates with exact fixed-gain covariance solves; returns
    None when the current gains are not mean-square stabilizing.
    """
    N, n = channel.num_modes, plant.nx
    eye = np.eye(N * n * n)
    for _ in range(max_steps):
        K = _optimal_gains(Z, probs, plant.L, plant.R)
        big = closed_loop_operator(K, lam, channel, plant)
        if np.max(np.abs(np.linalg.eigvals(big))) >= 1.0:
            return None
        rhs = _vec2(_fixed_gain_noise(K, probs, lam, channel, plant))
        Znew = _sym(_unvec2(np.linalg.solve(eye - big, rhs), N, n))
        change = _max_rel_change(Znew, Z)
        Z = Znew
        if change < tol:
            return Z
    return None


def _max_rel_change(new, old):
    diff = np.linalg.norm(new - old, axis=(1, 2))
    ref = np.maximum(np.linalg.norm(new, axis=(1, 2)), np.finfo(float).tiny)
    return float(np.max(diff / ref))


def _residual(Z, probs, lam, channel, plant):
    nxt = _recursion(Z, probs, lam, channel, plant)
    diff = np.linalg.norm(nxt - Z, axis=(1, 2))
    ref = np.maximum(np.linalg.norm(Z, axis=(1, 2)), 1.0)
    return float(np.max(diff / ref))


def solve_care(plant, channel, lam, opts=None):
    """Solve the filtering coupled Riccati equations at the stationary mode law.

    Iterates the covariance recursion from the zero sequence.  Stops with
    ``Converged`` once the largest relative block change drops below
    ``opts.tolerance`` and with ``Diverged`` once the total trace passes
    ``opts.divergence_threshold``.  If neither happens within
    ``opts.rate_check_every`` iterations, the current iterate is refined by
    policy iteration; reaching a fixed point with mean-square stabilizing
    gains gives ``Converged``.  Otherwise the asymptotic growth rate decides:
    a rate clearly above 1 is reported as ``Diverged``.  Raises
    `Inconclusive` when the rate is within ``opts.rate_margin`` of 1 or the
    iteration cap is reached.
    """
    opts = opts or SolverOptions()
    _check_prob(lam, "lambda")
    probs = stationary_distribution(channel).probs
    if np.any(probs <= 0):
        raise ZeroModeProbability("pi", "stationary distribution has a zero entry")
    N, n = channel.num_modes, plant.nx
    Z = np.zeros((N, n, n))
    rate = None
    total = 0.0
    for it in range(1, opts.max_iter + 1):
        Znew = enforce_psd(_recursion(Z, probs, lam, channel, plant))
        total = float(np.trace(Znew, axis1=1, axis2=2).sum())
        if not np.isfinite(total) or total > opts.divergence_threshold:
            return CareOutcome("Diverged", it, total, method="threshold", growth_rate=rate)
        change = _max_rel_change(Znew, Z)
        Z = Znew
        if change < opts.tolerance:
            return _converged(Z, probs, lam, channel, plant, it, "recursion", rate)
        if it % opts.rate_check_every == 0:
            # a fixed point with mean-square stabilizing gains settles the bounded case cheaply
            refined = _policy_iteration(Z, probs, lam, channel, plant, opts.tolerance)
            if refined is not None:
                return _converged(enforce_psd(refined), probs, lam, channel, plant, it, "policy_iteration", rate)
            if rate is None:
                rate, spread = asymptotic_growth_rate(plant, channel, lam, start=Z)
                margin = opts.rate_margin + spread
                if abs(rate - 1.0) <= margin:
                    raise Inconclusive(
                        f"growth rate {rate:.12f} is within {margin:.1e} of 1 (boundary case)",
                        iterations=it, final_trace=total,
                    )
                if rate > 1.0:
                    return CareOutcome("Diverged", it, total, method="growth_rate", growth_rate=rate)
    raise Inconclusive(
        f"no decision after {opts.max_iter} iterations (total trace {total:.6g})",
        iterations=opts.max_iter, final_trace=total,
    )


def _converged(Z, probs, lam, channel, plant, it, method, rate):
    return CareOutcome(
        "Converged",
        it,
        float(np.trace(Z, axis1=1, axis2=2).sum()),
        solution=Z,
        gains=_optimal_gains(Z, probs, plant.L, plant.R),
        residual=_residual(Z, probs, lam, channel, plant),
        method=method,
        growth_rate=rate,
    )
