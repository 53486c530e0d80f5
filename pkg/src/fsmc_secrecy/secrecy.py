"""Secrecy design: critical withholding probabilities, the feasible
transmission-probability interval, and the eavesdropper divergence test."""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as la

from .channel import avg_reception, stationary_distribution
from .errors import (
    DimensionMismatch,
    Inconclusive,
    InconclusiveBisection,
    NoConvergence,
    NotBoundedAtOne,
    NotUnstable,
    NumericalError,
    OutOfRange,
    SingularSystem,
)
from .riccati import SolverOptions, _check_prob, _sym, _unvec2, _vec2, as_blocks, solve_care

BOUNDED = "Bounded"
UNBOUNDED = "Unbounded"
INCONCLUSIVE = "Inconclusive"

MAX_CONDITION = 1e12


def spectral_radius(M):
    """Largest eigenvalue modulus of a square matrix."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionMismatch("M", f"expected a square matrix, got shape {M.shape}")
    if M.size == 0:
        return 0.0
    try:
        return float(np.max(np.abs(np.linalg.eigvals(M))))
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f"eigenvalue iteration failed: {exc}") from None


def boundedness_verdict(plant, channel, lam, opts=None):
    """Bounded / Unbounded / Inconclusive verdict for the user-side recursion at `lam`."""
    try:
        outcome = solve_care(plant, channel, lam, opts)
    except (Inconclusive, NumericalError):
        return INCONCLUSIVE
    return BOUNDED if outcome.converged else UNBOUNDED


@dataclass
class CriticalLambda:
    """Bisection result: Unbounded at `low`, Bounded at `high`."""

    lambda_c: float
    bracket_width: float
    low: float
    high: float
    probes: List[Tuple[float, str]] = field(default_factory=list)


def critical_lambda(plant, channel, opts=None):
    """Critical transmission probability of a link by bisection on the verdict.

    Returns the midpoint of a bracket ``[low, high]`` with an Unbounded verdict
    at `low`, a Bounded verdict at `high` and ``high - low <= opts.bracket_tol``.
    A probe that cannot be classified sits next to the threshold; it is kept
    as unclassified and the bracket is closed around it from both sides.
    """
    opts = opts or SolverOptions()
    rho = spectral_radius(plant.A)
    if rho <= 1.0:
        raise NotUnstable(f"spectral radius of A is {rho:.6g} <= 1")
    probes = []

    def probe(lam):
        verdict = boundedness_verdict(plant, channel, lam, opts)
        probes.append((lam, verdict))
        return verdict

    top = probe(1.0)
    if top == UNBOUNDED:
        raise NotBoundedAtOne("estimation error is unbounded even when every measurement is sent")
    if top == INCONCLUSIVE:
        raise InconclusiveBisection("could not classify lambda = 1")
    lo, hi = 0.0, 1.0
    tol = opts.bracket_tol
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        verdict = probe(mid)
        if verdict == BOUNDED:
            hi = mid
        elif verdict == UNBOUNDED:
            lo = mid
        else:
            step = tol / 4
            left, right = max(lo, mid - step), min(hi, mid + step)
            v_left = probe(left) if left > lo else UNBOUNDED
            v_right = probe(right) if right < hi else BOUNDED
            if v_left == BOUNDED:
                hi = left
            elif v_right == UNBOUNDED:
                lo = right
            elif v_left == UNBOUNDED and v_right == BOUNDED:
                lo, hi = left, right
            else:
                raise InconclusiveBisection(
                    f"could not classify probes around lambda = {mid:.6f}; "
                    f"bracket so far [{lo:.6f}, {hi:.6f}]"
                )
    return CriticalLambda(0.5 * (lo + hi), hi - lo, lo, hi, probes)


def secrecy_interval(psi_user, psi_eve, zeta_c):
    """Transmission probabilities (zeta_c/psi_user, min(zeta_c/psi_eve, 1)] for a shared threshold."""
    for name, value in (("psi_user", psi_user), ("psi_eve", psi_eve), ("zeta_c", zeta_c)):
        if not 0.0 <= value <= 1.0:
            raise OutOfRange(name, f"{value} is not a probability")
    low = zeta_c / psi_user if psi_user > 0 else np.inf
    high = min(zeta_c / psi_eve, 1.0) if psi_eve > 0 else 1.0
    return low, high, bool(low < high)


@dataclass
class SecrecyDesign:
    psi_user: float
    psi_eve: float
    lambda_c_user: float
    lambda_c_eve: float
    zeta_c_user: float
    zeta_c_eve: float
    interval_low: float
    interval_high: float
    feasible: bool
    bracket_width: float
    probes: dict = field(default_factory=dict, repr=False)

    FIELDS = (
        "psi_user", "psi_eve", "lambda_c_user", "lambda_c_eve", "zeta_c_user", "zeta_c_eve",
        "interval_low", "interval_high", "feasible", "bracket_width",
    )

    def to_dict(self):
        return {name: getattr(self, name) for name in self.FIELDS}


def design_secrecy(plant, ch_user, ch_eve, opts=None):
    """Per-link critical probabilities and the resulting feasible interval.

    An eavesdropper whose error already diverges at lambda = 1 gets a
    critical probability of 1, so the upper end of the interval is 1.
    """
    opts = opts or SolverOptions()
    psi_u = avg_reception(stationary_distribution(ch_user), ch_user)
    psi_e = avg_reception(stationary_distribution(ch_eve), ch_eve)
    user = critical_lambda(plant, ch_user, opts)
    try:
        eve = critical_lambda(plant, ch_eve, opts)
    except NotBoundedAtOne:
        eve = CriticalLambda(1.0, 0.0, 1.0, 1.0, [(1.0, UNBOUNDED)])
    low = user.lambda_c
    high = min(eve.lambda_c, 1.0)
    return SecrecyDesign(
        psi_user=psi_u,
        psi_eve=psi_e,
        lambda_c_user=user.lambda_c,
        lambda_c_eve=eve.lambda_c,
        zeta_c_user=user.lambda_c * psi_u,
        zeta_c_eve=eve.lambda_c * psi_e,
        interval_low=low,
        interval_high=high,
        feasible=bool(low < high),
        bracket_width=max(user.bracket_width, eve.bracket_width),
        probes={"user": user.probes, "eve": eve.probes},
    )


def build_A_e(plant, channel, lam):
    """Lifted eavesdropper operator (P' kron I) * blockdiag((1 - lam*reception_m) (A kron A))."""
    _check_prob(lam, "lambda")
    A = plant.A
    n2 = plant.nx ** 2
    N = channel.num_modes
    if channel.reception.shape != (N,):
        raise DimensionMismatch("reception", "length does not match num_modes")
    diag = la.block_diag(*[(1.0 - lam * g) * np.kron(A, A) for g in channel.reception])
    return np.kron(channel.tpm.T, np.eye(n2)) @ diag


def s_recursion_step(S, plant, channel, lam):
    """Lower-bound recursion: block n = sum_m p_mn (1 - lam*reception_m) A S_m A' + pi_n Q."""
    S = as_blocks(S, plant.nx)
    N = channel.num_modes
    if S.shape[0] != N:
        raise DimensionMismatch("S", f"expected {N} blocks, got {S.shape[0]}")
    _check_prob(lam, "lambda")
    pi = stationary_distribution(channel).probs
    w = (1.0 - lam * channel.reception)[:, None, None]
    prop = np.tensordot(channel.tpm, w * (plant.A @ S @ plant.A.T), axes=([0], [0]))
    return _sym(prop + pi[:, None, None] * plant.Q)


@dataclass
class EavesdropperBound:
    spectral_radius: float
    verdict: str  # "BoundedBelow" or "Unbounded"
    lower_bound_blocks: Optional[np.ndarray] = None
    lower_bound_trace: Optional[float] = None

    @property
    def per_mode_traces(self):
        if self.lower_bound_blocks is None:
            return None
        return np.trace(self.lower_bound_blocks, axis1=1, axis2=2)


def lower_bound_fixed_point(plant, channel, lam):
    """Solve (I - A_e) vec2(S) = vec2([pi_n Q]_n) without checking the spectral radius."""
    N, n = channel.num_modes, plant.nx
    Ae = build_A_e(plant, channel, lam)
    pi = stationary_distribution(channel).probs
    rhs = _vec2(pi[:, None, None] * plant.Q)
    system = np.eye(N * n * n) - Ae
    lu, piv = la.lu_factor(system, check_finite=True)
    norm = la.norm(system, 1)
    rcond = la.lapack.dgecon(lu, norm, norm="1")[0]
    # condition with respect to perturbations of A_e itself: forming I - A_e
    # already cancels digits when the spectral radius is close to 1
    cond = max(norm, la.norm(Ae, 1)) / max(rcond * norm, np.finfo(float).tiny)
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularSystem(f"I - A_e is numerically singular (condition estimate {cond:.3e})", condition=cond)
    return _sym(_unvec2(la.lu_solve((lu, piv), rhs), N, n))


def eavesdropper_bound(plant, channel, lam):
    """Spectral test on A_e and, when it passes, the steady-state MSE lower bound."""
    rho = spectral_radius(build_A_e(plant, channel, lam))
    if rho >= 1.0:
        return EavesdropperBound(rho, "Unbounded")
    S = lower_bound_fixed_point(plant, channel, lam)
    w = np.linalg.eigvalsh(S)
    if w.min() < -1e-8 * max(1.0, np.abs(w).max()):
        raise NumericalError(f"lower-bound solution is not PSD (eigenvalue {w.min():.3e})")
    fixed = s_recursion_step(S, plant, channel, lam)
    gap = np.max(np.abs(fixed - S)) / max(1.0, np.max(np.abs(S)))
    if gap > 1e-8:
        raise NumericalError(f"lower-bound solution misses the fixed point by {gap:.3e}")
    return EavesdropperBound(rho, "BoundedBelow", S, float(np.trace(S, axis1=1, axis2=2).sum()))
