import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_channel, random_plant, random_psd, scalar_plant, single_mode
from properties import SLACK, antitone_in_lambda, monotone_in_x, subhomogeneous
from fsmc_secrecy import (
    FsmcModel,
    LinearPlant,
    SolverOptions,
    asymptotic_growth_rate,
    covariance_recursion_step,
    gains_from_solution,
    solve_care,
    stationary_distribution,
    x_lambda,
)
from fsmc_secrecy.errors import (
    DimensionMismatch,
    Inconclusive,
    NonPositiveAlpha,
    OutOfRange,
    ValidationError,
    ZeroModeProbability,
)
from fsmc_secrecy.riccati import closed_loop_operator

GOLDEN = 2 + np.sqrt(5)


def test_plant_validation():
    with pytest.raises(ValidationError) as exc:
        LinearPlant(A=[[1.0]], L=[[1.0]], Q=[[0.0]], R=[[1.0]], Sigma0=[[1.0]])
    assert exc.value.path == "Q"
    with pytest.raises(ValidationError):
        LinearPlant(A=np.eye(2), L=[[1.0, 0.0]], Q=[[1.0, 0.5], [0.4, 1.0]], R=[[1.0]], Sigma0=np.eye(2))
    with pytest.raises(DimensionMismatch):
        LinearPlant(A=np.eye(2), L=[[1.0, 0.0, 0.0]], Q=np.eye(2), R=[[1.0]], Sigma0=np.eye(2))


def test_x_lambda_examples():
    p = scalar_plant()
    assert x_lambda([[1.0]], 1.0, 1.0, 1.0, p)[0, 0] == pytest.approx(3.0)
    assert x_lambda([[1.0]], 1.0, 1.0, 0.5, p)[0, 0] == pytest.approx(4.0)
    assert x_lambda([[1.0]], 1.0, 1.0, 0.0, p)[0, 0] == pytest.approx(5.0)


def test_x_lambda_without_transmission_is_open_loop(rng):
    plant = random_plant(rng, 3, 2)
    X = random_psd(rng, 3)
    expect = plant.A @ X @ plant.A.T + 0.7 * plant.Q
    np.testing.assert_allclose(x_lambda(X, 0.7, 0.4, 0.0, plant), expect, rtol=1e-12, atol=1e-12)


def test_x_lambda_errors():
    p = scalar_plant()
    with pytest.raises(NonPositiveAlpha):
        x_lambda([[1.0]], 0.0, 1.0, 1.0, p)
    with pytest.raises(DimensionMismatch):
        x_lambda(np.eye(2), 1.0, 1.0, 1.0, p)
    with pytest.raises(OutOfRange):
        x_lambda([[1.0]], 1.0, 1.2, 1.0, p)


def test_recursion_examples():
    p = scalar_plant()
    out = covariance_recursion_step([[[1.0]]], [1.0], 1.0, single_mode(), p)
    assert out[0, 0, 0] == pytest.approx(3.0)
    ch = FsmcModel(2, [[0.9, 0.1], [0.2, 0.8]], [0.4, 0.7])
    pi = np.array([0.3, 0.7])
    out = covariance_recursion_step(np.zeros((2, 1, 1)), pi, 0.6, ch, p)
    np.testing.assert_allclose(out[:, 0, 0], pi @ ch.tpm)
    with pytest.raises(ZeroModeProbability):
        covariance_recursion_step(np.zeros((2, 1, 1)), [1.0, 0.0], 0.6, ch, p)


def test_recursion_matches_straight_line_oracle(rng):
    a, lam = 2.0, 0.8
    p = scalar_plant(a=a)
    ch = random_channel(rng, 2)
    pi = stationary_distribution(ch).probs
    P, g = ch.tpm, ch.reception
    Z = np.zeros((2, 1, 1))
    z = [0.0, 0.0]
    for _ in range(50):
        Z = covariance_recursion_step(Z, pi, lam, ch, p)
        new = []
        for n in range(2):
            total = 0.0
            for m in range(2):
                open_loop = a * a * z[m] + pi[m]
                corrected = open_loop - (a * z[m]) ** 2 / (z[m] + pi[m])
                total += P[m, n] * ((1 - lam * g[m]) * open_loop + lam * g[m] * corrected)
            new.append(total)
        z = new
        np.testing.assert_allclose(Z[:, 0, 0], z, rtol=1e-12)


def test_recursion_from_zero_is_nondecreasing(rng):
    for _ in range(10):
        plant = random_plant(rng, 2, 1, radius=1.3)
        ch = random_channel(rng, 3)
        pi = stationary_distribution(ch).probs
        Z = np.zeros((3, 2, 2))
        for _ in range(40):
            nxt = covariance_recursion_step(Z, pi, 0.9, ch, plant)
            for m in range(3):
                assert np.linalg.eigvalsh(nxt[m] - Z[m]).min() >= -1e-9 * max(1.0, np.abs(nxt[m]).max())
            Z = nxt


def test_scalar_care_closed_form():
    out = solve_care(scalar_plant(), single_mode(), 1.0)
    assert out.converged
    assert out.solution[0, 0, 0] == pytest.approx(GOLDEN, abs=1e-8)
    assert out.gains[0, 0, 0] == pytest.approx(-GOLDEN / (GOLDEN + 1), abs=1e-8)
    assert out.gains[0, 0, 0] == pytest.approx(-0.80902, abs=1e-5)
    assert out.residual <= 10 * SolverOptions().tolerance


def test_scalar_care_diverges_below_threshold():
    opts = SolverOptions()
    out = solve_care(scalar_plant(), single_mode(), 0.7, opts)
    assert out.verdict == "Diverged"
    assert out.method == "threshold"
    assert out.final_trace >= opts.divergence_threshold


def test_stable_plant_without_transmission_solves_lyapunov(rng):
    plant = LinearPlant(A=0.5 * np.eye(2), L=[[1.0, 0.0]], Q=random_psd(rng, 2) + np.eye(2), R=[[1.0]], Sigma0=np.eye(2))
    ch = random_channel(rng, 2)
    out = solve_care(plant, ch, 0.0)
    assert out.converged
    pi = stationary_distribution(ch).probs
    Z = np.zeros((2, 2, 2))
    for _ in range(200):
        Z = np.tensordot(ch.tpm, 0.25 * Z + pi[:, None, None] * plant.Q, axes=([0], [0]))
    np.testing.assert_allclose(out.solution, Z, rtol=1e-9)


def test_converged_solution_is_fixed_point(rng):
    opts = SolverOptions()
    for _ in range(10):
        plant = random_plant(rng, 3, 2, radius=1.2)
        ch = random_channel(rng, 2)
        out = solve_care(plant, ch, 1.0, opts)
        if not out.converged:
            continue
        pi = stationary_distribution(ch).probs
        nxt = covariance_recursion_step(out.solution, pi, 1.0, ch, plant)
        scale = max(1.0, np.abs(out.solution).max())
        assert np.linalg.norm(nxt - out.solution, axis=(1, 2)).max() <= 10 * opts.tolerance * scale


def test_policy_iteration_agrees_with_plain_recursion(rng):
    plant = random_plant(rng, 3, 1, radius=1.15)
    ch = random_channel(rng, 2)
    plain = solve_care(plant, ch, 1.0, SolverOptions(rate_check_every=10**9))
    fast = solve_care(plant, ch, 1.0, SolverOptions(rate_check_every=5))
    assert plain.converged and fast.converged
    assert fast.method == "policy_iteration"
    np.testing.assert_allclose(fast.solution, plain.solution, rtol=1e-8, atol=1e-10)


def test_near_threshold_growth_rate_classification():
    # (1 - lam) a^2 crosses 1 at lam = 0.75; close probes need the rate test
    p, ch = scalar_plant(), single_mode()
    below = solve_care(p, ch, 0.7495)
    above = solve_care(p, ch, 0.7505)
    assert below.verdict == "Diverged" and below.method == "growth_rate"
    assert above.verdict == "Converged"
    with pytest.raises(Inconclusive):
        solve_care(p, ch, 0.75)


@pytest.mark.parametrize("lam", [0.0, 0.3, 0.6, 0.9])
def test_scalar_growth_rate(lam):
    rate, _ = asymptotic_growth_rate(scalar_plant(), single_mode(), lam)
    assert rate == pytest.approx((1 - lam) * 4.0, rel=1e-10)


def test_iteration_cap_is_inconclusive():
    with pytest.raises(Inconclusive) as exc:
        solve_care(scalar_plant(a=1.01), single_mode(), 1.0, SolverOptions(max_iter=3, tolerance=1e-15))
    assert exc.value.iterations == 3


def test_gain_examples():
    p = scalar_plant()
    assert gains_from_solution(np.zeros((2, 1, 1)), [0.5, 0.5], p).tolist() == [[[0.0]], [[0.0]]]
    got = gains_from_solution([[[GOLDEN]]], [1.0], p)[0, 0, 0]
    assert got == pytest.approx(-(2 + np.sqrt(5)) / (3 + np.sqrt(5)), abs=1e-12)
    blind = LinearPlant(A=np.eye(2) * 1.1, L=np.zeros((1, 2)), Q=np.eye(2), R=[[1.0]], Sigma0=np.eye(2))
    assert np.all(gains_from_solution(np.stack([np.eye(2)] * 2), [0.5, 0.5], blind) == 0)
    with pytest.raises(ZeroModeProbability):
        gains_from_solution(np.zeros((2, 1, 1)), [1.0, 0.0], p)


def _one_step_trace(X, M, alpha, w, plant):
    A, L = plant.A, plant.L
    Acl = A + A @ M @ L
    open_loop = A @ X @ A.T + alpha * plant.Q
    corrected = Acl @ X @ Acl.T + alpha * plant.Q + alpha * A @ M @ plant.R @ M.T @ A.T
    return np.trace((1 - w) * open_loop + w * corrected)


def test_optimal_gain_minimizes_one_step_trace(rng):
    for _ in range(200):
        nx, ny = rng.integers(1, 4), rng.integers(1, 3)
        plant = random_plant(rng, nx, ny)
        X = random_psd(rng, nx)
        alpha, w = rng.uniform(0.1, 1.0), rng.uniform(0.05, 1.0)
        M = gains_from_solution(X[None], [alpha], plant)[0]
        best = _one_step_trace(X, M, alpha, w, plant)
        assert best == pytest.approx(np.trace(x_lambda(X, alpha, w, 1.0, plant)), rel=1e-10)
        for scale in (1e-3, 1e-1, 1.0):
            D = rng.standard_normal(M.shape) * scale
            assert _one_step_trace(X, M + D, alpha, w, plant) >= best - 1e-9 * max(1.0, abs(best))


def test_closed_loop_operator_propagates_second_moment(rng):
    plant = random_plant(rng, 2, 1)
    ch = random_channel(rng, 2)
    gains = rng.standard_normal((2, 2, 1))
    lam = 0.7
    V = np.stack([random_psd(rng, 2) for _ in range(2)])
    big = closed_loop_operator(gains, lam, ch, plant)
    direct = np.zeros_like(V)
    for n in range(2):
        for m in range(2):
            Acl = plant.A + plant.A @ gains[m] @ plant.L
            w = lam * ch.reception[m]
            direct[n] += ch.tpm[m, n] * ((1 - w) * plant.A @ V[m] @ plant.A.T + w * Acl @ V[m] @ Acl.T)
    vec = np.concatenate([Vm.reshape(-1, order="F") for Vm in V])
    got = (big @ vec).reshape(2, 2, 2)
    np.testing.assert_allclose(np.stack([g.T for g in got]), direct, rtol=1e-12, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_operator_monotone_in_covariance(seed):
    assert monotone_in_x(np.random.default_rng(seed)) >= -SLACK


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_operator_decreases_with_transmission(seed):
    assert antitone_in_lambda(np.random.default_rng(seed)) >= -SLACK


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_operator_subhomogeneous(seed):
    assert subhomogeneous(np.random.default_rng(seed)) >= -SLACK
