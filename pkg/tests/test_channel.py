import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_channel, random_tpm
from fsmc_secrecy import (
    FsmcModel,
    ModeDistribution,
    avg_reception,
    effective_reception,
    mode_distribution_step,
    sample_step,
    stationary_distribution,
)
from fsmc_secrecy.channel import is_primitive
from fsmc_secrecy.errors import DimensionMismatch, NonErgodic, OutOfRange, ValidationError

P2 = [[0.9, 0.1], [0.2, 0.8]]


def test_stationary_two_state_balance():
    pi = stationary_distribution(FsmcModel(2, P2, [0.5, 0.5])).probs
    np.testing.assert_allclose(pi, [2 / 3, 1 / 3], atol=1e-12)


def test_stationary_single_mode():
    assert stationary_distribution(FsmcModel(1, [[1.0]], [0.3])).probs.tolist() == [1.0]


def test_stationary_matches_power_iteration_oracle(rng):
    for _ in range(20):
        ch = random_channel(rng, 3)
        pi = np.full(3, 1 / 3)
        for _ in range(10_000):
            pi = pi @ ch.tpm
        got = stationary_distribution(ch).probs
        np.testing.assert_allclose(got, pi, atol=1e-12)
        assert np.max(np.abs(got @ ch.tpm - got)) <= 1e-12
        assert np.all(got > 0)


def test_periodic_chain_rejected():
    with pytest.raises(NonErgodic):
        FsmcModel(2, [[0.0, 1.0], [1.0, 0.0]], [0.5, 0.5])
    with pytest.raises(NonErgodic):
        FsmcModel(2, [[1.0, 0.0], [0.0, 1.0]], [0.5, 0.5])


def test_primitivity_needs_wielandt_power():
    # primitive, but only the ((N-1)^2 + 1)-th power is positive
    n = 4
    P = np.zeros((n, n))
    for i in range(n - 1):
        P[i, i + 1] = 1.0
    P[n - 1, 0] = P[n - 1, 1] = 0.5
    assert is_primitive(P)
    assert not np.all(np.linalg.matrix_power(P, (n - 1) ** 2) > 0)


def test_validation_paths():
    with pytest.raises(ValidationError) as exc:
        FsmcModel(2, [[0.5, 0.48], [0.5, 0.5]], [0.5, 0.5])
    assert exc.value.path == "tpm[0]"
    with pytest.raises(OutOfRange):
        FsmcModel(2, P2, [1.2, 0.5])
    with pytest.raises(DimensionMismatch):
        FsmcModel(2, P2, [0.5])
    with pytest.raises(ValidationError):
        FsmcModel(0, [[1.0]], [0.5])


def test_model_is_immutable():
    ch = FsmcModel(2, P2, [0.5, 0.5])
    with pytest.raises(ValueError):
        ch.tpm[0, 0] = 0.3


def test_avg_reception_examples():
    assert avg_reception([2 / 3, 1 / 3], FsmcModel(2, P2, [0.6, 0.3])) == pytest.approx(0.5)
    assert avg_reception([2 / 3, 1 / 3], FsmcModel(2, P2, [0.0, 0.0])) == 0.0
    P3 = np.full((3, 3), 1 / 3)
    assert avg_reception([0.25, 0.25, 0.5], FsmcModel(3, P3, [0.1, 0.9, 0.4])) == pytest.approx(0.45)
    with pytest.raises(DimensionMismatch):
        avg_reception([0.5, 0.5], FsmcModel(3, P3, [0.1, 0.9, 0.4]))


def test_effective_reception():
    assert effective_reception(0.413, 1.0) == pytest.approx(0.413)
    assert effective_reception(0.5, 0.0) == 0.0
    assert effective_reception(0.219, 0.48) == pytest.approx(0.105, abs=5e-4)
    with pytest.raises(OutOfRange):
        effective_reception(1.5, 0.5)


def test_mode_distribution_step_examples():
    ch = FsmcModel(2, P2, [0.5, 0.5])
    nxt = mode_distribution_step(ModeDistribution([1.0, 0.0]), ch)
    np.testing.assert_allclose(nxt.probs, [0.9, 0.1])
    assert nxt.step_index == 1
    np.testing.assert_allclose(mode_distribution_step([0.5, 0.5], ch).probs, [0.55, 0.45])
    pi = stationary_distribution(ch)
    np.testing.assert_allclose(mode_distribution_step(pi, ch).probs, pi.probs, atol=1e-12)


def test_distribution_converges_monotonically(rng):
    ch = random_channel(rng, 4)
    pi_inf = stationary_distribution(ch).probs
    pi = np.array([1.0, 0.0, 0.0, 0.0])
    dists = []
    for _ in range(60):
        dists.append(np.abs(pi - pi_inf).sum())
        pi = mode_distribution_step(pi, ch).probs
    # the l1 distance to the stationary law never grows under a stochastic matrix
    assert all(b <= a for a, b in zip(dists, dists[1:]) if a > 1e-10)
    assert dists[-1] < 1e-6


def test_sample_step_extremes(rng):
    ch = FsmcModel(2, P2, [1.0, 0.0])
    assert all(sample_step(0, ch, rng)[1] == 1 for _ in range(200))
    assert all(sample_step(1, ch, rng)[1] == 0 for _ in range(200))


def test_sample_step_frequencies():
    rng = np.random.default_rng(7)
    ch = FsmcModel(2, P2, [0.3, 0.5])
    n = 1_000_000
    u = rng.random((n, 2))
    # vectorized replay of the same rule sample_step applies per call
    nxt = (u[:, 0] >= np.cumsum(ch.tpm[0])[0]).astype(int)
    xi = u[:, 1] < 0.3
    assert abs(xi.mean() - 0.3) < 0.005
    assert abs(nxt.mean() - 0.1) < 4 * np.sqrt(0.09 / n)
    # and the scalar routine agrees with the replay on a shorter stream
    rng_a, rng_b = np.random.default_rng(3), np.random.default_rng(3)
    for _ in range(1000):
        m, x = sample_step(0, ch, rng_a)
        ua, ub = rng_b.random(2)
        assert (m, x) == (int(ua >= 0.9), int(ub < 0.3))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_avg_reception_linear_and_permutation_invariant(n, seed):
    rng = np.random.default_rng(seed)
    P = random_tpm(rng, n)
    P[:, -1] = 1.0 - P[:, :-1].sum(axis=1)
    g1, g2 = rng.uniform(0, 0.5, n), rng.uniform(0, 0.5, n)
    pi = stationary_distribution(FsmcModel(n, P, g1)).probs
    psi1 = avg_reception(pi, FsmcModel(n, P, g1))
    psi2 = avg_reception(pi, FsmcModel(n, P, g2))
    assert avg_reception(pi, FsmcModel(n, P, g1 + g2)) == pytest.approx(psi1 + psi2, abs=1e-12)
    assert min(g1) - 1e-12 <= psi1 <= max(g1) + 1e-12
    perm = rng.permutation(n)
    Pp = P[np.ix_(perm, perm)]
    assert avg_reception(pi[perm], FsmcModel(n, Pp, g1[perm])) == pytest.approx(psi1, abs=1e-12)


def test_round_trip_dict():
    ch = FsmcModel(2, P2, [0.6, 0.3], initial_dist=[1.0, 0.0])
    assert FsmcModel.from_dict(ch.to_dict()) == ch
