import numpy as np
import pytest

from fsmc_secrecy import FsmcModel, LinearPlant


def scalar_plant(a=2.0, l=1.0, q=1.0, r=1.0, s0=1.0):
    return LinearPlant(A=[[a]], L=[[l]], Q=[[q]], R=[[r]], Sigma0=[[s0]])


def single_mode(gamma=1.0):
    return FsmcModel(1, [[1.0]], [gamma])


def random_tpm(rng, n):
    P = rng.uniform(0.05, 1.0, size=(n, n))
    return P / P.sum(axis=1, keepdims=True)


def random_spd(rng, n, floor=0.1):
    G = rng.standard_normal((n, n))
    return G @ G.T + floor * np.eye(n)


def random_psd(rng, n, rank=None):
    G = rng.standard_normal((n, rank or n))
    return G @ G.T


def random_plant(rng, nx, ny, radius=None):
    A = rng.standard_normal((nx, nx))
    if radius is not None:
        A *= radius / max(np.abs(np.linalg.eigvals(A)).max(), 1e-12)
    return LinearPlant(
        A=A,
        L=rng.standard_normal((ny, nx)),
        Q=random_spd(rng, nx),
        R=random_spd(rng, ny),
        Sigma0=random_spd(rng, nx),
    )


def random_channel(rng, n):
    P = random_tpm(rng, n)
    # renormalize exactly onto the simplex to meet the 1e-12 row-sum check
    P[:, -1] = 1.0 - P[:, :-1].sum(axis=1)
    return FsmcModel(n, P, rng.uniform(0.0, 1.0, size=n))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
