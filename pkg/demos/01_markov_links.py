"""Markov links: stationary modes, average reception, sampled paths."""
import numpy as np

from fsmc_secrecy import FsmcModel, avg_reception, effective_reception, sample_step, stationary_distribution

# A two-mode "good/bad" link.  Rows of the transition matrix sum to one and
# reception[m] is the chance a packet gets through while in mode m.
link = FsmcModel(num_modes=2, tpm=[[0.9, 0.1], [0.2, 0.8]], reception=[0.6, 0.3])

pi = stationary_distribution(link)
print("stationary modes:", pi.probs)  # (2/3, 1/3)

psi = avg_reception(pi, link)
print("average reception psi =", psi)  # 0.5

# Withholding each packet with probability 1 - lam scales the useful rate
for lam in (1.0, 0.5, 0.2):
    print(f"lam={lam}: zeta = {effective_reception(psi, lam):.3f}")

# Sample a mode/arrival path and compare the empirical arrival rate with psi
rng = np.random.default_rng(0)
mode, arrivals = 0, []
for _ in range(100_000):
    mode, xi = sample_step(mode, link, rng)
    arrivals.append(xi)
print("empirical arrival rate:", np.mean(arrivals))

# Periodic or reducible chains are rejected up front
try:
    FsmcModel(2, [[0.0, 1.0], [1.0, 0.0]], [0.5, 0.5])
except ValueError as exc:
    print("rejected:", exc)
