"""Spectral test on the eavesdropper's lifted operator and its MSE lower bound."""
import numpy as np

from fsmc_secrecy import build_A_e, eavesdropper_bound, load_scenario

sc = load_scenario("pendulum_demo")
for lam in np.linspace(0.1, 1.0, 10):
    res = eavesdropper_bound(sc.plant, sc.ch_eve, lam)
    bound = "" if res.lower_bound_trace is None else f"  steady MSE >= {res.lower_bound_trace:.4g}"
    print(f"lam={lam:.1f}: rho(A_e) = {res.spectral_radius:.4f} -> {res.verdict}{bound}")

print("A_e size:", build_A_e(sc.plant, sc.ch_eve, 0.3).shape)
