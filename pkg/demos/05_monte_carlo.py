"""Monte Carlo error curves against the exact covariance recursion."""
import numpy as np

from fsmc_secrecy import SimConfig, gain_schedule, load_scenario, monte_carlo, theoretical_mse_curve

sc = load_scenario("pendulum_demo")
K = 500
for lam in (0.3, 1.0):
    cfg = SimConfig(horizon=K, num_trials=1000, base_seed=1, lam=lam)
    gains = {a: gain_schedule(sc.plant, ch, lam, horizon=K) for a, ch in (("user", sc.ch_user), ("eve", sc.ch_eve))}
    summary = monte_carlo(sc.plant, sc.ch_user, sc.ch_eve, gains["user"], gains["eve"], cfg, workers=4)
    print(f"\nlam = {lam}")
    print("   k   user MC  user theory    eve MC   eve theory   eve position MSE")
    theory = {a: theoretical_mse_curve(sc.plant, ch, lam, horizon=K) for a, ch in (("user", sc.ch_user), ("eve", sc.ch_eve))}
    for k in np.linspace(0, K, 6).astype(int):
        print(f"{k:4d} {summary.mse['user'][k]:9.4g} {theory['user'][k]:12.4g} "
              f"{summary.mse['eve'][k]:9.4g} {theory['eve'][k]:12.4g} {summary.component_mse['eve'][k, 0]:14.4g}")
