"""Choosing a transmission probability that keeps the user's estimate
bounded while the eavesdropper's diverges (cart-pendulum example)."""
from fsmc_secrecy import design_secrecy, load_scenario, secrecy_interval, spectral_radius

sc = load_scenario("pendulum_demo")
print("rho(A) =", spectral_radius(sc.plant.A))

design = design_secrecy(sc.plant, sc.ch_user, sc.ch_eve)
for name, value in design.to_dict().items():
    print(f"{name:15s} {value}")
print(f"send with probability lam in ({design.interval_low:.4f}, {design.interval_high:.4f}]")

# The same interval from the average receptions and a shared effective threshold
print("shared-threshold interval:", secrecy_interval(0.413, 0.219, 0.105))

# Bisection probes: (lam, verdict) pairs used to bracket each threshold
for lam, verdict in design.probes["user"][:6]:
    print(f"  user probe lam={lam:.5f}: {verdict}")
