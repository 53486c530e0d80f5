"""Mode-dependent filter gains from the coupled Riccati equations."""
import numpy as np

from fsmc_secrecy import FsmcModel, LinearPlant, SolverOptions, solve_care

# Scalar plant x(k+1) = 2 x(k) + w, y = x + v, every packet received
plant = LinearPlant(A=[[2.0]], L=[[1.0]], Q=[[1.0]], R=[[1.0]], Sigma0=[[1.0]])
always = FsmcModel(1, [[1.0]], [1.0])

out = solve_care(plant, always, lam=1.0)
print(out.verdict, "Z =", out.solution[0, 0, 0], "closed form 2+sqrt(5) =", 2 + np.sqrt(5))
print("gain M =", out.gains[0, 0, 0])

# Sending fewer packets: the error stays bounded only above lam = 1 - 1/a^2 = 0.75
for lam in (0.9, 0.8, 0.76, 0.74, 0.7):
    res = solve_care(plant, always, lam)
    print(f"lam={lam}: {res.verdict:9s} via {res.method:16s} after {res.iterations} iterations")

# A two-mode link and a 2-state plant
plant2 = LinearPlant(
    A=[[1.1, 0.2], [0.0, 0.95]],
    L=[[1.0, 0.0]],
    Q=np.eye(2),
    R=[[0.5]],
    Sigma0=np.eye(2),
)
link = FsmcModel(2, [[0.8, 0.2], [0.4, 0.6]], [0.95, 0.2])
res = solve_care(plant2, link, 0.9, SolverOptions(tolerance=1e-12))
for m in range(2):
    print(f"mode {m}: trace Z = {np.trace(res.solution[m]):.4f}, gain = {res.gains[m].ravel()}")
