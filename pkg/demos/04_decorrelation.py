# How fast do the top eigenvalues of H^(N1) and H^(N1 + M) decouple?
# The crossover is at M of order N1^(2/3).
import numpy as np

from minorlab.ensemble import EnsembleSpec, SeedContext, materialize_array
from minorlab.minor_engine import lanczos_top
from minorlab.stats_lab import scale_top

N1 = 150
Ms = [2, 7, 28, 112]
spec, root = EnsembleSpec(1), SeedContext(4)
l1, l2 = [], {M: [] for M in Ms}
for i in range(600):
    ctx = root.trajectory(i)
    X = materialize_array(N1 + max(Ms), spec, ctx)
    q = ctx.generator("q").standard_normal(X.shape[0])
    l1.append(lanczos_top(X[:N1, :N1], q[:N1])[0] / np.sqrt(N1))
    for M in Ms:
        l2[M].append(lanczos_top(X[:N1 + M, :N1 + M], q[:N1 + M])[0] / np.sqrt(N1 + M))
s1 = scale_top(np.array(l1), N1)
for M in Ms:
    r = np.corrcoef(s1, scale_top(np.array(l2[M]), N1 + M))[0, 1]
    print(f"M = {M:4d}  M / N1^(2/3) = {M / N1 ** (2 / 3):5.2f}  corr = {r:.3f}")
