# The series X_n = N^(2/3) sum (|xi_1|^2 - 1) / l along a window is a
# martingale, and the top eigenvalue increment dominates it.
import numpy as np

from minorlab.ensemble import EnsembleSpec, SeedContext
from minorlab.minor_engine import martingale_series, run_top_trajectory

lo, hi = 200, 230
root = SeedContext(5)
inc, defect = [], []
for i in range(300):
    tr = run_top_trajectory(lo, hi, EnsembleSpec(1), root.trajectory(i))
    ms = martingale_series(tr, (lo, hi))
    inc.append(ms.increments)
    defect.append(ms.defect)
inc, defect = np.array(inc), np.array(defect)
z = inc.mean(0) / (inc.std(0) / np.sqrt(len(inc)))
print("largest |mean increment| in standard errors:", np.abs(z).max().round(2))
print("fraction of steps with defect >= -n^(-1/40):",
      (defect >= -np.arange(lo, hi + 1) ** (-0.025)).mean().round(4))
