# Top eigenvalue at the edge scale, sampled three ways.
import numpy as np

from minorlab.ensemble import EnsembleSpec, SeedContext, sample_top_gaussian
from minorlab.minor_engine import run_top_trajectory
from minorlab.stats_lab import scale_top

N = 256
root = SeedContext(2)

# minor-process tracker (Lanczos on the growing matrix)
lam = np.array([run_top_trajectory(N, N, EnsembleSpec(2), root.trajectory(i),
                                   dtype=np.float32).lambda_scaled[0]
                for i in range(400)])
print("GUE tracker  mean %.3f var %.3f" % (lam.mean(), lam.var()))

# tridiagonal model, same law, much cheaper
tri = scale_top(sample_top_gaussian(N, 2, 20000, np.random.default_rng(0)), N)
print("tridiagonal  mean %.3f var %.3f" % (tri.mean(), tri.var()))
print("Tracy-Widom  mean -1.771 var 0.813")
