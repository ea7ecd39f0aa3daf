# Ornstein-Uhlenbeck flow on the entry array, and Dyson Brownian motion
# on the eigenvalues: two routes to the same top-eigenvalue law.
import numpy as np
from scipy import stats

from minorlab.dbm_flow import (FlowState, dbm_state, run_coupled_minor_flow,
                               run_dbm, run_matrix_flow)
from minorlab.ensemble import EnsembleSpec, SeedContext, materialize_array

N, P, t = 16, 500, 0.5
spec, ctx = EnsembleSpec(1), SeedContext(6)
X0 = materialize_array(N, spec, ctx)
lam0 = np.linalg.eigvalsh(X0 / np.sqrt(N))[::-1]

mat = []
for p in range(P):
    s = run_matrix_flow(FlowState(0.0, "matrix", X0, 1), t, 0.01, spec,
                        ctx.child("path", p))
    mat.append(np.linalg.eigvalsh(s.payload / np.sqrt(N))[-1])
dbm = run_dbm(dbm_state(np.tile(lam0, (P, 1)), 1), t, 0.01, N, ctx.child("sde", 0))
print("KS distance matrix flow vs DBM: %.3f"
      % stats.ks_2samp(mat, dbm.payload[:, 0]).statistic)

# nested minors under the shared flow
for M in (2, 40):
    rep = run_coupled_minor_flow(60, 60 + M, spec, ctx, 0.2, [0.2], dt=0.02)[-1]
    print(f"N2 - N1 = {M:3d}: top overlap {rep.top_overlap:.3f}, gap {rep.top_gap:.4f}")
