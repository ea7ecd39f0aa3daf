# Nested minors of one infinite array, and the arrowhead update that
# walks from H^(n) to H^(n+1).
import numpy as np

from minorlab.ensemble import EnsembleSpec, SeedContext, materialize_wigner
from minorlab.minor_engine import initial_state, advance, run_trajectory

spec = EnsembleSpec(beta=1)
ctx = SeedContext(1)

# the 5x5 minor sits inside the 8x8 matrix, up to the 1/sqrt(N) scaling
H5 = materialize_wigner(5, spec, ctx)
H8 = materialize_wigner(8, spec, ctx)
print("same block:", np.allclose(np.sqrt(8 / 5) * H8[:5, :5], H5))

# one border at a time
st = initial_state(2, spec, ctx)
while st.n < 60:
    st = advance(st, spec, ctx)
dense = np.linalg.eigvalsh(materialize_wigner(60, spec, ctx))[::-1]
print("max error vs eigvalsh at n=60:", np.abs(st.lambdas - dense).max())

tr = run_trajectory(20, 200, spec, ctx)
print("scaled top eigenvalue at n = 20, 100, 200:",
      tr.lambda_scaled[[0, 80, 180]].round(3))
print("|xi_1|^2 averages", tr.xi1_sq.mean().round(3), "(expect about 1)")
