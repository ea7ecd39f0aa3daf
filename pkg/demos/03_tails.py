# Tail exponents of the scaled top eigenvalue.
#
# -log P[lambda_1 >= x] grows like (2 beta / 3) x^(3/2) and
# -log P[lambda_1 <= -x] like (beta / 24) x^3.  At moderate x the
# polynomial prefactor of the Tracy-Widom tail still bends the curve,
# so the fitted slope overshoots the asymptotic value on the right.
import numpy as np

from minorlab.ensemble import sample_top_gaussian
from minorlab.stats_lab import estimate_tail_curve, scale_top

N, beta = 512, 2
lam = scale_top(sample_top_gaussian(N, beta, 100000, np.random.default_rng(3)), N)

right = estimate_tail_curve(lam, "right", np.arange(1.0, 2.21, 0.2), beta=beta)
left = estimate_tail_curve(lam, "left", np.arange(2.0, 3.61, 0.4), beta=beta)
for f in (right, left):
    print(f"{f.side:5s} coefficient {f.coefficient:.3f} +- {f.halfwidth:.3f}"
          f"  (asymptotic {f.target:.3f})")
print("right-tail log survival:", right.emp_logsurv.round(2))
