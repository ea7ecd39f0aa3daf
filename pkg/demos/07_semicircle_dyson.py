# Stieltjes transform, classical locations, smoothed counts and the
# Dyson equation for a two-band deformed matrix.
import numpy as np

from minorlab.ensemble import (AlternatingDeformation, ConstantProfile,
                               EnsembleSpec, SeedContext, materialize,
                               materialize_wigner)
from minorlab.stats_lab import (dyson_density, m_sc, rigidity_residuals,
                                smoothed_edge_count)

print("m_sc(i) =", m_sc(1j), " (expect i(sqrt(5) - 1)/2)")

ev = np.linalg.eigvalsh(materialize_wigner(400, EnsembleSpec(1), SeedContext(7)))
rep = rigidity_residuals(ev)
print("largest rigidity residual %.2f, threshold N^0.1 = %.2f" % (rep.max, rep.threshold))
print("smoothed count of eigenvalues in [1.5, 2.5]: %.2f, exact %d"
      % (smoothed_edge_count(ev, 1.5, 2.5, 1e-3), ((ev > 1.5) & (ev < 2.5)).sum()))

spec = EnsembleSpec(1, profile=ConstantProfile(0.4),
                    deformation=AlternatingDeformation(1.0))
a = spec.deformation(np.arange(1, 513))
ev = np.linalg.eigvalsh(materialize(512, spec, SeedContext(8)))
E = np.linspace(-2, 2, 9)
hist = np.histogram(ev, bins=np.r_[E - 0.25, E[-1] + 0.25])[0][:-1]
print(" E     Dyson density   histogram")
for e, r, h in zip(E, dyson_density(E, a, 0.4), hist):
    print(f"{e:5.1f}   {r:8.3f}        {h / (512 * 0.5):8.3f}")
