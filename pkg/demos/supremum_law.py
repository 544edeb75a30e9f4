# Supremum of a killed perturbed risk process is exponential with rate phi(q).
# 20k paths take about 20 s.
import numpy as np

from riskladder import JumpDistribution, ModelSpec, ladder_context
from riskladder.simulator import SimConfig, batch_simulate
from riskladder.stats import EmpiricalCDF, ks_distance

model = ModelSpec.build(1.5, 0.1, claim_intensity=1.0,
                        claim_law=JumpDistribution.exponential(1.0), brownian_vol=np.sqrt(2))
ctx = ladder_context(model)
print("largest root b:", ctx.b)
print("phi(q):", ctx.phi_q)

summary = batch_simulate(model, SimConfig(20_000, 1e-3, 7))
s = summary.s_tau
print("mean S(tau): %.4f   1/phi(q): %.4f" % (s.mean(), 1 / ctx.phi_q))

ref = lambda x: -np.expm1(-ctx.phi_q * np.maximum(x, 0))
print("KS distance to Exp(phi(q)):", ks_distance(EmpiricalCDF(s), ref))

# a few quantiles side by side
for u in (0.25, 0.5, 0.75, 0.95):
    print("  q%.2f  empirical %.3f  exact %.3f" % (u, np.quantile(s, u), -np.log1p(-u) / ctx.phi_q))
