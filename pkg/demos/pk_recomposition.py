# Rebuild the law of S^(tau) from (rho, H, G) and compare with simulation.
# Without perturbation G is a point mass at 0 and the law is geometric-exponential.
import numpy as np

from riskladder import JumpDistribution, ModelSpec, ladder_context
from riskladder.pk_engine import GridDistribution, PKParameters, geometric_exponential_cdf, \
    h_tau, p_tau, pk_cdf
from riskladder.simulator import SimConfig, batch_simulate
from riskladder.stats import EmpiricalCDF, ks_distance

h, n = 0.01, 6000
law = JumpDistribution.exponential(1.0)

plain = ModelSpec.build(1.5, 0.1, claim_intensity=1.0, claim_law=law)
ctx = ladder_context(plain)
rho = p_tau(ctx)
pk = pk_cdf(PKParameters(rho, h_tau(ctx, h, n), GridDistribution.delta0(h, n)))
exact = geometric_exponential_cdf(rho, 1.0)
print("rho =", rho)
print("grid vs closed form, sup error:", np.abs(pk.cdf - exact(pk.x)).max())

emp = EmpiricalCDF(batch_simulate(plain, SimConfig(20_000, 1e-3, 11)).shat_tau)
print("grid vs 20k paths, sup error:", ks_distance(emp, pk.linear))

# with a Brownian part, G is estimated from half the paths and checked on the other half
noisy = ModelSpec.build(1.5, 0.1, claim_intensity=1.0, claim_law=law, brownian_vol=np.sqrt(2))
ctx = ladder_context(noisy)
summ = batch_simulate(noisy, SimConfig(20_000, 1e-3, 12))
even = summ.path_index % 2 == 0
G = GridDistribution.from_samples(h, n, summ.shat_pre_sigma[even])
pk = pk_cdf(PKParameters(p_tau(ctx), h_tau(ctx, h, n), G))
print("perturbed: P(G = 0) =", G.atom_at_zero)
print("perturbed split-half sup error:", ks_distance(EmpiricalCDF(summ.shat_tau[~even]), pk.linear))
