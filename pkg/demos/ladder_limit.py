# Descending ladder exponent at large beta, after removing the Brownian term,
# tends to c + b for psi_Z(beta) = beta^2.  Unit claims make b positive.
import numpy as np

from riskladder import JumpDistribution, ModelSpec, ladder_context, psi_X
from riskladder.fluctuation import ladder_limit_target, ladder_residual

model = ModelSpec.build(1.0, 0.1, claim_intensity=2.0,
                        claim_law=JumpDistribution.deterministic(1.0), brownian_vol=np.sqrt(2))
ctx = ladder_context(model)
print("psi_X(0.5) = %.4f  psi_X(0.6) = %.4f" % (psi_X(model, 0.5), psi_X(model, 0.6)))
print("b =", ctx.b)

target = ladder_limit_target(ctx)
print("target c + b =", target)
for beta in np.geomspace(1, 1e6, 7):
    r = ladder_residual(ctx, beta)
    print("  beta %9.0f  residual %.8f  rel error %.2e" % (beta, r, abs(r - target) / target))
