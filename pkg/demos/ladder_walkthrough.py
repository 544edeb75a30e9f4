# One path by hand: two claims, no Brownian part, so every number is exact.
from riskladder import JumpDistribution, ModelSpec
from riskladder.simulator import CLAIM, PathEvent, detect_modified_ladder, first_passage, \
    occupation_time, scripted_run

model = ModelSpec.build(1.0, 0.1, claim_intensity=1.0, claim_law=JumpDistribution.exponential(1.0))

# X drifts up at rate 1; claims of size 3 at t=2 and size 4 at t=4; killed at t=7
events = [PathEvent(2.0, 3.0, CLAIM), PathEvent(4.0, 4.0, CLAIM)]
run = scripted_run(model, tau=7.0, events=events)

print("nodes      ", run.times)
print("X after    ", run.x_post)
print("S^ after   ", run.shat_after())
print("S(tau) =", run.S_tau, " S^(tau) =", run.Shat_tau)

dec = detect_modified_ladder(run)
print("ladder epochs  ", dec.sigmas)    # both claims push the running minimum down
print("L parts        ", dec.L_parts)   # S^ gained between epochs (here zero: no perturbation)
print("J overshoots   ", dec.J_parts)
print("N_tau =", dec.N_tau, " residual =", dec.residual())

print("first passage of S^ above 2:", first_passage(run, 2.0))
print("time with S^ - X^ <= 1 before sigma, passage above 5 or tau:", occupation_time(run, 1.0, 5.0))
