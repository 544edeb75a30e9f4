import math

import pytest

from riskladder import JumpDistribution, ModelSpec

SQRT2 = math.sqrt(2.0)


def cp_model(premium=1.5, q=0.1, lam=1.0, law=None, vol=0.0, **kw):
    law = law if law is not None or lam == 0 else JumpDistribution.exponential(1.0)
    return ModelSpec.build(premium, q, claim_intensity=lam, claim_law=law if lam else None,
                           brownian_vol=vol, **kw)


def square_model(q=1.0):
    """psi_X(beta) = beta**2: Brownian motion with scale sqrt(2), nothing else."""
    return ModelSpec.build(0.0, q, brownian_vol=SQRT2)


@pytest.fixture
def m1():
    return cp_model(vol=SQRT2)


@pytest.fixture
def m2():
    return cp_model()


@pytest.fixture
def m3():
    return cp_model(premium=1.0, lam=2.0, law=JumpDistribution.deterministic(1.0), vol=SQRT2)
