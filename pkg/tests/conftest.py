"""Shared builders for randomized instances and the canonical example."""

import numpy as np
import pytest

from condrisk import (Aggregator, ClusterConstraint, RiskSpec, ScenarioSpace,
                      SigmaPartition, exp_constants)

# Canonical two-atom instance, values frozen from 40-digit arithmetic:
# two unit-exponent agents, full sharing, uniform atoms, positions
# X1=(1,-1), X2=(0,0), threshold -2.
CANONICAL = {
    "rho": 0.240229013916555049,
    "q": (0.537882842739990241, 1.46211715726000976),
    "y": ((-0.379885493041722475, 0.620114506958277525),
          (0.620114506958277525, -0.379885493041722475)),
    "entropy": 0.110944071671727355,
    "alpha1": 0.221888143343454709,
    "cost": 0.462117157260009759,   # density-weighted -X, equals tanh(1/2)
    "a": (0.351173085588282404, -0.110944071671727355),
}


def make_canonical_spec():
    space = ScenarioSpace.uniform(2)
    g = SigmaPartition.trivial(space)
    return RiskSpec(
        space=space,
        sigma=g,
        x=np.array([[1.0, -1.0], [0.0, 0.0]]),
        aggregator=Aggregator.exponential([1.0, 1.0]),
        b=np.array([-2.0, -2.0]),
        clusters=ClusterConstraint.full_sharing(2),
    )


@pytest.fixture
def canonical_spec():
    return make_canonical_spec()


def random_partition(rng, space, max_blocks=None):
    k = space.natoms
    nb = int(rng.integers(1, (max_blocks or k) + 1))
    assign = rng.integers(0, nb, size=k)
    blocks = {}
    for i, a in enumerate(assign):
        blocks.setdefault(int(a), []).append(i)
    return SigmaPartition(space, tuple(tuple(v) for v in blocks.values()))


def random_exponential_instance(rng, kmax=32, nmax=5, clusters="full"):
    """Random space, partition, exponential agents, measurable threshold."""
    k = int(rng.integers(2, kmax + 1))
    n = int(rng.integers(1, nmax + 1))
    space = ScenarioSpace(tuple(f"w{i}" for i in range(k)),
                          rng.dirichlet(np.ones(k) * 2.0))
    g = random_partition(rng, space)
    alphas = rng.uniform(0.3, 3.0, size=n)
    x = rng.uniform(-3.0, 3.0, size=(n, k))
    b = g.expand(rng.uniform(-5.0, -0.1, size=g.nblocks))
    if clusters == "full":
        cl = ClusterConstraint.full_sharing(n)
    elif clusters == "none":
        cl = ClusterConstraint.no_sharing(n)
    else:
        groups = {}
        for j in range(n):
            groups.setdefault(int(rng.integers(0, clusters)), []).append(j)
        cl = ClusterConstraint(tuple(tuple(v) for v in groups.values()))
    spec = RiskSpec(space=space, sigma=g, x=x,
                    aggregator=Aggregator.exponential(alphas), b=b,
                    clusters=cl)
    return spec, exp_constants(alphas)


def random_chain(rng, kmax=64, nmax=4):
    """Random space with nested partitions (coarse, fine) and a threshold
    measurable at the coarse level."""
    k = int(rng.integers(2, kmax + 1))
    space = ScenarioSpace(tuple(f"w{i}" for i in range(k)),
                          rng.dirichlet(np.ones(k)))
    h = random_partition(rng, space, max_blocks=max(1, k // 2))
    gblocks = []
    for blk in h.blocks:
        ng = int(rng.integers(1, min(3, len(blk)) + 1))
        asg = rng.integers(0, ng, size=len(blk))
        sub = {}
        for i, a in zip(blk, asg):
            sub.setdefault(int(a), []).append(i)
        gblocks.extend(tuple(v) for v in sub.values())
    g = SigmaPartition(space, tuple(gblocks))
    n = int(rng.integers(1, nmax + 1))
    c = exp_constants(rng.uniform(0.3, 3.0, size=n))
    x = rng.uniform(-3.0, 3.0, size=(n, k))
    b = h.expand(rng.uniform(-5.0, -0.1, size=h.nblocks))
    return space, g, h, x, b, c
