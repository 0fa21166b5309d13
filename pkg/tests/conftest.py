import numpy as np
import pytest

from rcmlab.cluster import extract_cluster
from rcmlab.lattice import Bernoulli, LatticeSpec, UniformElliptic, from_conductances, generate_environment


@pytest.fixture
def two_state():
    """One-edge cluster on two vertices with conductance ``w``."""
    def make(w=1.0, mode="VSRW"):
        env = from_conductances(LatticeSpec(1, 2, "free"), [[w], [0.0]])
        return extract_cluster(env, 0, mode)
    return make


@pytest.fixture
def ones_torus():
    lat = LatticeSpec(2, 11, "periodic")
    return generate_environment(lat, Bernoulli(1.0), 0)


@pytest.fixture
def elliptic_box():
    def make(side=5, dim=2, seed=3, boundary="free"):
        return generate_environment(LatticeSpec(dim, side, boundary), UniformElliptic(0.5, 2.0), seed)
    return make


def within_se(est, target, se, k=4.0):
    return abs(est - target) <= k * se


def mean_se(x):
    x = np.asarray(x, dtype=float)
    return x.mean(), x.std(ddof=1) / np.sqrt(x.size)
