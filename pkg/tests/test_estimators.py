import math

import numpy as np
import pytest

from rcmlab.cluster import extract_cluster
from rcmlab.errors import MergeError, ParameterError
from rcmlab.estimators import (KernelEstimate, TailProbeSpec, estimate_kernel_mc, estimate_tail_probabilities,
                               estimate_tail_probability, merge, tail_csv)
from rcmlab.exact import generator_matrix, heat_kernel_exact
from rcmlab.lattice import Bernoulli, LatticeSpec, generate_environment

from conftest import within_se


def test_two_state_estimate(two_state):
    g = two_state(1.0, "VSRW")
    # both vertices sit on the box face; the finite cluster is the model here
    est = estimate_kernel_mc(g, 0, 1.0, 100_000, seed=4, exclude_contaminated=False)
    assert est.contaminated == est.replicas
    p = (1 - math.exp(-2)) / 2
    assert within_se(est.estimate(1), p, est.standard_error(1))
    assert within_se(est.estimate(0), 1 - p, est.standard_error(0))


@pytest.mark.parametrize("exclude", [True, False])
def test_mass_is_exactly_one(exclude):
    lat = LatticeSpec(2, 7, "free")
    g = extract_cluster(generate_environment(lat, Bernoulli(1.0), 0), 0, "CSRW")
    est = estimate_kernel_mc(g, lat.center(), 6.0, 3000, seed=1, exclude_contaminated=exclude)
    assert est.contaminated > 0
    assert est.total_mass() == pytest.approx(1.0, abs=1e-12)
    assert sum(est.counts.values()) == est.used <= est.replicas


def test_merge_equals_union(elliptic_box):
    g = extract_cluster(elliptic_box(), 0, "CSRW")
    a = estimate_kernel_mc(g, 12, 2.0, 3000, seed=9)
    b = estimate_kernel_mc(g, 12, 2.0, 2000, seed=9, first_replica=3000)
    whole = estimate_kernel_mc(g, 12, 2.0, 5000, seed=9)
    m = merge(a, b)
    assert m.counts == whole.counts and m.replicas == whole.replicas and m.contaminated == whole.contaminated
    for y in whole.counts:
        assert m.estimate(y) == whole.estimate(y)
        assert m.standard_error(y) == whole.standard_error(y)


def test_merge_algebra(elliptic_box):
    g = extract_cluster(elliptic_box(), 0, "VSRW")
    a, b, c = (estimate_kernel_mc(g, 12, 1.0, 500, seed=2, first_replica=500 * i) for i in range(3))
    e = KernelEstimate.empty(g, 12, 1.0)
    assert merge(a, e) == a and merge(e, a) == a
    assert merge(a, b) == merge(b, a)
    assert merge(merge(a, b), c).counts == merge(a, merge(b, c)).counts


def test_merge_mismatch(elliptic_box):
    g = extract_cluster(elliptic_box(), 0, "VSRW")
    a = estimate_kernel_mc(g, 12, 1.0, 100, seed=2)
    with pytest.raises(MergeError):
        merge(a, estimate_kernel_mc(g, 12, 1.5, 100, seed=2))
    with pytest.raises(MergeError):
        merge(a, estimate_kernel_mc(extract_cluster(g.env, 0, "CSRW"), 12, 1.0, 100, seed=2))
    with pytest.raises(MergeError):
        merge(a, estimate_kernel_mc(g, 11, 1.0, 100, seed=2))


def test_kernel_estimate_csv(two_state):
    est = estimate_kernel_mc(two_state(), 0, 1.0, 10, seed=0)
    lines = est.to_csv().splitlines()
    assert lines[0] == "y,count,estimate,se,replicas,contaminated"
    assert len(lines) == 1 + len(est.counts)


@pytest.mark.parametrize("mode", ["CSRW", "VSRW"])
def test_oracle_agreement(mode, elliptic_box):
    g = extract_cluster(elliptic_box(side=5), 0, mode)
    exact = heat_kernel_exact(generator_matrix(g), 1.5)
    x = 12
    hits = total = 0
    for run in range(20):
        est = estimate_kernel_mc(g, x, 1.5, 4000, seed=100 + run, exclude_contaminated=False)
        for j, y in enumerate(g.vertices):
            q = exact.values[x, j]
            se = est.standard_error(int(y))
            # zero-count cells carry zero SE; compare with the SE of the exact rate instead
            se = se if se > 0 else math.sqrt(q * exact.theta[j] * (1 - q * exact.theta[j]) / 4000) / exact.theta[j]
            hits += abs(est.estimate(int(y)) - q) <= 4 * se
            total += 1
    assert hits / total >= 0.95


def test_tail_probe_validation():
    with pytest.raises(ParameterError):
        TailProbeSpec("banana", 0, 1, 1)
    with pytest.raises(ParameterError):
        TailProbeSpec("return", 0, 1, 1, eta=1.0)
    with pytest.raises(ParameterError):
        TailProbeSpec("exceedance", 0, -1, 1)
    with pytest.raises(ParameterError):
        TailProbeSpec("exceedance", 0, 1, 0)
    assert TailProbeSpec("return", 0, 2, 4.0, 8.0).horizon == 32.0


def _torus():
    lat = LatticeSpec(2, 41, "periodic")
    return extract_cluster(generate_environment(lat, Bernoulli(1.0), 0), 0, "CSRW"), lat.center()


def test_exceedance_zero_radius():
    g, c = _torus()
    est, se = estimate_tail_probability(g, TailProbeSpec("exceedance", c, 0, 3.0), c, 500, seed=1)
    assert est == 1.0 and se == 0.0


def test_confinement_monotone_and_complement():
    g, c = _torus()
    times = [1.0, 2.0, 4.0, 8.0, 16.0]
    specs = [TailProbeSpec("confinement", c, 3, t) for t in times]
    specs += [TailProbeSpec("exceedance", c, 3, 4.0)]
    out = estimate_tail_probabilities(g, specs, c, 4000, seed=3)
    conf = [e.estimate for e in out[:5]]
    assert all(a >= b for a, b in zip(conf, conf[1:]))
    # complement {d < r} from the same replicas
    exc = out[5]
    below = estimate_tail_probability(g, TailProbeSpec("exceedance", c, 0, 4.0), c, 4000, seed=3).hits - exc.hits
    assert (exc.hits + below) / exc.replicas == 1.0


def test_return_probe_horizon_error():
    g, c = _torus()
    spec = TailProbeSpec("return", c, 2, 4.0, 8.0)
    with pytest.raises(ParameterError):
        estimate_tail_probability(g, spec, c, 10, seed=0, horizon=20.0)
    est = estimate_tail_probability(g, spec, c, 2000, seed=0, horizon=32.0)
    assert 0 < est.estimate <= 1


def test_shared_center_required():
    g, c = _torus()
    with pytest.raises(ParameterError):
        estimate_tail_probabilities(g, [TailProbeSpec("exceedance", c, 1, 1.0),
                                        TailProbeSpec("exceedance", c + 1, 1, 1.0)], c, 10, seed=0)


def test_contamination_reported():
    lat = LatticeSpec(2, 5, "free")
    g = extract_cluster(generate_environment(lat, Bernoulli(1.0), 0), 0)
    est = estimate_tail_probability(g, TailProbeSpec("exceedance", 12, 1, 10.0), 12, 200, seed=0)
    assert est.contaminated > 150


def test_tail_csv():
    g, c = _torus()
    out = estimate_tail_probabilities(g, [TailProbeSpec("return", c, 2, 4.0, 8.0)], c, 50, seed=7)
    lines = tail_csv(out).splitlines()
    assert lines[0] == "probe,estimate,se,replicas,contaminated,seed"
    assert lines[1].startswith(f"return:r=2:t=4.0:eta=8.0,")
    assert lines[1].endswith(",50,0,7")
