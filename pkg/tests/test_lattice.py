import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rcmlab.errors import ParameterError, RangeError, UnsupportedOperationError
from rcmlab.lattice import (Bernoulli, Environment, HeavyTail, LatticeSpec, UniformElliptic, from_edges,
                            generate_environment, pi_weight, shift)


def test_lattice_invariants():
    with pytest.raises(ParameterError):
        LatticeSpec(0, 4)
    with pytest.raises(ParameterError):
        LatticeSpec(2, 1)
    lat = LatticeSpec(2, 5, "free")
    assert len(lat.neighbors(lat.index((2, 2)))) == 4
    assert len(lat.neighbors(0)) == 2
    per = LatticeSpec(2, 5, "periodic")
    assert all(len(per.neighbors(v)) == 4 for v in range(per.n_vertices))


@pytest.mark.parametrize("p,value", [(1.0, 1.0), (0.0, 0.0)])
def test_degenerate_bernoulli(p, value):
    env = generate_environment(LatticeSpec(2, 6, "periodic"), Bernoulli(p), 11)
    assert np.all(env.conductances() == value)


def test_bernoulli_open_fraction():
    lat = LatticeSpec(2, 100, "free")
    env = generate_environment(lat, Bernoulli(0.6), 2024)
    vals = env.conductances()[lat.edge_exists_mask()]
    m = vals.size
    assert 19_000 < m < 21_000
    assert abs(vals.mean() - 0.6) <= 3 * math.sqrt(0.6 * 0.4 / m)


@pytest.mark.parametrize("bad", [lambda: Bernoulli(1.5), lambda: Bernoulli(-0.1),
                                 lambda: UniformElliptic(2.0, 1.0), lambda: UniformElliptic(0.0, 1.0),
                                 lambda: HeavyTail(0.0)])
def test_invalid_models(bad):
    with pytest.raises(ParameterError):
        bad()


def test_determinism_and_support():
    lat = LatticeSpec(3, 8, "periodic")
    for model in (Bernoulli(0.4), UniformElliptic(0.3, 1.7), HeavyTail(0.8)):
        a = generate_environment(lat, model, 5).conductances()
        b = generate_environment(lat, model, 5).conductances()
        assert np.array_equal(a, b)
    assert set(np.unique(generate_environment(lat, Bernoulli(0.4), 5).conductances())) <= {0.0, 1.0}
    u = generate_environment(lat, UniformElliptic(0.3, 1.7), 5).conductances()
    assert u.min() >= 0.3 and u.max() <= 1.7
    assert generate_environment(lat, HeavyTail(0.8), 5).conductances().min() >= 1.0


def test_bernoulli_mean_within_four_se():
    lat = LatticeSpec(2, 80, "periodic")
    vals = generate_environment(lat, Bernoulli(0.35), 9).conductances().ravel()
    assert vals.size >= 10_000
    assert abs(vals.mean() - 0.35) <= 4 * math.sqrt(0.35 * 0.65 / vals.size)


def test_heavy_tail_is_pareto():
    lat = LatticeSpec(2, 100, "periodic")
    vals = generate_environment(lat, HeavyTail(2.5), 1).conductances().ravel()
    # P(w > 2) = 2**-a
    frac = np.mean(vals > 2.0)
    p = 2.0**-2.5
    assert abs(frac - p) <= 4 * math.sqrt(p * (1 - p) / vals.size)


def test_different_seeds_differ():
    lat = LatticeSpec(2, 10, "periodic")
    a = generate_environment(lat, UniformElliptic(1, 2), 1).conductances()
    b = generate_environment(lat, UniformElliptic(1, 2), 2).conductances()
    assert not np.array_equal(a, b)


def test_shift_identity_and_inverse():
    lat = LatticeSpec(2, 7, "periodic")
    env = generate_environment(lat, UniformElliptic(0.5, 2.0), 3)
    assert np.array_equal(shift(env, (0, 0)).conductances(), env.conductances())
    back = shift(shift(env, (2, 5)), (-2, -5))
    assert np.array_equal(back.conductances(), env.conductances())
    assert back == env


def test_shift_defining_identity():
    lat = LatticeSpec(3, 6, "periodic")
    env = generate_environment(lat, UniformElliptic(0.5, 2.0), 8)
    gen = np.random.default_rng(0)
    for _ in range(100):
        x = gen.integers(0, lat.side, size=3)
        y = gen.integers(0, lat.side, size=3)
        axis = int(gen.integers(0, 3))
        z = y.copy()
        z[axis] += 1
        moved = shift(env, tuple(x))
        lhs = moved.conductance(lat.index(y % lat.side), lat.index(z % lat.side))
        rhs = env.conductance(lat.index((x + y) % lat.side), lat.index((x + z) % lat.side))
        assert lhs == rhs


def test_shift_needs_periodic():
    env = generate_environment(LatticeSpec(2, 5, "free"), Bernoulli(1.0), 0)
    with pytest.raises(UnsupportedOperationError):
        shift(env, (1, 0))


def test_pi_weight_examples(ones_torus):
    assert all(pi_weight(ones_torus, v) == 4.0 for v in range(0, ones_torus.lattice.n_vertices, 7))
    zero = generate_environment(LatticeSpec(2, 5, "free"), Bernoulli(0.0), 0)
    assert np.all(zero.pi_weights() == 0.0)
    lat = LatticeSpec(2, 3, "free")
    c = lat.index((1, 1))
    star = from_edges(lat, {(c, lat.index((2, 1))): 0.5, (c, lat.index((0, 1))): 1.5,
                            (c, lat.index((1, 2))): 2.0, (c, lat.index((1, 0))): 0.0})
    assert pi_weight(star, c) == 4.0
    with pytest.raises(RangeError):
        pi_weight(star, (3, 0))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["free", "periodic"]))
def test_pi_matches_incident_sum(seed, boundary):
    lat = LatticeSpec(2, 6, boundary)
    env = generate_environment(lat, UniformElliptic(0.2, 3.0), seed)
    pis = env.pi_weights()
    lazy = generate_environment(lat, UniformElliptic(0.2, 3.0), seed)
    for v in (0, 7, 35, 20):
        direct = sum(env.conductance(v, nb) for nb in {n for n, _, _ in lat.neighbors(v)})
        assert math.isclose(pis[v], direct, rel_tol=1e-12)
        assert math.isclose(pi_weight(lazy, v), direct, rel_tol=1e-12)
    np.testing.assert_allclose(lazy.pi_at(np.arange(lat.n_vertices)), pis, rtol=1e-12)


def test_lazy_access_matches_materialized():
    lat = LatticeSpec(3, 9, "free")
    env = generate_environment(lat, Bernoulli(0.5), 17)
    ids = np.arange(lat.n_edge_slots)
    lazy = generate_environment(lat, Bernoulli(0.5), 17).edge_values(ids)
    assert np.array_equal(lazy, env.conductances().ravel())


def test_serialization_round_trip(tmp_path):
    lat = LatticeSpec(2, 6, "periodic")
    env = shift(generate_environment(lat, HeavyTail(1.2), 77), (1, 2))
    env.dump(tmp_path / "env.json")
    back = Environment.load(tmp_path / "env.json")
    assert back == env
    assert np.array_equal(back.conductances(), env.conductances())
    assert "conductances" not in (tmp_path / "env.json").read_text()


def test_subbox_window():
    big = generate_environment(LatticeSpec(2, 9, "free"), UniformElliptic(0.5, 2.0), 4)
    sub = big.subbox((2, 3), 4)
    sl = sub.lattice
    for v in range(sl.n_vertices):
        cx, cy = sl.coords(v)
        for nb, _, _ in sl.neighbors(v):
            nx, ny = sl.coords(nb)
            assert sub.conductance(v, nb) == big.conductance(big.lattice.index((cx + 2, cy + 3)),
                                                             big.lattice.index((nx + 2, ny + 3)))
