import json
import math

import numpy as np
import pytest

from rcmlab.cluster import ClusterGraph, extract_cluster
from rcmlab.errors import ParameterError, RangeError, SizeError, SolverError
from rcmlab.exact import (carne_varopoulos_check, cv_report_json, equilibrium_capacity, generator_matrix,
                          green_exact, green_time_integral, heat_kernel_exact, hitting_identity_residual,
                          relative_change, richardson)
from rcmlab.lattice import Bernoulli, LatticeSpec, UniformElliptic, from_conductances, generate_environment

TOL = 1e-12


def _path(n=5, mode="VSRW"):
    lat = LatticeSpec(1, n, "free")
    return extract_cluster(generate_environment(lat, Bernoulli(1.0), 0), 0, mode)


@pytest.mark.parametrize("mode", ["CSRW", "VSRW"])
def test_generator_rows_sum_to_zero(elliptic_box, mode):
    gen = generator_matrix(extract_cluster(elliptic_box(side=6), 0, mode))
    np.testing.assert_allclose(gen.dense().sum(axis=1), 0.0, atol=1e-14)


def test_two_state_rates(two_state):
    gen = generator_matrix(two_state(0.7, "VSRW"))
    np.testing.assert_allclose(gen.dense(), [[-0.7, 0.7], [0.7, -0.7]])


def test_csrw_equal_conductance_rates():
    lat = LatticeSpec(2, 4, "free")
    g = extract_cluster(generate_environment(lat, Bernoulli(1.0), 0), 0, "CSRW")
    L = generator_matrix(g).dense()
    deg = (L > 0).sum(axis=1)
    off = np.where(L > 0, L, 0.0)
    np.testing.assert_allclose(off.sum(axis=1), 1.0)
    np.testing.assert_allclose(off.max(axis=1), 1.0 / deg)


def test_generator_budget(elliptic_box):
    with pytest.raises(SizeError) as exc:
        generator_matrix(extract_cluster(elliptic_box(side=6), 0), max_vertices=10)
    assert exc.value.budget_name == "exact_vertices"


def test_kernel_at_zero(elliptic_box):
    gen = generator_matrix(extract_cluster(elliptic_box(), 0, "CSRW"))
    k = heat_kernel_exact(gen, 0.0)
    np.testing.assert_allclose(k.values, np.diag(1.0 / gen.theta))


@pytest.mark.parametrize("w,t", [(1.0, 0.3), (0.4, 2.0), (3.0, 5.0)])
def test_two_state_kernel(two_state, w, t):
    k = heat_kernel_exact(generator_matrix(two_state(w, "VSRW")), t, TOL)
    p = (1 - math.exp(-2 * w * t)) / 2
    assert abs(k.values[0, 1] - p) <= 10 * TOL
    assert abs(k.values[0, 0] - (1 - p)) <= 10 * TOL
    assert k.tol < TOL


@pytest.mark.parametrize("mode", ["CSRW", "VSRW"])
def test_kernel_invariants(elliptic_box, mode):
    gen = generator_matrix(extract_cluster(elliptic_box(side=5), 0, mode))
    a = heat_kernel_exact(gen, 1.5, TOL)
    b = heat_kernel_exact(gen, 0.7, TOL)
    ab = heat_kernel_exact(gen, 2.2, TOL)
    np.testing.assert_allclose(a.mass(), 1.0, atol=10 * TOL)
    assert np.max(np.abs(a.values - a.values.T)) <= 10 * TOL
    ck = (a.values * gen.theta[None, :]) @ b.values
    assert np.max(np.abs(ab.values - ck)) <= 100 * TOL
    assert a.values.min() >= -10 * TOL


def test_kernel_errors(two_state, elliptic_box):
    gen = generator_matrix(two_state())
    for tol in (0.0, -1.0, 1.0):
        with pytest.raises(ParameterError):
            heat_kernel_exact(gen, 1.0, tol)
    with pytest.raises(ParameterError):
        heat_kernel_exact(gen, -1.0)
    big = generator_matrix(extract_cluster(elliptic_box(side=50), 0))
    with pytest.raises(SizeError) as exc:
        heat_kernel_exact(big, 1.0)
    assert exc.value.budget_name == "dense_vertices"


def test_kernel_csv(two_state):
    lines = heat_kernel_exact(generator_matrix(two_state()), 0.0).to_csv().splitlines()
    assert lines == ["x_index,y_index,value", "0,0,1.0", "0,1,0.0", "1,0,0.0", "1,1,1.0"]


@pytest.mark.parametrize("mode", ["CSRW", "VSRW"])
def test_path_green(mode):
    gen = generator_matrix(_path(5, mode))
    g = green_exact(gen, 2, [0, 4])
    np.testing.assert_allclose(g.values, [0, 0.5, 1.0, 0.5, 0], atol=1e-12)
    assert g.at(gen, 2) == pytest.approx(1.0)
    assert g.residual < 1e-9


def test_green_residual_cg(elliptic_box):
    env = elliptic_box(side=30, seed=8)
    g = extract_cluster(env, 0, "CSRW")
    gen = generator_matrix(g)
    lat = g.lattice
    face = [v for v in range(lat.n_vertices) if 0 in lat.coords(v) or lat.side - 1 in lat.coords(v)]
    sol = green_exact(gen, lat.center(), face)
    assert sol.method == "cg"
    assert sol.residual < 1e-9
    assert sol.values.min() >= 0


def test_green_matches_time_integral(elliptic_box):
    env = elliptic_box(side=7)
    gen = generator_matrix(extract_cluster(env, 0, "VSRW"))
    lat = env.lattice
    face = [v for v in range(lat.n_vertices) if 0 in lat.coords(v) or 6 in lat.coords(v)]
    g = green_exact(gen, lat.center(), face)
    integral, left = green_time_integral(gen, lat.center(), face, 400.0)
    assert left < 1e-6
    np.testing.assert_allclose(integral, g.values, atol=1e-5)


def test_green_errors():
    gen = generator_matrix(_path(5))
    with pytest.raises(ParameterError):
        green_exact(gen, 2, [])
    with pytest.raises(ParameterError):
        green_exact(gen, 0, [0])
    with pytest.raises(RangeError):
        green_exact(gen, 9, [0])


def test_ungrounded_component_is_singular():
    lat = LatticeSpec(1, 4, "free")
    env = from_conductances(lat, [[1.0], [0.0], [1.0], [0.0]])
    # a hand-built vertex set spanning two components
    g = ClusterGraph(env, 0, "VSRW", np.arange(4, dtype=np.int64))
    with pytest.raises(SolverError):
        green_exact(generator_matrix(g), 3, [0])


def _box_parts(side=7, seed=3, mode="CSRW"):
    lat = LatticeSpec(2, side, "free")
    env = generate_environment(lat, UniformElliptic(0.5, 2.0), seed)
    g = extract_cluster(env, 0, mode)
    face = [v for v in range(lat.n_vertices) if 0 in lat.coords(v) or side - 1 in lat.coords(v)]
    return g, generator_matrix(g), lat, face


@pytest.mark.parametrize("mode", ["CSRW", "VSRW"])
def test_capacity_properties(mode):
    g, gen, lat, face = _box_parts(mode=mode)
    c = lat.center()
    F1 = [c]
    F2 = [c, c + 1, c - 1]
    a = equilibrium_capacity(gen, F1, face)
    b = equilibrium_capacity(gen, F2, face)
    assert a.capacity <= b.capacity
    for res, F in ((a, F1), (b, F2)):
        assert np.all(res.weights >= -1e-12) and np.all(res.weights <= 1 + 1e-12)
        assert res.capacity <= float(np.sum(gen.theta[gen.locate(F)])) + 1e-12
    assert a.as_dict()["F"] == [c]


def test_capacity_errors():
    g, gen, lat, face = _box_parts(side=3)
    with pytest.raises(ParameterError):
        equilibrium_capacity(gen, [], face)
    with pytest.raises(ParameterError):
        equilibrium_capacity(gen, [4, 0], face)
    with pytest.raises(ParameterError):
        equilibrium_capacity(gen, [4], [v for v in range(9) if v != 4])


@pytest.mark.parametrize("mode", ["CSRW", "VSRW"])
def test_hitting_identity_random_cluster(mode):
    lat = LatticeSpec(2, 6, "free")
    vals = generate_environment(lat, UniformElliptic(0.5, 2.0), 21).conductances().copy()
    vals[[lat.index((x, 4)) for x in range(6)], 1] = 0.0      # cut the top row off
    g = extract_cluster(from_conductances(lat, vals), 0, mode)
    gen = generator_matrix(g)
    assert g.size == 30
    F = [lat.index((2, 2)), lat.index((3, 2))]
    outer = [lat.index((x, 4)) for x in range(6)]
    for x in (lat.index((0, 0)), lat.index((4, 3)), lat.index((5, 1))):
        assert hitting_identity_residual(gen, F, outer, x) < 1e-8
    assert hitting_identity_residual(gen, F, outer, outer[2]) == 0.0


def test_hitting_identity_forced_hit():
    gen = generator_matrix(_path(3, "VSRW"))
    res = equilibrium_capacity(gen, [1], [2])
    assert 1 - res.escape[0] == pytest.approx(1.0)
    assert hitting_identity_residual(gen, [1], [2], 0) < 1e-12


@pytest.mark.parametrize("mode", ["CSRW", "VSRW"])
def test_hitting_identity_center_corner(mode):
    lat = LatticeSpec(2, 5, "free")
    g = extract_cluster(generate_environment(lat, Bernoulli(1.0), 0), 0, mode)
    gen = generator_matrix(g)
    face = [v for v in range(25) if 0 in lat.coords(v) or 4 in lat.coords(v)]
    outer = [v for v in face if v != 0]
    assert hitting_identity_residual(gen, [lat.center()], outer, 0) < 1e-8


def test_theta_weighting_only_exact_for_csrw():
    _, gen_c, lat, face = _box_parts(mode="CSRW")
    _, gen_v, _, _ = _box_parts(mode="VSRW")
    F, x = [lat.center()], lat.index((2, 3))
    assert hitting_identity_residual(gen_c, F, face, x, weight="theta") < 1e-8
    assert hitting_identity_residual(gen_v, F, face, x, weight="theta") > 1e-3
    with pytest.raises(ParameterError):
        hitting_identity_residual(gen_c, F, face, F[0])


def test_cv_diagonal_and_two_state(two_state):
    g = two_state(1.0, "VSRW")
    k = heat_kernel_exact(generator_matrix(g), 2.0)
    rep = carne_varopoulos_check(k, g, constants=None)
    norm = k.values * np.sqrt(np.outer(k.theta, k.theta))
    assert rep["c1"] == pytest.approx(norm.max())
    # own constants are never violated
    t = k.t
    checked = carne_varopoulos_check(k, g, constants=(rep["c1"], rep["c2"]))["checked"]
    assert checked["violations"] == []
    assert math.log(norm[0, 1]) <= math.log(rep["c1"]) - rep["c2"] / t + 1e-12
    strict = carne_varopoulos_check(k, g, constants=(rep["c1"] / 2, rep["c2"]))
    assert strict["checked"]["violations"]


@pytest.mark.parametrize("t", [1.0, 2.0, 4.0, 8.0])
def test_cv_elliptic_positive_rate(t):
    lat = LatticeSpec(2, 9, "free")
    g = extract_cluster(generate_environment(lat, UniformElliptic(0.5, 2.0), 5), 0, "CSRW")
    rep = carne_varopoulos_check(heat_kernel_exact(generator_matrix(g), t), g)
    assert rep["c2"] > 0
    doc = json.loads(cv_report_json(rep))
    assert {r["regime"] for r in doc["records"]} <= {"gaussian", "poisson"}
    assert all(set(r) == {"pair", "regime", "c1", "c2", "pairs"} for r in doc["records"])


def test_richardson_removes_inverse_radius():
    f = lambda r: 3.0 + 5.0 / r
    assert richardson(f(10), 10, f(20), 20) == pytest.approx(3.0)
    assert relative_change([1.0, 2.0], [1.0, 2.02]) == pytest.approx(0.02 / 2.02)
