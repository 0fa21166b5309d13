"""Named experiment suites and their configuration."""
from __future__ import annotations

import copy
import math
import time
from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from . import __version__, exact, rng, walker
from .asymptotics import LIL_KINDS, fit_power_law, lil_ensemble, lil_statistics, rate_function_sweep
from .cluster import ball_profile, check_metric, check_mode, extract_cluster
from .errors import ConfigError, ParameterError
from .estimators import TailProbeSpec, estimate_kernel_mc, estimate_tail_probabilities
from .lattice import Environment, LatticeSpec, generate_environment, model_from_dict, model_to_dict
from .report import ExperimentReport, Table

TOP_KEYS = ("experiment", "seed", "workers", "out", "lattice", "model", "walk", "probe", "replicas")
CONTAMINATION_LIMIT = 0.01


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    lattice: LatticeSpec
    model: Any
    mode: str
    metric: str
    probe: dict
    replicas: int
    seed: int
    workers: int = 1
    out: str = "rcm-out"

    @property
    def modes(self) -> tuple[str, ...]:
        return ("CSRW", "VSRW") if self.mode == "BOTH" else (self.mode,)

    def echo(self) -> dict:
        return {
            "experiment": self.name,
            "seed": self.seed,
            "workers": self.workers,
            "out": self.out,
            "lattice": self.lattice.to_dict(),
            "model": model_to_dict(self.model),
            "walk": {"mode": self.mode, "metric": self.metric},
            "probe": copy.deepcopy(self.probe),
            "replicas": {"count": self.replicas},
        }

    def environment(self, lattice: LatticeSpec | None = None) -> Environment:
        return generate_environment(lattice or self.lattice, self.model, rng.derive(self.seed, rng.TAG_ENV))


@dataclass(frozen=True)
class Experiment:
    name: str
    run: Callable[[ExperimentConfig], tuple[list, dict]]
    defaults: dict
    description: str


REGISTRY: dict[str, Experiment] = {}


def _register(name: str, defaults: dict, description: str):
    def deco(fn):
        REGISTRY[name] = Experiment(name, fn, defaults, description)
        return fn
    return deco


def experiment_names() -> list[str]:
    return list(REGISTRY)


# --- configuration ------------------------------------------------------------------

def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "model":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _cast(value, kind, name):
    try:
        if kind is bool:
            if isinstance(value, str):
                if value.lower() in ("true", "1", "yes"):
                    return True
                if value.lower() in ("false", "0", "no"):
                    return False
                raise ValueError(value)
            return bool(value)
        if kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if kind is float:
            return float(value)
        if kind is list:
            if not isinstance(value, (list, tuple)):
                raise ValueError(value)
            return [float(v) for v in value]
        if kind is str:
            return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: cannot interpret {value!r} as {kind.__name__}") from None
    return value


def build_config(raw: dict) -> ExperimentConfig:
    """Validate a raw mapping (parsed config file plus overrides) against the registry."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    for k in raw:
        if k not in TOP_KEYS:
            raise ConfigError(f"{k}: unknown configuration key")
    name = raw.get("experiment")
    if name is None:
        raise ConfigError("experiment: missing experiment name")
    if name not in REGISTRY:
        raise ConfigError(f"experiment: unknown experiment {name!r}; known: {', '.join(REGISTRY)}")
    exp = REGISTRY[name]
    merged = _merge(exp.defaults, {k: v for k, v in raw.items() if k != "experiment"})
    for sec in ("lattice", "walk", "replicas", "probe", "model"):
        if not isinstance(merged.get(sec, {}), dict):
            raise ConfigError(f"{sec}: expected a section")
    lat = merged["lattice"]
    for k in lat:
        if k not in ("dim", "side", "boundary"):
            raise ConfigError(f"lattice.{k}: unknown key")
    try:
        lattice = LatticeSpec(_cast(lat.get("dim"), int, "lattice.dim"), _cast(lat.get("side"), int, "lattice.side"),
                              _cast(lat.get("boundary", "free"), str, "lattice.boundary"))
    except ParameterError as exc:
        raise ConfigError(f"lattice: {exc}") from None
    try:
        model = model_from_dict(merged["model"])
    except (ParameterError, TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from None
    walk = merged["walk"]
    for k in walk:
        if k not in ("mode", "metric"):
            raise ConfigError(f"walk.{k}: unknown key")
    mode = str(walk.get("mode", "CSRW")).upper()
    if mode != "BOTH":
        try:
            mode = check_mode(mode)
        except ParameterError as exc:
            raise ConfigError(f"walk.mode: {exc}") from None
    metric = walk.get("metric", "ambient")
    try:
        check_metric(metric)
    except ParameterError as exc:
        raise ConfigError(f"walk.metric: {exc}") from None
    schema = exp.defaults["probe"]
    probe = {}
    for k, v in merged["probe"].items():
        if k not in schema:
            raise ConfigError(f"probe.{k}: unknown key for experiment {name}")
        ref = schema[k]
        kind = list if isinstance(ref, list) else float if ref is None else type(ref)
        probe[k] = None if v is None else _cast(v, kind, f"probe.{k}")
    reps = merged["replicas"]
    for k in reps:
        if k != "count":
            raise ConfigError(f"replicas.{k}: unknown key")
    count = _cast(reps.get("count", 1), int, "replicas.count")
    if count < 1:
        raise ConfigError("replicas.count: must be at least 1")
    seed = _cast(merged.get("seed", 0), int, "seed")
    workers = _cast(merged.get("workers", 1), int, "workers")
    if workers < 1:
        raise ConfigError("workers: must be at least 1")
    cfg = ExperimentConfig(name, lattice, model, mode, metric, probe, count, seed, workers,
                           _cast(merged.get("out", "rcm-out"), str, "out"))
    _check_probe(cfg)
    return cfg


def _check_probe(cfg: ExperimentConfig):
    p = cfg.probe

    def positive(key):
        if p.get(key) is not None and not p[key] > 0:
            raise ConfigError(f"probe.{key}: must be positive")

    for key in ("t", "eta", "beta", "alpha", "t_max", "n", "tolerance", "tol"):
        positive(key)
    if cfg.name == "return-scaling" and not p["eta"] > 1:
        raise ConfigError("probe.eta: must exceed 1")
    if cfg.name == "rate-function":
        if not p["alpha"] > p["beta"]:
            raise ConfigError("probe.alpha: must exceed probe.beta")
        if any(k <= 0 for k in p["kappas"]):
            raise ConfigError("probe.kappas: must be positive")
        if any(not (math.e < t0 < p["t_max"]) for t0 in p["t0s"]):
            raise ConfigError("probe.t0s: every T0 must lie in (e, t_max)")
    if cfg.name == "lil-suite" and not p["beta"] > 1:
        raise ConfigError("probe.beta: must exceed 1")


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Execute a validated configuration and collect its tables and diagnostics."""
    if cfg.name not in REGISTRY:
        raise ConfigError(f"experiment: unknown experiment {cfg.name!r}")
    start = time.perf_counter()
    tables, diagnostics = REGISTRY[cfg.name].run(cfg)
    wall = time.perf_counter() - start
    return ExperimentReport(cfg.echo(), tables, diagnostics, wall, __version__)


# --- helpers -----------------------------------------------------------------------

def _center_box(env: Environment, side: int) -> Environment:
    lat = env.lattice
    if side == lat.side:
        return env
    o = (lat.side - side) // 2
    return env.subbox((o,) * lat.dim, side)


def _face_vertices(lat: LatticeSpec) -> np.ndarray:
    co = lat.coords_array(np.arange(lat.n_vertices))
    return np.flatnonzero(((co == 0) | (co == lat.side - 1)).any(axis=1))


def _fit_row(label: str, fit) -> list:
    return [label, fit.exponent, fit.intercept, fit.ci[0], fit.ci[1], fit.n, int(fit.degenerate)]


FIT_COLUMNS = ["quantity", "exponent", "intercept", "ci_lo", "ci_hi", "points", "degenerate"]


def _start_vertex(cfg: ExperimentConfig, lat: LatticeSpec | None = None) -> int:
    lat = lat or cfg.lattice
    s = cfg.probe.get("start")
    if s is None or s == []:
        return lat.center()
    return lat.index([int(v) for v in s])


# --- experiments -----------------------------------------------------------------

_ELLIPTIC = {"kind": "uniform_elliptic", "lo": 0.5, "hi": 2.0}
_ONES = {"kind": "bernoulli", "p": 1.0}


@_register("kernel-oracle", {
    "lattice": {"dim": 2, "side": 5, "boundary": "free"},
    "model": _ELLIPTIC,
    "walk": {"mode": "both"},
    "probe": {"t": 3.0, "runs": 20, "tol": 1e-12, "within_se": 4.0, "exclude_contaminated": False, "start": []},
    "replicas": {"count": 100_000},
}, "Monte Carlo kernel estimates against the exact uniformized kernel")
def _kernel_oracle(cfg: ExperimentConfig):
    p = cfg.probe
    env = cfg.environment()
    x = _start_vertex(cfg)
    entries, runs = [], []
    diag = {}
    for mode in cfg.modes:
        graph = extract_cluster(env, x, mode)
        gen = exact.generator_matrix(graph)
        K = exact.heat_kernel_exact(gen, p["t"], p["tol"])
        row = K.values[int(gen.locate([x])[0])]
        inside = 0
        total = 0
        for run in range(int(p["runs"])):
            seed = rng.derive(cfg.seed, rng.TAG_AUX, run)
            est = estimate_kernel_mc(graph, x, p["t"], cfg.replicas, seed,
                                     exclude_contaminated=p["exclude_contaminated"], workers=cfg.workers)
            ok_run = 0
            for i, y in enumerate(gen.vertices):
                q = est.estimate(int(y))
                se = est.standard_error(int(y))
                ok = abs(q - row[i]) <= p["within_se"] * se
                ok_run += ok
                entries.append([mode, run, int(y), float(row[i]), q, se, int(ok)])
            runs.append([mode, run, ok_run / gen.size, est.contaminated, est.replicas])
            inside += ok_run
            total += gen.size
        diag[f"{mode}_fraction_within"] = inside / total
        diag[f"{mode}_truncation"] = K.tol
    diag["min_run_fraction"] = min(r[2] for r in runs)
    tables = [Table("entries", ["mode", "run", "y", "exact", "estimate", "se", "within"], entries),
              Table("runs", ["mode", "run", "fraction_within", "contaminated", "replicas"], runs)]
    return tables, diag


def _ladder_sides(side: int, levels: int) -> list[int]:
    return [(side - 1) * 2**k + 1 for k in range(levels)]


@_register("green-decay", {
    "lattice": {"dim": 3, "side": 33, "boundary": "free"},
    "model": _ONES,
    "walk": {"mode": "CSRW"},
    "probe": {"r_min": 2, "r_max": 10, "levels": 3, "tolerance": 0.01, "max_vertices": 2_200_000},
    "replicas": {"count": 1},
}, "Decay of the Green function with distance, with shell doubling")
def _green_decay(cfg: ExperimentConfig):
    p = cfg.probe
    lat0 = cfg.lattice
    sides = _ladder_sides(lat0.side, max(int(p["levels"]), 2))
    big = LatticeSpec(lat0.dim, sides[-1], "free")
    env_big = cfg.environment(big)
    radii = np.arange(int(p["r_min"]), int(p["r_max"]) + 1)
    profiles, residuals = [], []
    for side in sides:
        env = _center_box(env_big, side)
        lat = env.lattice
        c = lat.center()
        graph = extract_cluster(env, c, cfg.modes[0])
        gen = exact.generator_matrix(graph, max_vertices=int(p["max_vertices"]))
        absorbing = np.intersect1d(_face_vertices(lat), gen.vertices)
        sol = exact.green_exact(gen, c, absorbing)
        residuals.append(sol.residual)
        d = graph.distances_from(c, cfg.metric)
        prof = []
        for r in radii:
            sel = d == r
            prof.append(float(sol.values[sel].mean()) if sel.any() else math.nan)
        profiles.append(np.array(prof))
    half = [(s - 1) / 2 for s in sides]
    extrap = [exact.richardson(profiles[k], half[k], profiles[k + 1], half[k + 1]) for k in range(len(sides) - 1)]
    accepted = extrap[0]
    change = exact.relative_change(extrap[0], extrap[1]) if len(extrap) > 1 else math.nan
    raw_fit = fit_power_law(zip(radii, profiles[0]))
    fit = fit_power_law(zip(radii, accepted))
    rows = []
    for i, r in enumerate(radii):
        row = [int(r)] + [float(pr[i]) for pr in profiles] + [float(e[i]) for e in extrap]
        rows.append(row)
    cols = ["r"] + [f"raw_side_{s}" for s in sides] + [f"extrapolated_{sides[k]}_{sides[k + 1]}" for k in range(len(extrap))]
    tables = [Table("profile", cols, rows),
              Table("fits", FIT_COLUMNS, [_fit_row(f"raw_side_{sides[0]}", raw_fit), _fit_row("whole_space", fit)])]
    diag = {"exponent": fit.exponent, "raw_exponent": raw_fit.exponent, "relative_change": change,
            "converged": bool(change < p["tolerance"]), "max_residual": max(residuals), "sides": sides}
    return tables, diag


@_register("capacity-scaling", {
    "lattice": {"dim": 3, "side": 129, "boundary": "free"},
    "model": _ONES,
    "walk": {"mode": "CSRW"},
    "probe": {"r_min": 2, "r_max": 8, "shell": 2, "tolerance": 0.01, "max_vertices": 2_200_000},
    "replicas": {"count": 1},
}, "Capacity of balls B(0, 2r) against r, with shell doubling")
def _capacity_scaling(cfg: ExperimentConfig):
    p = cfg.probe
    env_big = cfg.environment()
    big = env_big.lattice
    m = int(p["shell"])
    rows, caps = [], []
    for r in range(int(p["r_min"]), int(p["r_max"]) + 1):
        rho = 2 * r
        vals = {}
        for mult in (m, 2 * m, 4 * m):
            side = 2 * mult * rho + 1
            if side > big.side:
                continue
            env = _center_box(env_big, side)
            lat = env.lattice
            c = lat.center()
            graph = extract_cluster(env, c, cfg.modes[0])
            gen = exact.generator_matrix(graph, max_vertices=int(p["max_vertices"]))
            d = graph.distances_from(c, cfg.metric)
            F = gen.vertices[d <= rho]
            outer = np.intersect1d(_face_vertices(lat), gen.vertices)
            vals[mult] = exact.equilibrium_capacity(gen, F, outer).capacity
        if 2 * m not in vals:
            raise ParameterError(f"lattice side {big.side} is too small for radius {rho} with shell factor {2 * m}")
        inv = exact.richardson(1.0 / vals[m], m * rho, 1.0 / vals[2 * m], 2 * m * rho)
        cap = float(1.0 / inv)
        check, change, conv = None, None, None
        if 4 * m in vals:
            check = float(1.0 / exact.richardson(1.0 / vals[2 * m], 2 * m * rho, 1.0 / vals[4 * m], 4 * m * rho))
            change = abs(cap - check) / abs(check)
            conv = int(change < p["tolerance"])
        caps.append((r, cap))
        rows.append([r, rho, vals[m], vals[2 * m], vals.get(4 * m), cap, check, change, conv])
    fit = fit_power_law(caps)
    raw_fit = fit_power_law([(row[0], row[3]) for row in rows])
    checked = [row[8] for row in rows if row[8] is not None]
    tables = [Table("capacity", ["r", "radius", f"raw_shell_{m}", f"raw_shell_{2 * m}", f"raw_shell_{4 * m}",
                                 "whole_space", "check", "relative_change", "converged"], rows),
              Table("fits", FIT_COLUMNS, [_fit_row(f"raw_shell_{2 * m}", raw_fit), _fit_row("whole_space", fit)])]
    diag = {"exponent": fit.exponent, "raw_exponent": raw_fit.exponent, "radii_checked": len(checked),
            "converged": bool(checked) and all(checked)}
    return tables, diag


@_register("return-scaling", {
    "lattice": {"dim": 3, "side": 401, "boundary": "free"},
    "model": _ONES,
    "walk": {"mode": "CSRW"},
    "probe": {"r": 2.0, "eta": 8.0, "k_min": 6, "k_max": 10},
    "replicas": {"count": 100_000},
}, "Probability of returning near the start in (t, eta t] against t")
def _return_scaling(cfg: ExperimentConfig):
    p = cfg.probe
    env = cfg.environment()
    x = env.lattice.center()
    graph = extract_cluster(env, x, cfg.modes[0])
    rows, pts = [], []
    for j, k in enumerate(range(int(p["k_min"]), int(p["k_max"]) + 1)):
        t = 2.0**k
        spec = TailProbeSpec("return", x, p["r"], t, p["eta"])
        est = estimate_tail_probabilities(graph, [spec], x, cfg.replicas, cfg.seed, cfg.metric,
                                          first_replica=j * cfg.replicas, workers=cfg.workers)[0]
        rows.append([t, est.estimate, est.se, est.hits, est.replicas, est.contaminated])
        pts.append((t, est.estimate))
    fit = fit_power_law(pts)
    worst = max(r[5] for r in rows) / cfg.replicas
    tables = [Table("probes", ["t", "estimate", "se", "hits", "replicas", "contaminated"], rows),
              Table("fits", FIT_COLUMNS, [_fit_row("return_probability", fit)])]
    diag = {"exponent": fit.exponent, "ci": list(fit.ci), "max_contamination": worst,
            "contamination_ok": bool(worst < CONTAMINATION_LIMIT)}
    return tables, diag


@_register("volume-growth", {
    "lattice": {"dim": 3, "side": 401, "boundary": "free"},
    "model": _ONES,
    "walk": {"mode": "CSRW"},
    "probe": {"r_min": 4, "r_max": 0},
    "replicas": {"count": 1},
}, "Ball counts and theta-volumes against the radius")
def _volume_growth(cfg: ExperimentConfig):
    p = cfg.probe
    env = cfg.environment()
    lat = env.lattice
    x = lat.center()
    graph = extract_cluster(env, x, cfg.modes[0])
    r_max = int(p["r_max"]) or lat.side // 4
    counts, vols = ball_profile(graph, x, r_max, cfg.metric)
    rows = [[r, int(counts[r]), float(vols[r])] for r in range(r_max + 1)]
    rs = range(int(p["r_min"]), r_max + 1)
    fc = fit_power_law([(r, counts[r]) for r in rs])
    fv = fit_power_law([(r, vols[r]) for r in rs])
    tables = [Table("profile", ["r", "count", "theta_volume"], rows),
              Table("fits", FIT_COLUMNS, [_fit_row("count", fc), _fit_row("theta_volume", fv)])]
    return tables, {"count_exponent": fc.exponent, "volume_exponent": fv.exponent, "r_range": [int(p["r_min"]), r_max]}


def _clock_se(times: np.ndarray, n: int, batches: int) -> float:
    inc = np.diff(times[: n + 1])
    b = inc[: (n // batches) * batches].reshape(batches, -1).mean(axis=1)
    return float(b.std(ddof=1) / math.sqrt(batches))


@_register("clock-ratio", {
    "lattice": {"dim": 2, "side": 101, "boundary": "periodic"},
    "model": _ELLIPTIC,
    "walk": {"mode": "both"},
    "probe": {"n": 100_000, "batches": 100, "within_se": 4.0},
    "replicas": {"count": 1},
}, "Jump clock T_n / n against its limit")
def _clock_ratio(cfg: ExperimentConfig):
    p = cfg.probe
    n = int(p["n"])
    env = cfg.environment()
    x = env.lattice.center()
    pi = env.pi_weights()
    rows = []
    diag = {}
    for mode in cfg.modes:
        graph = extract_cluster(env, x, mode)
        for rep in range(cfg.replicas):
            tr = walker.simulate(graph, x, math.inf, rng.replica_seed(cfg.seed, rep), max_jumps=n)
            ratio = walker.clock_ratio(tr, n)
            se = _clock_se(tr.times, n, int(p["batches"]))
            if mode == "CSRW":
                oracle, tol, stationary = 1.0, p["within_se"] / math.sqrt(n), 1.0
            else:
                members = graph.vertices
                oracle = float(np.mean(1.0 / pi[members]))
                stationary = float(members.size / pi[members].sum())
                tol = p["within_se"] * se
            ok = abs(ratio - oracle) <= tol
            rows.append([mode, rep, n, ratio, se, oracle, tol, int(ok), stationary, int(abs(ratio - stationary) <= tol)])
            diag[f"{mode}_within"] = bool(ok) and diag.get(f"{mode}_within", True)
    tables = [Table("ratios", ["mode", "replica", "n", "ratio", "se", "oracle", "tolerance", "within",
                               "stationary_oracle", "within_stationary"], rows)]
    return tables, diag


@_register("lil-suite", {
    "lattice": {"dim": 2, "side": 8193, "boundary": "free"},
    "model": _ELLIPTIC,
    "walk": {"mode": "CSRW"},
    "probe": {"beta": 2.0, "k_max": 20, "last_epochs": 4, "stabilization": 0.2},
    "replicas": {"count": 200},
}, "Normalized displacement statistics at dyadic times")
def _lil_suite(cfg: ExperimentConfig):
    p = cfg.probe
    env = cfg.environment()
    x = env.lattice.center()
    graph = extract_cluster(env, x, cfg.modes[0])
    ens = lil_ensemble(graph, x, 2.0 ** int(p["k_max"]), cfg.replicas, cfg.seed, cfg.metric, cfg.workers)
    series = {k: lil_statistics(ens, graph, k, p["beta"], metric=cfg.metric) for k in LIL_KINDS}
    rows = []
    for k, s in series.items():
        env_s, mr = s.envelope, s.mean_running
        for j, t in enumerate(s.times):
            col = s.values[:, j]
            rows.append([k, float(t), float(env_s[j]), float(mr[j]), float(col.mean()), float(col.min()), float(col.max())])
    last = int(p["last_epochs"])
    checks = []
    diag = {}
    for k, s in series.items():
        st_env = s.stabilization(last, "envelope")
        st_mean = s.stabilization(last, "mean")
        finite = bool(np.all(np.isfinite(s.values)))
        stat = s.tail_minimum() if k == "liminf-sup" else s.values.max(axis=1)
        positive = bool(np.all(stat > 0))
        checks.append([k, st_env, st_mean, int(finite), int(positive), float(stat.min())])
        diag[f"{k}_stabilization"] = st_env
        diag[f"{k}_mean_stabilization"] = st_mean
    dominance = bool(np.all(series["limsup-sup"].values >= series["limsup-endpoint"].values))
    diag["sup_dominates_endpoint"] = dominance
    diag["liminf_min"] = float(series["liminf-sup"].tail_minimum().min())
    diag["contamination"] = float(ens.touched_face.mean())
    diag["stable"] = all(c[1] < p["stabilization"] for c in checks)
    tables = [Table("series", ["kind", "t", "envelope", "mean_running", "mean", "min", "max"], rows),
              Table("checks", ["kind", "envelope_change", "mean_running_change", "finite", "positive", "min_statistic"],
                    checks)]
    return tables, diag


@_register("rate-function", {
    "lattice": {"dim": 3, "side": 2001, "boundary": "free"},
    "model": _ONES,
    "walk": {"mode": "CSRW"},
    "probe": {"alpha": 3.0, "beta": 2.0, "kappas": [0.25, 0.5, 1.0, 2.0, 4.0, 6.0], "t0s": [100.0, 1000.0, 10000.0],
              "t_max": 100_000.0},
    "replicas": {"count": 10_000},
}, "Survival of d(x, Y_t) >= t^(1/beta) h(t) over a window, swept over kappa and T0")
def _rate_function(cfg: ExperimentConfig):
    p = cfg.probe
    env = cfg.environment()
    x = env.lattice.center()
    graph = extract_cluster(env, x, cfg.modes[0])
    kappas = sorted(p["kappas"])
    t0s = sorted(p["t0s"])
    ests = rate_function_sweep(graph, kappas, t0s, p["alpha"], p["beta"], p["t_max"], x, cfg.replicas, cfg.seed,
                               cfg.metric, workers=cfg.workers)
    rows = [[e.kappa, e.t0, e.fraction, e.se, e.replicas, e.contaminated, int(e.phi_increasing)] for e in ests]
    diag = {}
    mono = True
    for t0 in t0s:
        col = [e.fraction for e in ests if e.t0 == t0]
        mono = mono and all(a <= b for a, b in zip(col, col[1:]))
    diag["monotone_in_kappa"] = mono
    lo = next(e for e in ests if e.kappa == kappas[0] and e.t0 == t0s[0])
    hi = next(e for e in ests if e.kappa == kappas[-1] and e.t0 == t0s[0])
    pooled = math.sqrt(lo.se**2 + hi.se**2)
    diag["gap"] = hi.fraction - lo.fraction
    diag["gap_in_se"] = diag["gap"] / pooled if pooled > 0 else math.inf
    diag["contamination"] = lo.contaminated / cfg.replicas
    tables = [Table("survival", ["kappa", "t0", "fraction", "se", "replicas", "contaminated", "phi_increasing"], rows)]
    return tables, diag


@_register("cv-check", {
    "lattice": {"dim": 2, "side": 9, "boundary": "free"},
    "model": _ELLIPTIC,
    "walk": {"mode": "CSRW"},
    "probe": {"times": [1.0, 2.0, 4.0, 8.0], "tol": 1e-12, "c1": None, "c2": None},
    "replicas": {"count": 1},
}, "Fitted Carne-Varopoulos envelope constants of the exact kernel")
def _cv_check(cfg: ExperimentConfig):
    p = cfg.probe
    env = cfg.environment()
    x = env.lattice.center()
    rows, recs = [], []
    diag = {}
    for mode in cfg.modes:
        graph = extract_cluster(env, x, mode)
        gen = exact.generator_matrix(graph)
        for t in p["times"]:
            K = exact.heat_kernel_exact(gen, t, p["tol"])
            const = (p["c1"], p["c2"]) if p.get("c1") is not None and p.get("c2") is not None else None
            rep = exact.carne_varopoulos_check(K, graph, const, cfg.metric)
            nviol = len(rep["checked"]["violations"]) if const else None
            rows.append([mode, t, rep["c1"], rep["c2"], rep["c2_poisson"], nviol])
            for r in rep["records"]:
                recs.append([mode, t, r["regime"], r["pair"][0], r["pair"][1], r["c1"], r["c2"], r["pairs"]])
    c2s = [r[3] for r in rows if r[3] is not None]
    diag["min_c2"] = min(c2s) if c2s else None
    diag["c2_positive"] = bool(c2s) and all(c > 0 for c in c2s)
    tables = [Table("constants", ["mode", "t", "c1", "c2", "c2_poisson", "violations"], rows),
              Table("records", ["mode", "t", "regime", "x", "y", "c1", "c2", "pairs"], recs)]
    return tables, diag
