"""Continuous-time walks (CSRW and VSRW) and their path functionals."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels, rng
from .cluster import ClusterGraph, check_metric
from .errors import InsufficientPathError, ParameterError, RangeError
from .lattice import Environment

CHUNK = 2048  # replicas per kernel call; fixed so results never depend on the worker count


def kernel_env(env: Environment) -> tuple:
    """Environment arguments in the kernel calling convention."""
    lat = env.lattice
    if env.native:
        model, p1, p2 = env.model.kernel_code()
        cond = np.empty(0)
    else:
        model, p1, p2 = 4, 0.0, 0.0
        cond = np.ascontiguousarray(env.conductances().ravel())
    return (np.int64(lat.dim), np.int64(lat.side), lat.periodic, np.int64(model), float(p1), float(p2),
            np.uint64(env.key), cond, lat.strides.astype(np.int64))


def distance_table(graph: ClusterGraph, center: int, metric: str) -> np.ndarray:
    """Per-vertex distance table for the kernels; empty means ambient distance."""
    check_metric(metric)
    if metric == "ambient" or graph.env.strictly_positive:
        return np.empty(0, dtype=np.int64)
    d = graph.chemical_distances_from(center)
    table = np.full(graph.lattice.n_vertices, -1, dtype=np.int64)
    finite = np.isfinite(d)
    table[graph.vertices[finite]] = d[finite].astype(np.int64)
    return table


@dataclass(frozen=True, eq=False)
class Trajectory:
    mode: str
    start: int
    times: np.ndarray      # T_0 = 0 < T_1 < ... < T_n
    vertices: np.ndarray   # X_0, ..., X_n
    horizon: float
    seed: int
    touched_face: bool = False

    @property
    def n_jumps(self) -> int:
        return int(self.times.size - 1)

    def position(self, t: float) -> int:
        if t < 0 or t > self.horizon:
            raise ParameterError(f"time {t} outside [0, {self.horizon}]")
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return int(self.vertices[k])

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (self.mode == other.mode and self.start == other.start and self.horizon == other.horizon
                and np.array_equal(self.times, other.times) and np.array_equal(self.vertices, other.vertices))

    def to_csv(self, lattice) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "T_k"] + [f"x{i}" for i in range(lattice.dim)])
        coords = lattice.coords_array(self.vertices)
        for k, (t, c) in enumerate(zip(self.times, coords)):
            w.writerow([k, repr(float(t))] + [int(v) for v in c])
        return buf.getvalue()


@dataclass(frozen=True)
class PassageTimes:
    """First-passage functionals; ``None`` means not observed within the horizon."""

    exit_time: float | None
    hitting_time: float | None
    strict_hitting_time: float | None


def _keys(seed: int) -> tuple[np.uint64, np.uint64]:
    return np.uint64(rng.derive(seed, rng.TAG_JUMP)), np.uint64(rng.derive(seed, rng.TAG_HOLD))


def simulate(graph: ClusterGraph, start, horizon: float, seed: int, max_jumps: int | None = None) -> Trajectory:
    """One walk on ``[0, horizon]``.

    Jumps follow ``w_xy / pi(x)``; holding times are Exp(1) for CSRW and
    Exp(pi(x)) for VSRW.  Jump targets and holding times use separate streams,
    so both modes visit the same vertex sequence for a given seed.
    """
    lat = graph.lattice
    start = lat.vertex(start)
    if not graph.contains(start):
        raise RangeError(f"start {start} is not in the cluster")
    if not horizon > 0:
        raise ParameterError("horizon must be positive")
    cap = np.iinfo(np.int64).max if max_jumps is None else int(max_jumps)
    if math.isinf(horizon) and max_jumps is None:
        raise ParameterError("an infinite horizon needs max_jumps")
    kj, kh = _keys(seed)
    times, verts, touched = _kernels.walk_path(
        np.int64(start), float(horizon), np.int64(cap), kj, kh, graph.mode == "VSRW", *kernel_env(graph.env))
    if math.isinf(horizon):
        horizon = float(times[-1])
    return Trajectory(graph.mode, start, times, verts, float(horizon), int(seed), bool(touched))


def passage_times(traj: Trajectory, F) -> PassageTimes:
    """Exit time from ``F``, hitting time of ``F`` and strict hitting time of ``F``.

    The strict hitting time of a set containing the start looks for the first
    return after the walk has left its initial vertex.
    """
    members = set(int(v) for v in F)
    if not members:
        return PassageTimes(0.0, None, None)
    inside = np.fromiter((int(v) in members for v in traj.vertices), dtype=bool, count=traj.vertices.size)
    times = traj.times
    out_idx = np.flatnonzero(~inside)
    tau = float(times[out_idx[0]]) if out_idx.size else None
    in_idx = np.flatnonzero(inside)
    sigma = float(times[in_idx[0]]) if in_idx.size else None
    later = in_idx[in_idx >= 1]
    sigma_plus = float(times[later[0]]) if later.size else None
    if not inside[0]:
        sigma_plus = sigma
    return PassageTimes(tau, sigma, sigma_plus)


def sup_distance_process(traj: Trajectory, graph: ClusterGraph, times, metric: str = "ambient") -> list[int]:
    """Running maximum of the distance from the start, sampled at ``times``."""
    check_metric(metric)
    q = np.asarray(times, dtype=float)
    if q.size and (np.any(np.diff(q) < 0)):
        raise ParameterError("query times must be sorted")
    if q.size and (q[0] < 0 or q[-1] > traj.horizon):
        raise ParameterError("query times must lie in [0, horizon]")
    if metric == "ambient":
        lat = graph.lattice
        diff = np.abs(lat.coords_array(traj.vertices) - np.array(lat.coords(traj.start))[None, :])
        if lat.periodic:
            diff = np.minimum(diff, lat.side - diff)
        dist = diff.sum(axis=1)
    else:
        d = graph.chemical_distances_from(traj.start)
        dist = d[graph.local_index(traj.vertices)].astype(np.int64)
    running = np.maximum.accumulate(dist)
    k = np.searchsorted(traj.times, q, side="right") - 1
    return [int(v) for v in running[k]]


def clock_ratio(traj: Trajectory, n: int) -> float:
    """``T_n / n``."""
    if n < 1:
        raise ParameterError("n must be positive")
    if traj.n_jumps < n:
        raise InsufficientPathError(f"trajectory has {traj.n_jumps} jumps, fewer than n={n}")
    return float(traj.times[n]) / n


# --- batched streaming -------------------------------------------------------

def _chunks(first: int, count: int):
    out = []
    i = first
    end = first + count
    while i < end:
        m = min(CHUNK, end - i)
        out.append((i, m))
        i += m
    return out


def run_chunks(fn, first: int, count: int, workers: int = 1) -> list:
    """Apply ``fn(first_replica, count)`` over fixed-size chunks, results in chunk order."""
    chunks = _chunks(first, count)
    if workers <= 1 or len(chunks) <= 1:
        return [fn(a, m) for a, m in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda c: fn(*c), chunks))


@dataclass
class Functionals:
    """Per-replica streaming functionals over a batch of walks."""

    query_times: np.ndarray
    windows: np.ndarray
    positions: np.ndarray
    distances: np.ndarray
    sups: np.ndarray
    window_min: np.ndarray
    touched_face: np.ndarray
    jumps: np.ndarray


def batch_functionals(graph: ClusterGraph, start, center, query_times=(), windows=(), seed: int = 0,
                      replicas: int = 1, first_replica: int = 0, metric: str = "ambient",
                      workers: int = 1) -> Functionals:
    """Stream ``replicas`` walks and record positions, distances, running sups and window minima.

    Replica ``i`` uses the same streams as ``simulate(..., seed=rng.replica_seed(seed, i))``.
    """
    lat = graph.lattice
    start = lat.vertex(start)
    center = lat.vertex(center)
    if not graph.contains(start):
        raise RangeError(f"start {start} is not in the cluster")
    q = np.asarray(query_times, dtype=float).reshape(-1)
    if q.size and np.any(np.diff(q) < 0):
        raise ParameterError("query times must be sorted")
    win = np.asarray(windows, dtype=float).reshape(-1, 2)
    horizon = max(q.max() if q.size else 0.0, win[:, 1].max() if win.size else 0.0)
    if not horizon > 0:
        raise ParameterError("nothing to observe: horizon must be positive")
    table = distance_table(graph, center, metric)
    env_args = kernel_env(graph.env)
    vsrw = graph.mode == "VSRW"

    def one(first, m):
        kjs = rng.replica_keys(seed, first, m, rng.TAG_JUMP)
        khs = rng.replica_keys(seed, first, m, rng.TAG_HOLD)
        return _kernels.walk_functionals(np.int64(start), np.int64(center), q, win[:, 0].copy(), win[:, 1].copy(),
                                         float(horizon), kjs, khs, vsrw, *env_args, table)

    parts = run_chunks(one, first_replica, replicas, workers)
    if not parts:
        z = np.empty((0, q.size), dtype=np.int64)
        return Functionals(q, win, z, z, z, np.empty((0, len(win)), dtype=np.int64),
                           np.empty(0, dtype=bool), np.empty(0, dtype=np.int64))
    cat = [np.concatenate([p[i] for p in parts]) for i in range(6)]
    return Functionals(q, win, *cat)


def batch_survival(graph: ClusterGraph, start, t0s, t_max: float, coefs, inv_beta: float, seed: int,
                   replicas: int, first_replica: int = 0, metric: str = "ambient", workers: int = 1):
    """Per-replica survival flags of shape ``(R, len(coefs), len(t0s))`` plus face flags."""
    lat = graph.lattice
    start = lat.vertex(start)
    table = distance_table(graph, start, metric)
    env_args = kernel_env(graph.env)
    t0s = np.asarray(t0s, dtype=float)
    coefs = np.asarray(coefs, dtype=float)
    vsrw = graph.mode == "VSRW"

    def one(first, m):
        kjs = rng.replica_keys(seed, first, m, rng.TAG_JUMP)
        khs = rng.replica_keys(seed, first, m, rng.TAG_HOLD)
        return _kernels.walk_survival(np.int64(start), t0s, float(t_max), coefs, float(inv_beta),
                                      kjs, khs, vsrw, *env_args, table)

    parts = run_chunks(one, first_replica, replicas, workers)
    alive = np.concatenate([p[0] for p in parts])
    touched = np.concatenate([p[1] for p in parts])
    return alive, touched
