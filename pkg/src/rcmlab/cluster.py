"""The open cluster of the base point, its weights and its metrics."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .errors import ParameterError, RangeError
from .lattice import Environment, LatticeSpec, generate_environment

Mode = Literal["CSRW", "VSRW"]
Metric = Literal["ambient", "chemical"]
MODES = ("CSRW", "VSRW")
METRICS = ("ambient", "chemical")


def check_mode(mode: str) -> str:
    m = str(mode).upper()
    if m not in MODES:
        raise ParameterError(f"walk mode must be CSRW or VSRW, got {mode!r}")
    return m


def check_metric(metric: str) -> str:
    if metric not in METRICS:
        raise ParameterError(f"metric must be 'ambient' or 'chemical', got {metric!r}")
    return metric


def box_adjacency(env: Environment) -> sparse.csr_matrix:
    """Symmetric conductance matrix of the whole box (positive edges only)."""
    lat = env.lattice
    cond = env.conductances()
    n = lat.n_vertices
    rows, cols, vals = [], [], []
    idx = np.arange(n, dtype=np.int64)
    coords = lat.coords_array(idx)
    for axis in range(lat.dim):
        stride = lat.side**axis
        w = cond[:, axis]
        nb = np.where(coords[:, axis] < lat.side - 1, idx + stride, idx - (lat.side - 1) * stride)
        keep = w > 0
        rows.append(idx[keep])
        cols.append(nb[keep])
        vals.append(w[keep])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    # duplicates (parallel edges on a side-2 torus) are summed by the constructor
    w = sparse.coo_matrix((np.concatenate([v, v]), (np.concatenate([r, c]), np.concatenate([c, r]))), shape=(n, n))
    w = w.tocsr()
    w.sum_duplicates()
    return w


@dataclass(frozen=True, eq=False)
class ClusterGraph:
    """Connected component of ``base`` through positive conductances.

    ``members`` is ``None`` when the environment is strictly positive, in which
    case the cluster is the whole box and nothing is materialized up front.
    """

    env: Environment
    base: int
    mode: str
    members: np.ndarray | None = None
    _memo: dict = field(default_factory=dict, repr=False)

    @property
    def lattice(self) -> LatticeSpec:
        return self.env.lattice

    @property
    def whole_box(self) -> bool:
        return self.members is None

    @property
    def size(self) -> int:
        return self.lattice.n_vertices if self.members is None else int(self.members.size)

    @property
    def vertices(self) -> np.ndarray:
        if self.members is None:
            self.lattice._check_materializable()
            return np.arange(self.lattice.n_vertices, dtype=np.int64)
        return self.members

    def contains(self, v) -> bool:
        v = self.lattice.vertex(v)
        if self.members is None:
            return True
        i = np.searchsorted(self.members, v)
        return bool(i < self.members.size and self.members[i] == v)

    def local_index(self, vertices) -> np.ndarray:
        """Positions of global vertex ids inside ``self.vertices`` (-1 if absent)."""
        v = np.atleast_1d(np.asarray(vertices, dtype=np.int64))
        if self.members is None:
            return v.copy()
        i = np.searchsorted(self.members, v)
        i = np.minimum(i, self.members.size - 1)
        return np.where(self.members[i] == v, i, -1)

    def theta_at(self, vertices) -> np.ndarray:
        v = np.atleast_1d(np.asarray(vertices, dtype=np.int64))
        if self.mode == "VSRW":
            return np.ones(v.shape[0])
        return self.env.pi_at(v)

    def theta(self, v) -> float:
        return float(self.theta_at([self.lattice.vertex(v)])[0])

    @property
    def pi(self) -> np.ndarray:
        """``pi`` on the cluster vertices, in ``vertices`` order."""
        if "pi" not in self._memo:
            self._memo["pi"] = self.env.pi_weights()[self.vertices]
        return self._memo["pi"]

    @property
    def theta_vector(self) -> np.ndarray:
        return np.ones(self.size) if self.mode == "VSRW" else self.pi

    @property
    def adjacency(self) -> sparse.csr_matrix:
        """Conductance matrix restricted to the cluster, local indexing."""
        if "adj" not in self._memo:
            w = box_adjacency(self.env)
            if self.members is not None:
                w = w[self.members][:, self.members].tocsr()
            self._memo["adj"] = w
        return self._memo["adj"]

    def chemical_distances_from(self, x) -> np.ndarray:
        """Chemical distance from ``x`` to every cluster vertex (local order); memoized."""
        x = self.lattice.vertex(x)
        key = ("chem", x)
        if key not in self._memo:
            if self.env.strictly_positive:
                d = self.lattice.ambient_distances_from(x).astype(float)
            else:
                li = int(self.local_index([x])[0])
                if li < 0:
                    d = np.full(self.size, np.inf)
                else:
                    d = csgraph.shortest_path(self.adjacency, unweighted=True, indices=li, directed=False)
            self._memo[key] = d
        return self._memo[key]

    def distances_from(self, x, metric: str = "ambient") -> np.ndarray:
        """Distances from ``x`` to all cluster vertices in ``vertices`` order."""
        check_metric(metric)
        if metric == "chemical":
            return self.chemical_distances_from(x)
        d = self.lattice.ambient_distances_from(x).astype(float)
        return d if self.members is None else d[self.members]

    def summary(self) -> dict:
        return {"vertex_count": self.size, "base": self.base, "mode": self.mode, "whole_box": self.whole_box}


def extract_cluster(env: Environment, base, mode: str = "CSRW") -> ClusterGraph:
    """Component of ``base`` through edges of positive conductance.

    A base point with no open incident edge gives a valid singleton cluster.
    """
    mode = check_mode(mode)
    base = env.lattice.vertex(base)
    if env.strictly_positive:
        return ClusterGraph(env, base, mode, None)
    w = box_adjacency(env)
    _, labels = csgraph.connected_components(w, directed=False)
    members = np.flatnonzero(labels == labels[base]).astype(np.int64)
    return ClusterGraph(env, base, mode, members)


def largest_cluster_environment(lattice: LatticeSpec, model, seed: int, base, max_tries: int = 100) -> tuple[Environment, int]:
    """Regenerate with incremented seeds until ``base`` lies in the largest cluster."""
    base = lattice.vertex(base)
    for k in range(max_tries):
        env = generate_environment(lattice, model, seed + k)
        if env.strictly_positive:
            return env, seed + k
        _, labels = csgraph.connected_components(box_adjacency(env), directed=False)
        counts = np.bincount(labels)
        if counts[labels[base]] == counts.max() and counts.max() > 1:
            return env, seed + k
    raise ParameterError(f"base point not in the largest cluster after {max_tries} seeds")


def distance(graph: ClusterGraph, x, y, metric: str = "ambient") -> float:
    """Shortest-path length; ``inf`` when ``x`` and ``y`` are not chemically connected."""
    check_metric(metric)
    lat = graph.lattice
    x = lat.vertex(x)
    y = lat.vertex(y)
    if metric == "ambient":
        return lat.ambient_distance(x, y)
    if x == y:
        return 0
    if not (graph.contains(x) and graph.contains(y)):
        return float("inf")
    if graph.env.strictly_positive:
        return lat.ambient_distance(x, y)
    d = graph.chemical_distances_from(x)[graph.local_index([y])[0]]
    return int(d) if np.isfinite(d) else float("inf")


def _ambient_ball(lat: LatticeSpec, x: int, r: int) -> np.ndarray:
    """Vertices of the box within ambient distance ``r`` of ``x`` (no box materialization)."""
    c0 = np.array(lat.coords(x))
    span = np.arange(-r, r + 1)
    grids = np.meshgrid(*([span] * lat.dim), indexing="ij")
    offs = np.stack([g.ravel() for g in grids], axis=1)
    offs = offs[np.abs(offs).sum(axis=1) <= r]
    pts = c0[None, :] + offs
    if lat.periodic:
        pts = pts % lat.side
        pts = np.unique(pts, axis=0)
    else:
        pts = pts[np.all((pts >= 0) & (pts < lat.side), axis=1)]
    return (pts * lat.strides[None, :]).sum(axis=1)


def ball_profile(graph: ClusterGraph, x, r_max: int, metric: str = "ambient") -> tuple[np.ndarray, np.ndarray]:
    """Counts and theta-volumes of ``B(x, r)`` for ``r = 0..r_max``."""
    check_metric(metric)
    x = graph.lattice.vertex(x)
    if not graph.contains(x):
        raise RangeError(f"vertex {x} is not in the cluster")
    if r_max < 0:
        raise ParameterError("radius must be non-negative")
    small = graph.lattice.n_edge_slots <= 5_000_000
    if metric == "ambient" and (graph.whole_box or not small):
        pts = _ambient_ball(graph.lattice, x, r_max)
        if not graph.whole_box:
            pts = pts[graph.local_index(pts) >= 0]
        lat = graph.lattice
        diff = np.abs(lat.coords_array(pts) - np.array(lat.coords(x))[None, :])
        if lat.periodic:
            diff = np.minimum(diff, lat.side - diff)
        d = diff.sum(axis=1)
        theta = graph.theta_at(pts)
    else:
        d = graph.distances_from(x, metric)
        theta = graph.theta_vector
        keep = d <= r_max
        d = d[keep].astype(np.int64)
        theta = theta[keep]
    counts = np.bincount(d.astype(np.int64), minlength=r_max + 1)[: r_max + 1]
    vols = np.bincount(d.astype(np.int64), weights=theta, minlength=r_max + 1)[: r_max + 1]
    return np.cumsum(counts), np.cumsum(vols)


def ball_volume(graph: ClusterGraph, x, r: int, metric: str = "ambient") -> tuple[int, float]:
    """``(#B(x, r), V(x, r))`` restricted to the cluster."""
    counts, vols = ball_profile(graph, x, int(r), metric)
    return int(counts[-1]), float(vols[-1])


def cluster_summary_csv(graph: ClusterGraph, x, r_max: int, metric: str = "ambient") -> str:
    """CSV rows ``r,count,theta_volume`` for ``r = 0..r_max``."""
    counts, vols = ball_profile(graph, x, r_max, metric)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["r", "count", "theta_volume"])
    for r, (c, v) in enumerate(zip(counts, vols)):
        w.writerow([r, int(c), repr(float(v))])
    return buf.getvalue()
