"""Exact finite-state computations: semigroup, Green function, capacity.

Everything here works on the cluster in local indexing (the order of
``graph.vertices``).  The symmetric matrix ``A = D - W`` (``D = diag(pi)``)
carries all the linear algebra; the generator is ``L = -Theta^{-1} A``.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse import linalg as splinalg
from scipy.stats import poisson

from .cluster import ClusterGraph, check_metric
from .errors import ParameterError, RangeError, SizeError, SolverError

SPARSE_BUDGET = 40_000
DENSE_BUDGET = 2_000
DIRECT_BELOW = 500
CG_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    graph: ClusterGraph
    vertices: np.ndarray
    theta: np.ndarray
    pi: np.ndarray
    conductance: sparse.csr_matrix   # W, local indexing
    rates: sparse.csr_matrix         # L

    @property
    def mode(self) -> str:
        return self.graph.mode

    @property
    def size(self) -> int:
        return int(self.vertices.size)

    @property
    def laplacian(self) -> sparse.csr_matrix:
        """``A = D - W``, symmetric positive semi-definite."""
        return (sparse.diags(self.pi) - self.conductance).tocsr()

    def locate(self, vertices) -> np.ndarray:
        """Local indices of global vertex ids; range error if any is outside the cluster."""
        v = np.atleast_1d(np.asarray([self.graph.lattice.vertex(x) for x in np.atleast_1d(vertices)], dtype=np.int64))
        idx = self.graph.local_index(v)
        if np.any(idx < 0):
            raise RangeError(f"vertices {v[idx < 0].tolist()} are not in the cluster")
        return idx

    def dense(self) -> np.ndarray:
        return self.rates.toarray()


def generator_matrix(graph: ClusterGraph, max_vertices: int = SPARSE_BUDGET) -> GeneratorMatrix:
    """Rates ``L(x, y) = w_xy / theta(x)`` with diagonal ``-pi(x) / theta(x)``."""
    if graph.size > max_vertices:
        raise SizeError(f"cluster has {graph.size} vertices, exact budget is {max_vertices}",
                        "exact_vertices", max_vertices)
    w = graph.adjacency.tocsr()
    pi = np.asarray(w.sum(axis=1)).ravel()
    theta = np.ones(graph.size) if graph.mode == "VSRW" else pi.copy()
    safe = np.where(theta > 0, theta, 1.0)
    rates = (sparse.diags(1.0 / safe) @ (w - sparse.diags(pi))).tocsr()
    return GeneratorMatrix(graph, graph.vertices, theta, pi, w, rates)


# --- semigroup -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KernelMatrix:
    t: float
    values: np.ndarray        # q_t(x, y), local indexing
    tol: float                # Poisson tail mass actually dropped
    vertices: np.ndarray
    theta: np.ndarray
    terms: int = 0

    def mass(self) -> np.ndarray:
        return self.values @ self.theta

    def to_csv(self) -> str:
        return _matrix_csv(self.values)


def _poisson_terms(mean: float, tol: float) -> tuple[np.ndarray, float]:
    """Poisson(mean) weights up to the first K with tail mass below ``tol``."""
    if mean == 0:
        return np.ones(1), 0.0
    k_max = int(mean + 10 * math.sqrt(mean) + 50)
    while poisson.sf(k_max, mean) >= tol:
        k_max *= 2
    ks = np.arange(k_max + 1)
    tails = poisson.sf(ks, mean)
    k = int(np.argmax(tails < tol))
    return poisson.pmf(np.arange(k + 1), mean), float(tails[k])


def heat_kernel_exact(gen: GeneratorMatrix, t: float, tol: float = 1e-12) -> KernelMatrix:
    """``q_t(x, y) = P_x(Y_t = y) / theta(y)`` by uniformization."""
    if not 0 < tol < 1:
        raise ParameterError("tol must lie in (0, 1)")
    if t < 0:
        raise ParameterError("t must be non-negative")
    n = gen.size
    if n > DENSE_BUDGET:
        raise SizeError(f"dense kernel needs {n} vertices, budget is {DENSE_BUDGET}", "dense_vertices", DENSE_BUDGET)
    L = gen.dense()
    lam = float(np.max(-np.diag(L))) if n else 0.0
    if lam == 0.0 or t == 0.0:
        expm = np.eye(n)
        dropped, nterms = 0.0, 1
    else:
        P = np.eye(n) + L / lam
        weights, dropped = _poisson_terms(lam * t, tol)
        expm = weights[0] * np.eye(n)
        Pk = np.eye(n)
        for wk in weights[1:]:
            Pk = Pk @ P
            expm += wk * Pk
        nterms = weights.size
    theta = np.where(gen.theta > 0, gen.theta, 1.0)
    return KernelMatrix(float(t), expm / theta[None, :], dropped, gen.vertices, gen.theta, nterms)


# --- Green function ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GreenSolution:
    y: int
    values: np.ndarray        # g(., y) on the cluster, local indexing
    absorbing: np.ndarray     # local indices
    residual: float
    vertices: np.ndarray
    method: str = "cg"

    def at(self, gen: GeneratorMatrix, x) -> float:
        return float(self.values[gen.locate([x])[0]])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x_index", "y_index", "value"])
        for x, v in zip(self.vertices, self.values):
            w.writerow([int(x), self.y, repr(float(v))])
        return buf.getvalue()


def _solve_spd(A: sparse.csr_matrix, b: np.ndarray) -> tuple[np.ndarray, str]:
    n = A.shape[0]
    if n < DIRECT_BELOW:
        return np.linalg.solve(A.toarray(), b), "dense"
    diag = A.diagonal()
    M = sparse.diags(1.0 / diag)
    x, info = splinalg.cg(A, b, rtol=CG_RTOL, atol=0.0, M=M, maxiter=20 * n)
    if info != 0:
        raise SolverError(f"conjugate gradients did not converge (info={info})")
    return x, "cg"


def _dirichlet_mask(gen: GeneratorMatrix, boundary: np.ndarray) -> np.ndarray:
    mask = np.zeros(gen.size, dtype=bool)
    mask[boundary] = True
    return mask


def _grounded_components(gen: GeneratorMatrix, free: np.ndarray, boundary_mask: np.ndarray):
    """Component labels of the free vertices and whether each touches the boundary."""
    W = gen.conductance
    sub = W[free][:, free]
    ncomp, labels = csgraph.connected_components(sub, directed=False)
    leak = np.asarray(W[free][:, boundary_mask].sum(axis=1)).ravel() if boundary_mask.any() else np.zeros(free.size)
    grounded = np.zeros(ncomp, dtype=bool)
    np.logical_or.at(grounded, labels, leak > 0)
    return labels, grounded


def green_exact(gen: GeneratorMatrix, y, absorbing) -> GreenSolution:
    """Green function ``g(., y)`` of the walk killed on ``absorbing``.

    Solves ``-L g = delta_y / theta(y)`` off the absorbing set, equivalently
    ``A g = e_y``, so ``g`` is the same for both walk modes.
    """
    yi = int(gen.locate([y])[0])
    ab = np.unique(gen.locate(list(absorbing))) if len(absorbing) else np.empty(0, dtype=np.int64)
    if ab.size == 0:
        raise ParameterError("absorbing set must be nonempty")
    amask = _dirichlet_mask(gen, ab)
    if amask[yi]:
        raise ParameterError("target vertex lies in the absorbing set")
    free = np.flatnonzero(~amask)
    labels, grounded = _grounded_components(gen, free, amask)
    pos = int(np.searchsorted(free, yi))
    comp = labels[pos]
    if not grounded[comp]:
        raise SolverError("absorbing set does not touch the component of the target; system is singular")
    keep = free[labels == comp]
    A = gen.laplacian[keep][:, keep].tocsr()
    b = np.zeros(keep.size)
    b[int(np.searchsorted(keep, yi))] = 1.0
    sol, method = _solve_spd(A, b)
    g = np.zeros(gen.size)
    g[keep] = sol
    # residual of L g + delta_y / theta(y) on the free set
    theta = np.where(gen.theta > 0, gen.theta, 1.0)
    r = gen.rates @ g
    r[yi] += 1.0 / theta[yi]
    res = float(np.max(np.abs(r[free]))) if free.size else 0.0
    return GreenSolution(int(gen.vertices[yi]), g, ab, res, gen.vertices, method)


def green_time_integral(gen: GeneratorMatrix, y, absorbing, T: float, tol: float = 1e-13):
    """``int_0^T q_s^U(., y) ds`` for the killed semigroup, by uniformization.

    Returns ``(values, residual_mass)`` where ``residual_mass`` is the largest
    survival probability at time ``T``.
    """
    yi = int(gen.locate([y])[0])
    ab = np.unique(gen.locate(list(absorbing)))
    amask = _dirichlet_mask(gen, ab)
    free = np.flatnonzero(~amask)
    LU = gen.rates[free][:, free].tocsr()
    lam = float(np.max(-LU.diagonal()))
    P = (sparse.identity(free.size) + LU / lam).tocsr()
    mean = lam * T
    # int_0^T e^{sL} ds = (1/lam) sum_k P(N_{lam T} > k) P^k
    k_max = int(mean + 12 * math.sqrt(mean) + 50)
    tails = poisson.sf(np.arange(k_max + 1), mean)
    v = np.zeros(free.size)
    v[int(np.searchsorted(free, yi))] = 1.0
    ones = np.ones(free.size)
    acc = np.zeros(free.size)
    surv = np.zeros(free.size)
    pmf = poisson.pmf(np.arange(k_max + 1), mean)
    for k in range(k_max + 1):
        acc += tails[k] * v
        surv += pmf[k] * ones
        if tails[k] < tol and k > mean:
            break
        v = P @ v
        ones = P @ ones
    out = np.zeros(gen.size)
    theta = gen.theta[yi] if gen.theta[yi] > 0 else 1.0
    out[free] = acc / lam / theta
    return out, float(surv.max())


# --- capacity --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CapacityResult:
    F: np.ndarray              # global ids
    weights: np.ndarray        # e_F on F, same order
    capacity: float
    outer_size: int
    escape: np.ndarray = field(repr=False, default=None)   # h on the cluster, local indexing

    def as_dict(self) -> dict:
        return {"F": [int(v) for v in self.F], "weights": [float(v) for v in self.weights],
                "capacity": float(self.capacity), "outer_size": self.outer_size}


def escape_function(gen: GeneratorMatrix, F_idx: np.ndarray, O_idx: np.ndarray) -> np.ndarray:
    """``h = P(reach outer before F)``: 0 on F, 1 on outer, harmonic elsewhere."""
    bmask = _dirichlet_mask(gen, np.concatenate([F_idx, O_idx]))
    omask = _dirichlet_mask(gen, O_idx)
    free = np.flatnonzero(~bmask)
    if free.size == 0:
        raise ParameterError("F and outer cover the whole cluster; the harmonic system is degenerate")
    h = np.zeros(gen.size)
    h[O_idx] = 1.0
    labels, grounded = _grounded_components(gen, free, bmask)
    keep = free[grounded[labels]]
    if keep.size:
        A = gen.laplacian[keep][:, keep].tocsr()
        b = np.asarray(gen.conductance[keep][:, omask].sum(axis=1)).ravel()
        sol, _ = _solve_spd(A, b)
        h[keep] = np.clip(sol, 0.0, 1.0)
    return h


def equilibrium_capacity(gen: GeneratorMatrix, F, outer) -> CapacityResult:
    """Equilibrium weights ``e_F`` and ``Cap(F) = sum e_F theta``, escaping means reaching ``outer``."""
    F_idx = np.unique(gen.locate(list(F)))
    O_idx = np.unique(gen.locate(list(outer))) if len(outer) else np.empty(0, dtype=np.int64)
    if F_idx.size == 0:
        raise ParameterError("F must be nonempty")
    if np.intersect1d(F_idx, O_idx).size:
        raise ParameterError("F and outer must be disjoint")
    h = escape_function(gen, F_idx, O_idx)
    pi = gen.pi[F_idx]
    flow = gen.conductance[F_idx] @ h
    e = np.where(pi > 0, flow / np.where(pi > 0, pi, 1.0), 0.0)
    cap = float(np.sum(e * gen.theta[F_idx]))
    return CapacityResult(gen.vertices[F_idx], e, cap, int(O_idx.size), h)


def hitting_identity_residual(gen: GeneratorMatrix, F, outer, x, weight: str = "pi") -> float:
    """``|P_x(hit F before outer) - sum_y g(x, y) e_F(y) w(y)|`` for ``x`` outside ``F``.

    With ``weight="pi"`` the identity is exact for both walk modes; ``"theta"``
    uses the mode's reversing measure and is exact for CSRW only.
    """
    if weight not in ("pi", "theta"):
        raise ParameterError("weight must be 'pi' or 'theta'")
    xi = int(gen.locate([x])[0])
    cap = equilibrium_capacity(gen, F, outer)
    F_idx = gen.locate(list(cap.F))
    if xi in set(F_idx.tolist()):
        raise ParameterError("x must lie outside F")
    direct = 1.0 - cap.escape[xi]
    O_idx = np.unique(gen.locate(list(outer)))
    amask = _dirichlet_mask(gen, O_idx)
    if amask[xi]:
        return abs(direct)      # g(x, .) vanishes on the absorbing set
    free = np.flatnonzero(~amask)
    labels, grounded = _grounded_components(gen, free, amask)
    px = int(np.searchsorted(free, xi))
    if not grounded[labels[px]]:
        raise SolverError("outer set does not touch the component of x")
    keep = free[labels == labels[px]]
    w = gen.pi if weight == "pi" else gen.theta
    b = np.zeros(gen.size)
    b[F_idx] = cap.weights * w[F_idx]
    A = gen.laplacian[keep][:, keep].tocsr()
    sol, _ = _solve_spd(A, b[keep])
    rhs = float(sol[int(np.searchsorted(keep, xi))])
    return abs(direct - rhs)


# --- Carne-Varopoulos ------------------------------------------------------------

def carne_varopoulos_check(kernel: KernelMatrix, graph: ClusterGraph, constants: tuple[float, float] | None = None,
                           metric: str = "ambient") -> dict:
    """Fitted envelope constants for ``q_t(x, y) sqrt(theta(x) theta(y))``.

    ``c1`` is the supremum of the normalized kernel; ``c2`` is then the largest
    rate with ``value <= c1 exp(-c2 d^2 / t)`` over pairs with ``d <= t`` and
    ``c2_poisson`` the largest with ``value <= c1 exp(-c2 d log(d / t))`` over
    pairs with ``d > t``.  A supplied ``(c1, c2)`` is checked in both regimes.
    """
    check_metric(metric)
    t = kernel.t
    verts = kernel.vertices
    n = verts.size
    theta = kernel.theta
    norm = kernel.values * np.sqrt(np.outer(theta, theta))
    D = np.vstack([graph.distances_from(int(v), metric) for v in verts])
    with np.errstate(divide="ignore"):
        logv = np.log(np.where(norm > 0, norm, 0.0))
    c1 = float(norm.max()) if n else 0.0
    logc1 = math.log(c1) if c1 > 0 else -math.inf
    off = (D > 0) & np.isfinite(D) & (norm > 0)
    records = []

    def fit(mask, scale, regime):
        if not mask.any() or t == 0:
            return None
        rates = (logc1 - logv[mask]) / scale[mask]
        j = int(np.argmin(rates))
        xs, ys = np.nonzero(mask)
        rec = {"pair": [int(verts[xs[j]]), int(verts[ys[j]])], "regime": regime,
               "c1": c1, "c2": float(rates[j]), "pairs": int(mask.sum())}
        records.append(rec)
        return float(rates[j])

    with np.errstate(divide="ignore", invalid="ignore"):
        gauss_scale = D**2 / t if t > 0 else np.full_like(D, np.inf)
        pois_scale = D * np.log(D / t) if t > 0 else np.full_like(D, np.inf)
    c2 = fit(off & (D <= t), gauss_scale, "gaussian")
    c2p = fit(off & (D > t), pois_scale, "poisson")
    report = {"t": t, "metric": metric, "c1": c1, "c2": c2, "c2_poisson": c2p, "records": records}
    if constants is not None:
        k1, k2 = constants
        with np.errstate(divide="ignore", invalid="ignore"):
            bound_g = np.log(k1) - k2 * gauss_scale
            bound_p = np.log(k1) - k2 * pois_scale
        diag = (D == 0) & (norm > 0)
        viol = (diag & (logv > math.log(k1) + 1e-12)) | \
               (off & (D <= t) & (logv > bound_g + 1e-12)) | (off & (D > t) & (logv > bound_p + 1e-12))
        xs, ys = np.nonzero(viol)
        report["checked"] = {"c1": k1, "c2": k2, "violations": [[int(verts[a]), int(verts[b])] for a, b in zip(xs, ys)]}
    return report


def cv_report_json(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=True)


# --- whole-space surrogates ------------------------------------------------------

def richardson(v_small, r_small: float, v_large, r_large: float):
    """Remove a ``c / R`` truncation term from values at two shell radii."""
    v_small = np.asarray(v_small, dtype=float)
    v_large = np.asarray(v_large, dtype=float)
    return (r_large * v_large - r_small * v_small) / (r_large - r_small)


def relative_change(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.abs(b)))


def _matrix_csv(M: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x_index", "y_index", "value"])
    for i in range(M.shape[0]):
        for j in range(M.shape[1]):
            w.writerow([i, j, repr(float(M[i, j]))])
    return buf.getvalue()
