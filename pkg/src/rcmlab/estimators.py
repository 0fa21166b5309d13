"""Monte Carlo estimators with mergeable accumulators."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import walker
from .cluster import ClusterGraph, check_metric
from .errors import MergeError, ParameterError, RangeError

PROBE_KINDS = ("exceedance", "confinement", "return")


def binomial_se(k, n) -> float:
    if n <= 0:
        return math.nan
    p = k / n
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


@dataclass(frozen=True)
class KernelEstimate:
    """Pooled hit counts for ``q_t(x, .)``.

    ``replicas`` counts every replica run; ``contaminated`` of them touched the
    box face and were left out of ``counts`` when exclusion was on.
    """

    identity: tuple          # (environment fingerprint, mode, x, t, excluded)
    x: int
    t: float
    replicas: int = 0
    contaminated: int = 0
    counts: dict = field(default_factory=dict)
    theta: dict = field(default_factory=dict)

    @property
    def used(self) -> int:
        return self.replicas - (self.contaminated if self.identity[4] else 0)

    @classmethod
    def empty(cls, graph: ClusterGraph, x, t: float, exclude_contaminated: bool = True) -> "KernelEstimate":
        x = graph.lattice.vertex(x)
        ident = (graph.env.fingerprint(), graph.mode, x, float(t), bool(exclude_contaminated))
        return cls(ident, x, float(t))

    def estimate(self, y) -> float:
        n = self.used
        c = self.counts.get(int(y), 0)
        if n == 0 or c == 0:
            return 0.0
        return c / n / self.theta[int(y)]

    def standard_error(self, y) -> float:
        n = self.used
        c = self.counts.get(int(y), 0)
        if n == 0:
            return math.nan
        th = self.theta.get(int(y), 1.0)
        return binomial_se(c, n) / th

    def rows(self) -> list[tuple[int, int, float, float]]:
        return [(y, c, self.estimate(y), self.standard_error(y)) for y, c in sorted(self.counts.items())]

    def total_mass(self) -> float:
        return float(sum(self.estimate(y) * self.theta[y] for y in self.counts))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["y", "count", "estimate", "se", "replicas", "contaminated"])
        for y, c, q, se in self.rows():
            w.writerow([y, c, repr(q), repr(se), self.replicas, self.contaminated])
        return buf.getvalue()


def merge(a: KernelEstimate, b: KernelEstimate) -> KernelEstimate:
    """Pool two estimates of the same probe."""
    if a.identity != b.identity:
        raise MergeError("cannot merge estimates of different probes")
    counts = dict(a.counts)
    for y, c in b.counts.items():
        counts[y] = counts.get(y, 0) + c
    theta = {**a.theta, **b.theta}
    return KernelEstimate(a.identity, a.x, a.t, a.replicas + b.replicas, a.contaminated + b.contaminated,
                          dict(sorted(counts.items())), dict(sorted(theta.items())))


def estimate_kernel_mc(graph: ClusterGraph, x, t: float, R: int, seed: int, first_replica: int = 0,
                       exclude_contaminated: bool = True, workers: int = 1) -> KernelEstimate:
    """``q_hat_t(x, y) = #{Y_t = y} / (R theta(y))`` over replicas ``first_replica .. first_replica+R-1``."""
    if R < 0:
        raise ParameterError("replica count must be non-negative")
    if not t > 0:
        raise ParameterError("t must be positive")
    est = KernelEstimate.empty(graph, x, t, exclude_contaminated)
    if R == 0:
        return est
    f = walker.batch_functionals(graph, x, x, [t], (), seed=seed, replicas=R, first_replica=first_replica,
                                 workers=workers)
    pos = f.positions[:, 0]
    bad = int(f.touched_face.sum())
    if exclude_contaminated:
        pos = pos[~f.touched_face]
    ys, cs = np.unique(pos, return_counts=True)
    th = graph.theta_at(ys)
    return KernelEstimate(est.identity, est.x, est.t, int(R), bad,
                          {int(y): int(c) for y, c in zip(ys, cs)},
                          {int(y): float(v) for y, v in zip(ys, th)})


# --- tail probes -------------------------------------------------------------------

@dataclass(frozen=True)
class TailProbeSpec:
    kind: str
    center: int
    radius: float
    time: float
    eta: float | None = None

    def __post_init__(self):
        if self.kind not in PROBE_KINDS:
            raise ParameterError(f"probe kind must be one of {PROBE_KINDS}, got {self.kind!r}")
        if self.radius < 0:
            raise ParameterError("radius must be non-negative")
        if not self.time > 0:
            raise ParameterError("time must be positive")
        if self.kind == "return" and (self.eta is None or not self.eta > 1):
            raise ParameterError("return probes need eta > 1")

    @property
    def horizon(self) -> float:
        return self.time * self.eta if self.kind == "return" else self.time

    def describe(self) -> str:
        s = f"{self.kind}:r={self.radius!r}:t={self.time!r}"
        return s + (f":eta={self.eta!r}" if self.kind == "return" else "")


@dataclass(frozen=True)
class TailEstimate:
    spec: TailProbeSpec
    estimate: float
    se: float
    replicas: int
    contaminated: int
    seed: int
    hits: int

    def __iter__(self):
        return iter((self.estimate, self.se))


def estimate_tail_probabilities(graph: ClusterGraph, specs, start, R: int, seed: int, metric: str = "ambient",
                                horizon: float | None = None, first_replica: int = 0,
                                exclude_contaminated: bool = True, workers: int = 1) -> list[TailEstimate]:
    """Several probes evaluated on one shared set of replica paths.

    Sharing the paths makes nested events (e.g. confinement at increasing
    times) exactly monotone.  All probes must have the same center.
    """
    check_metric(metric)
    specs = list(specs)
    if not specs:
        return []
    centers = {graph.lattice.vertex(s.center) for s in specs}
    if len(centers) != 1:
        raise ParameterError("probes evaluated together must share a center")
    center = centers.pop()
    if not graph.contains(center) and metric == "chemical":
        raise RangeError("probe center is not in the cluster")
    need = max(s.horizon for s in specs)
    if horizon is not None and horizon < need:
        raise ParameterError(f"horizon {horizon} is shorter than the probe window end {need}")
    if R < 1:
        raise ParameterError("need at least one replica")
    qtimes = sorted({s.time for s in specs if s.kind != "return"})
    windows = sorted({(s.time, s.horizon) for s in specs if s.kind == "return"})
    f = walker.batch_functionals(graph, start, center, qtimes, windows, seed=seed, replicas=R,
                                 first_replica=first_replica, metric=metric, workers=workers)
    keep = ~f.touched_face if exclude_contaminated else np.ones(R, dtype=bool)
    n = int(keep.sum())
    bad = int(f.touched_face.sum())
    out = []
    for s in specs:
        if s.kind == "return":
            col = f.window_min[:, windows.index((s.time, s.horizon))]
            hit = (col >= 0) & (col <= 2 * s.radius)
        else:
            j = qtimes.index(s.time)
            if s.kind == "exceedance":
                hit = f.distances[:, j] >= s.radius
            else:
                hit = f.sups[:, j] <= s.radius
        k = int(np.count_nonzero(hit & keep))
        p = k / n if n else math.nan
        out.append(TailEstimate(s, p, binomial_se(k, n), int(R), bad, int(seed), k))
    return out


def estimate_tail_probability(graph: ClusterGraph, spec: TailProbeSpec, start, R: int, seed: int,
                              metric: str = "ambient", **kw) -> TailEstimate:
    """Empirical frequency of one probe event with its binomial standard error."""
    return estimate_tail_probabilities(graph, [spec], start, R, seed, metric, **kw)[0]


def tail_csv(estimates) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["probe", "estimate", "se", "replicas", "contaminated", "seed"])
    for e in estimates:
        w.writerow([e.spec.describe(), repr(e.estimate), repr(e.se), e.replicas, e.contaminated, e.seed])
    return buf.getvalue()
