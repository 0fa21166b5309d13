"""LIL functionals, rate-function survival and power-law fits."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from . import walker
from .cluster import ClusterGraph, check_metric
from .errors import ParameterError
from .estimators import binomial_se

LIL_KINDS = ("limsup-endpoint", "limsup-sup", "liminf-sup")
EE = math.exp(math.e)


def dyadic_times(t_max: float, t_min: float = EE) -> np.ndarray:
    """``2**k`` for every ``k`` with ``t_min <= 2**k <= t_max``."""
    k0 = math.ceil(math.log2(t_min))
    k1 = math.floor(math.log2(t_max))
    if k1 < k0:
        raise ParameterError(f"no dyadic time in [{t_min}, {t_max}]")
    return 2.0 ** np.arange(k0, k1 + 1)


def lil_normalizer(times, kind: str, beta: float) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    ll = np.log(np.log(t))
    power = -1.0 / beta if kind == "liminf-sup" else 1.0 - 1.0 / beta
    return t ** (1.0 / beta) * ll**power


@dataclass(frozen=True, eq=False)
class LILSeries:
    kind: str
    beta: float
    times: np.ndarray
    values: np.ndarray         # (replicas, times)
    loglog_power: float

    @property
    def envelope(self) -> np.ndarray:
        """Ensemble running max (limsup kinds) or running min (liminf kind) over time."""
        if self.kind == "liminf-sup":
            return np.minimum.accumulate(self.values.min(axis=0))
        return np.maximum.accumulate(self.values.max(axis=0))

    @property
    def mean_running(self) -> np.ndarray:
        """Replica-averaged per-replica running max (or min)."""
        acc = np.minimum.accumulate if self.kind == "liminf-sup" else np.maximum.accumulate
        return acc(self.values, axis=1).mean(axis=0)

    def ratio_to(self, C: float) -> np.ndarray:
        """Statistic measured in units of ``C`` times the normalizer."""
        if not C > 0:
            raise ParameterError("C must be positive")
        return self.values / C

    def stabilization(self, last: int = 4, series: str = "envelope") -> float:
        """Relative change of a summary series over its last ``last`` epochs."""
        s = self.envelope if series == "envelope" else self.mean_running
        if s.size < last:
            raise ParameterError(f"need at least {last} epochs")
        a, b = s[-last], s[-1]
        return float(abs(b - a) / abs(a)) if a != 0 else math.inf

    def tail_minimum(self, tail_from: float | None = None) -> np.ndarray:
        """Per-replica minimum over evaluation times ``>= tail_from``."""
        sel = self.times >= (tail_from if tail_from is not None else self.times[0])
        return self.values[:, sel].min(axis=1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "envelope", "mean_running", "mean", "min", "max"])
        env, mr = self.envelope, self.mean_running
        for j, t in enumerate(self.times):
            col = self.values[:, j]
            w.writerow([repr(float(t)), repr(float(env[j])), repr(float(mr[j])), repr(float(col.mean())),
                        repr(float(col.min())), repr(float(col.max()))])
        return buf.getvalue()


def lil_ensemble(graph: ClusterGraph, start, t_max: float, R: int, seed: int, metric: str = "ambient",
                 workers: int = 1) -> walker.Functionals:
    """Streamed distances and running sups of ``R`` walks at the dyadic times up to ``t_max``."""
    return walker.batch_functionals(graph, start, start, dyadic_times(t_max), (), seed=seed, replicas=R,
                                    metric=metric, workers=workers)


def _endpoint_and_sup(ensemble, graph, times, metric):
    if isinstance(ensemble, walker.Functionals):
        q = ensemble.query_times
        idx = []
        for t in times:
            hit = np.flatnonzero(q == t)
            if hit.size == 0:
                raise ParameterError(f"ensemble was not observed at t={t}; horizon too short")
            idx.append(hit[0])
        return ensemble.distances[:, idx].astype(float), ensemble.sups[:, idx].astype(float)
    ends, sups = [], []
    lat = graph.lattice
    for tr in ensemble:
        if tr.horizon < times[-1]:
            raise ParameterError(f"trajectory horizon {tr.horizon} is shorter than {times[-1]}")
        sups.append(walker.sup_distance_process(tr, graph, times, metric))
        pos = [tr.position(t) for t in times]
        if metric == "ambient":
            ends.append([lat.ambient_distance(tr.start, p) for p in pos])
        else:
            d = graph.chemical_distances_from(tr.start)
            ends.append(d[graph.local_index(pos)])
    return np.asarray(ends, dtype=float), np.asarray(sups, dtype=float)


def lil_statistics(ensemble, graph: ClusterGraph, kind: str, beta: float, times=None,
                   metric: str = "ambient") -> LILSeries:
    """Normalized displacement statistic per replica at each dyadic time.

    ``ensemble`` is either a list of trajectories or streamed functionals from
    :func:`lil_ensemble`.
    """
    if kind not in LIL_KINDS:
        raise ParameterError(f"kind must be one of {LIL_KINDS}")
    if not beta > 1:
        raise ParameterError("beta must exceed 1")
    check_metric(metric)
    if times is None:
        if isinstance(ensemble, walker.Functionals):
            times = ensemble.query_times[ensemble.query_times >= EE]
        else:
            times = dyadic_times(min(tr.horizon for tr in ensemble))
    times = np.asarray(times, dtype=float)
    if times.size == 0 or np.any(times < EE) or np.any(np.diff(times) <= 0):
        raise ParameterError("evaluation times must be increasing and at least e**e")
    ends, sups = _endpoint_and_sup(ensemble, graph, times, metric)
    raw = ends if kind == "limsup-endpoint" else sups
    power = -1.0 / beta if kind == "liminf-sup" else 1.0 - 1.0 / beta
    return LILSeries(kind, float(beta), times, raw / lil_normalizer(times, kind, beta)[None, :], power)


# --- rate function ---------------------------------------------------------------

@dataclass(frozen=True)
class RateFunctionSpec:
    kappa: float
    alpha: float
    beta: float
    t0: float
    t_max: float

    def __post_init__(self):
        if not self.kappa > 0:
            raise ParameterError("kappa must be positive")
        if not self.alpha > self.beta:
            raise ParameterError("need alpha > beta")
        if not self.beta > 0:
            raise ParameterError("beta must be positive")
        if not (math.e < self.t0 < self.t_max):
            raise ParameterError("window must satisfy e < T0 < Tmax")

    @property
    def loglog_coef(self) -> float:
        return self.kappa / (self.alpha - self.beta)

    def h(self, t):
        return np.log(np.asarray(t, dtype=float)) ** (-self.loglog_coef)

    def phi(self, t):
        t = np.asarray(t, dtype=float)
        return t ** (1.0 / self.beta) * self.h(t)

    @property
    def phi_increasing(self) -> bool:
        """Whether the threshold curve increases on the whole window (``log T0 > kappa beta / (alpha - beta)``)."""
        return math.log(self.t0) > self.loglog_coef * self.beta


@dataclass(frozen=True)
class SurvivalEstimate:
    kappa: float
    t0: float
    fraction: float
    se: float
    replicas: int
    contaminated: int
    phi_increasing: bool


def rate_function_sweep(graph: ClusterGraph, kappas, t0s, alpha: float, beta: float, t_max: float, start,
                        R: int, seed: int, metric: str = "ambient", horizon: float | None = None,
                        workers: int = 1) -> list[SurvivalEstimate]:
    """Survival fractions for every ``(kappa, T0)`` on one shared set of replicas."""
    if horizon is not None and horizon < t_max:
        raise ParameterError(f"window end {t_max} exceeds the horizon {horizon}")
    specs = [[RateFunctionSpec(k, alpha, beta, t0, t_max) for t0 in t0s] for k in kappas]
    coefs = np.array([row[0].loglog_coef for row in specs])
    alive, touched = walker.batch_survival(graph, start, np.asarray(t0s, float), float(t_max), coefs, 1.0 / beta,
                                           seed, R, metric=metric, workers=workers)
    counts = alive.sum(axis=0)
    bad = int(touched.sum())
    out = []
    for i, row in enumerate(specs):
        for j, s in enumerate(row):
            k = int(counts[i, j])
            out.append(SurvivalEstimate(s.kappa, s.t0, k / R, binomial_se(k, R), int(R), bad, s.phi_increasing))
    return out


def rate_function_survival(graph: ClusterGraph, spec: RateFunctionSpec, start, R: int, seed: int,
                           metric: str = "ambient", horizon: float | None = None, workers: int = 1) -> SurvivalEstimate:
    """Fraction of replicas with ``d(start, Y_t) >= phi(t)`` for all ``t`` in ``[T0, Tmax]``."""
    return rate_function_sweep(graph, [spec.kappa], [spec.t0], spec.alpha, spec.beta, spec.t_max, start, R, seed,
                               metric, horizon, workers)[0]


def survival_csv(estimates) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kappa", "t0", "fraction", "se", "replicas", "contaminated", "phi_increasing"])
    for e in estimates:
        w.writerow([repr(e.kappa), repr(e.t0), repr(e.fraction), repr(e.se), e.replicas, e.contaminated,
                    int(e.phi_increasing)])
    return buf.getvalue()


# --- power laws --------------------------------------------------------------------

@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    intercept: float
    ci: tuple[float, float]
    residual: float
    n: int
    degenerate: bool

    def __iter__(self):
        return iter((self.exponent, self.intercept, self.ci))


def fit_power_law(points, n_boot: int = 2000, level: float = 0.95, seed: int = 0) -> PowerLawFit:
    """Least squares of ``log value`` on ``log scale`` with a residual-bootstrap CI for the exponent."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise ParameterError("need at least two (scale, value) pairs")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise ParameterError("scales and values must be positive and finite")
    x = np.log(pts[:, 0])
    y = np.log(pts[:, 1])
    n = x.size
    if np.ptp(x) == 0:
        raise ParameterError("scales must not all coincide")
    b, a = np.polyfit(x, y, 1)
    res = y - (a + b * x)
    rss = float(np.sqrt(np.mean(res**2)))
    if n < 3:
        return PowerLawFit(float(b), float(a), (float(b), float(b)), rss, n, True)
    gen = np.random.default_rng(seed)
    scaled = res * math.sqrt(n / (n - 2))
    xc = x - x.mean()
    sxx = float(xc @ xc)
    se = math.sqrt(float(res @ res) / (n - 2) / sxx)
    if se == 0.0:
        return PowerLawFit(float(b), float(a), (float(b), float(b)), rss, n, False)
    # studentized residual bootstrap
    draws = scaled[gen.integers(0, n, size=(n_boot, n))]
    yc = draws - draws.mean(axis=1, keepdims=True)
    db = yc @ xc / sxx
    r_star = yc - db[:, None] * xc[None, :]
    se_star = np.sqrt((r_star**2).sum(axis=1) / (n - 2) / sxx)
    t_star = db / np.where(se_star > 0, se_star, np.inf)
    q_lo, q_hi = np.quantile(t_star, [(1 - level) / 2, (1 + level) / 2])
    return PowerLawFit(float(b), float(a), (float(b - q_hi * se), float(b - q_lo * se)), rss, n, False)
