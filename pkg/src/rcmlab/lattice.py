"""Finite boxes of the integer lattice carrying random conductances.

Vertices of a box with side ``L`` in dimension ``d`` are indexed by
``sum(c[i] * L**i)``.  Edge ``(x, axis)`` joins ``x`` to ``x + e_axis``; its id
is ``x * d + axis``.  Conductances are never stored by default: each edge value
is a deterministic function of the environment seed and the edge id, so a box
of any size costs nothing until its conductances are requested.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng
from .errors import ParameterError, RangeError, SizeError, UnsupportedOperationError

MATERIALIZE_BUDGET = 200_000_000  # edges

# model codes shared with the numba kernels
MODEL_CONST = 0
MODEL_BERNOULLI = 1
MODEL_UNIFORM = 2
MODEL_PARETO = 3
MODEL_TABLE = 4


@dataclass(frozen=True)
class LatticeSpec:
    dim: int
    side: int
    boundary: str = "free"

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ParameterError(f"dim must be a positive integer, got {self.dim}")
        if int(self.side) != self.side or self.side < 2:
            raise ParameterError(f"side must be an integer >= 2, got {self.side}")
        if self.boundary not in ("free", "periodic"):
            raise ParameterError(f"boundary must be 'free' or 'periodic', got {self.boundary!r}")

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"

    @property
    def n_vertices(self) -> int:
        return self.side**self.dim

    @property
    def n_edge_slots(self) -> int:
        return self.n_vertices * self.dim

    @property
    def strides(self) -> np.ndarray:
        return self.side ** np.arange(self.dim, dtype=np.int64)

    def center(self) -> int:
        return self.index([self.side // 2] * self.dim)

    def check_coords(self, coords: Sequence[int]) -> tuple[int, ...]:
        c = tuple(int(v) for v in coords)
        if len(c) != self.dim:
            raise RangeError(f"expected {self.dim} coordinates, got {len(c)}")
        if any(v < 0 or v >= self.side for v in c):
            raise RangeError(f"vertex {c} outside box of side {self.side}")
        return c

    def index(self, coords: Sequence[int]) -> int:
        c = self.check_coords(coords)
        return int(sum(v * self.side**i for i, v in enumerate(c)))

    def coords(self, index: int) -> tuple[int, ...]:
        index = self.vertex(index)
        out = []
        for _ in range(self.dim):
            index, r = divmod(index, self.side)
            out.append(r)
        return tuple(out)

    def coords_array(self, indices: np.ndarray) -> np.ndarray:
        """Coordinates of many vertices, shape ``(n, dim)``."""
        idx = np.asarray(indices, dtype=np.int64)
        return (idx[:, None] // self.strides[None, :]) % self.side

    def vertex(self, v) -> int:
        """Normalize a vertex given as an index or a coordinate tuple."""
        if isinstance(v, (tuple, list, np.ndarray)):
            return self.index(v)
        v = int(v)
        if v < 0 or v >= self.n_vertices:
            raise RangeError(f"vertex index {v} outside box with {self.n_vertices} vertices")
        return v

    def ambient_distance(self, x, y) -> int:
        """Graph distance on the full box (L1, or torus L1 when periodic)."""
        a = np.array(self.coords(self.vertex(x)))
        b = np.array(self.coords(self.vertex(y)))
        diff = np.abs(a - b)
        if self.periodic:
            diff = np.minimum(diff, self.side - diff)
        return int(diff.sum())

    def ambient_distances_from(self, x) -> np.ndarray:
        """Ambient distance from ``x`` to every vertex of the box."""
        self._check_materializable()
        c0 = np.array(self.coords(self.vertex(x)))
        coords = self.coords_array(np.arange(self.n_vertices))
        diff = np.abs(coords - c0[None, :])
        if self.periodic:
            diff = np.minimum(diff, self.side - diff)
        return diff.sum(axis=1)

    def neighbors(self, x) -> list[tuple[int, int, int]]:
        """Incident edges of ``x`` as ``(neighbor, edge_id, axis)`` triples."""
        x = self.vertex(x)
        c = self.coords(x)
        out = []
        for axis in range(self.dim):
            stride = self.side**axis
            if c[axis] < self.side - 1:
                out.append((x + stride, x * self.dim + axis, axis))
            elif self.periodic:
                y = x - (self.side - 1) * stride
                out.append((y, x * self.dim + axis, axis))
            if c[axis] > 0:
                y = x - stride
                out.append((y, y * self.dim + axis, axis))
            elif self.periodic:
                y = x + (self.side - 1) * stride
                out.append((y, y * self.dim + axis, axis))
        return out

    def edge_exists_mask(self) -> np.ndarray:
        """Boolean ``(n_vertices, dim)`` mask of edge slots present in the box."""
        self._check_materializable()
        if self.periodic:
            return np.ones((self.n_vertices, self.dim), dtype=bool)
        coords = self.coords_array(np.arange(self.n_vertices))
        return coords < self.side - 1

    def _check_materializable(self):
        if self.n_edge_slots > MATERIALIZE_BUDGET:
            raise SizeError(
                f"box with {self.n_edge_slots} edge slots exceeds the materialization budget",
                "materialize_budget",
                MATERIALIZE_BUDGET,
            )

    def to_dict(self) -> dict:
        return {"dim": self.dim, "side": self.side, "boundary": self.boundary}


# --- environment models ------------------------------------------------------

@dataclass(frozen=True)
class Bernoulli:
    p: float
    tag = "bernoulli"

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0) or math.isnan(self.p):
            raise ParameterError(f"bernoulli p must lie in [0, 1], got {self.p}")

    def params(self) -> dict:
        return {"p": self.p}

    def kernel_code(self) -> tuple[int, float, float]:
        if self.p >= 1.0:
            return MODEL_CONST, 1.0, 0.0
        if self.p <= 0.0:
            return MODEL_CONST, 0.0, 0.0
        return MODEL_BERNOULLI, float(self.p), 0.0

    def transform(self, words: np.ndarray) -> np.ndarray:
        return (rng.unit_array(words) < self.p).astype(np.float64)

    @property
    def strictly_positive(self) -> bool:
        return self.p >= 1.0


@dataclass(frozen=True)
class UniformElliptic:
    lo: float
    hi: float
    tag = "uniform_elliptic"

    def __post_init__(self):
        if not (self.lo > 0.0) or not (self.lo <= self.hi) or not math.isfinite(self.hi):
            raise ParameterError(f"uniform_elliptic needs 0 < lo <= hi < inf, got lo={self.lo}, hi={self.hi}")

    def params(self) -> dict:
        return {"lo": self.lo, "hi": self.hi}

    def kernel_code(self) -> tuple[int, float, float]:
        if self.lo == self.hi:
            return MODEL_CONST, float(self.lo), 0.0
        return MODEL_UNIFORM, float(self.lo), float(self.hi)

    def transform(self, words: np.ndarray) -> np.ndarray:
        return self.lo + (self.hi - self.lo) * rng.unit_array(words)

    strictly_positive = True


@dataclass(frozen=True)
class HeavyTail:
    """Pareto conductances on ``[1, inf)`` with density proportional to ``u**-(a+1)``."""

    tail_exponent: float
    tag = "heavy_tail_lower_bounded"

    def __post_init__(self):
        if not (self.tail_exponent > 0.0) or not math.isfinite(self.tail_exponent):
            raise ParameterError(f"tail_exponent must be a positive real, got {self.tail_exponent}")

    def params(self) -> dict:
        return {"tail_exponent": self.tail_exponent}

    def kernel_code(self) -> tuple[int, float, float]:
        return MODEL_PARETO, float(self.tail_exponent), 0.0

    def transform(self, words: np.ndarray) -> np.ndarray:
        return np.power(rng.unit_open0_array(words), -1.0 / self.tail_exponent)

    strictly_positive = True


@dataclass(frozen=True)
class Explicit:
    """Hand-specified conductances; the values travel with the environment."""

    tag = "explicit"

    def params(self) -> dict:
        return {}

    strictly_positive = False


EnvironmentModel = Bernoulli | UniformElliptic | HeavyTail | Explicit


def model_from_dict(d: dict) -> EnvironmentModel:
    d = dict(d)
    tag = d.pop("tag", None) or d.pop("kind", None)
    try:
        if tag == "bernoulli":
            return Bernoulli(float(d["p"]))
        if tag == "uniform_elliptic":
            return UniformElliptic(float(d["lo"]), float(d["hi"]))
        if tag in ("heavy_tail_lower_bounded", "heavy_tail"):
            return HeavyTail(float(d["tail_exponent"]))
        if tag == "explicit":
            return Explicit()
    except KeyError as exc:
        raise ParameterError(f"model {tag!r} is missing parameter {exc.args[0]!r}") from None
    raise ParameterError(f"unknown environment model {tag!r}")


def model_to_dict(model: EnvironmentModel) -> dict:
    return {"tag": model.tag, **model.params()}


# --- environment -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Environment:
    """One sample of the conductance field on a box.

    ``offset`` is a translation applied before looking conductances up
    (periodic boxes only); ``origin``/``source_side`` describe a window into a
    larger free box.  ``table`` holds explicit values for hand-built maps.
    """

    lattice: LatticeSpec
    model: EnvironmentModel
    seed: int = 0
    offset: tuple[int, ...] | None = None
    origin: tuple[int, ...] | None = None
    source_side: int | None = None
    table: np.ndarray | None = field(default=None, repr=False)

    def __eq__(self, other):
        if not isinstance(other, Environment):
            return NotImplemented
        if self.describe() != other.describe():
            return False
        if self.table is None:
            return True
        return np.array_equal(self.table, other.table)

    def __hash__(self):
        return hash(json.dumps(self.describe(), sort_keys=True))

    @property
    def key(self) -> int:
        return rng.derive(self.seed, rng.TAG_ENV)

    @property
    def native(self) -> bool:
        """True when conductances can be regenerated edge by edge from the seed."""
        return self.table is None and not any(self.offset or ()) and self.origin is None

    @property
    def strictly_positive(self) -> bool:
        if self.table is not None:
            vals = self._table_in_box()
            if not self.lattice.periodic:
                vals = vals[self.lattice.edge_exists_mask()]
            return bool(np.all(vals > 0))
        return self.model.strictly_positive

    def describe(self) -> dict:
        d = {
            "lattice": self.lattice.to_dict(),
            "model": model_to_dict(self.model),
            "seed": int(self.seed),
        }
        if any(self.offset or ()):
            d["offset"] = list(self.offset)
        if self.origin is not None:
            d["origin"] = list(self.origin)
            d["source_side"] = int(self.source_side)
        return d

    def fingerprint(self) -> str:
        return json.dumps(self.describe(), sort_keys=True, separators=(",", ":"))

    # -- conductance access --

    def _table_in_box(self) -> np.ndarray:
        return np.asarray(self.table, dtype=np.float64).reshape(self.lattice.n_vertices, self.lattice.dim)

    def conductances(self) -> np.ndarray:
        """All edge conductances as a ``(n_vertices, dim)`` array.

        Slot ``[x, axis]`` holds the edge ``x -> x + e_axis``; slots of edges
        that leave a free box are zero.  Cached after the first call.
        """
        cached = self.__dict__.get("_cond")
        if cached is not None:
            return cached
        lat = self.lattice
        lat._check_materializable()
        if self.table is not None:
            vals = self._table_in_box().copy()
            if any(self.offset or ()):
                vals = _roll_table(lat, vals, self.offset)
        else:
            ids = self._source_edge_ids()
            vals = self.model.transform(rng.stream_draws(self.key, ids)).reshape(lat.n_vertices, lat.dim)
        if not lat.periodic:
            vals[~lat.edge_exists_mask()] = 0.0
        vals.setflags(write=False)
        object.__setattr__(self, "_cond", vals)
        return vals

    def _source_edge_ids(self) -> np.ndarray:
        lat = self.lattice
        coords = lat.coords_array(np.arange(lat.n_vertices))
        side = lat.side
        if any(self.offset or ()):
            coords = (coords + np.asarray(self.offset)[None, :]) % side
        if self.origin is not None:
            coords = coords + np.asarray(self.origin)[None, :]
            side = self.source_side
        src = (coords * (side ** np.arange(lat.dim, dtype=np.int64))[None, :]).sum(axis=1)
        return (src[:, None] * lat.dim + np.arange(lat.dim)[None, :]).ravel()

    def edge_conductance(self, edge_id: int) -> float:
        x, axis = divmod(int(edge_id), self.lattice.dim)
        if "_cond" in self.__dict__ or not self.native:
            return float(self.conductances()[x, axis])
        lat = self.lattice
        if not lat.periodic and lat.coords(x)[axis] == lat.side - 1:
            return 0.0
        word = rng.stream_draws(self.key, np.array([edge_id]))
        return float(self.model.transform(word)[0])

    def conductance(self, x, y) -> float:
        """Conductance between lattice neighbours ``x`` and ``y`` (summed over parallel edges)."""
        x = self.lattice.vertex(x)
        y = self.lattice.vertex(y)
        total = 0.0
        found = False
        for nb, eid, _ in self.lattice.neighbors(x):
            if nb == y:
                total += self.edge_conductance(eid)
                found = True
        if not found:
            raise RangeError(f"vertices {x} and {y} are not lattice neighbours")
        return total

    def pi_weights(self) -> np.ndarray:
        """``pi(x)`` for every vertex of the box."""
        lat = self.lattice
        c = self.conductances()
        pi = c.sum(axis=1).copy()
        for axis in range(lat.dim):
            stride = lat.side**axis
            col = c[:, axis]
            if lat.periodic:
                coords = lat.coords_array(np.arange(lat.n_vertices))[:, axis]
                nb = np.where(coords < lat.side - 1, np.arange(lat.n_vertices) + stride,
                              np.arange(lat.n_vertices) - (lat.side - 1) * stride)
                np.add.at(pi, nb, col)
            else:
                pi[stride:] += col[:-stride]
        return pi

    def edge_values(self, edge_ids: np.ndarray) -> np.ndarray:
        """Conductances of many edge slots without materializing the box when possible."""
        ids = np.asarray(edge_ids, dtype=np.int64)
        lat = self.lattice
        if "_cond" in self.__dict__ or not self.native:
            return self.conductances().ravel()[ids]
        vals = self.model.transform(rng.stream_draws(self.key, ids))
        if not lat.periodic:
            x, axis = np.divmod(ids, lat.dim)
            at_face = (x // (lat.side ** axis)) % lat.side == lat.side - 1
            vals = np.where(at_face, 0.0, vals)
        return vals

    def pi_at(self, vertices) -> np.ndarray:
        """``pi(x)`` for the given vertex indices."""
        v = np.asarray(vertices, dtype=np.int64)
        lat = self.lattice
        coords = lat.coords_array(v)
        total = np.zeros(v.shape[0])
        for axis in range(lat.dim):
            stride = lat.side**axis
            c = coords[:, axis]
            up = self.edge_values(v * lat.dim + axis)
            down_src = np.where(c > 0, v - stride, v + (lat.side - 1) * stride)
            down = self.edge_values(down_src * lat.dim + axis)
            if not lat.periodic:
                down = np.where(c > 0, down, 0.0)
            total += up + down
        return total

    # -- derived environments --

    def subbox(self, origin: Sequence[int], side: int) -> "Environment":
        """The same conductances restricted to a smaller free box."""
        lat = self.lattice
        if lat.periodic:
            raise UnsupportedOperationError("subbox requires a free-boundary environment")
        origin = tuple(int(v) for v in origin)
        if len(origin) != lat.dim or any(o < 0 or o + side > lat.side for o in origin):
            raise RangeError(f"window origin={origin} side={side} does not fit in box of side {lat.side}")
        sub = LatticeSpec(lat.dim, side, "free")
        if not self.native:
            full = self.conductances()
            grid = full.reshape((lat.side,) * lat.dim + (lat.dim,), order="F")
            sl = tuple(slice(o, o + side) for o in origin)
            vals = np.ascontiguousarray(grid[sl]).reshape(-1, lat.dim, order="F")
            return Environment(sub, Explicit(), self.seed, table=vals)
        base_origin = self.origin or (0,) * lat.dim
        src_side = self.source_side or lat.side
        new_origin = tuple(a + b for a, b in zip(base_origin, origin))
        return Environment(sub, self.model, self.seed, origin=new_origin, source_side=src_side)

    # -- serialization --

    def to_dict(self) -> dict:
        d = self.describe()
        if self.table is not None:
            d["table"] = self._table_in_box().ravel().tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Environment":
        lat = LatticeSpec(int(d["lattice"]["dim"]), int(d["lattice"]["side"]), d["lattice"].get("boundary", "free"))
        model = model_from_dict(d["model"])
        table = np.asarray(d["table"], dtype=np.float64) if "table" in d else None
        return cls(
            lat,
            model,
            int(d.get("seed", 0)),
            offset=tuple(d["offset"]) if "offset" in d else None,
            origin=tuple(d["origin"]) if "origin" in d else None,
            source_side=d.get("source_side"),
            table=table,
        )

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path) -> "Environment":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _roll_table(lat: LatticeSpec, vals: np.ndarray, offset) -> np.ndarray:
    grid = vals.reshape((lat.side,) * lat.dim + (lat.dim,), order="F")
    shift = tuple(-int(o) for o in offset)
    grid = np.roll(grid, shift, axis=tuple(range(lat.dim)))
    return np.ascontiguousarray(grid).reshape(-1, lat.dim, order="F")


def generate_environment(lattice: LatticeSpec, model: EnvironmentModel, seed: int) -> Environment:
    """Sample an environment; identical arguments give identical conductances."""
    if isinstance(model, Explicit):
        raise ParameterError("explicit environments are built with from_conductances")
    return Environment(lattice, model, int(seed))


def from_conductances(lattice: LatticeSpec, values) -> Environment:
    """Environment with hand-specified conductances, shape ``(n_vertices, dim)``."""
    vals = np.array(values, dtype=np.float64)
    if vals.shape != (lattice.n_vertices, lattice.dim):
        raise ParameterError(f"expected conductance array of shape {(lattice.n_vertices, lattice.dim)}, got {vals.shape}")
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise ParameterError("conductances must be finite and non-negative")
    return Environment(lattice, Explicit(), 0, table=vals)


def from_edges(lattice: LatticeSpec, edges: dict) -> Environment:
    """Environment from ``{(x, y): w}`` with every unlisted edge closed."""
    vals = np.zeros((lattice.n_vertices, lattice.dim))
    for (x, y), w in edges.items():
        x = lattice.vertex(x)
        y = lattice.vertex(y)
        for nb, eid, axis in lattice.neighbors(x):
            if nb == y:
                vals[divmod(eid, lattice.dim)] = w
                break
        else:
            raise RangeError(f"{x} and {y} are not lattice neighbours")
    return from_conductances(lattice, vals)


def shift(env: Environment, x) -> Environment:
    """The translated environment with ``(tau_x w)_{yz} = w_{x+y, x+z}``."""
    lat = env.lattice
    if not lat.periodic:
        raise UnsupportedOperationError("shift is only defined on periodic boxes")
    vec = tuple(int(v) for v in x)
    if len(vec) != lat.dim:
        raise ParameterError(f"shift vector must have {lat.dim} components")
    base = env.offset or (0,) * lat.dim
    new = tuple((a + b) % lat.side for a, b in zip(base, vec))
    return Environment(lat, env.model, env.seed, offset=new, table=env.table)


def pi_weight(env: Environment, x) -> float:
    """Sum of the conductances of the edges incident to ``x``."""
    x = env.lattice.vertex(x)
    return float(sum(env.edge_conductance(eid) for _, eid, _ in env.lattice.neighbors(x)))
