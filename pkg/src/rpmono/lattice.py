"""Even tori, reflections, dual momenta and the vertex sets used by the checker.

Vertices are coordinate tuples ``(x_1, ..., x_d)`` with ``0 <= x_i < L_i``.
Internally every vertex also has a flat index (C order, last axis fastest);
the quantum engines use that index as the site label.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

DOUBLED = "doubled"
SIMPLE = "simple"


class GeometryError(ValueError):
    """Invalid torus parameters or vertex."""


@dataclass(frozen=True)
class TorusGeometry:
    """Torus Z^d / (L_1 x ... x L_d) with nearest-neighbour edges.

    For a side of length 2 the vertices x and x + e_i coincide with
    x - e_i.  Under the ``doubled`` convention both edges are kept, so the
    graph is a multigraph with coordination 2d; under ``simple`` only one
    edge joins such a pair.
    """

    shape: tuple[int, ...]
    edge_convention: str = DOUBLED
    _edges: np.ndarray = field(init=False, repr=False, compare=False)
    _edge_axis: np.ndarray = field(init=False, repr=False, compare=False)
    _inc_edge: np.ndarray = field(init=False, repr=False, compare=False)
    _inc_nbr: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        if not shape:
            raise GeometryError("dimension must be at least 1")
        for n in shape:
            if n < 2 or n % 2:
                raise GeometryError(f"L must be even and >= 2 (got {n})")
        if self.edge_convention not in (DOUBLED, SIMPLE):
            raise GeometryError(f"unknown edge convention {self.edge_convention!r}")
        object.__setattr__(self, "shape", shape)
        self._build_edges()

    def _build_edges(self):
        V, d = self.n_vertices, self.d
        coords = self.all_coords()
        edges, axes = [], []
        for v in range(V):
            for i in range(d):
                if self.shape[i] == 2 and self.edge_convention == SIMPLE and coords[v, i] == 1:
                    continue
                w = self._shift_index(v, i, +1)
                edges.append((v, w))
                axes.append(i)
        edges = np.array(edges, dtype=np.int64).reshape(-1, 2)
        axes = np.array(axes, dtype=np.int64)
        inc_e = [[] for _ in range(V)]
        inc_n = [[] for _ in range(V)]
        # slot order per vertex: axis 0 (+, -), axis 1 (+, -), ...
        for i in range(d):
            on_axis = np.flatnonzero(axes == i)
            for k in on_axis:
                a, b = edges[k]
                inc_e[a].append(k)
                inc_n[a].append(b)
            for k in on_axis:
                a, b = edges[k]
                inc_e[b].append(k)
                inc_n[b].append(a)
        deg = {len(row) for row in inc_e}
        if len(deg) != 1:
            raise GeometryError("non-uniform coordination")
        object.__setattr__(self, "_edges", edges)
        object.__setattr__(self, "_edge_axis", axes)
        object.__setattr__(self, "_inc_edge", np.array(inc_e, dtype=np.int64))
        object.__setattr__(self, "_inc_nbr", np.array(inc_n, dtype=np.int64))

    # basic shape data
    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def L(self) -> int:
        """Side length of a cubic torus."""
        if len(set(self.shape)) != 1:
            raise GeometryError(f"torus {self.shape} is not cubic")
        return self.shape[0]

    @property
    def is_cubic(self) -> bool:
        return len(set(self.shape)) == 1

    @property
    def n_vertices(self) -> int:
        return math.prod(self.shape)

    @property
    def n_edges(self) -> int:
        return len(self._edges)

    @property
    def edges(self) -> np.ndarray:
        """(E, 2) array of vertex indices; edge k joins x and x + e_axis."""
        return self._edges

    @property
    def edge_axis(self) -> np.ndarray:
        return self._edge_axis

    @property
    def incident_edges(self) -> np.ndarray:
        """(V, D) edge ids per vertex, slot order axis-major with + before -."""
        return self._inc_edge

    @property
    def incident_neighbours(self) -> np.ndarray:
        return self._inc_nbr

    @property
    def coordination(self) -> int:
        return self._inc_edge.shape[1]

    @property
    def label(self) -> str:
        return "x".join(str(n) for n in self.shape)

    def metadata(self) -> dict:
        flags = []
        if not self.is_cubic:
            flags.append("non-paper geometry")
        if 2 in self.shape:
            flags.append(f"L=2 edge convention: {self.edge_convention}")
        return {
            "d": self.d,
            "L": self.L if self.is_cubic else list(self.shape),
            "n_vertices": self.n_vertices,
            "n_edges": self.n_edges,
            "edge_convention": self.edge_convention,
            "flags": flags,
        }

    # vertex arithmetic
    def index(self, x: Sequence[int]) -> int:
        x = self.normalize(x)
        return int(np.ravel_multi_index(x, self.shape))

    def coords(self, v: int) -> tuple[int, ...]:
        if not 0 <= v < self.n_vertices:
            raise GeometryError(f"vertex index {v} out of range")
        return tuple(int(c) for c in np.unravel_index(v, self.shape))

    def all_coords(self) -> np.ndarray:
        """(V, d) coordinates in index order."""
        grids = np.indices(self.shape).reshape(self.d, -1)
        return grids.T.copy()

    def normalize(self, x: Sequence[int]) -> tuple[int, ...]:
        x = tuple(int(c) for c in x)
        if len(x) != self.d:
            raise GeometryError(f"vertex {x} has wrong dimension (d={self.d})")
        return tuple(c % n for c, n in zip(x, self.shape))

    def add(self, x: Sequence[int], y: Sequence[int]) -> tuple[int, ...]:
        return self.normalize([a + b for a, b in zip(x, y)])

    def sub(self, x: Sequence[int], y: Sequence[int]) -> tuple[int, ...]:
        return self.normalize([a - b for a, b in zip(x, y)])

    def neg(self, x: Sequence[int]) -> tuple[int, ...]:
        return self.normalize([-a for a in x])

    def torus_abs(self, x: Sequence[int]) -> tuple[int, ...]:
        """Per-axis distance |x . e_i| to the origin on the torus."""
        x = self.normalize(x)
        return tuple(min(c, n - c) for c, n in zip(x, self.shape))

    def axis_point(self, i: int, n: int) -> tuple[int, ...]:
        """The vertex n * e_i."""
        x = [0] * self.d
        x[i] = n
        return self.normalize(x)

    def _shift_index(self, v: int, i: int, step: int) -> int:
        x = list(np.unravel_index(v, self.shape))
        x[i] = (x[i] + step) % self.shape[i]
        return int(np.ravel_multi_index(x, self.shape))

    def difference_index(self) -> np.ndarray:
        """(V, V) table of index(y - x) for vertex indices x, y."""
        c = self.all_coords()
        diff = (c[None, :, :] - c[:, None, :]) % np.array(self.shape)
        return np.ravel_multi_index(tuple(diff.transpose(2, 0, 1)), self.shape)

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        return itertools.product(*(range(n) for n in self.shape))


def build_torus(d: int, L: int, edges: str = DOUBLED) -> TorusGeometry:
    """Cubic torus Z^d / L Z^d.  ``L`` must be even."""
    if int(d) < 1:
        raise GeometryError("dimension d must be >= 1")
    if int(L) != L or L < 2 or int(L) % 2:
        raise GeometryError(f"L must be even and >= 2 (got {L})")
    return TorusGeometry((int(L),) * int(d), edges)


def build_rectangular(shape: Sequence[int], edges: str = DOUBLED) -> TorusGeometry:
    """Torus with independent (even) side lengths; flagged as non-paper geometry."""
    return TorusGeometry(tuple(shape), edges)


@dataclass(frozen=True)
class Reflection:
    """Reflection in the plane x . e_axis = m (axis is 0-based).

    ``m`` is a half-integer in [0, L).  Integer m reflects through vertices,
    non-integer m through edges.
    """

    axis: int
    m: float

    def __post_init__(self):
        if float(2 * self.m) != int(2 * self.m):
            raise GeometryError(f"offset m must be a half-integer (got {self.m})")
        object.__setattr__(self, "m", float(self.m))

    @property
    def twice_m(self) -> int:
        return int(round(2 * self.m))

    @property
    def kind(self) -> str:
        return "through_vertices" if self.twice_m % 2 == 0 else "through_edges"

    @property
    def through_edges(self) -> bool:
        return self.twice_m % 2 == 1


def reflect_vertex(g: TorusGeometry, r: Reflection, x: Sequence[int]) -> tuple[int, ...]:
    x = list(g.normalize(x))
    if not 0 <= r.axis < g.d:
        raise GeometryError(f"reflection axis {r.axis} invalid for d={g.d}")
    x[r.axis] = (r.twice_m - x[r.axis]) % g.shape[r.axis]
    return tuple(x)


def reflection_map(g: TorusGeometry, r: Reflection) -> np.ndarray:
    """Vertex-index permutation implementing the reflection."""
    c = g.all_coords()
    c[:, r.axis] = (r.twice_m - c[:, r.axis]) % g.shape[r.axis]
    return np.ravel_multi_index(tuple(c.T), g.shape)


class VertexSet:
    """Set of torus vertices backed by a boolean mask over vertex indices."""

    __slots__ = ("geometry", "mask")

    def __init__(self, geometry: TorusGeometry, mask: np.ndarray | None = None):
        self.geometry = geometry
        if mask is None:
            mask = np.zeros(geometry.n_vertices, dtype=bool)
        mask = np.asarray(mask, dtype=bool).reshape(-1)
        if mask.shape != (geometry.n_vertices,):
            raise GeometryError("mask size does not match the torus")
        self.mask = mask

    @classmethod
    def from_vertices(cls, g: TorusGeometry, vertices: Iterable[Sequence[int]]) -> "VertexSet":
        mask = np.zeros(g.n_vertices, dtype=bool)
        for x in vertices:
            mask[g.index(x)] = True
        return cls(g, mask)

    def __contains__(self, x) -> bool:
        if isinstance(x, (int, np.integer)):
            return bool(self.mask[x])
        return bool(self.mask[self.geometry.index(x)])

    def __len__(self) -> int:
        return int(self.mask.sum())

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        for v in np.flatnonzero(self.mask):
            yield self.geometry.coords(int(v))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, VertexSet)
            and other.geometry.shape == self.geometry.shape
            and bool(np.array_equal(self.mask, other.mask))
        )

    def __or__(self, other: "VertexSet") -> "VertexSet":
        return VertexSet(self.geometry, self.mask | other.mask)

    def __and__(self, other: "VertexSet") -> "VertexSet":
        return VertexSet(self.geometry, self.mask & other.mask)

    def __repr__(self) -> str:
        return f"VertexSet({sorted(self)})"

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def complement(self) -> "VertexSet":
        return VertexSet(self.geometry, ~self.mask)

    def reflect(self, r: Reflection) -> "VertexSet":
        perm = reflection_map(self.geometry, r)
        mask = np.zeros_like(self.mask)
        mask[perm[self.mask]] = True
        return VertexSet(self.geometry, mask)

    def to_json(self) -> list[list[int]]:
        return [list(x) for x in sorted(self)]


def reflection_halves(g: TorusGeometry, r: Reflection) -> tuple[VertexSet, VertexSet]:
    """Split the torus into (T+, T-) for the reflection ``r``.

    Through edges, T+ = {x : (x_i - m) mod L in (0, L/2)} and T- is its
    mirror image.  Through vertices the two fixed hyperplanes go to T+, so
    the halves are disjoint but T- is smaller.
    """
    Li = g.shape[r.axis]
    twice_rel = (2 * g.all_coords()[:, r.axis] - r.twice_m) % (2 * Li)
    if r.through_edges:
        plus = (twice_rel > 0) & (twice_rel < Li)
    else:
        plus = twice_rel <= Li
    return VertexSet(g, plus), VertexSet(g, ~plus)


def reflection_image(g: TorusGeometry, x: Sequence[int], order: Sequence[int] | None = None) -> list[Reflection]:
    """Edge reflections along the staircase path from o to x.

    The path takes all steps along ``order[0]`` first, then ``order[1]`` and so
    on (default: increasing axis).  The j-th reflection is through the
    midpoint of the j-th path edge, so the composite sends o to x.
    """
    x = g.normalize(x)
    order = list(range(g.d)) if order is None else list(order)
    if sorted(order) != list(range(g.d)):
        raise GeometryError("order must be a permutation of the axes")
    refs = []
    for i in order:
        for step in range(x[i]):
            refs.append(Reflection(i, step + 0.5))
    return refs


def apply_reflections(g: TorusGeometry, refs: Sequence[Reflection], x: Sequence[int]) -> tuple[int, ...]:
    for r in refs:
        x = reflect_vertex(g, r, x)
    return g.normalize(x)


def dual_momenta(g: TorusGeometry) -> np.ndarray:
    """All k = 2 pi n / L, n in {0..L-1}^d, lexicographic; row 0 is k = 0."""
    n = g.all_coords().astype(float)
    return 2.0 * np.pi * n / np.array(g.shape, dtype=float)


def box_Q(g: TorusGeometry, z: Sequence[int]) -> VertexSet:
    """Q_z: x_i <= |z_i| or x_i > L - |z_i| for every axis."""
    za = np.array(g.torus_abs(z))
    L = np.array(g.shape)
    c = g.all_coords()
    ok = (c <= za) | (c > L - za)
    return VertexSet(g, ok.all(axis=1))


def shell_S(g: TorusGeometry, r: int) -> VertexSet:
    """S_{r,L}: some coordinate has z_i < r or L - z_i <= r."""
    if r < 0 or any(2 * r > n for n in g.shape):
        raise GeometryError(f"shell radius r={r} outside [0, L/2]")
    L = np.array(g.shape)
    c = g.all_coords()
    hit = (c < r) | (L - c <= r)
    return VertexSet(g, hit.any(axis=1))
