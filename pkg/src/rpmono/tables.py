"""Two-point tables G(o, x) and their CSV v1 serialization."""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from rpmono.lattice import DOUBLED, TorusGeometry, build_rectangular

PROVENANCES = ("dense", "stochastic", "enumeration", "monte_carlo", "synthetic")
CSV_MAGIC = "# rpmono-table v1"
META_PREFIX = "# meta "


class TableError(ValueError):
    pass


@dataclass
class TwoPointTable:
    """Values G(o, x) indexed by the flat vertex index of ``geometry``.

    ``extra`` holds optional named per-vertex columns (for example the
    connection probability of the loop models and its error).
    """

    geometry: TorusGeometry
    values: np.ndarray
    stderr: np.ndarray | None = None
    provenance: str = "synthetic"
    extra: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    full: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        V = self.geometry.n_vertices
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.shape != (V,):
            raise TableError(f"table has {self.values.size} values, torus has {V} vertices")
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=float).reshape(-1)
            if self.stderr.shape != (V,):
                raise TableError("stderr must cover every vertex")
            if np.any(self.stderr < 0) or not np.all(np.isfinite(self.stderr)):
                raise TableError("stderr must be finite and non-negative")
        if self.provenance not in PROVENANCES:
            raise TableError(f"unknown provenance {self.provenance!r}")
        if not np.isfinite(self.values[0]):
            raise TableError("G(o,o) must be finite")
        self.extra = {k: np.asarray(v, dtype=float).reshape(-1) for k, v in self.extra.items()}
        for k, v in self.extra.items():
            if v.shape != (V,):
                raise TableError(f"column {k!r} must cover every vertex")

    @classmethod
    def from_function(cls, g: TorusGeometry, fn, provenance="synthetic", **kw) -> "TwoPointTable":
        vals = np.array([fn(x) for x in g], dtype=float)
        return cls(g, vals, provenance=provenance, **kw)

    @classmethod
    def constant(cls, g: TorusGeometry, c: float) -> "TwoPointTable":
        return cls(g, np.full(g.n_vertices, float(c)))

    def __getitem__(self, x) -> float:
        return float(self.values[self.geometry.index(x)])

    def err(self, x) -> float:
        if self.stderr is None:
            return 0.0
        return float(self.stderr[self.geometry.index(x)])

    def G(self, x, y) -> float:
        """G(x, y) = G(o, y - x) by translation invariance."""
        return self[self.geometry.sub(y, x)]

    def var_G(self, x, y) -> float:
        return self.err(self.geometry.sub(y, x)) ** 2

    @property
    def has_stderr(self) -> bool:
        return self.stderr is not None

    def copy(self) -> "TwoPointTable":
        return TwoPointTable(
            self.geometry,
            self.values.copy(),
            None if self.stderr is None else self.stderr.copy(),
            self.provenance,
            {k: v.copy() for k, v in self.extra.items()},
            dict(self.meta),
        )

    def with_value(self, x, value: float) -> "TwoPointTable":
        t = self.copy()
        t.values[self.geometry.index(x)] = value
        return t


def cesaro_sum(t: TwoPointTable) -> tuple[float, float]:
    """Torus average of G(o, x); errors added in quadrature."""
    if t.values.size != t.geometry.n_vertices or not np.all(np.isfinite(t.values)):
        raise TableError("Cesaro sum needs a complete finite table")
    V = t.values.size
    mean = math.fsum(t.values) / V
    if t.stderr is None:
        return mean, 0.0
    return mean, float(np.sqrt(np.sum(t.stderr**2)) / V)


def _fmt(v: float) -> str:
    return "%.17g" % v


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer, np.floating)):
        return o.item()
    return str(o)


def write_csv(t: TwoPointTable, path=None, meta: bool = True) -> str:
    """Serialize ``t``; returns the text and writes it to ``path`` if given.

    With ``meta`` a trailing ``# meta {json}`` comment line records t.meta.
    """
    g = t.geometry
    cols = [f"x{i + 1}" for i in range(g.d)] + ["G", "stderr"] + list(t.extra)
    out = io.StringIO()
    out.write(CSV_MAGIC + "\n")
    out.write(f"{g.d},{g.label},{t.provenance}\n")
    out.write(",".join(cols) + "\n")
    for v, x in enumerate(g):
        row = [str(c) for c in x] + [_fmt(t.values[v])]
        row.append("" if t.stderr is None else _fmt(t.stderr[v]))
        row += [_fmt(col[v]) for col in t.extra.values()]
        out.write(",".join(row) + "\n")
    if meta and t.meta:
        out.write(META_PREFIX + json.dumps(t.meta, sort_keys=True, default=_json_default) + "\n")
    text = out.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_csv(src, edge_convention: str = DOUBLED) -> TwoPointTable:
    """Parse CSV v1 from a path or a text blob (detected by the magic line)."""
    text = src if isinstance(src, str) and src.startswith(CSV_MAGIC) else Path(src).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 3 or lines[0].strip() != CSV_MAGIC:
        raise TableError("not an rpmono-table v1 file")
    meta = {}
    body = [lines[0]]
    for ln in lines[1:]:
        if ln.startswith(META_PREFIX):
            meta = json.loads(ln[len(META_PREFIX):])
        elif not ln.startswith("#"):
            body.append(ln)
    lines = body
    if len(lines) < 3:
        raise TableError("truncated rpmono-table v1 file")
    try:
        d_s, L_s, prov = lines[1].split(",")
        d = int(d_s)
        shape = [int(n) for n in L_s.split("x")]
    except ValueError:
        raise TableError(f"bad geometry line {lines[1]!r}") from None
    if len(shape) == 1:
        shape = shape * d
    if len(shape) != d:
        raise TableError("geometry line: L does not match d")
    g = build_rectangular(shape, edge_convention)
    header = lines[2].split(",")
    if header[: d + 2] != [f"x{i + 1}" for i in range(d)] + ["G", "stderr"]:
        raise TableError(f"bad column header {lines[2]!r}")
    extra_names = header[d + 2 :]
    V = g.n_vertices
    rows = lines[3:]
    if len(rows) != V:
        raise TableError(f"expected {V} rows, found {len(rows)}")
    vals = np.full(V, np.nan)
    errs = np.full(V, np.nan)
    extra = {k: np.full(V, np.nan) for k in extra_names}
    seen = np.zeros(V, dtype=bool)
    for ln in rows:
        f = ln.split(",")
        if len(f) != len(header):
            raise TableError(f"bad row {ln!r}")
        v = g.index([int(c) for c in f[:d]])
        if seen[v]:
            raise TableError(f"duplicate vertex in row {ln!r}")
        seen[v] = True
        vals[v] = float(f[d])
        errs[v] = float(f[d + 1]) if f[d + 1] else np.nan
        for k, s in zip(extra_names, f[d + 2 :]):
            extra[k][v] = float(s)
    has_err = ~np.isnan(errs)
    if has_err.any() and not has_err.all():
        raise TableError("stderr must be given for all vertices or none")
    return TwoPointTable(g, vals, errs if has_err.all() else None, prov, extra, meta)


def tables_equal(a: TwoPointTable, b: TwoPointTable) -> bool:
    """Bit-exact comparison (NaN-free tables)."""
    if a.geometry.shape != b.geometry.shape or a.provenance != b.provenance:
        return False
    if not np.array_equal(a.values, b.values):
        return False
    if (a.stderr is None) != (b.stderr is None):
        return False
    if a.stderr is not None and not np.array_equal(a.stderr, b.stderr):
        return False
    if list(a.extra) != list(b.extra):
        return False
    return all(np.array_equal(a.extra[k], b.extra[k]) for k in a.extra)


def axis_values(t: TwoPointTable, i: int, ns: Sequence[int]) -> np.ndarray:
    return np.array([t[t.geometry.axis_point(i, n)] for n in ns])
