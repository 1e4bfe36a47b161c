"""Spin-S matrices and matrix-free single-site operators.

Basis convention: S3 = diag(S, S-1, ..., -S).  A many-body basis state is
labelled by digits d_x in base 2S+1 with m_x = S - d_x, and the state index is
sum_x d_x (2S+1)^x, so site 0 is the least significant digit (for S = 1/2,
bit x set means spin down at site x).
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from rpmono.lattice import TorusGeometry

LOCAL_NAMES = ("S1", "S2", "S3", "I")


def as_spin(S) -> Fraction:
    """Validate a spin value and return it as an exact half-integer."""
    try:
        exact = Fraction(S)
    except (TypeError, ValueError):
        raise ValueError(f"spin S={S!r} is not a number") from None
    s = exact.limit_denominator(2)
    if abs(float(s - exact)) > 1e-12 or s <= 0 or (2 * s).denominator != 1:
        raise ValueError(f"spin S={S!r} must be a positive half-integer")
    return s


def local_dimension(S) -> int:
    return int(2 * as_spin(S)) + 1


def m_values(S) -> np.ndarray:
    """S3 eigenvalues in basis order (descending)."""
    s = float(as_spin(S))
    q = local_dimension(S)
    return s - np.arange(q, dtype=float)


def raising_amplitudes(S) -> np.ndarray:
    """<m+1|S+|m> indexed by the digit of m (zero for the top state)."""
    s = float(as_spin(S))
    m = m_values(S)
    return np.sqrt(np.maximum(s * (s + 1) - m * (m + 1), 0.0))


@dataclass(frozen=True)
class SpinMatrices:
    S: Fraction
    S1: np.ndarray
    S2: np.ndarray
    S3: np.ndarray

    @property
    def dim(self) -> int:
        return self.S3.shape[0]

    def local(self, name: str) -> np.ndarray:
        if name == "I":
            return np.eye(self.dim, dtype=complex)
        return getattr(self, name)


def spin_matrices(S) -> SpinMatrices:
    """Spin operators from the ladder construction in the S3-diagonal basis."""
    s = as_spin(S)
    q = local_dimension(s)
    ap = raising_amplitudes(s)
    splus = np.zeros((q, q))
    # S+ maps digit j to digit j-1
    for j in range(1, q):
        splus[j - 1, j] = ap[j]
    sminus = splus.T
    S1 = (splus + sminus).astype(complex) / 2
    S2 = (splus - sminus).astype(complex) / 2j
    S3 = np.diag(m_values(s)).astype(complex)
    for a in (S1, S2, S3):
        a.setflags(write=False)
    return SpinMatrices(s, S1, S2, S3)


@dataclass(frozen=True)
class SiteOperator:
    site: int
    local: str
    S: Fraction

    def __post_init__(self):
        if self.local not in LOCAL_NAMES:
            raise ValueError(f"local operator must be one of {LOCAL_NAMES}")
        object.__setattr__(self, "S", as_spin(self.S))


def hilbert_dimension(n_sites: int, S) -> int:
    return local_dimension(S) ** n_sites


def apply_site_operator(op: SiteOperator, g: TorusGeometry | int, v: np.ndarray) -> np.ndarray:
    """Apply the single-site operator to ``v`` (shape (dim,) or (dim, R)).

    The local matrix acts on one tensor leg; no global matrix is formed.
    ``g`` may be a geometry or a plain site count.
    """
    n = g if isinstance(g, int) else g.n_vertices
    q = local_dimension(op.S)
    dim = q**n
    v = np.asarray(v)
    if v.shape[0] != dim:
        raise ValueError(f"vector has dimension {v.shape[0]}, expected {dim}")
    if not 0 <= op.site < n:
        raise ValueError(f"site {op.site} out of range for {n} sites")
    if op.local == "I":
        return v.copy()
    mat = spin_matrices(op.S).local(op.local)
    if op.local != "S2":
        mat = mat.real
    tail = v.shape[1:]
    t = v.reshape((q,) * n + tail)
    axis = n - 1 - op.site
    out = np.tensordot(mat, t, axes=([1], [axis]))
    out = np.moveaxis(out, 0, axis)
    return out.reshape(v.shape)


def site_m_table(n_sites: int, S) -> np.ndarray:
    """(dim, n_sites) array of S3 eigenvalues m_x(s) for every basis state."""
    q = local_dimension(S)
    dim = q**n_sites
    s = np.arange(dim)
    digits = (s[:, None] // q ** np.arange(n_sites)[None, :]) % q
    return float(as_spin(S)) - digits.astype(float)
