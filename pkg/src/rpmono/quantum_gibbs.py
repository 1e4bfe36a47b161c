"""Spin-S Heisenberg/XY family on tori: matrix-free H, dense and stochastic Gibbs correlations.

H_u = -2 sum_{edges} (S1 S1 + u S2 S2 + S3 S3), rewritten with ladder operators
as -2 sum [S3 S3 + a (S+S- + S-S+) + b (S+S+ + S-S-)], a = (1+u)/4,
b = (1-u)/4.  In the S3 basis H is real symmetric, so all vectors are real.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.linalg import eigh
from scipy.sparse.linalg import LinearOperator, eigsh
from scipy.special import ive

from rpmono import kernels
from rpmono.lattice import Reflection, TorusGeometry, reflection_halves, reflection_map
from rpmono.spin_algebra import as_spin, local_dimension, m_values, raising_amplitudes
from rpmono.tables import TwoPointTable, cesaro_sum  # noqa: F401  (re-exported)

DENSE_CAP = 2**12
STOCHASTIC_CAP = 2**20
TAIL_TOL = 1e-12


class CapacityError(RuntimeError):
    """Hilbert dimension above the engine's cap."""


class DegreeError(ValueError):
    """Chebyshev degree too small for the requested accuracy."""


@dataclass(frozen=True)
class SpinGraph:
    """Explicit small interaction graph (multi-edges allowed) for oracles."""

    n_vertices: int
    edges: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if e.size and (e.min() < 0 or e.max() >= self.n_vertices):
            raise ValueError("edge endpoint out of range")
        object.__setattr__(self, "edges", e)


@dataclass(frozen=True)
class GibbsParams:
    geometry: TorusGeometry | SpinGraph
    S: Fraction
    u: float
    beta: float

    def __post_init__(self):
        object.__setattr__(self, "S", as_spin(self.S))
        if not -1.0 <= float(self.u) <= 1.0:
            raise ValueError("u must lie in [-1, 1]")
        if not float(self.beta) >= 0.0:
            raise ValueError("beta must be non-negative")
        object.__setattr__(self, "u", float(self.u))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def n_sites(self) -> int:
        return self.geometry.n_vertices

    @property
    def edges(self) -> np.ndarray:
        return np.ascontiguousarray(self.geometry.edges, dtype=np.int64)

    @property
    def q(self) -> int:
        return local_dimension(self.S)

    @property
    def dim(self) -> int:
        return self.q**self.n_sites

    @property
    def reflection_positive(self) -> bool:
        return self.u <= 0.0

    def describe(self) -> dict:
        geo = self.geometry.metadata() if isinstance(self.geometry, TorusGeometry) else {
            "n_vertices": self.n_sites, "n_edges": len(self.edges)}
        return {"S": str(self.S), "u": self.u, "beta": self.beta, "dim": self.dim, "geometry": geo}


@dataclass
class TraceEstimate:
    mean: float
    stderr: float
    samples: int
    degree: int


@dataclass
class PartitionValue:
    log_Z: float
    method: str
    trace: TraceEstimate | None = field(default=None, repr=False)


@lru_cache(maxsize=8)
def _basis(n: int, q: int):
    dim = q**n
    place = (q ** np.arange(n, dtype=np.int64)).astype(np.int64)
    s = np.arange(dim, dtype=np.int64)
    digits = ((s[:, None] // place[None, :]) % q).astype(np.uint8)
    digits.setflags(write=False)
    return np.ascontiguousarray(digits), place


def m_table(p: GibbsParams) -> np.ndarray:
    """(dim, n_sites) S3 eigenvalue of each site in each basis state."""
    digits, _ = _basis(p.n_sites, p.q)
    return float(p.S) - digits.astype(float)


def hamiltonian_apply(p: GibbsParams, v: np.ndarray, nthreads: int = 1) -> np.ndarray:
    """H_u v without forming H; v of shape (dim,) or (dim, R)."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != p.dim:
        raise ValueError(f"vector has dimension {v.shape[0]}, expected {p.dim}")
    vec = v.ndim == 1
    block = np.ascontiguousarray(v.reshape(p.dim, -1))
    out = np.empty_like(block)
    digits, place = _basis(p.n_sites, p.q)
    a = (1.0 + p.u) / 4.0
    b = (1.0 - p.u) / 4.0
    kernels.ham_apply(block, out, digits, place, p.edges, m_values(p.S),
                      raising_amplitudes(p.S), a, b, nthreads)
    return out[:, 0] if vec else out


def dense_hamiltonian(p: GibbsParams, cap: int = DENSE_CAP) -> np.ndarray:
    if p.dim > cap:
        raise CapacityError(f"dimension cap exceeded: {p.dim} > {cap}")
    return hamiltonian_apply(p, np.eye(p.dim))


def norm_bound(p: GibbsParams) -> float:
    """Rigorous ||H_u|| <= 2 |E| (2 + |u|) S^2."""
    return 2.0 * len(p.edges) * (2.0 + abs(p.u)) * float(p.S) ** 2


def spectral_bounds(p: GibbsParams) -> tuple[float, float, float]:
    """(Emin estimate, Emax estimate, margin) with the spectrum inside [Emin - margin, Emax + margin].

    Extremal eigenvalues come from Lanczos (dense for tiny spaces); the margin
    is 5% of the width, and the returned interval never exceeds the norm bound.
    """
    B = norm_bound(p)
    if len(p.edges) == 0:
        return 0.0, 0.0, 0.0
    if p.dim <= 256:
        w = np.linalg.eigvalsh(dense_hamiltonian(p))
        lo, hi = float(w[0]), float(w[-1])
    else:
        op = LinearOperator((p.dim, p.dim), matvec=lambda x: hamiltonian_apply(p, x), dtype=float)
        v0 = np.random.default_rng(20240607).standard_normal(p.dim)
        lo = float(eigsh(op, k=1, which="SA", v0=v0, tol=1e-8, return_eigenvectors=False)[0])
        hi = float(eigsh(op, k=1, which="LA", v0=v0, tol=1e-8, return_eigenvectors=False)[0])
    margin = 0.05 * max(hi - lo, 1e-12 * B, 1e-12)
    lo_b = max(lo - margin, -B)
    hi_b = min(hi + margin, B)
    return lo_b + margin, hi_b - margin, margin


def _dense_spectrum(p: GibbsParams, cap: int):
    H = dense_hamiltonian(p, cap)
    return eigh(H)


def dense_log_partition(p: GibbsParams, cap: int = DENSE_CAP) -> PartitionValue:
    E, _ = _dense_spectrum(p, cap)
    x = -p.beta * (E - E[0])
    return PartitionValue(float(-p.beta * E[0] + np.log(np.sum(np.exp(x)))), "dense")


def dense_gibbs_diagonal(p: GibbsParams, cap: int = DENSE_CAP) -> np.ndarray:
    """Diagonal of the normalized Gibbs density matrix in the S3 basis."""
    E, U = _dense_spectrum(p, cap)
    w = np.exp(-p.beta * (E - E[0]))
    w /= w.sum()
    return (U * U) @ w


def dense_correlation_matrix(p: GibbsParams, cap: int = DENSE_CAP) -> np.ndarray:
    """Full matrix <S3_x S3_y> over all site pairs."""
    rho = dense_gibbs_diagonal(p, cap)
    M = m_table(p)
    return M.T @ (rho[:, None] * M)


def dense_correlations(p: GibbsParams, cap: int = DENSE_CAP) -> TwoPointTable:
    """Table of G(o, x) = <S3_o S3_x> by full diagonalization; ``.full`` holds G(x, y)."""
    if not isinstance(p.geometry, TorusGeometry):
        raise TypeError("tables need a torus geometry; use dense_correlation_matrix for graphs")
    full = dense_correlation_matrix(p, cap)
    meta = {"engine": "dense", **p.describe()}
    return TwoPointTable(p.geometry, full[0].copy(), None, "dense", meta=meta, full=full)


# ----------------------------------------------------------------------------
# stochastic engine


def chebyshev_coefficients(tau: float, degree: int | None = None) -> np.ndarray:
    """Coefficients c_k with e^{-tau (x + 1)} = sum_k c_k T_k(x) on [-1, 1].

    Degree is chosen so the discarded tail sum |c_k| is below 1e-12; an
    explicit degree that leaves a larger tail raises DegreeError.
    """
    kmax = int(tau + 40.0 * math.sqrt(tau + 1.0) + 60)
    if degree is not None:
        kmax = max(kmax, degree + 1)
    k = np.arange(kmax + 1)
    c = ive(k, tau) * np.where(k % 2 == 0, 1.0, -1.0)
    c[1:] *= 2.0
    tail = np.cumsum(np.abs(c)[::-1])[::-1]  # tail[k] = sum_{j >= k} |c_j|
    if degree is None:
        ok = np.flatnonzero(tail < TAIL_TOL)
        if ok.size == 0:
            raise DegreeError(f"no degree <= {kmax} reaches tail {TAIL_TOL}")
        degree = max(int(ok[0]) - 1, 0)
    elif tail[degree + 1] >= TAIL_TOL:
        raise DegreeError(
            f"degree {degree} too small for beta: coefficient tail {tail[degree + 1]:.2e} >= {TAIL_TOL}")
    return c[: degree + 1]


@dataclass
class Propagator:
    """Applies e^{-beta H / 2} up to the scalar factor exp(log_prefactor)."""

    p: GibbsParams
    center: float
    half_width: float
    coeffs: np.ndarray
    log_prefactor: float
    nthreads: int = 1

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def apply(self, r: np.ndarray) -> np.ndarray:
        c = self.coeffs
        out = c[0] * r
        if len(c) == 1:
            return out
        h = self.half_width

        def X(v):
            return (hamiltonian_apply(self.p, v, self.nthreads) - self.center * v) / h

        t_prev = r
        t_cur = X(r)
        out = out + c[1] * t_cur
        for k in range(2, len(c)):
            t_next = 2.0 * X(t_cur) - t_prev
            out = out + c[k] * t_next
            t_prev, t_cur = t_cur, t_next
        return out


def make_propagator(p: GibbsParams, degree: int | None = None, nthreads: int = 1) -> Propagator:
    lo, hi, margin = spectral_bounds(p)
    lo -= margin
    hi += margin
    center = 0.5 * (hi + lo)
    hw = max(0.5 * (hi - lo), 1e-12)
    tau = 0.5 * p.beta * hw
    coeffs = chebyshev_coefficients(tau, degree)
    # e^{-beta H/2} = e^{-beta c/2} e^{-tau X} = e^{tau - beta c/2} e^{-tau (X + 1)}
    return Propagator(p, center, hw, coeffs, tau - 0.5 * p.beta * center, nthreads)


def _gaussian(dim: int, seed: int, i: int) -> np.ndarray:
    return np.random.default_rng([seed, i]).standard_normal(dim)


def _jackknife_ratio(num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Ratio sum(num)/sum(den) with leave-one-out jackknife errors.

    num has shape (R, ...) and den shape (R,).
    """
    R = den.shape[0]
    tn = num.sum(axis=0)
    td = den.sum()
    est = tn / td
    loo = (tn[None] - num) / (td - den).reshape((R,) + (1,) * (num.ndim - 1))
    var = (R - 1) / R * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0)
    return est, np.sqrt(var)


def stochastic_samples(p: GibbsParams, R: int, degree: int | None = None, seed: int = 0,
                       batch: int = 16, nthreads: int = 1):
    """Per-sample numerators <w, S3_o S3_x w> (R, V) and norms <w, w> (R,)."""
    if p.dim > STOCHASTIC_CAP:
        raise CapacityError(f"dimension cap exceeded: {p.dim} > {STOCHASTIC_CAP}")
    if R < 2:
        raise ValueError("need R >= 2 random vectors")
    prop = make_propagator(p, degree, nthreads)
    M = m_table(p)
    Mo = M * M[:, :1]
    num = np.empty((R, p.n_sites))
    den = np.empty(R)
    for start in range(0, R, batch):
        ids = range(start, min(R, start + batch))
        r = np.stack([_gaussian(p.dim, seed, i) for i in ids], axis=1)
        w = prop.apply(r)
        w2 = w * w
        for j, i in enumerate(ids):
            num[i] = w2[:, j] @ Mo
            den[i] = w2[:, j].sum()
    return num, den, prop


def stochastic_correlations(p: GibbsParams, R: int, degree: int | None = None, seed: int = 0,
                            batch: int = 16, nthreads: int = 1) -> TwoPointTable:
    """Typicality estimate of G(o, x) with jackknife errors; deterministic in (seed, R, degree)."""
    if not isinstance(p.geometry, TorusGeometry):
        raise TypeError("tables need a torus geometry")
    num, den, prop = stochastic_samples(p, R, degree, seed, batch, nthreads)
    est, err = _jackknife_ratio(num, den)
    meta = {"engine": "stochastic", "R": R, "degree": prop.degree, "seed": seed, **p.describe()}
    return TwoPointTable(p.geometry, est, err, "stochastic", meta=meta)


def stochastic_log_partition(p: GibbsParams, R: int, degree: int | None = None, seed: int = 0,
                             batch: int = 16, nthreads: int = 1) -> PartitionValue:
    """log Tr e^{-beta H} from the mean of <w, w> (the trace estimate is of the rescaled trace)."""
    _, den, prop = stochastic_samples(p, R, degree, seed, batch, nthreads)
    scale = 2.0 * prop.log_prefactor
    mean = float(den.mean())
    sd = float(den.std(ddof=1))
    est = TraceEstimate(mean, sd / math.sqrt(R), R, prop.degree)
    return PartitionValue(scale + math.log(mean), "stochastic", est)


# ----------------------------------------------------------------------------
# reflection positivity


@dataclass(frozen=True)
class S3Observable:
    """Linear combination of products of S3 factors: sum_j c_j prod_{x in sites_j} S3_x.

    An empty site tuple is the identity.
    """

    terms: tuple[tuple[float, tuple[int, ...]], ...]

    @classmethod
    def identity(cls) -> "S3Observable":
        return cls(((1.0, ()),))

    @property
    def support(self) -> set[int]:
        return {x for _, sites in self.terms for x in sites}

    def values(self, M: np.ndarray, perm: np.ndarray | None = None) -> np.ndarray:
        """Diagonal of the observable on all basis states; perm relabels sites."""
        out = np.zeros(M.shape[0])
        for c, sites in self.terms:
            f = np.full(M.shape[0], float(c))
            for x in sites:
                f = f * M[:, x if perm is None else perm[x]]
            out += f
        return out


def random_observables(p: GibbsParams, r: Reflection, count: int, seed: int = 0,
                       max_terms: int = 3) -> list[S3Observable]:
    """Random +-1 combinations of S3 products on random subsets of T+."""
    plus = reflection_halves(p.geometry, r)[0].indices()
    rng = np.random.default_rng(seed)
    obs = []
    for _ in range(count):
        nt = int(rng.integers(1, max_terms + 1))
        terms = []
        for _ in range(nt):
            size = int(rng.integers(0, len(plus) + 1))
            sites = tuple(sorted(int(x) for x in rng.choice(plus, size=size, replace=False)))
            terms.append((float(rng.choice([-1.0, 1.0])), sites))
        obs.append(S3Observable(tuple(terms)))
    return obs


def rp_gram_matrix(p: GibbsParams, r: Reflection, observables: Sequence[S3Observable],
                   cap: int = DENSE_CAP, sym_tol: float = 1e-10) -> np.ndarray:
    """M_ab = <A_a theta(A_b)> in the dense Gibbs state."""
    if not isinstance(p.geometry, TorusGeometry):
        raise TypeError("reflections need a torus geometry")
    plus = reflection_halves(p.geometry, r)[0]
    for A in observables:
        bad = [x for x in A.support if not plus.mask[x]]
        if bad:
            raise ValueError(f"observable support {sorted(A.support)} not contained in T+")
    rho = dense_gibbs_diagonal(p, cap)
    M = m_table(p)
    perm = reflection_map(p.geometry, r)
    A = np.stack([o.values(M) for o in observables], axis=1)
    TA = np.stack([o.values(M, perm) for o in observables], axis=1)
    G = A.T @ (rho[:, None] * TA)
    asym = float(np.max(np.abs(G - G.T))) if G.size else 0.0
    if asym > sym_tol:
        raise ArithmeticError(f"<A theta B> != <B theta A>: asymmetry {asym:.3e}")
    return 0.5 * (G + G.T)


def rp_gram_min_eig(p: GibbsParams, r: Reflection, observables: Sequence[S3Observable],
                    cap: int = DENSE_CAP) -> float:
    return float(np.linalg.eigvalsh(rp_gram_matrix(p, r, observables, cap))[0])


def cauchy_schwarz_violation(gram: np.ndarray) -> float:
    """max over pairs of <A theta B>^2 - <A theta A><B theta B> (non-positive under RP)."""
    d = np.diag(gram)
    return float(np.max(gram**2 - np.outer(d, d)))
