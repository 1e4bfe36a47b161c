"""Infrared-bound constants: dispersion, the momentum sum J_{d,L}, its
large-L limit, the Cesaro lower bound c1 and the minimal spin threshold.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from rpmono.spin_algebra import as_spin

EDGE_SQ = "edge_sq"
VERTEX_SQ = "vertex_sq"
CONVENTIONS = (VERTEX_SQ, EDGE_SQ)

# J_{3,infinity} as quoted alongside the threshold values 8 and 11
J3_REFERENCE = 1.15672


class ExtrapolationError(RuntimeError):
    pass


def epsilon_dispersion(k) -> float:
    """2 sum_i (1 - cos k_i)."""
    k = np.atleast_1d(np.asarray(k, dtype=float))
    return float(2.0 * np.sum(1.0 - np.cos(k)))


def _axis_tables(L: int):
    """Per-axis a_j = 2(1 - cos), b_j = 2(1 + cos) for j = 0..L/2 and k <-> -k weights.

    a_0 and b_{L/2} are exact zeros so the k = o and k = pi terms are handled exactly.
    """
    j = np.arange(L // 2 + 1)
    c = np.cos(2.0 * np.pi * j / L)
    a = 2.0 * (1.0 - c)
    b = 2.0 * (1.0 + c)
    a[0] = 0.0
    b[-1] = 0.0
    w = np.full(j.size, 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    return a, b, w


def _multisets(n: int, d: int, chunk: int = 1 << 20):
    """Sorted index tuples (j_1 <= ... <= j_d) over range(n), in chunks of rows."""
    it = itertools.combinations_with_replacement(range(n), d)
    while True:
        flat = np.fromiter(itertools.chain.from_iterable(itertools.islice(it, chunk)), dtype=np.int64)
        if flat.size == 0:
            return
        yield flat.reshape(-1, d)


def J_sum(d: int, L: int) -> float:
    """(1/L^d) sum_{k != o} sqrt(eps(k + pi) / eps(k)) over the dual torus.

    The summand depends on k only through the multiset of |k_i|, so the sum
    runs over sorted index tuples weighted by their number of orderings and
    sign choices.
    """
    d, L = int(d), int(L)
    if d < 1:
        raise ValueError("d must be >= 1")
    if L < 2 or L % 2:
        raise ValueError("L must be even and >= 2")
    a, b, w = _axis_tables(L)
    logfact = [math.lgamma(i + 1) for i in range(d + 1)]
    parts = []
    for J in _multisets(a.size, d):
        num = b[J].sum(axis=1)
        den = a[J].sum(axis=1)
        keep = den > 0
        term = np.zeros(J.shape[0])
        term[keep] = np.sqrt(num[keep] / den[keep])
        # number of distinct orderings of each sorted tuple
        logperm = np.full(J.shape[0], logfact[d])
        run = np.ones(J.shape[0], dtype=np.int64)
        for i in range(1, d):
            same = J[:, i] == J[:, i - 1]
            run = np.where(same, run + 1, 1)
            logperm -= np.where(same, np.log(run), 0.0)
        mult = np.exp(logperm) * np.prod(w[J], axis=1)
        parts.append(math.fsum(term * np.rint(mult)))
    return math.fsum(parts) / float(L) ** d


def J_sum_bruteforce(d: int, L: int) -> float:
    """Direct sum over all L^d momenta (small d, L only)."""
    k = 2.0 * np.pi * np.arange(L) / L
    grids = np.meshgrid(*([k] * d), indexing="ij")
    eps = sum(2.0 * (1.0 - np.cos(g)) for g in grids)
    eps_pi = sum(2.0 * (1.0 + np.cos(g)) for g in grids)
    eps = eps.reshape(-1)
    eps_pi = np.maximum(eps_pi.reshape(-1), 0.0)
    # the k = pi numerator vanishes; round-off there is clipped to zero
    at_pi = np.all(np.stack([np.isclose(g.reshape(-1), np.pi) for g in grids]), axis=0)
    eps_pi[at_pi] = 0.0
    m = eps > 1e-300
    return float(np.sum(np.sqrt(eps_pi[m] / eps[m]))) / L**d


@dataclass
class Extrapolation:
    d: int
    value: float
    achieved_tol: float
    converged: bool
    sizes: list[int] = field(default_factory=list)
    sums: list[float] = field(default_factory=list)
    extrapolants: list[float] = field(default_factory=list)


def J_extrapolate(d: int, tol: float = 1e-3, L0: int = 16, L_max: int | None = None) -> Extrapolation:
    """Two-point Richardson over L = L0, 2 L0, ... assuming J_L = J + C L^{-(d-1)}.

    Stops once successive extrapolants differ by less than ``tol``.
    """
    if d < 2:
        raise ValueError("J_limit needs d >= 2")
    if not tol >= 1e-4:
        raise ValueError("tol must be >= 1e-4")
    if L_max is None:
        # keep the number of sorted momentum tuples around 10^7 at most
        L_max = L0
        while math.comb((2 * L_max) // 2 + d, d) <= 10_000_000:
            L_max *= 2
    p = d - 1
    f = 2.0**p
    res = Extrapolation(d, math.nan, math.inf, False)
    L = L0
    while L <= L_max:
        res.sizes.append(L)
        res.sums.append(J_sum(d, L))
        if len(res.sums) >= 2:
            res.extrapolants.append((f * res.sums[-1] - res.sums[-2]) / (f - 1.0))
        if len(res.extrapolants) >= 2:
            res.achieved_tol = abs(res.extrapolants[-1] - res.extrapolants[-2])
            res.value = res.extrapolants[-1]
            if res.achieved_tol < tol:
                res.converged = True
                return res
        L *= 2
    if res.extrapolants:
        res.value = res.extrapolants[-1]
    return res


def J_limit(d: int, tol: float = 1e-3, L0: int = 16, L_max: int | None = None) -> tuple[float, float]:
    """(extrapolated J_{d,infinity}, achieved tolerance); raises if not converged."""
    r = J_extrapolate(d, tol, L0, L_max)
    if not r.converged:
        raise ExtrapolationError(
            f"J_{d} extrapolation not converged up to L={r.sizes[-1]}: "
            f"last difference {r.achieved_tol:.3g} > tol {tol:g}")
    return r.value, r.achieved_tol


def magnetization_scale(S) -> float:
    """M = S(S+1)/3."""
    S = as_spin(S)
    return float(S * (S + 1)) / 3.0


def c1_bound(S, u: float, d: int, J: float) -> float:
    """M - (sqrt(1-u)/2) sqrt(M) J with M = S(S+1)/3."""
    if u > 0:
        raise ValueError("the bound holds for u <= 0")
    M = magnetization_scale(S)
    return M - 0.5 * math.sqrt(1.0 - u) * math.sqrt(M) * J


def threshold_coefficient(convention: str, eps: float, d: int) -> float:
    if convention == VERTEX_SQ:
        base = 0.5 - eps
    elif convention == EDGE_SQ:
        base = 0.25 - 0.5 * eps
    else:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    if not (eps >= 0 and base > 0):
        raise ValueError("eps must satisfy 0 <= eps < 1/2")
    return base ** (-2 * d)


@dataclass(frozen=True)
class ThresholdResult:
    min_spin: Fraction
    margin: float
    coefficient: float
    convention: str
    u: float
    d: int
    J: float
    eps: float
    note: str = ""

    def margin_at(self, S) -> float:
        S = float(S)
        return S * S + S - 0.75 * (1.0 - self.u) * self.J**2 * self.coefficient


def min_spin_threshold(u: float, d: int, J: float, convention: str = VERTEX_SQ,
                       eps: float = 0.0, S_max: int = 100_000) -> ThresholdResult:
    """Smallest S in N/2 with S^2 + S - (3/4)(1-u) J^2 C > 0."""
    if u > 0:
        raise ValueError("the threshold is stated for u <= 0")
    C = threshold_coefficient(convention, eps, d)
    rhs = 0.75 * (1.0 - u) * J * J * C
    for twoS in range(1, 2 * S_max + 1):
        S = twoS / 2.0
        margin = S * S + S - rhs
        if margin > 0:
            note = ""
            if convention == EDGE_SQ:
                note = "edge_sq coefficient: does not reproduce the quoted Q values 8 and 11"
            return ThresholdResult(Fraction(twoS, 2), margin, C, convention, u, d, J, eps, note)
    raise ValueError(f"no spin up to {S_max} satisfies the threshold")


@dataclass
class IRReport:
    d: int
    L: int | None
    extrapolated: bool
    J: float
    S: Fraction
    u: float
    M: float
    c1_bound: float
    convention: str
    min_spin: Fraction
    achieved_tol: float = 0.0
    note: str = ""

    def __post_init__(self):
        if self.J < 0:
            raise ValueError("J must be non-negative")

    def row(self) -> dict:
        return {"d": self.d, "L": "inf" if self.extrapolated else self.L, "J": self.J,
                "S": str(self.S), "u": self.u, "c1_bound": self.c1_bound, "M": self.M,
                "convention": self.convention, "min_spin": str(self.min_spin)}


IR_COLUMNS = ("d", "L", "J", "S", "u", "c1_bound", "M", "convention", "min_spin")


def ir_report(d: int, S=Fraction(1, 2), u: float = 0.0, L: int | None = None,
              tol: float = 1e-3, convention: str = VERTEX_SQ, eps: float = 0.0) -> IRReport:
    """J at finite L (or extrapolated when L is None) with the derived constants."""
    S = as_spin(S)
    if L is None:
        J, ach = J_limit(d, tol)
    else:
        J, ach = J_sum(d, L), 0.0
    th = min_spin_threshold(u, d, J, convention, eps)
    return IRReport(d, L, L is None, J, S, u, magnetization_scale(S), c1_bound(S, u, d, J),
                    convention, th.min_spin, ach, th.note)
