"""Dispersion symbol, resonance function and frequency-space multipliers.

For the (2j+1)-st order linear part

    (d_t + g0 d^{2j+1} + g1 d^{2j-1} + ... + gj d) u

the symbol is ``phi(k) = i * sum_m (-1)^(j-m) g_m k^(2(j-m)+1)`` (for j = 2 this is
``i(g0 k^5 - g1 k^3 + g2 k)``), and the free flow is ``u_hat(t) = exp(-t phi(k)) u_hat(0)``.
The resonance function of a frequency tuple ``(k_1, ..., k_{p+1})`` with zero sum
is ``Phi = -sum_l phi(k_l)``.

All symbol arithmetic is exact: ``phi(k)/i`` is kept as a Fraction, and the
vectorized scans work with the integer polynomial ``D * phi(k)/i`` where ``D``
clears the denominators of the coefficients.
"""

from __future__ import annotations

import itertools
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterator, Sequence

import numpy as np

from .errors import ArityMismatch, BudgetExceeded, NotZeroSum
from .nonlinearity import Monomial

DEFAULT_C_MH = 4.0
DEFAULT_MH_EXPONENT = 0.8
DEFAULT_BUDGET = 2_000_000_000

__all__ = [
    "DispersionSymbol",
    "FreqTuple",
    "Multiplier",
    "phi",
    "phi_exact",
    "resonance_fn",
    "resonance_exact",
    "cutoff_mh",
    "cutoff_mnz",
    "mh_mask",
    "mnz_mask",
    "m_nr",
    "m_nr_exact",
    "m_nr_array",
    "transpose",
    "symmetrize",
    "box_tuples",
    "resonance_search",
    "verify_oscillation",
    "OscillationReport",
    "mh_complement_constant",
    "scan_budget",
]


def scan_budget(budget: int | None = None) -> int:
    """Lattice-scan cost cap: explicit value, else $QT_BUDGET, else the default."""
    if budget is not None:
        return int(budget)
    env = os.environ.get("QT_BUDGET")
    return int(float(env)) if env else DEFAULT_BUDGET


def _check_budget(p: int, K: int, budget: int | None) -> None:
    cost = K**p
    cap = scan_budget(budget)
    if cost > cap:
        raise BudgetExceeded(f"scan cost K^p = {K}^{p} = {cost:.3g} exceeds budget {cap:.3g}")


@dataclass(frozen=True)
class DispersionSymbol:
    """Order parameter ``j`` (equation order 2j+1) and coefficients g0..gj."""

    j: int
    gammas: tuple[Fraction, ...]

    def __post_init__(self):
        g = tuple(Fraction(repr(x)) if isinstance(x, float) else Fraction(x) for x in self.gammas)
        object.__setattr__(self, "gammas", g)
        if self.j < 2:
            raise ValueError("j must be at least 2 (order 5 and up)")
        if len(g) != self.j + 1:
            raise ValueError(f"expected {self.j + 1} coefficients, got {len(g)}")
        if g[0] == 0:
            raise ValueError("the leading coefficient g0 must be nonzero")

    @classmethod
    def pure(cls, j: int = 2, g0=1) -> "DispersionSymbol":
        return cls(j, (g0,) + (0,) * j)

    @property
    def order(self) -> int:
        return 2 * self.j + 1

    def terms(self) -> list[tuple[int, Fraction]]:
        """(power of k, coefficient of phi/i) pairs."""
        return [
            (2 * (self.j - m) + 1, (-1) ** (self.j - m) * g)
            for m, g in enumerate(self.gammas)
            if g != 0
        ]

    def reversed(self) -> "DispersionSymbol":
        """Symbol of the time-reversed equation (all coefficients negated)."""
        return DispersionSymbol(self.j, tuple(-g for g in self.gammas))

    @property
    def denominator(self) -> int:
        return math.lcm(*(c.denominator for _, c in self.terms()))

    def int_terms(self) -> list[tuple[int, int]]:
        D = self.denominator
        return [(pw, int(c * D)) for pw, c in self.terms()]

    def phi_imag(self, k: int) -> Fraction:
        return sum((c * k**pw for pw, c in self.terms()), Fraction(0))

    def phi_imag_array(self, K: int) -> np.ndarray:
        """phi(k)/i for k = 0..K as floats (exact values rounded once)."""
        return np.array([float(self.phi_imag(k)) for k in range(K + 1)])

    def phi_int(self, ks: np.ndarray, n_terms: int = 1) -> np.ndarray:
        """D * phi(k)/i elementwise, exact.

        ``n_terms`` is how many such values the caller will add up; it sizes
        the overflow check that decides between int64 and Python integers.
        """
        ks = np.asarray(ks)
        kmax = int(np.max(np.abs(ks))) if ks.size else 0
        bound = sum(abs(c) * kmax**pw for pw, c in self.int_terms()) * max(n_terms, 1)
        if bound < 2**62:
            k64 = ks.astype(np.int64)
            out = np.zeros(ks.shape, dtype=np.int64)
            for pw, c in self.int_terms():
                out += c * k64**pw
            return out
        kobj = ks.astype(object)
        out = np.zeros(ks.shape, dtype=object)
        for pw, c in self.int_terms():
            out = out + c * kobj**pw
        return out

    def to_json(self) -> dict:
        return {"j": self.j, "gammas": [[g.numerator, g.denominator] for g in self.gammas]}

    @classmethod
    def from_json(cls, obj: dict) -> "DispersionSymbol":
        gs = [Fraction(*g) if isinstance(g, (list, tuple)) else g for g in obj["gammas"]]
        return cls(int(obj["j"]), tuple(gs))


class FreqTuple(tuple):
    """Integer frequency vector (k_1, ..., k_{p+1}) with zero sum."""

    def __new__(cls, ks: Sequence[int]):
        ks = tuple(int(k) for k in ks)
        if len(ks) < 3:
            raise ArityMismatch("a frequency tuple needs p + 1 >= 3 entries")
        if sum(ks) != 0:
            raise NotZeroSum(f"{ks} sums to {sum(ks)}")
        return super().__new__(cls, ks)

    @property
    def p(self) -> int:
        return len(self) - 1

    def partial_sum(self, lo: int, hi: int) -> int:
        """k_(lo, hi) with 1-based inclusive bounds."""
        return sum(self[lo - 1 : hi])


def _as_tuple(kt) -> FreqTuple:
    return kt if isinstance(kt, FreqTuple) else FreqTuple(kt)


def phi_exact(sym: DispersionSymbol, k: int) -> Fraction:
    """phi(k)/i as an exact rational."""
    return sym.phi_imag(k)


def phi(sym: DispersionSymbol, k: int) -> complex:
    return complex(0.0, float(sym.phi_imag(k)))


def resonance_exact(sym: DispersionSymbol, kt) -> Fraction:
    """Phi(k)/i as an exact rational."""
    kt = _as_tuple(kt)
    return -sum((sym.phi_imag(k) for k in kt), Fraction(0))


def resonance_fn(sym: DispersionSymbol, kt) -> complex:
    return complex(0.0, float(resonance_exact(sym, kt)))


# ---------------------------------------------------------------------------
# cutoffs


def cutoff_mh(kt, C: float = DEFAULT_C_MH, exponent: float = DEFAULT_MH_EXPONENT) -> int:
    """1 when min(|k_p|, |k_{p+1}|)^exponent >= C max(|k_1|, ..., |k_{p-1}|)."""
    kt = _as_tuple(kt)
    head = max(abs(k) for k in kt[:-2])
    return int(min(abs(kt[-2]), abs(kt[-1])) ** exponent >= C * head)


def cutoff_mnz(kt) -> int:
    kt = _as_tuple(kt)
    return int(sum(kt[:-2]) != 0)


def mh_mask(ks: np.ndarray, C: float = DEFAULT_C_MH, exponent: float = DEFAULT_MH_EXPONENT) -> np.ndarray:
    ks = np.asarray(ks)
    head = np.max(np.abs(ks[:, :-2]), axis=1)
    tail = np.minimum(np.abs(ks[:, -2]), np.abs(ks[:, -1])).astype(float)
    return tail**exponent >= C * head


def mnz_mask(ks: np.ndarray) -> np.ndarray:
    return np.asarray(ks)[:, :-2].sum(axis=1) != 0


# ---------------------------------------------------------------------------
# the normal-form multiplier M_NR


def _block_orders(a: int, b: int, c: int) -> list[int]:
    return [3] * a + [2] * b + [1] * c


def _m_nr_real_part(mono: Monomial, s: float, ks) -> tuple[int, object]:
    """Return (power of i, real factor R) with M_NR (before cutoffs) = lam * i^power * R.

    Both pieces of M_NR carry the same power of i, 3a + 2b + c - 2, so the
    multiplier is a real number times a fixed power of i.
    """
    a, b, c = mono.a, mono.b, mono.c
    p = mono.degree
    exact = not isinstance(ks, np.ndarray)
    if exact:
        ks = list(ks)
        col = lambda l: ks[l]  # noqa: E731
        one, head_sum = 1, sum(ks[: p - 1])
        coeff1 = Fraction(2 * s - 3, 2) if float(s).is_integer() else Fraction(s) - Fraction(3, 2)
    else:
        col = lambda l: ks[:, l].astype(float)  # noqa: E731
        one, head_sum = np.ones(ks.shape[0]), ks[:, : p - 1].sum(axis=1).astype(float)
        coeff1 = s - 1.5
    total = 0 * one
    if a:
        prod = one
        for l, o in enumerate(_block_orders(a - 1, b, c)):
            prod = prod * col(l) ** o
        total = total + coeff1 * a * head_sum * prod
    if b:
        prod = one
        for l, o in enumerate(_block_orders(a, b - 1, c)):
            prod = prod * col(l) ** o
        total = total + b * prod
    return 3 * a + 2 * b + c - 2, total


def m_nr_exact(mono: Monomial, s: int, C: float, kt, exponent: float = DEFAULT_MH_EXPONENT) -> tuple[Fraction, int]:
    """M_NR as ``(r, n)`` meaning ``r * i^n`` with r rational and n in 0..3."""
    kt = _as_tuple(kt)
    if len(kt) != mono.degree + 1:
        raise ArityMismatch(f"monomial of degree {mono.degree} needs {mono.degree + 1} frequencies")
    if not (cutoff_mh(kt, C, exponent) and cutoff_mnz(kt)):
        return Fraction(0), 0
    ipow, r = _m_nr_real_part(mono, s, kt)
    return mono.lam * Fraction(r), ipow % 4


def m_nr(mono: Monomial, s: int, C: float, kt, exponent: float = DEFAULT_MH_EXPONENT) -> complex:
    r, n = m_nr_exact(mono, s, C, kt, exponent)
    return float(r) * 1j**n


def m_nr_array(
    mono: Monomial, s: float, C: float, ks: np.ndarray, exponent: float = DEFAULT_MH_EXPONENT
) -> np.ndarray:
    """Vectorized M_NR over rows of ``ks`` (shape (n, p+1)), cutoffs included."""
    ks = np.asarray(ks)
    if ks.shape[1] != mono.degree + 1:
        raise ArityMismatch(f"monomial of degree {mono.degree} needs {mono.degree + 1} frequencies")
    ipow, r = _m_nr_real_part(mono, s, ks)
    mask = mh_mask(ks, C, exponent) & mnz_mask(ks)
    return float(mono.lam) * (1j ** (ipow % 4)) * np.where(mask, r, 0.0)


# ---------------------------------------------------------------------------
# multipliers as objects


@dataclass(frozen=True)
class Multiplier:
    """A function on zero-sum tuples of length p+1, evaluated row-wise.

    ``func`` maps an int array of shape (n, p+1) to n complex values.
    ``head_bound``, when set, promises that the multiplier vanishes unless
    |k_l| <= head_bound for l = 1..p-1; enumerations use it to skip work.
    """

    func: Callable[[np.ndarray], np.ndarray]
    p: int
    head_bound: int | None = None
    name: str = field(default="M", compare=False)

    def __call__(self, ks) -> np.ndarray | complex:
        arr = np.asarray(ks, dtype=np.int64)
        if arr.ndim == 1:
            if arr.size != self.p + 1:
                raise ArityMismatch(f"{self.name} takes {self.p + 1} frequencies")
            return complex(np.asarray(self.func(arr[None, :]))[0])
        if arr.shape[1] != self.p + 1:
            raise ArityMismatch(f"{self.name} takes {self.p + 1} frequencies")
        return np.asarray(self.func(arr), dtype=np.complex128)

    @classmethod
    def constant(cls, value: complex, p: int) -> "Multiplier":
        return cls(lambda ks: np.full(ks.shape[0], value, dtype=np.complex128), p, name=f"{value}")


def _check_pair(M: Multiplier, l: int, m: int) -> None:
    if not (1 <= l < m <= M.p + 1):
        raise IndexError(f"need 1 <= l < m <= {M.p + 1}, got l={l}, m={m}")


def transpose(M: Multiplier, l: int, m: int) -> Multiplier:
    """T(k_l, k_m): swap arguments l and m (1-based)."""
    _check_pair(M, l, m)

    def swapped(ks):
        ks = np.array(ks, copy=True)
        ks[:, [l - 1, m - 1]] = ks[:, [m - 1, l - 1]]
        return M.func(ks)

    hb = M.head_bound if (l >= M.p and m >= M.p) else None
    return Multiplier(swapped, M.p, hb, f"T({l},{m}){M.name}")


def symmetrize(M: Multiplier, l: int, m: int) -> Multiplier:
    """S(k_l, k_m) = (1 + T(k_l, k_m)) / 2."""
    T = transpose(M, l, m)
    hb = M.head_bound if T.head_bound is not None else None
    return Multiplier(lambda ks: 0.5 * (M.func(ks) + T.func(ks)), M.p, hb, f"S({l},{m}){M.name}")


# ---------------------------------------------------------------------------
# lattice enumeration


def box_tuples(
    p: int, K: int, head_bound: int | None = None, chunk_rows: int = 1 << 21
) -> Iterator[np.ndarray]:
    """Yield all zero-sum tuples (k_1..k_{p+1}) with every |k_l| <= K, in chunks.

    With ``head_bound`` the first p-1 entries are further limited to
    ``|k_l| <= head_bound``. Chunk order is deterministic.
    """
    hb = K if head_bound is None else min(int(head_bound), K)
    if hb < 0:
        return
    head_vals = np.arange(-hb, hb + 1, dtype=np.int64)
    tail_vals = np.arange(-K, K + 1, dtype=np.int64)
    n_head = head_vals.size ** (p - 1)
    per_block = max(1, chunk_rows // tail_vals.size)
    for start in range(0, n_head, per_block):
        idx = np.arange(start, min(start + per_block, n_head), dtype=np.int64)
        heads = np.empty((idx.size, p - 1), dtype=np.int64)
        rem = idx
        for col in range(p - 2, -1, -1):
            heads[:, col] = head_vals[rem % head_vals.size]
            rem = rem // head_vals.size
        hsum = heads.sum(axis=1)
        rows_head = np.repeat(heads, tail_vals.size, axis=0)
        kp = np.tile(tail_vals, idx.size)
        kl = -(np.repeat(hsum, tail_vals.size) + kp)
        keep = np.abs(kl) <= K
        if keep.any():
            yield np.column_stack([rows_head[keep], kp[keep], kl[keep]])


def _fully_paired(t: Sequence[int]) -> bool:
    counts: dict[int, int] = {}
    for k in t:
        counts[k] = counts.get(k, 0) + 1
    return all(counts.get(-k, 0) == n for k, n in counts.items() if k)


def resonance_search(
    sym: DispersionSymbol,
    p: int,
    K: int,
    budget: int | None = None,
    nontrivial_only: bool = False,
) -> list[FreqTuple]:
    """All zero-sum tuples in the box |k_l| <= K with Phi^(p) = 0 exactly.

    Phi is symmetric in all p+1 entries, so every solution is reported once,
    as its ascending rearrangement. The search is a meet-in-the-middle join
    of sorted half-tuples on the key (sum k, sum phi). With
    ``nontrivial_only`` the solutions whose entries cancel in pairs
    (k, -k) up to zeros, which resonate for every odd symbol, are dropped.
    """
    if p < 2 or K < 1:
        raise ValueError("need p >= 2 and K >= 1")
    _check_budget(p, K, budget)
    n = p + 1
    h1 = (n + 1) // 2
    h2 = n - h1
    vals = range(-K, K + 1)

    def halves(h):
        arr = np.array(list(itertools.combinations_with_replacement(vals, h)), dtype=np.int64)
        ksum = arr.sum(axis=1)
        psum = sym.phi_int(arr, n_terms=n).sum(axis=1)
        return arr, ksum, psum

    lo, lo_k, lo_p = halves(h1)
    hi, hi_k, hi_p = halves(h2)
    index: dict[tuple[int, int], list[int]] = {}
    for i, key in enumerate(zip(hi_k.tolist(), hi_p.tolist())):
        index.setdefault(key, []).append(i)
    found: list[FreqTuple] = []
    lo_last = lo[:, -1].tolist()
    hi_first = hi[:, 0].tolist()
    for i, (ks, ps) in enumerate(zip(lo_k.tolist(), lo_p.tolist())):
        for jdx in index.get((-ks, -ps), ()):
            if lo_last[i] <= hi_first[jdx]:
                t = tuple(lo[i].tolist()) + tuple(hi[jdx].tolist())
                if nontrivial_only and _fully_paired(t):
                    continue
                found.append(FreqTuple(t))
    found.sort()
    return found


# ---------------------------------------------------------------------------
# oscillation-lemma scans


@dataclass
class OscillationReport:
    p: int
    K: int
    C: float
    order: int
    n_support: int
    min_ratio: float
    argmin_tuple: tuple[int, ...] | None
    min_ratio_order: float
    argmin_tuple_order: tuple[int, ...] | None
    est2_min_ratio: float | None = None
    est2_max_ratio: float | None = None
    est2_argmax_tuple: tuple[int, ...] | None = None
    est2_n_support: int = 0
    est2_resonant_hits: int = 0

    @property
    def flagged(self) -> bool:
        """True when the scan failed to certify a positive lower bound."""
        return not (self.n_support and self.min_ratio > 0)

    def to_csv(self) -> str:
        arg = " ".join(map(str, self.argmin_tuple)) if self.argmin_tuple else ""
        return f"p,K,C,min_ratio,argmin_tuple\n{self.p},{self.K},{self.C},{self.min_ratio!r},{arg}\n"


def _resonance_rows(sym: DispersionSymbol, rows: np.ndarray) -> np.ndarray:
    """Phi/i on rows as floats, zero exactly when the resonance vanishes."""
    vals = -sym.phi_int(rows, n_terms=rows.shape[1]).sum(axis=1)
    return np.asarray(vals, dtype=float) / sym.denominator


def verify_oscillation(
    sym: DispersionSymbol,
    p: int,
    C: float = DEFAULT_C_MH,
    K: int = 200,
    exponent: float = DEFAULT_MH_EXPONENT,
    budget: int | None = None,
    est2: bool = True,
    K_est2: int | None = None,
) -> OscillationReport:
    """Scan the box |k_l| <= K on the M_H and M_NZ support.

    Reports min |Phi| / (|k_p|^4 max(1, |k_(1,p-1)|)) and the same with the
    exponent 2j of the symbol's order. With ``est2`` it also scans (p+2)-tuples
    for the symmetrized difference (1 - S(k_{p+1}, k_{p+2}))[1/Phi] against
    max_l |k_l|^2 / |k_{p+1}|^5 and reports its min and max; the max being
    finite is the upper bound that the proof of the second oscillation lemma
    establishes.
    """
    _check_budget(p, K, budget)
    head_bound = int(math.floor(K**exponent / C)) if C > 0 else K
    best = (math.inf, None)
    best_order = (math.inf, None)
    n_support = 0
    for rows in box_tuples(p, K, head_bound):
        keep = mh_mask(rows, C, exponent) & mnz_mask(rows)
        rows = rows[keep]
        if not rows.size:
            continue
        n_support += rows.shape[0]
        res = np.abs(_resonance_rows(sym, rows))
        kp = np.abs(rows[:, p - 1]).astype(float)
        hs = np.maximum(1, np.abs(rows[:, : p - 1].sum(axis=1))).astype(float)
        for attr, power in (("best", 4), ("best_order", 2 * sym.j)):
            ratio = res / (kp**power * hs)
            i = int(np.argmin(ratio))
            cur = best if attr == "best" else best_order
            if ratio[i] < cur[0]:
                cur = (float(ratio[i]), tuple(int(x) for x in rows[i]))
                if attr == "best":
                    best = cur
                else:
                    best_order = cur
    report = OscillationReport(
        p=p, K=K, C=C, order=sym.order, n_support=n_support,
        min_ratio=best[0] if n_support else 0.0, argmin_tuple=best[1],
        min_ratio_order=best_order[0] if n_support else 0.0, argmin_tuple_order=best_order[1],
    )
    if est2:
        _scan_est2(sym, p, C, K if K_est2 is None else K_est2, exponent, report)
    return report


def _scan_est2(sym, p, C, K, exponent, report: OscillationReport) -> None:
    q = 2
    n = p + q  # tuple length p + q
    head_bound = int(math.floor(K**exponent / C))
    lo, hi = math.inf, 0.0
    arg_hi = None
    count = hits = 0
    for rows in box_tuples(n - 1, K, head_bound):
        # rows: (k_1..k_{p}, k_{p+1}, k_{p+2}); the last two are the large pair
        big1 = np.abs(rows[:, -2]).astype(float)
        big2 = np.abs(rows[:, -1]).astype(float)
        head = np.max(np.abs(rows[:, :-2]), axis=1)
        keep = (np.minimum(big1, big2) ** exponent >= C * head) & (rows[:, : p - 1].sum(axis=1) != 0)
        rows = rows[keep]
        if not rows.size:
            continue
        A = np.column_stack([rows[:, : p - 1], rows[:, p - 1] + rows[:, p], rows[:, p + 1]])
        B = np.column_stack([rows[:, : p - 1], rows[:, p - 1] + rows[:, p + 1], rows[:, p]])
        phiA = _resonance_rows(sym, A)
        phiB = _resonance_rows(sym, B)
        ok = (phiA != 0) & (phiB != 0)
        hits += int((~ok).sum())
        rows, phiA, phiB = rows[ok], phiA[ok], phiB[ok]
        if not rows.size:
            continue
        count += rows.shape[0]
        lhs = np.abs(0.5 / phiA - 0.5 / phiB)
        scale = np.max(np.abs(rows[:, :-2]), axis=1).astype(float) ** 2 / np.abs(rows[:, -2]).astype(float) ** 5
        ratio = lhs / scale
        lo = min(lo, float(ratio.min()))
        i = int(np.argmax(ratio))
        if ratio[i] > hi:
            hi, arg_hi = float(ratio[i]), tuple(int(x) for x in rows[i])
    report.est2_min_ratio = lo if count else None
    report.est2_max_ratio = hi if count else None
    report.est2_argmax_tuple = arg_hi
    report.est2_n_support = count
    report.est2_resonant_hits = hits


def mh_complement_constant(
    p: int, C: float = DEFAULT_C_MH, K: int = 40, exponent: float = DEFAULT_MH_EXPONENT
) -> float:
    """max of max(|k_p|, |k_{p+1}|) / max_{l<p} |k_l|^(5/4) over supp(1 - M_H) in the box."""
    worst = 0.0
    for rows in box_tuples(p, K):
        comp = ~mh_mask(rows, C, exponent)
        rows = rows[comp]
        if not rows.size:
            continue
        head = np.max(np.abs(rows[:, :-2]), axis=1).astype(float)
        big = np.maximum(np.abs(rows[:, -2]), np.abs(rows[:, -1])).astype(float)
        worst = max(worst, float(np.max(big / head**1.25)))
    return worst


def resonance_csv(rows: Sequence[FreqTuple], p: int, K: int, sym: DispersionSymbol, C: float | None = None) -> str:
    cols = ",".join(f"k{i}" for i in range(1, p + 2))
    lines = [f"p,K,C,{cols},phi_value"]
    c_text = "" if C is None else repr(C)
    for t in rows:
        val = resonance_exact(sym, t)
        lines.append(f"{p},{K},{c_text}," + ",".join(map(str, t)) + f",{val}")
    return "\n".join(lines) + "\n"
