"""Multilinear forms and the corrected energies.

The scalar multilinear form is

    Gamma(M; f_1, ..., f_{p+1}) = sum_{k_1 + ... + k_{p+1} = 0} M(k) prod_l f_l_hat(k_l)

summed over the box |k_l| <= K_corr. The corrected energy of a pair (f, g) is

    F_s(f, g) = 1/2 ||d^s (f-g)||^2 + 1/2 ||f-g||^2 (1 + C_s sum_j ||f||_{H^4}^{s(p_j-1)})
                + sum_j Gamma((ik_p)^{s+1} (ik_{p+1})^{s+1} M_NR,j / Phi; f, ..., f, f-g, f-g)

and E_s(f) = F_s(f, 0). The correction sums are box truncations of infinite
series; they are diagnostics, never inputs to the time stepper.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import (
    ArityMismatch,
    CalibrationFailed,
    DegenerateTrajectory,
    InternalResonanceHit,
    NotReal,
)
from .field import Field, derivative, random_band_field, sobolev_norm
from .multipliers import (
    DEFAULT_C_MH,
    DEFAULT_MH_EXPONENT,
    DispersionSymbol,
    Multiplier,
    box_tuples,
    m_nr_array,
    mh_mask,
    mnz_mask,
)
from .nonlinearity import Monomial, Nonlinearity, p_functional

__all__ = [
    "EnergyParams",
    "EnergyReport",
    "ResidualReport",
    "gamma_form",
    "correction_multiplier",
    "correction_term",
    "energy_f",
    "energy_e",
    "sandwich_terms",
    "calibrate_cs",
    "sample_pair",
    "energy_residual_report",
    "energy_csv",
]


@dataclass(frozen=True)
class EnergyParams:
    s: int
    C_s: float = 4.0
    K_corr: int = 16
    C_mh: float = DEFAULT_C_MH
    mh_exponent: float = DEFAULT_MH_EXPONENT

    def __post_init__(self):
        if int(self.s) != self.s or self.s < 1:
            raise ValueError("s must be an integer >= 1")
        if not self.C_s > 0:
            raise ValueError("C_s must be positive")
        if self.K_corr < 1:
            raise ValueError("K_corr must be positive")


@dataclass(frozen=True)
class EnergyReport:
    e_main: float
    e_corr: float
    e_total: float
    p_value: float


def _spectrum_table(f: Field, K: int) -> np.ndarray:
    """Coefficients for k = -K..K, indexed by k + K."""
    if f.K_grid < K:
        raise ValueError(f"K_corr={K} exceeds the field's K_grid={f.K_grid}")
    c = f.coeffs[: K + 1]
    return np.concatenate([np.conj(c[:0:-1]), c])


def gamma_form(
    M: Multiplier,
    fields: Sequence[Field],
    p: int,
    K_corr: int,
    chunk_rows: int = 1 << 20,
) -> complex:
    """Gamma(M; f_1..f_{p+1}) over zero-sum tuples with every |k_l| <= K_corr.

    Each chunk is reduced with numpy's pairwise summation and the chunk
    partials are reduced the same way, so results do not depend on
    ``chunk_rows`` beyond rounding of order 1e-16 relative.
    """
    if len(fields) != p + 1 or M.p != p:
        raise ArityMismatch(f"Gamma^({p}) takes {p + 1} fields and a {p}-multiplier")
    tables = [_spectrum_table(f, K_corr) for f in fields]
    partials = []
    for rows in box_tuples(p, K_corr, M.head_bound, chunk_rows=chunk_rows):
        vals = np.asarray(M.func(rows), dtype=np.complex128)
        nz = vals != 0
        if not nz.any():
            continue
        rows, vals = rows[nz], vals[nz]
        for l, tab in enumerate(tables):
            vals = vals * tab[rows[:, l] + K_corr]
        partials.append(np.sum(vals))
    return complex(np.sum(np.array(partials))) if partials else 0j


def correction_multiplier(mono: Monomial, sym: DispersionSymbol, params: EnergyParams) -> Multiplier:
    """(ik_p)^{s+1} (ik_{p+1})^{s+1} M_NR / Phi for one monomial."""
    p = mono.degree
    s = int(params.s)
    K = params.K_corr
    head_bound = int(math.floor(K**params.mh_exponent / params.C_mh)) if params.C_mh > 0 else K
    sign = (-1.0) ** (s + 1)  # i^{2s+2}

    def func(ks: np.ndarray) -> np.ndarray:
        out = np.zeros(ks.shape[0], dtype=np.complex128)
        mask = mh_mask(ks, params.C_mh, params.mh_exponent) & mnz_mask(ks)
        if not mask.any():
            return out
        sub = ks[mask]
        res = -np.asarray(sym.phi_int(sub, n_terms=p + 1).sum(axis=1))
        if np.any(res == 0):
            bad = sub[np.flatnonzero(res == 0)[0]]
            raise InternalResonanceHit(f"Phi vanishes on the multiplier support at {tuple(bad)}")
        Phi = 1j * res.astype(float) / sym.denominator
        pref = sign * (sub[:, p - 1].astype(float) * sub[:, p].astype(float)) ** (s + 1)
        out[mask] = pref * m_nr_array(mono, s, params.C_mh, sub, params.mh_exponent) / Phi
        return out

    return Multiplier(func, p, head_bound, f"corr[{mono}]")


def _corr_value(N: Nonlinearity, sym, params, f: Field, d: Field) -> float:
    total = 0j
    for mono in N:
        if mono.a == 0 and mono.b == 0:
            continue
        M = correction_multiplier(mono, sym, params)
        slots = [f] * (mono.degree - 1) + [d, d]
        total += gamma_form(M, slots, mono.degree, params.K_corr)
    if abs(total.imag) > 1e-8 * (1.0 + abs(total)):
        raise NotReal(f"correction term has imaginary part {total.imag:.3e}")
    return float(total.real)


def correction_term(
    N: Nonlinearity, sym: DispersionSymbol, params: EnergyParams, f: Field, g: Field
) -> float:
    return _corr_value(N, sym, params, f, f - g)


def _weight_sum(N: Nonlinearity, s: int, f: Field) -> float:
    h4 = sobolev_norm(f, 4)
    return float(sum(h4 ** (s * (mono.degree - 1)) for mono in N))


def sandwich_terms(
    N: Nonlinearity, sym: DispersionSymbol, params: EnergyParams, f: Field, g: Field
) -> tuple[float, float, float]:
    """(B0, W, corr) with the comparison norm B = B0 + C_s W.

    B0 = ||d^s (f-g)||^2 + ||f-g||^2 and W = ||f-g||^2 sum_j ||f||_{H^4}^{s(p_j-1)};
    F_s = B/2 + corr. None of the three depends on C_s.
    """
    d = f - g
    l2 = sobolev_norm(d, 0) ** 2
    top = sobolev_norm(derivative(d, params.s), 0) ** 2
    return top + l2, l2 * _weight_sum(N, params.s, f), _corr_value(N, sym, params, f, d)


def energy_f(
    N: Nonlinearity, sym: DispersionSymbol, params: EnergyParams, f: Field, g: Field
) -> EnergyReport:
    B0, W, corr = sandwich_terms(N, sym, params, f, g)
    e_main = 0.5 * (B0 + params.C_s * W)
    return EnergyReport(e_main, corr, e_main + corr, p_functional(N, f))


def energy_e(N: Nonlinearity, sym: DispersionSymbol, params: EnergyParams, f: Field) -> EnergyReport:
    return energy_f(N, sym, params, f, Field.zeros(f.K_grid))


# ---------------------------------------------------------------------------
# calibration of C_s


def sample_pair(rng: np.random.Generator, K_grid: int, s: int) -> tuple[Field, Field]:
    """Random (f, g) with log-uniform amplitudes and mixed regularity; g = 0 one time in five."""
    amp_f = 10.0 ** rng.uniform(-2.0, 0.5)
    amp_g = amp_f * 10.0 ** rng.uniform(-1.0, 1.0)
    reg = float(rng.choice([4.0, float(s), s + 2.0]))
    f = random_band_field(int(rng.integers(2**31)), reg, amp_f, K_grid, mean_value=rng.normal(0.0, amp_f))
    g = random_band_field(int(rng.integers(2**31)), reg, amp_g, K_grid, mean_value=rng.normal(0.0, amp_g))
    if rng.uniform() < 0.2:
        g = Field.zeros(K_grid)
    return f, g


def calibrate_cs(
    N: Nonlinearity,
    sym: DispersionSymbol,
    s: int,
    samples: int = 200,
    seed: int = 0,
    params: EnergyParams | None = None,
    K_grid: int | None = None,
    safety: float = 4.0,
) -> float:
    """Smallest power of two C_s >= 1 for which F_s <= B <= 4 F_s on every sample, times ``safety``.

    The correction does not depend on C_s, so each sample yields the exact
    threshold max((2 corr - B0)/W, (-4 corr - B0)/W) and no bisection is needed.
    """
    params = replace(params or EnergyParams(s=s), s=s)
    K_grid = K_grid or params.K_corr
    rng = np.random.default_rng(seed)
    need = 0.0
    for _ in range(samples):
        f, g = sample_pair(rng, K_grid, s)
        B0, W, corr = sandwich_terms(N, sym, params, f, g)
        gap = max(2.0 * corr - B0, -4.0 * corr - B0)
        if gap <= 0:
            continue
        if W <= 0:
            raise CalibrationFailed("correction exceeds the norm on a sample with zero weight")
        need = max(need, gap / W)
    exponent = max(0, math.ceil(math.log2(need))) if need > 0 else 0
    if exponent > 64:
        raise CalibrationFailed(f"C_s would need 2^{exponent}")
    value = float(2**exponent)
    while value < need:  # guard against log2 rounding
        value *= 2.0
    return value * safety


# ---------------------------------------------------------------------------
# energy-inequality residual


@dataclass
class ResidualReport:
    times: np.ndarray
    e_s: np.ndarray
    e_8: np.ndarray
    quotients: np.ndarray  # interior frames only
    r: int
    ceiling: float

    @property
    def max_quotient(self) -> float:
        return float(np.max(self.quotients))

    @property
    def max_abs_quotient(self) -> float:
        return float(np.max(np.abs(self.quotients)))

    @property
    def positive_part(self) -> float:
        return max(0.0, self.max_quotient)

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.quotients)))

    @property
    def within_ceiling(self) -> bool:
        return self.finite and self.positive_part <= self.ceiling


def energy_residual_report(
    traj,
    N: Nonlinearity,
    sym: DispersionSymbol,
    params: EnergyParams,
    ceiling: float = 1e6,
    params_8: EnergyParams | None = None,
) -> ResidualReport:
    """Quotient (dE_s/dt + P_N(u) ||d^{s+1} u||^2) / (E_s (1 + E_8)^{r(s)}) per interior frame.

    r(s) = s (p_max - 1). The time derivative uses centered differences
    (second-order one-sided stencils at the ends). E_8 uses ``params_8`` or,
    by default, the same C_s and truncation with s = 8.
    """
    frames = list(traj.frames)
    if len(frames) < 3:
        raise DegenerateTrajectory("need at least 3 frames")
    params_8 = params_8 or replace(params, s=8)
    t = np.array([fr[0] for fr in frames], dtype=float)
    if np.any(np.diff(t) <= 0):
        raise DegenerateTrajectory("frame times must increase strictly")
    es = np.empty(t.size)
    e8 = np.empty(t.size)
    gain = np.empty(t.size)
    for i, (_, u) in enumerate(frames):
        es[i] = energy_e(N, sym, params, u).e_total
        e8[i] = es[i] if params_8 == params else energy_e(N, sym, params_8, u).e_total
        gain[i] = p_functional(N, u) * sobolev_norm(derivative(u, params.s + 1), 0) ** 2
    r = params.s * (N.p_max - 1) if len(N) else 0
    dE = np.gradient(es, t, edge_order=2)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        q = (dE + gain) / (es * (1.0 + e8) ** r)
    return ResidualReport(t, es, e8, q[1:-1], r, ceiling)


def energy_csv(traj, N: Nonlinearity, sym: DispersionSymbol, params: EnergyParams) -> str:
    lines = ["t,e_main,e_corr,e_total,p_value,sob_s,sob_8"]
    for t, u in traj.frames:
        rep = energy_e(N, sym, params, u)
        lines.append(
            f"{t!r},{rep.e_main!r},{rep.e_corr!r},{rep.e_total!r},{rep.p_value!r},"
            f"{sobolev_norm(u, params.s)!r},{sobolev_norm(u, 8)!r}"
        )
    return "\n".join(lines) + "\n"
