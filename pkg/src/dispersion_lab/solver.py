"""Time integration of the regularized equation

    (d_t + eps d^4 + g0 d^{2j+1} + ... + gj d) u = N(u)

In Fourier variables u_hat' = L(k) u_hat + N(u)_hat with L(k) = -eps k^4 - phi(k).
The linear part is treated exactly (exponential time differencing or an
integrating factor), so the step size is limited by the nonlinearity only.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BackwardHeat, DispersionLabError, MaxIter, NoContraction, NonFinite
from .field import Field, sobolev_norm
from .multipliers import DispersionSymbol
from .nonlinearity import Nonlinearity, evaluate, p_functional

__all__ = [
    "Equation",
    "Trajectory",
    "time_reversed",
    "linear_symbol",
    "linear_propagator",
    "etd_coefficients",
    "mean_linearization",
    "evolve",
    "picard_solve",
    "bona_smith",
    "FamilyReport",
    "convergence_family",
    "smoothing_metrics",
    "tail_energy",
    "trajectory_csv",
    "run_metadata",
]

SCHEMES = ("ETDRK4", "IFRK4")
DEFAULT_BLOWUP = 1e6


@dataclass(frozen=True)
class Equation:
    sym: DispersionSymbol
    N: Nonlinearity
    eps: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.eps) and 0.0 <= self.eps <= 1.0):
            raise ValueError(f"eps must lie in [0, 1], got {self.eps}")

    def with_eps(self, eps: float) -> "Equation":
        return Equation(self.sym, self.N, eps)

    def to_json(self) -> dict:
        return {"symbol": self.sym.to_json(), "N": self.N.to_json(), "eps": self.eps}


def time_reversed(eq: Equation) -> Equation:
    """Equation satisfied by v(t) = u(-t): the odd symbol and N change sign.

    The regularization is kept as given, so ``time_reversed(eq).with_eps(e)``
    is the forward-regularized version of the backward problem.
    """
    return Equation(eq.sym.reversed(), -eq.N, eq.eps)


@dataclass
class Trajectory:
    equation: Equation
    frames: list[tuple[float, Field]]
    diagnostics: list[dict] = field(default_factory=list)
    status: str = "Completed"
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([t for t, _ in self.frames])

    @property
    def final(self) -> Field:
        return self.frames[-1][1]

    @property
    def blew_up(self) -> bool:
        return self.status == "BlowUpSuspected"

    def at(self, t: float, tol: float = 1e-12) -> Field:
        for tt, u in self.frames:
            if abs(tt - t) <= tol * max(1.0, abs(t)):
                return u
        raise KeyError(t)


def linear_symbol(eq: Equation, K: int) -> np.ndarray:
    k = np.arange(K + 1, dtype=float)
    return -eq.eps * k**4 - 1j * eq.sym.phi_imag_array(K)


def linear_propagator(eq: Equation, t: float, f: Field) -> Field:
    """U(t) f: mode k is multiplied by exp(-eps t k^4 - t phi(k))."""
    if eq.eps > 0 and t < 0:
        raise BackwardHeat("the regularized flow cannot be run backward")
    if t == 0:
        return f
    return Field(np.exp(t * linear_symbol(eq, f.K_grid)) * f.coeffs)


def etd_coefficients(z: np.ndarray, n_contour: int = 32, radius: float = 1.0) -> tuple[np.ndarray, ...]:
    """ETDRK4 weights (Q, f1, f2, f3) for z = h L, divided by h.

    Small |z| uses the mean over a circle of ``radius`` around z, where the
    closed forms cancel catastrophically; large |z| uses the closed forms.
    The switch sits at radius / 2 so that no contour node comes closer than
    radius / 2 to the origin, where the closed forms would cancel again.
    """
    z = np.asarray(z, dtype=np.complex128)
    small = np.abs(z) < radius / 2

    def forms(w):
        ew = np.exp(w)
        return (
            (np.exp(w / 2) - 1) / w,
            (-4 - w + ew * (4 - 3 * w + w * w)) / w**3,
            (2 + w + ew * (-2 + w)) / w**3,
            (-4 - 3 * w - w * w + ew * (4 - w)) / w**3,
        )

    out = [np.empty_like(z) for _ in range(4)]
    if np.any(~small):
        for o, v in zip(out, forms(z[~small])):
            o[~small] = v
    if np.any(small):
        roots = radius * np.exp(2j * np.pi * (np.arange(1, n_contour + 1) - 0.5) / n_contour)
        w = z[small][:, None] + roots[None, :]
        for o, v in zip(out, forms(w)):
            o[small] = np.mean(v, axis=1)
    # the integrands are real on the real axis; keep the weights exactly real there
    real_axis = small & (z.imag == 0)
    for o in out:
        o[real_axis] = o[real_axis].real
    return tuple(out)


def mean_linearization(N: Nonlinearity, ubar: float, K: int) -> np.ndarray:
    """Symbol of the linearization of N about the constant state ``ubar``.

    A monomial contributes only if it is linear in one derivative slot and
    otherwise a power of u, giving lam * ubar^d * (ik)^n (or lam d ubar^(d-1)
    for pure powers of u).
    """
    k = np.arange(K + 1, dtype=float)
    out = np.zeros(K + 1, dtype=np.complex128)
    for mono in N:
        lam = float(mono.lam)
        derivs = {3: mono.a, 2: mono.b, 1: mono.c}
        active = [n for n, e in derivs.items() if e]
        if not active:
            out += lam * mono.d * ubar ** (mono.d - 1)
        elif len(active) == 1 and derivs[active[0]] == 1:
            out += lam * ubar**mono.d * (1j * k) ** active[0]
    return out


def _diagnostics(N: Nonlinearity, u: Field, s_values: Sequence[float], tail_split: int, tail_s: float) -> dict:
    d = {f"sob_{s:g}": sobolev_norm(u, s) for s in s_values}
    d["p_value"] = p_functional(N, u)
    d["mean"] = float(u.coeffs[0].real)
    d["tail_energy"] = tail_energy(u, tail_s, tail_split)
    return d


def tail_energy(u: Field, s: float, k_split: int) -> float:
    """sum over |k| > k_split of <k>^{2s} |u_hat(k)|^2."""
    k = np.arange(k_split + 1, u.K_grid + 1, dtype=float)
    c = u.coeffs[k_split + 1 :]
    return float(2.0 * np.sum((1 + k * k) ** s * (c.real**2 + c.imag**2)))


def _run(eq, phi0, t_end, dt, scheme, stride, blowup, s_values, tail_split, tail_s, linearize):
    K = phi0.K_grid
    n_steps = max(1, int(round(t_end / dt)))
    h = t_end / n_steps
    N = eq.N
    A = mean_linearization(N, float(phi0.coeffs[0].real), K) if linearize and len(N) else np.zeros(K + 1)
    L = linear_symbol(eq, K) + A
    E = np.exp(h * L)
    E2 = np.exp(h * L / 2)

    def F(v):
        return evaluate(N, Field(v)).coeffs - A * v if len(N) else np.zeros_like(v)

    if scheme == "ETDRK4":
        Q, f1, f2, f3 = (h * c for c in etd_coefficients(h * L))

        def step(v):
            Nv = F(v)
            a = E2 * v + Q * Nv
            Na = F(a)
            b = E2 * v + Q * Na
            Nb = F(b)
            c = E2 * a + Q * (2 * Nb - Nv)
            Nc = F(c)
            return E * v + Nv * f1 + 2 * (Na + Nb) * f2 + Nc * f3

    elif scheme == "IFRK4":

        def step(v):
            k1 = F(v)
            k2 = F(E2 * (v + 0.5 * h * k1))
            k3 = F(E2 * v + 0.5 * h * k2)
            k4 = F(E * v + h * E2 * k3)
            return E * v + (h / 6) * (E * k1 + 2 * E2 * (k2 + k3) + k4)

    else:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")

    v = phi0.coeffs.copy()
    frames = [(0.0, phi0)]
    diags = [_diagnostics(N, phi0, s_values, tail_split, tail_s)]
    status = "Completed"
    for n in range(1, n_steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            v = step(v)
        if not np.all(np.isfinite(v)):
            raise NonFinite(f"non-finite coefficients at t={n * h:g}")
        v[0] = v[0].real
        last = n == n_steps
        u = Field(v)
        h4 = sobolev_norm(u, 4)
        if h4 > blowup:
            status = "BlowUpSuspected"
            frames.append((n * h, u))
            diags.append(_diagnostics(N, u, s_values, tail_split, tail_s))
            break
        if n % stride == 0 or last:
            t = t_end if last else n * h
            frames.append((t, u))
            diags.append(_diagnostics(N, u, s_values, tail_split, tail_s))
    return frames, diags, status, h


def evolve(
    eq: Equation,
    phi0: Field,
    t_end: float,
    dt: float = 1e-4,
    scheme: str = "ETDRK4",
    stride: int = 1,
    blowup: float = DEFAULT_BLOWUP,
    max_retries: int = 4,
    s_values: Sequence[float] = (4, 8),
    tail_split: int | None = None,
    tail_s: float = 8.0,
    linearize: bool = True,
) -> Trajectory:
    """Integrate from phi0 over [0, t_end] with step close to dt.

    With ``linearize`` the linearization of N about the initial mean is
    moved into the exactly integrated part (and subtracted from the explicit
    part, so the equation is unchanged). Without it, a diffusive term such as
    3 u^2 u_xx acting on modes with h |phi(k)| >> 1 is averaged away by the
    fast phase rotation and its damping is lost.

    The step is adjusted so that t_end is hit exactly. A non-finite state
    triggers a restart with half the step, at most ``max_retries`` times.
    Negative t_end is allowed only for eps = 0; the time-reversed equation
    is then run forward and the frames are reported at negative times in
    increasing order.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if t_end == 0:
        raise ValueError("t_end must be nonzero")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if t_end < 0:
        if eq.eps > 0:
            raise BackwardHeat("backward runs need eps = 0; regularize the reversed equation instead")
        rev = evolve(time_reversed(eq), phi0, -t_end, dt, scheme, stride, blowup, max_retries,
                     s_values, tail_split, tail_s, linearize)
        rev.frames = [(-t if t else 0.0, u) for t, u in reversed(rev.frames)]
        rev.diagnostics = list(reversed(rev.diagnostics))
        rev.equation = eq
        rev.meta["reversed"] = True
        return rev
    tail_split = phi0.K_grid // 2 if tail_split is None else tail_split
    h = dt
    for attempt in range(max_retries + 1):
        try:
            frames, diags, status, h_used = _run(
                eq, phi0, t_end, h, scheme, stride, blowup, s_values, tail_split, tail_s, linearize
            )
            break
        except NonFinite:
            if attempt == max_retries:
                raise
            h /= 2
    meta = {"scheme": scheme, "dt": h_used, "dt_requested": dt, "retries": attempt,
            "t_end": t_end, "K_grid": phi0.K_grid, "blowup_threshold": blowup,
            "tail_split": tail_split, "tail_s": tail_s, "linearize": linearize}
    return Trajectory(eq, frames, diags, status, meta)


def picard_solve(
    eq: Equation,
    phi0: Field,
    T: float,
    n_quad: int = 65,
    tol: float = 1e-12,
    max_iter: int = 50,
) -> Trajectory:
    """Fixed-point iteration of u(t) = U(t) phi0 + int_0^t U(t - t') N(u(t')) dt'.

    Time is discretized on ``n_quad`` equispaced nodes and the Duhamel
    integral by the composite trapezoid rule with U evaluated exactly. The
    iteration starts from the linear flow and stops when the sup over nodes
    of the H^4 distance between successive iterates drops below ``tol``.
    """
    if not eq.eps > 0:
        raise ValueError("picard_solve needs eps > 0")
    if not T > 0 or n_quad < 2:
        raise ValueError("need T > 0 and n_quad >= 2")
    K = phi0.K_grid
    h = T / (n_quad - 1)
    L = linear_symbol(eq, K)
    P = np.exp(np.outer(np.arange(n_quad) * h, L))  # P[m] = U(m h)
    k = np.arange(K + 1, dtype=float)
    w4 = (1 + k * k) ** 4
    w4[1:] *= 2
    U = P * phi0.coeffs[None, :]
    lin = U.copy()
    ratios: list[float] = []
    prev_dist = None
    bad = 0
    for it in range(1, max_iter + 1):
        G = np.array([evaluate(eq.N, Field(U[i])).coeffs for i in range(n_quad)]) if len(eq.N) else np.zeros_like(U)
        new = lin.copy()
        for i in range(1, n_quad):
            acc = 0.5 * (P[i] * G[0] + G[i])
            if i > 1:
                acc = acc + np.sum(P[i - 1 : 0 : -1] * G[1:i], axis=0)
            new[i] += h * acc
        diff = new - U
        dist = float(np.sqrt(np.max(np.sum(w4 * np.abs(diff) ** 2, axis=1))))
        U = new
        if prev_dist is not None and prev_dist > 0:
            r = dist / prev_dist
            ratios.append(r)
            bad = bad + 1 if r >= 1 else 0
            if bad >= 3:
                raise NoContraction(f"distance ratio >= 1 for 3 iterations (last {r:.3g})")
        if dist < tol:
            break
        prev_dist = dist
    else:
        raise MaxIter(f"no convergence to {tol:g} in {max_iter} iterations")
    for i in range(n_quad):
        U[i, 0] = U[i, 0].real
    frames = [(i * h if i < n_quad - 1 else T, Field(U[i])) for i in range(n_quad)]
    diags = [_diagnostics(eq.N, u, (4, 8), K // 2, 8.0) for _, u in frames]
    meta = {"iterations": it, "ratios": ratios, "contraction_ratio": ratios[-1] if ratios else 0.0,
            "n_quad": n_quad, "T": T, "K_grid": K}
    return Trajectory(eq, frames, diags, "Completed", meta)


def bona_smith(f: Field, eta: float, s: float) -> Field:
    """J_{eta,s} f: mode k is multiplied by exp(-eta <k>^s)."""
    if not 0 < eta <= 1:
        raise ValueError("eta must lie in (0, 1]")
    k = np.arange(f.K_grid + 1, dtype=float)
    return Field(np.exp(-eta * (1 + k * k) ** (s / 2)) * f.coeffs)


# ---------------------------------------------------------------------------
# Bona-Smith families


@dataclass
class FamilyReport:
    etas: list[float]
    s: float
    s_prime: float
    distances: list[float]  # consecutive members, nan when unavailable
    ratios: list[float]  # d_i / d_{i+1}, decrease per step
    verdict: str
    statuses: list[str]
    errors: list[str | None]
    rho: float

    @property
    def blowups(self) -> list[int]:
        return [i for i, st in enumerate(self.statuses) if st != "Completed"]


def _sup_distance(a: Trajectory, b: Trajectory, s: float) -> float:
    tb = {round(t, 12): u for t, u in b.frames}
    common = [(u, tb[round(t, 12)]) for t, u in a.frames if round(t, 12) in tb]
    if not common:
        return float("nan")
    return max(sobolev_norm(u - v, s) for u, v in common)


def convergence_family(
    eq: Equation,
    phi0: Field,
    s: float,
    etas: Sequence[float],
    t_end: float,
    dt: float,
    s_prime: float | None = None,
    rho: float = 1.3,
    scheme: str = "ETDRK4",
    stride: int = 1,
    blowup: float = DEFAULT_BLOWUP,
    workers: int = 1,
) -> FamilyReport:
    """Run eps = eta from J_{eta,s} phi0 for each eta and compare consecutive members.

    Verdicts: Converging when every member completed and each consecutive
    distance shrinks by at least rho per halving of eta (rho^log2(ratio of
    etas) for other spacings); Diverging when some distance grows by a
    factor >= 2; Inconclusive otherwise. Member failures are recorded.
    """
    etas = [float(e) for e in etas]
    if len(etas) < 2 or any(b >= a for a, b in zip(etas, etas[1:])):
        raise ValueError("etas must have >= 2 entries and decrease strictly")
    s_prime = s if s_prime is None else s_prime

    def member(eta):
        try:
            tr = evolve(eq.with_eps(eta), bona_smith(phi0, eta, s), t_end, dt, scheme, stride, blowup)
            return tr, tr.status, None
        except DispersionLabError as exc:
            return None, type(exc).__name__, str(exc)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(member, etas))
    else:
        results = [member(e) for e in etas]
    trajs = [r[0] for r in results]
    statuses = [r[1] for r in results]
    errors = [r[2] for r in results]

    dists = []
    for a, b in zip(trajs, trajs[1:]):
        dists.append(_sup_distance(a, b, s_prime) if a is not None and b is not None else float("nan"))
    ratios = [d0 / d1 if d1 > 0 else float("inf") for d0, d1 in zip(dists, dists[1:])]

    growth = any(d1 >= 2 * d0 for d0, d1 in zip(dists, dists[1:]) if np.isfinite(d0) and np.isfinite(d1))
    required = [rho ** math.log2(etas[i + 1] / etas[i + 2]) for i in range(len(ratios))]
    complete = all(st == "Completed" for st in statuses) and all(np.isfinite(dists))
    if growth:
        verdict = "Diverging"
    elif complete and ratios and all(r >= q for r, q in zip(ratios, required)):
        verdict = "Converging"
    else:
        verdict = "Inconclusive"
    return FamilyReport(etas, s, s_prime, dists, ratios, verdict, statuses, errors, rho)


def smoothing_metrics(traj: Trajectory, s: float, k_split: int) -> list[dict]:
    """Per frame: tail energy above k_split, P_N(u(t)), and P_N(u(t)) >= P_N(u(0)) / 2."""
    N = traj.equation.N
    p0 = p_functional(N, traj.frames[0][1])
    out = []
    for t, u in traj.frames:
        pv = p_functional(N, u)
        out.append({"t": t, "tail_energy": tail_energy(u, s, k_split), "p_value": pv, "p_flag": pv >= p0 / 2})
    return out


# ---------------------------------------------------------------------------
# export


def trajectory_csv(traj: Trajectory, s: float, k_split: int | None = None, tail_s: float | None = None) -> str:
    K = traj.final.K_grid
    k_split = traj.meta.get("tail_split", K // 2) if k_split is None else k_split
    tail_s = traj.meta.get("tail_s", 8.0) if tail_s is None else tail_s
    lines = ["t,sob_4,sob_8,sob_s,p_value,mean,tail_energy"]
    for (t, u), d in zip(traj.frames, traj.diagnostics):
        lines.append(
            f"{t!r},{sobolev_norm(u, 4)!r},{sobolev_norm(u, 8)!r},{sobolev_norm(u, s)!r},"
            f"{d['p_value']!r},{d['mean']!r},{tail_energy(u, tail_s, k_split)!r}"
        )
    return "\n".join(lines) + "\n"


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def run_metadata(traj: Trajectory, seed: int | None = None, extra: dict | None = None) -> dict:
    cfg = {"equation": traj.equation.to_json(), **traj.meta, "seed": seed, **(extra or {})}
    return {**cfg, "status": traj.status, "config_hash": config_hash(cfg)}
