"""Polynomial nonlinearities N(u3, u2, u1, u0) and their resonance classification.

A nonlinearity is a sum of monomials ``lam * u3^a * u2^b * u1^c * u0^d`` with
``u_i`` the i-th spatial derivative of the unknown. Its classifier density is
``dN/du2``; the nonlinearity is *non-parabolic* exactly when that density
integrates to zero over the torus for every smooth periodic function. The
decision is made symbolically with the Euler (variational-derivative)
operator over exact rationals, so no tolerance is involved.

Text grammar accepted by :func:`parse_nonlinearity`::

    expr   := ['-'] term (('+' | '-') term)*
    term   := factor ('*' factor)*
    factor := rational | '(' ['-'] rational ')' | 'u0' .. 'u3' ['^' int]
    rational := int ['/' int] | decimal

Examples: ``"2*u2*u1^2"``, ``"-20*u1*u2 - 10*u0*u3 - 3*u0^2*u1"``,
``"(-1/2)*u0*u3"``. The literal ``"0"`` is the zero nonlinearity.
"""

from __future__ import annotations

import enum
import re
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DegreeTooLow, JetOverflow, ParseError
from .field import Field, padded_size

N_JET = 7  # jet variables w0..w6

__all__ = [
    "Monomial",
    "Nonlinearity",
    "DiffPolynomial",
    "ResonanceType",
    "parse_nonlinearity",
    "evaluate",
    "p_density",
    "mean_density",
    "p_functional",
    "total_derivative",
    "euler_operator",
    "integral_vanishes",
    "classify",
    "conserves_mean",
    "j1_functional",
]


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


@dataclass(frozen=True)
class Monomial:
    lam: Fraction
    a: int = 0
    b: int = 0
    c: int = 0
    d: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lam", _frac(self.lam))
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValueError("exponents must be nonnegative")
        if self.degree < 2:
            raise DegreeTooLow(f"monomial {self.powers} has degree {self.degree} < 2")

    @property
    def powers(self) -> tuple[int, int, int, int]:
        return (self.a, self.b, self.c, self.d)

    @property
    def degree(self) -> int:
        return self.a + self.b + self.c + self.d

    def derivative_orders(self) -> list[int]:
        """Derivative order carried by each factor: a threes, b twos, c ones, d zeros."""
        return [3] * self.a + [2] * self.b + [1] * self.c + [0] * self.d

    def _body(self) -> str:
        parts = []
        for name, e in (("u3", self.a), ("u2", self.b), ("u1", self.c), ("u0", self.d)):
            if e == 1:
                parts.append(name)
            elif e > 1:
                parts.append(f"{name}^{e}")
        return "*".join(parts)

    def _unsigned(self) -> str:
        mag = abs(self.lam)
        return self._body() if mag == 1 else f"{mag}*{self._body()}"

    def __str__(self) -> str:
        return ("-" if self.lam < 0 else "") + self._unsigned()


def _fmt_coeff(q: Fraction) -> str:
    text = str(q)
    return f"({text})" if (q < 0 or q.denominator != 1) else text


class Nonlinearity:
    """Canonical sum of monomials; like terms merged, zero terms dropped.

    The empty sum is allowed and stands for N = 0 (linear flows).
    """

    __slots__ = ("_monomials",)

    def __init__(self, monomials: Iterable[Monomial] = ()):
        merged: dict[tuple[int, int, int, int], Fraction] = {}
        for m in monomials:
            merged[m.powers] = merged.get(m.powers, Fraction(0)) + m.lam
        self._monomials = tuple(
            Monomial(lam, *pw) for pw, lam in sorted(merged.items(), reverse=True) if lam != 0
        )

    @classmethod
    def from_terms(cls, terms: Iterable[tuple[object, int, int, int, int]]) -> "Nonlinearity":
        return cls(Monomial(lam, a, b, c, d) for lam, a, b, c, d in terms)

    @property
    def monomials(self) -> tuple[Monomial, ...]:
        return self._monomials

    @property
    def p_max(self) -> int:
        return max((m.degree for m in self._monomials), default=0)

    @property
    def max_order(self) -> int:
        return max((max(m.derivative_orders()) for m in self._monomials), default=0)

    def scaled(self, c) -> "Nonlinearity":
        c = _frac(c)
        return Nonlinearity(Monomial(m.lam * c, *m.powers) for m in self._monomials)

    def __neg__(self) -> "Nonlinearity":
        return self.scaled(-1)

    def __add__(self, other: "Nonlinearity") -> "Nonlinearity":
        return Nonlinearity(self._monomials + other._monomials)

    def __eq__(self, other) -> bool:
        return isinstance(other, Nonlinearity) and self._monomials == other._monomials

    def __hash__(self) -> int:
        return hash(self._monomials)

    def __len__(self) -> int:
        return len(self._monomials)

    def __iter__(self):
        return iter(self._monomials)

    def __str__(self) -> str:
        if not self._monomials:
            return "0"
        text = str(self._monomials[0])
        for m in self._monomials[1:]:
            text += (" - " if m.lam < 0 else " + ") + m._unsigned()
        return text

    def __repr__(self) -> str:
        return f"Nonlinearity({str(self)!r})"

    def to_json(self) -> list[dict]:
        return [
            {"lambda": [m.lam.numerator, m.lam.denominator], "a": m.a, "b": m.b, "c": m.c, "d": m.d}
            for m in self._monomials
        ]

    @classmethod
    def from_json(cls, items: Sequence[Mapping]) -> "Nonlinearity":
        terms = []
        for it in items:
            num, den = it["lambda"]
            terms.append((Fraction(int(num), int(den)), it["a"], it["b"], it["c"], it["d"]))
        return cls.from_terms(terms)


class ResonanceType(enum.Enum):
    NON_PARABOLIC = "non-parabolic"
    PARABOLIC = "parabolic"


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:/\d+)?|\.\d+)|(?P<var>u[0-3])|(?P<op>[-+*^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str]]:
    pos, out = 0, []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected input at {pos}: {text[pos:pos + 10]!r}")
        kind = m.lastgroup
        out.append((kind, m.group(kind)))
        pos = m.end()
    return out


def _number(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ParseError(f"bad number {text!r}") from exc


def parse_nonlinearity(text: str) -> Nonlinearity:
    """Parse the text grammar from the module docstring; see there for examples."""
    toks = _tokenize(text)
    if not toks:
        raise ParseError("empty expression")
    i = 0
    raw: list[tuple[Fraction, list[int]]] = []

    def peek():
        return toks[i] if i < len(toks) else (None, None)

    def parse_rational() -> Fraction:
        nonlocal i
        kind, val = peek()
        sign = 1
        if (kind, val) == ("op", "-"):
            sign, i = -1, i + 1
            kind, val = peek()
        if kind != "num":
            raise ParseError(f"expected a number, got {val!r}")
        i += 1
        return sign * _number(val)

    def parse_factor(coef: Fraction, powers: list[int]) -> Fraction:
        nonlocal i
        kind, val = peek()
        if kind == "num":
            i += 1
            return coef * _number(val)
        if (kind, val) == ("op", "("):
            i += 1
            q = parse_rational()
            if peek() != ("op", ")"):
                raise ParseError("missing ')'")
            i += 1
            return coef * q
        if kind == "var":
            i += 1
            exp = 1
            if peek() == ("op", "^"):
                i += 1
                k2, v2 = peek()
                if k2 != "num" or not v2.isdigit():
                    raise ParseError("exponent must be a nonnegative integer")
                exp, i = int(v2), i + 1
            powers[3 - int(val[1])] += exp
            return coef
        raise ParseError(f"unexpected token {val!r}")

    sign = Fraction(1)
    if peek() == ("op", "-"):
        sign, i = Fraction(-1), i + 1
    elif peek() == ("op", "+"):
        i += 1
    while True:
        powers = [0, 0, 0, 0]
        coef = parse_factor(sign, powers)
        while peek() == ("op", "*"):
            i += 1
            coef = parse_factor(coef, powers)
        raw.append((coef, powers))
        kind, val = peek()
        if kind is None:
            break
        if (kind, val) == ("op", "+"):
            sign = Fraction(1)
        elif (kind, val) == ("op", "-"):
            sign = Fraction(-1)
        else:
            raise ParseError(f"unexpected token {val!r}")
        i += 1

    merged: dict[tuple[int, ...], Fraction] = {}
    for coef, powers in raw:
        merged[tuple(powers)] = merged.get(tuple(powers), Fraction(0)) + coef
    terms = []
    for powers, coef in merged.items():
        if coef == 0:
            continue
        if sum(powers) < 2:
            raise DegreeTooLow(f"term {_fmt_coeff(coef)} with powers {powers} has degree < 2")
        terms.append((coef, *powers))
    return Nonlinearity.from_terms(terms)


# ---------------------------------------------------------------------------
# differential polynomials in the jet variables w0..w6

Exponents = tuple[int, ...]


class DiffPolynomial:
    """Polynomial in w0..w6 with rational coefficients (w_i stands for the i-th derivative)."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[Exponents, object] | None = None):
        clean: dict[Exponents, Fraction] = {}
        for exps, coef in (terms or {}).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) < N_JET:
                exps = exps + (0,) * (N_JET - len(exps))
            if len(exps) != N_JET or min(exps) < 0:
                raise ValueError(f"bad exponent vector {exps}")
            q = clean.get(exps, Fraction(0)) + _frac(coef)
            clean[exps] = q
        self._terms = {e: q for e, q in clean.items() if q != 0}

    @classmethod
    def monomial(cls, coef, **powers: int) -> "DiffPolynomial":
        """``DiffPolynomial.monomial(2, w1=2)`` is 2*w1^2."""
        exps = [0] * N_JET
        for name, e in powers.items():
            exps[int(name[1:])] = e
        return cls({tuple(exps): coef})

    @property
    def terms(self) -> dict[Exponents, Fraction]:
        return dict(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def max_jet(self) -> int:
        """Highest jet index present, -1 for constants and the zero polynomial."""
        top = -1
        for exps in self._terms:
            for i in range(N_JET - 1, -1, -1):
                if exps[i]:
                    top = max(top, i)
                    break
        return top

    def constant_term(self) -> Fraction:
        return self._terms.get((0,) * N_JET, Fraction(0))

    def __add__(self, other: "DiffPolynomial") -> "DiffPolynomial":
        out = dict(self._terms)
        for e, q in other._terms.items():
            out[e] = out.get(e, Fraction(0)) + q
        return DiffPolynomial(out)

    def __neg__(self) -> "DiffPolynomial":
        return DiffPolynomial({e: -q for e, q in self._terms.items()})

    def __sub__(self, other: "DiffPolynomial") -> "DiffPolynomial":
        return self + (-other)

    def scale(self, c) -> "DiffPolynomial":
        c = _frac(c)
        return DiffPolynomial({e: q * c for e, q in self._terms.items()})

    def __mul__(self, other: "DiffPolynomial") -> "DiffPolynomial":
        out: dict[Exponents, Fraction] = {}
        for e1, q1 in self._terms.items():
            for e2, q2 in other._terms.items():
                e = tuple(x + y for x, y in zip(e1, e2))
                out[e] = out.get(e, Fraction(0)) + q1 * q2
        return DiffPolynomial(out)

    def __eq__(self, other) -> bool:
        return isinstance(other, DiffPolynomial) and self._terms == other._terms

    def __hash__(self) -> int:
        return hash(frozenset(self._terms.items()))

    def partial(self, i: int) -> "DiffPolynomial":
        """Partial derivative with respect to w_i."""
        out: dict[Exponents, Fraction] = {}
        for exps, q in self._terms.items():
            if exps[i]:
                e = list(exps)
                e[i] -= 1
                out[tuple(e)] = out.get(tuple(e), Fraction(0)) + q * exps[i]
        return DiffPolynomial(out)

    def evaluate(self, jets: Sequence[np.ndarray]) -> np.ndarray:
        """Evaluate at jet samples ``jets[i]`` (arrays of equal shape)."""
        shape = np.shape(jets[0])
        total = np.zeros(shape)
        for exps, q in self._terms.items():
            term = np.full(shape, float(q))
            for i, e in enumerate(exps):
                if e:
                    term = term * jets[i] ** e
            total = total + term
        return total

    def __str__(self) -> str:
        if not self._terms:
            return "0"
        pieces = []
        for exps in sorted(self._terms, reverse=True):
            q = self._terms[exps]
            factors = [f"w{i}" if e == 1 else f"w{i}^{e}" for i, e in enumerate(exps) if e]
            mag = abs(q)
            body = "*".join(factors)
            if not factors:
                text = str(mag)
            elif mag == 1:
                text = body
            else:
                text = f"{mag}*{body}"
            pieces.append(("-" if q < 0 else "+", text))
        out = ("-" if pieces[0][0] == "-" else "") + pieces[0][1]
        for sign, text in pieces[1:]:
            out += f" {sign} {text}"
        return out

    def __repr__(self) -> str:
        return f"DiffPolynomial({str(self)!r})"


def _monomial_density(m: Monomial, coef: Fraction, drop_b: int = 0) -> DiffPolynomial:
    exps = (m.d, m.c, m.b - drop_b, m.a, 0, 0, 0)
    return DiffPolynomial({exps: coef})


def p_density(N: Nonlinearity) -> DiffPolynomial:
    """dN/dw2 as a polynomial in w0..w3: sum lam*b * w3^a w2^(b-1) w1^c w0^d."""
    out = DiffPolynomial()
    for m in N:
        if m.b:
            out = out + _monomial_density(m, m.lam * m.b, drop_b=1)
    return out


def mean_density(N: Nonlinearity) -> DiffPolynomial:
    """N itself written in jet variables."""
    out = DiffPolynomial()
    for m in N:
        out = out + _monomial_density(m, m.lam)
    return out


def total_derivative(L: DiffPolynomial) -> DiffPolynomial:
    """d/dx on jet space: w_i -> w_{i+1} by the Leibniz rule."""
    if L.max_jet() >= N_JET - 1:
        raise JetOverflow("total derivative of a polynomial in w6 leaves the jet space")
    out: dict[Exponents, Fraction] = {}
    for exps, q in L.terms.items():
        for i in range(N_JET - 1):
            if exps[i]:
                e = list(exps)
                e[i] -= 1
                e[i + 1] += 1
                key = tuple(e)
                out[key] = out.get(key, Fraction(0)) + q * exps[i]
    return DiffPolynomial(out)


def euler_operator(L: DiffPolynomial) -> DiffPolynomial:
    """E(L) = sum_{i<=3} (-D)^i dL/dw_i for L in w0..w3."""
    if L.max_jet() > 3:
        raise JetOverflow("the Euler operator is defined here for densities in w0..w3")
    out = DiffPolynomial()
    for i in range(4):
        term = L.partial(i)
        for _ in range(i):
            term = -total_derivative(term)
        out = out + term
    return out


def integral_vanishes(L: DiffPolynomial) -> bool:
    """True iff int_T L(f, f', ...) dx = 0 for every smooth periodic f.

    The kernel of the Euler operator is total derivatives plus constants,
    so the constant term has to vanish as well.
    """
    return euler_operator(L).is_zero() and L.constant_term() == 0


def classify(N: Nonlinearity) -> ResonanceType:
    if integral_vanishes(p_density(N)):
        return ResonanceType.NON_PARABOLIC
    return ResonanceType.PARABOLIC


def conserves_mean(N: Nonlinearity) -> bool:
    """True iff int N(f) dx = 0 for all f, i.e. the flow conserves the mean."""
    return integral_vanishes(mean_density(N))


# ---------------------------------------------------------------------------
# numerical evaluation


def _jets(f: Field, orders: Iterable[int], m: int) -> dict[int, np.ndarray]:
    return {n: f.values(m, order=n) for n in sorted(set(orders))}


def evaluate(N: Nonlinearity, f: Field) -> Field:
    """N(f) with all products formed alias-free, truncated to f's band."""
    if not len(N):
        return Field.zeros(f.K_grid)
    m = padded_size(f.K_grid, N.p_max)
    jets = _jets(f, (n for mono in N for n in mono.derivative_orders()), m)
    total = np.zeros(m)
    for mono in N:
        term = np.full(m, float(mono.lam))
        for n, e in zip((3, 2, 1, 0), mono.powers):
            if e:
                term = term * jets[n] ** e
        total += term
    return Field.from_values(total, f.K_grid)


def _density_mean(L: DiffPolynomial, f: Field, degree: int) -> float:
    if L.is_zero():
        return 0.0
    m = padded_size(f.K_grid, max(degree, 1))
    top = max(L.max_jet(), 0)
    jets = [f.values(m, order=i) for i in range(top + 1)]
    jets += [np.zeros(m)] * (N_JET - len(jets))
    return float(np.mean(L.evaluate(jets)))


def p_functional(N: Nonlinearity, f: Field) -> float:
    """P_N(f) = (1/2pi) int dN/du2 evaluated along the jet of f."""
    return _density_mean(p_density(N), f, N.p_max)


def j1_functional(N: Nonlinearity, phi: Field, sym, eps: float = 0.0) -> float:
    """First time derivative of P_N(u(t)) at t = 0 for the eps-regularized flow from ``phi``.

    ``sym`` is a :class:`~dispersion_lab.multipliers.DispersionSymbol`. The
    time derivative u_t = (-eps k^4 - phi(k)) u_hat + N(u) is formed on the
    same band as ``phi``, so the value equals d/dt P_N for the truncated flow.
    """
    L = p_density(N)
    if L.is_zero() or not np.any(phi.coeffs):
        return 0.0
    K = phi.K_grid
    k = np.arange(K + 1, dtype=float)
    tail = np.abs(phi.coeffs[3 * K // 4 :]) * (1 + k[3 * K // 4 :] ** 2) ** 4
    if tail.max() > 1e-8 * max(1.0, float(np.max(np.abs(phi.coeffs) * (1 + k**2) ** 4))):
        warnings.warn("phi has eighth-derivative energy near the band edge; J1 may be under-resolved")
    lin = (-eps * k**4 - 1j * sym.phi_imag_array(K)) * phi.coeffs
    ut = Field(lin) + evaluate(N, phi)
    m = padded_size(K, max(N.p_max, 2))
    jets = [phi.values(m, order=i) for i in range(4)] + [np.zeros(m)] * (N_JET - 4)
    total = np.zeros(m)
    for i in range(4):
        dL = L.partial(i)
        if not dL.is_zero():
            total += dL.evaluate(jets) * ut.values(m, order=i)
    return float(np.mean(total))
