"""Registry of example equations, shipped in expanded monomial form.

Expansions (u0 = u, u1 = u_x, ...):

    kdv5    N = 5 d(u1^2) - 10 d^2(u u1) - d(u^3)
            = -20 u1 u2 - 10 u0 u3 - 3 u0^2 u1
    mkdv5   N = -5 d(u d^2(u^2)) - 6 d(u^5)
            = -10 u1^3 - 40 u0 u1 u2 - 10 u0^2 u3 - 30 u0^4 u1   (mkdv5m: +30 u0^4 u1)
    benney  N = u0 u3 + 2 u1 u2
    lisher  N = -1/2 u0 u3 - u0^2 u3 - (1 + 4 u0) u1 u2 - u1^3 - (u0 + u0^2) u1, with d^5 + d^3
    plapP   N = d(u1^(P-1)) = (P-1) u1^(P-2) u2
    porousQ N = d^2(u^Q) = Q u0^(Q-1) u2 + Q (Q-1) u0^(Q-2) u1^2
    kdv11   (d_t + d^11) u = d(u1^4) = 4 u1^3 u2

The classification and mean conservation recorded for each preset are
re-checked every time a preset is loaded.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import UnknownPreset
from .multipliers import DispersionSymbol
from .nonlinearity import Nonlinearity, ResonanceType, classify, conserves_mean, parse_nonlinearity
from .solver import Equation

__all__ = ["Preset", "preset", "preset_names"]

NP = ResonanceType.NON_PARABOLIC
PA = ResonanceType.PARABOLIC


@dataclass(frozen=True)
class Preset:
    name: str
    equation: Equation
    provenance: str
    resonance_type: ResonanceType
    conserves_mean: bool

    @property
    def N(self) -> Nonlinearity:
        return self.equation.N

    @property
    def sym(self) -> DispersionSymbol:
        return self.equation.sym


_QUINTIC = (1, 0, 0)

# name -> (expression, j, gammas, provenance, expected type, expected mean conservation)
_TABLE = {
    "kdv5": ("-20*u1*u2 - 10*u0*u3 - 3*u0^2*u1", 2, _QUINTIC,
             "fifth-order KdV equation, second member of the KdV hierarchy", NP, True),
    "mkdv5": ("-10*u1^3 - 40*u0*u1*u2 - 10*u0^2*u3 - 30*u0^4*u1", 2, _QUINTIC,
              "fifth-order modified KdV equation, + sign on d(u^5)", NP, True),
    "mkdv5m": ("-10*u1^3 - 40*u0*u1*u2 - 10*u0^2*u3 + 30*u0^4*u1", 2, _QUINTIC,
               "fifth-order modified KdV equation, - sign on d(u^5)", NP, True),
    "benney": ("u0*u3 + 2*u1*u2", 2, _QUINTIC,
               "Benney's short-wave/long-wave interaction model", NP, True),
    "lisher": ("-1/2*u0*u3 - u0^2*u3 - u1*u2 - 4*u0*u1*u2 - u1^3 - u0*u1 - u0^2*u1", 2, (1, 1, 0),
               "Lisher's anharmonic lattice model", NP, True),
    "plap5": ("4*u1^3*u2", 2, _QUINTIC,
              "dispersive p-Laplacian, p = 5, read as d((u_x)^(p-1))", PA, True),
    "plap7": ("6*u1^5*u2", 2, _QUINTIC,
              "dispersive p-Laplacian, p = 7, read as d((u_x)^(p-1))", PA, True),
    "porous2": ("2*u0*u2 + 2*u1^2", 2, _QUINTIC, "dispersive porous medium equation, q = 2", PA, True),
    "porous3": ("3*u0^2*u2 + 6*u0*u1^2", 2, _QUINTIC, "dispersive porous medium equation, q = 3", PA, True),
    "kdv11": ("4*u1^3*u2", 5, (1, 0, 0, 0, 0, 0),
              "eleventh-order equation with divergence-form N = d((u_x)^4)", PA, True),
    "n1": ("2*u2*u1^2", 2, _QUINTIC, "N1 = 2 u_xx (u_x)^2", PA, True),
    "n2": ("u2^2*u0", 2, _QUINTIC, "N2 = (u_xx)^2 u", PA, False),
    "n1n2": ("2*u2*u1^2 + u2^2*u0", 2, _QUINTIC, "N1 + N2, whose P_N cancels identically", NP, False),
}


def preset_names() -> list[str]:
    return sorted(_TABLE)


def preset(name: str) -> Preset:
    try:
        expr, j, gammas, prov, kind, cons = _TABLE[name]
    except KeyError:
        raise UnknownPreset(f"unknown preset {name!r}; known: {', '.join(preset_names())}") from None
    N = parse_nonlinearity(expr)
    got_kind, got_cons = classify(N), conserves_mean(N)
    if got_kind != kind or got_cons != cons:
        raise AssertionError(f"preset {name} drifted: {got_kind.value}, conserves_mean={got_cons}")
    return Preset(name, Equation(DispersionSymbol(j, gammas), N, 0.0), prov, kind, cons)
