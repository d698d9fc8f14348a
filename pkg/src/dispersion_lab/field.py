"""Real periodic fields on T = R/2piZ stored as truncated Fourier series.

Conventions (these fix every constant in the package):

    f_hat(k) = (1/2pi) int_T f(x) e^{-ikx} dx,    f(x) = sum_k f_hat(k) e^{ikx}
    (f, g)   = (1/2pi) int_T f g dx = sum_k f_hat(k) f_hat(-k)
    ||f||_{H^s} = || <k>^s f_hat(k) ||_{l^2},     <k> = (1 + k^2)^{1/2}

so ``mean(f) == f_hat(0)`` and ``sobolev_norm(f, 0)**2 == mean(f * f)``.

Only the coefficients for ``0 <= k <= K_grid`` are stored; negative modes are
the complex conjugates, which makes real-valuedness structural.
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from .errors import ConjugateConflict, NotReal, OutOfBand

DEFAULT_K_GRID = 128

__all__ = [
    "DEFAULT_K_GRID",
    "Field",
    "field_from_modes",
    "derivative",
    "sobolev_norm",
    "pointwise_product",
    "mean",
    "random_band_field",
    "padded_size",
    "lp_norm",
]


def padded_size(K_grid: int, degree: int) -> int:
    """Number of physical grid points for alias-free products of ``degree`` factors.

    Products of ``degree`` fields band-limited to ``K_grid`` reach wavenumber
    ``degree*K_grid``; folding them back onto ``|k| <= K_grid`` is avoided once
    the grid has more than ``(degree+1)*K_grid`` points.
    """
    degree = max(int(degree), 1)
    m = (degree + 1) * K_grid + 1
    return m + (m % 2)


class Field:
    """Immutable real periodic field, coefficients for k = 0..K_grid."""

    __slots__ = ("_coeffs",)

    def __init__(self, coeffs: np.ndarray):
        c = np.array(coeffs, dtype=np.complex128, copy=True).ravel()
        if c.size < 2:
            raise ValueError("a field needs K_grid >= 1")
        c.setflags(write=False)
        self._coeffs = c

    # -- construction ---------------------------------------------------------
    @classmethod
    def zeros(cls, K_grid: int = DEFAULT_K_GRID) -> "Field":
        return cls(np.zeros(K_grid + 1, dtype=np.complex128))

    @classmethod
    def from_values(cls, values: np.ndarray, K_grid: int) -> "Field":
        """Project samples on a uniform grid of [0, 2pi) onto |k| <= K_grid."""
        v = np.asarray(values, dtype=float)
        m = v.size
        if m < 2 * K_grid + 1:
            raise ValueError(f"{m} samples cannot resolve K_grid={K_grid}")
        spec = np.fft.rfft(v) / m
        return cls(spec[: K_grid + 1])

    # -- access ---------------------------------------------------------------
    @property
    def coeffs(self) -> np.ndarray:
        return self._coeffs

    @property
    def K_grid(self) -> int:
        return self._coeffs.size - 1

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.arange(self.K_grid + 1)

    def mode(self, k: int) -> complex:
        if abs(k) > self.K_grid:
            return 0j
        c = complex(self._coeffs[abs(k)])
        return c if k >= 0 else c.conjugate()

    def full_spectrum(self) -> tuple[np.ndarray, np.ndarray]:
        """Wavenumbers -K..K and the matching coefficients."""
        K = self.K_grid
        ks = np.arange(-K, K + 1)
        vals = np.concatenate([np.conj(self._coeffs[:0:-1]), self._coeffs])
        return ks, vals

    def values(self, n_points: int | None = None, order: int = 0) -> np.ndarray:
        """Samples of the ``order``-th derivative on ``n_points`` uniform nodes."""
        K = self.K_grid
        m = n_points if n_points is not None else padded_size(K, 1)
        if m < 2 * K + 2:
            raise ValueError(f"{m} points under-resolve K_grid={K}")
        c = self._coeffs
        if order:
            c = c * (1j * self.wavenumbers) ** order
        spec = np.zeros(m // 2 + 1, dtype=np.complex128)
        spec[: K + 1] = c * m
        return np.fft.irfft(spec, n=m)

    def with_K_grid(self, K_grid: int) -> "Field":
        """Zero-pad or truncate to a new band limit."""
        c = np.zeros(K_grid + 1, dtype=np.complex128)
        n = min(K_grid, self.K_grid) + 1
        c[:n] = self._coeffs[:n]
        return Field(c)

    # -- arithmetic -----------------------------------------------------------
    def _check_same_grid(self, other: "Field") -> None:
        if other.K_grid != self.K_grid:
            raise ValueError(f"K_grid mismatch: {self.K_grid} vs {other.K_grid}")

    def __eq__(self, other: object) -> bool:
        """Exact equality of the stored coefficients."""
        if not isinstance(other, Field):
            return NotImplemented
        return self.K_grid == other.K_grid and bool(np.array_equal(self._coeffs, other._coeffs))

    __hash__ = None

    def __add__(self, other: "Field") -> "Field":
        self._check_same_grid(other)
        return Field(self._coeffs + other._coeffs)

    def __sub__(self, other: "Field") -> "Field":
        self._check_same_grid(other)
        return Field(self._coeffs - other._coeffs)

    def __neg__(self) -> "Field":
        return Field(-self._coeffs)

    def __mul__(self, scalar: float) -> "Field":
        if isinstance(scalar, Field):
            return pointwise_product(self, scalar)
        return Field(self._coeffs * float(scalar))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        nz = int(np.count_nonzero(np.abs(self._coeffs) > 0))
        return f"Field(K_grid={self.K_grid}, nonzero_modes={nz})"

    # -- serialization --------------------------------------------------------
    def to_json(self) -> dict:
        return {
            "K_grid": self.K_grid,
            "modes": [[int(k), float(c.real), float(c.imag)] for k, c in enumerate(self._coeffs)],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Field":
        K = int(obj["K_grid"])
        entries = [(int(k), complex(re, im)) for k, re, im in obj["modes"]]
        if any(k < 0 for k, _ in entries):
            raise ValueError("serialized fields list k >= 0 only")
        return field_from_modes(entries, K_grid=K)


def field_from_modes(entries: Iterable[tuple[int, complex]], K_grid: int = DEFAULT_K_GRID) -> Field:
    """Build a field from sparse ``(k, coefficient)`` pairs.

    Missing partners ``-k`` are filled in by conjugation. Raises
    ``OutOfBand`` for ``|k| > K_grid`` and ``ConjugateConflict`` when ``k`` and
    ``-k`` are both given but are not conjugate (including a non-real ``k = 0``).
    """
    given: dict[int, complex] = {}
    for k, val in entries:
        k = int(k)
        if abs(k) > K_grid:
            raise OutOfBand(f"mode k={k} exceeds K_grid={K_grid}")
        if k in given:
            raise ConjugateConflict(f"mode k={k} given twice")
        given[k] = complex(val)
    c = np.zeros(K_grid + 1, dtype=np.complex128)
    tol = 1e-14
    for k, val in given.items():
        if k == 0:
            if abs(val.imag) > tol * max(1.0, abs(val)):
                raise ConjugateConflict("the k=0 mode of a real field must be real")
            c[0] = val.real
            continue
        partner = given.get(-k)
        if partner is not None and abs(partner - val.conjugate()) > tol * max(1.0, abs(val)):
            raise ConjugateConflict(f"modes {k} and {-k} are not conjugate")
        c[abs(k)] = val if k > 0 else val.conjugate()
    return Field(c)


def derivative(f: Field, n: int) -> Field:
    """Spectral derivative: mode k is multiplied by (ik)^n.

    Applied as n first derivatives, so derivative(derivative(f, a), b) equals
    derivative(f, a + b) bit for bit.
    """
    if n < 0:
        raise ValueError("derivative order must be nonnegative")
    if n == 0:
        return f
    ik = 1j * f.wavenumbers
    c = f.coeffs
    for _ in range(n):
        c = ik * c
    return Field(c)


def _weights(K: int, s: float) -> np.ndarray:
    k = np.arange(K + 1, dtype=float)
    w = (1.0 + k * k) ** s
    w[1:] *= 2.0  # the conjugate partner -k contributes equally
    return w


def sobolev_norm(f: Field, s: float) -> float:
    c = f.coeffs
    return math.sqrt(float(np.sum(_weights(f.K_grid, s) * (c.real**2 + c.imag**2))))


def pointwise_product(f: Field, g: Field) -> Field:
    """Alias-free product, truncated back to the common band limit."""
    if f.K_grid != g.K_grid:
        raise ValueError(f"K_grid mismatch: {f.K_grid} vs {g.K_grid}")
    m = padded_size(f.K_grid, 2)
    return Field.from_values(f.values(m) * g.values(m), f.K_grid)


def mean(f: Field) -> float:
    c0 = complex(f.coeffs[0])
    if abs(c0.imag) > 1e-12:
        raise NotReal(f"zero mode has imaginary part {c0.imag:.3e}")
    return c0.real


def random_band_field(
    seed: int,
    s: float,
    amplitude: float,
    K_grid: int = DEFAULT_K_GRID,
    mean_value: float = 0.0,
) -> Field:
    """Deterministic test field with |f_hat(k)| = amplitude * <k>^(-s-0.6).

    Phases are drawn in order of increasing k, so the field at a larger
    ``K_grid`` extends the one at a smaller ``K_grid`` with the same seed.
    """
    if not amplitude > 0:
        raise ValueError("amplitude must be positive")
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=K_grid)
    k = np.arange(1, K_grid + 1, dtype=float)
    c = np.zeros(K_grid + 1, dtype=np.complex128)
    c[1:] = amplitude * (1.0 + k * k) ** (-(s + 0.6) / 2.0) * np.exp(1j * phases)
    c[0] = mean_value
    return Field(c)


def lp_norm(f: Field, p: float, n_points: int | None = None) -> float:
    """(1/2pi int |f|^p)^(1/p) by the trapezoid rule; exact for polynomial |f|^p with even p."""
    m = n_points or padded_size(f.K_grid, 8)
    v = np.abs(f.values(m))
    if math.isinf(p):
        return float(v.max())
    return float(np.mean(v**p) ** (1.0 / p))
