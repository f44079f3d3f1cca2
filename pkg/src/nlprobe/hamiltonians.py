"""Nonlinear probe Hamiltonians and their normal-ordered operator algebra."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import (
    DegenerateOperator,
    InvalidDimension,
    RegimeError,
    UnscalableProcess,
    UnsupportedExponent,
)
from .fock import OperatorMatrix, ladder, number_operator, quadrature

MAX_EXPANSION_EXPONENT = 12
BETA_T_LIMIT = 0.05


class Family(str, enum.Enum):
    POLYNOMIAL = "polynomial"
    SQUEEZING = "squeezing"
    KERR = "kerr"

    @classmethod
    def parse(cls, value) -> "Family":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {
            "poly": cls.POLYNOMIAL,
            "generalized_squeezing": cls.SQUEEZING,
            "generalizedsqueezing": cls.SQUEEZING,
            "sq": cls.SQUEEZING,
            "generalized_kerr": cls.KERR,
            "generalizedkerr": cls.KERR,
        }
        if key in aliases:
            return aliases[key]
        return cls(key)


class Coupling(str, enum.Enum):
    INDEPENDENT = "independent"
    PROPORTIONAL = "proportional"

    @classmethod
    def parse(cls, value) -> "Coupling":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        if key in ("proportional_to_omega", "proportionaltoomega"):
            return cls.PROPORTIONAL
        return cls(key)


@dataclass(frozen=True)
class ProbeSpec:
    """One probe: ``H = omega n + beta H1`` acting on ``|alpha>`` for time ``t``.

    With ``coupling=PROPORTIONAL`` (polynomial family only) the Hamiltonian
    is ``omega (n + beta (a + a^dagger)^s)``.
    """

    family: Family
    s: int
    omega: float = 1.0
    beta: float = 0.0
    alpha: float = 1.0
    t: float = 0.0
    coupling: Coupling = Coupling.INDEPENDENT
    allow_out_of_regime: bool = field(default=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        object.__setattr__(self, "coupling", Coupling.parse(self.coupling))
        if int(self.s) != self.s or self.s < 1:
            raise UnsupportedExponent(f"exponent s must be a positive integer, got {self.s}")
        object.__setattr__(self, "s", int(self.s))
        for name in ("omega", "beta", "alpha", "t"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if self.beta < 0 or self.alpha < 0 or self.t < 0:
            raise ValueError("beta, alpha and t must be nonnegative")
        if self.coupling is Coupling.PROPORTIONAL and self.family is not Family.POLYNOMIAL:
            raise ValueError("proportional coupling is defined for the polynomial family only")
        if not self.allow_out_of_regime:
            if self.beta > self.omega * (1 + 1e-12):
                raise RegimeError(f"beta={self.beta} exceeds omega={self.omega}")
            if self.beta * self.t > BETA_T_LIMIT * (1 + 1e-9):
                raise RegimeError(f"beta*t={self.beta * self.t:.4g} exceeds {BETA_T_LIMIT}")

    def replace(self, **changes) -> "ProbeSpec":
        return replace(self, **changes)

    def at_omega(self, omega: float) -> "ProbeSpec":
        return replace(self, omega=omega, allow_out_of_regime=True)

    def hamiltonian(self, dim: int) -> OperatorMatrix:
        return build_hamiltonian(self, dim)

    def nonlinear_poly(self) -> "NormalOrderedPoly":
        if self.family is Family.POLYNOMIAL:
            return normal_order_expand(self.s)
        if self.family is Family.SQUEEZING:
            return NormalOrderedPoly.from_dict({(self.s, 0): 1, (0, self.s): 1})
        return NormalOrderedPoly.from_dict({(self.s, self.s): 1})

    def mean_energy(self) -> float:
        """``<alpha|H|alpha>`` evaluated from normal-ordered moments."""
        nonlinear = self.nonlinear_poly().coherent_expectation(self.alpha)
        base = self.alpha ** 2
        if self.coupling is Coupling.PROPORTIONAL:
            return self.omega * (base + self.beta * nonlinear)
        return self.omega * base + self.beta * nonlinear


@dataclass(frozen=True)
class NormalOrderedPoly:
    """Sum of monomials ``coeff * a^dagger^m a^l`` stored as ``(m, l, coeff)``."""

    terms: tuple

    @classmethod
    def from_dict(cls, mapping) -> "NormalOrderedPoly":
        merged = {}
        for (m, l), c in mapping.items():
            if m < 0 or l < 0:
                raise ValueError("monomial powers must be nonnegative")
            merged[(int(m), int(l))] = merged.get((int(m), int(l)), 0) + c
        terms = tuple(
            (m, l, float(c)) for (m, l), c in sorted(merged.items()) if c != 0
        )
        return cls(terms)

    def as_dict(self) -> dict:
        return {(m, l): c for m, l, c in self.terms}

    def __iter__(self):
        return iter(self.terms)

    def __len__(self):
        return len(self.terms)

    def __add__(self, other: "NormalOrderedPoly") -> "NormalOrderedPoly":
        merged = self.as_dict()
        for (m, l), c in other.as_dict().items():
            merged[(m, l)] = merged.get((m, l), 0.0) + c
        return NormalOrderedPoly.from_dict(merged)

    def scaled(self, factor: float) -> "NormalOrderedPoly":
        return NormalOrderedPoly.from_dict({(m, l): c * factor for m, l, c in self.terms})

    @property
    def is_hermitian(self) -> bool:
        d = self.as_dict()
        return all(d.get((l, m)) == c for (m, l), c in d.items())

    @property
    def max_order(self) -> int:
        return max((max(m, l) for m, l, _ in self.terms), default=0)

    def left_number(self) -> "NormalOrderedPoly":
        """Normal-ordered form of ``(a^dagger a) P``.

        Uses ``a a^dagger^m = a^dagger^m a + m a^dagger^(m-1)``.
        """
        out = {}
        for m, l, c in self.terms:
            out[(m + 1, l + 1)] = out.get((m + 1, l + 1), 0.0) + c
            if m > 0:
                out[(m, l)] = out.get((m, l), 0.0) + m * c
        return NormalOrderedPoly.from_dict(out)

    def coherent_expectation(self, alpha: complex) -> complex | float:
        total = sum(c * coherent_moment(m, l, alpha) for m, l, c in self.terms)
        if isinstance(alpha, complex):
            return complex(total)
        return float(total)

    def matrix(self, dim: int) -> OperatorMatrix:
        """Truncated matrix ``P poly P``; each monomial is exact on the Fock window."""
        if dim < 1:
            raise InvalidDimension(f"dim must be positive, got {dim}")
        out = np.zeros((dim, dim), dtype=float)
        for m, l, c in self.terms:
            count = dim - max(m, l)
            if count <= 0:
                continue
            k = np.arange(count, dtype=float)
            val = np.full(count, c)
            for i in range(1, m + 1):
                val *= np.sqrt(k + i)
            for i in range(1, l + 1):
                val *= np.sqrt(k + i)
            idx = np.arange(count)
            out[idx + m, idx + l] += val
        return OperatorMatrix.from_array(out, hermitian=True if self.is_hermitian else None)

    def number_form(self) -> dict:
        """Diagonal part rewritten as a polynomial in ``n = a^dagger a``.

        ``a^dagger^k a^k`` is the falling factorial ``n (n-1) ... (n-k+1)``;
        returned as ``{power: coefficient}``. Display helper only.
        """
        poly = np.polynomial.Polynomial([0.0])
        for m, l, c in self.terms:
            if m != l:
                continue
            falling = np.polynomial.Polynomial([1.0])
            for i in range(m):
                falling = falling * np.polynomial.Polynomial([-i, 1.0])
            poly = poly + c * falling
        return {p: float(c) for p, c in enumerate(poly.coef) if abs(c) > 0}

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for m, l, c in self.terms:
            mono = []
            if m:
                mono.append("a†" if m == 1 else f"a†^{m}")
            if l:
                mono.append("a" if l == 1 else f"a^{l}")
            coeff = f"{c:g}"
            parts.append(coeff + ("·" + " ".join(mono) if mono else ""))
        return " + ".join(parts)


def coherent_moment(m: int, l: int, alpha) -> float | complex:
    """``<alpha| a^dagger^m a^l |alpha> = conj(alpha)^m alpha^l``."""
    if isinstance(alpha, complex):
        return alpha.conjugate() ** m * alpha ** l
    return float(alpha) ** (m + l)


def _expansion_coefficients(s: int) -> dict:
    out = {}
    for k in range(s // 2 + 1):
        for l in range(s - 2 * k + 1):
            m = s - 2 * k - l
            coeff = math.factorial(s) // (
                2 ** k * math.factorial(k) * math.factorial(l) * math.factorial(m)
            )
            out[(m, l)] = out.get((m, l), 0) + coeff
    return out


def normal_order_expand(s: int) -> NormalOrderedPoly:
    """Normal-ordered expansion of ``(a + a^dagger)^s`` for ``1 <= s <= 12``."""
    if int(s) != s or not 1 <= s <= MAX_EXPANSION_EXPONENT:
        raise UnsupportedExponent(f"s must be in 1..{MAX_EXPANSION_EXPONENT}, got {s}")
    return NormalOrderedPoly.from_dict(_expansion_coefficients(int(s)))


@dataclass(frozen=True)
class ExcitationProcess:
    """Bucket of monomials changing the photon number by ``+-j``."""

    j: int
    poly: NormalOrderedPoly
    scale: float = 1.0

    def __post_init__(self):
        for m, l, _ in self.poly:
            if abs(m - l) != self.j:
                raise ValueError(f"term ({m},{l}) does not belong to process j={self.j}")

    @property
    def number_conserving(self) -> bool:
        return self.j == 0

    @property
    def label(self) -> str:
        return "ns" if self.j == 0 else f"J{self.j}"

    @property
    def scaled_poly(self) -> NormalOrderedPoly:
        return self.poly.scaled(self.scale)


def parse_process_label(label) -> int:
    """Map ``"ns"``, ``"J3"``, ``"3"`` or ``3`` to the net excitation ``j``."""
    if isinstance(label, (int, np.integer)):
        return int(label)
    text = str(label).strip().lower()
    if text in ("ns", "numberconserving", "number_conserving", "j0"):
        return 0
    if text.startswith("j"):
        text = text[1:].strip("()")
    return int(text)


def group_excitation_processes(poly: NormalOrderedPoly) -> list[ExcitationProcess]:
    if not poly.is_hermitian:
        raise ValueError("excitation grouping needs a Hermitian polynomial")
    buckets = {}
    for m, l, c in poly:
        buckets.setdefault(abs(m - l), {})[(m, l)] = c
    return [
        ExcitationProcess(j, NormalOrderedPoly.from_dict(terms))
        for j, terms in sorted(buckets.items())
    ]


def scale_process_energy(proc: ExcitationProcess, alpha: float) -> ExcitationProcess:
    """Rescale so that the process has mean ``2 alpha`` on ``|alpha>``."""
    if not alpha > 0:
        raise UnscalableProcess(f"energy target 2*alpha needs alpha > 0, got {alpha}")
    raw = proc.poly.coherent_expectation(float(alpha))
    if not raw > 0:
        raise UnscalableProcess(
            f"process {proc.label} has nonpositive mean {raw!r} at alpha={alpha}"
        )
    return replace(proc, scale=2.0 * alpha / raw)


@dataclass(frozen=True)
class ProcessProbe:
    """Probe driven by one scaled excitation process: ``omega n + beta A_j``."""

    process: ExcitationProcess
    omega: float = 1.0
    beta: float = 0.0
    alpha: float = 1.0
    t: float = 0.0

    def at_omega(self, omega: float) -> "ProcessProbe":
        return replace(self, omega=omega)

    def replace(self, **changes) -> "ProcessProbe":
        return replace(self, **changes)

    def hamiltonian(self, dim: int) -> OperatorMatrix:
        h = self.process.scaled_poly.matrix(dim).entries * self.beta
        h = h + self.omega * np.diag(np.arange(dim, dtype=float))
        return OperatorMatrix.from_array(h, hermitian=True)

    def process_energy(self) -> float:
        return self.beta * self.process.scaled_poly.coherent_expectation(self.alpha)

    def mean_energy(self) -> float:
        return self.omega * self.alpha ** 2 + self.process_energy()


@lru_cache(maxsize=64)
def _nonlinear_matrix(family: Family, s: int, dim: int) -> np.ndarray:
    if family is Family.POLYNOMIAL:
        h1 = np.linalg.matrix_power(quadrature(dim).entries.real, s)
    else:
        if s > dim - 1:
            raise DegenerateOperator(f"a^{s} vanishes identically at dim={dim}")
        a, _ = ladder(dim)
        a_s = np.linalg.matrix_power(a.entries.real, s)
        h1 = a_s + a_s.T if family is Family.SQUEEZING else a_s.T @ a_s
    h1 = 0.5 * (h1 + h1.T)
    h1.setflags(write=False)
    return h1


def build_hamiltonian(spec: ProbeSpec, dim: int) -> OperatorMatrix:
    """Dense truncated Hamiltonian of a probe.

    The polynomial term is the ``s``-th power of the truncated quadrature
    matrix, so its last ``s`` rows and columns carry truncation artifacts.
    """
    if dim < 2:
        raise InvalidDimension(f"Hamiltonian needs dim >= 2, got {dim}")
    n = number_operator(dim).entries.real
    h1 = _nonlinear_matrix(spec.family, spec.s, int(dim))
    if spec.coupling is Coupling.PROPORTIONAL:
        h = spec.omega * (n + spec.beta * h1)
    else:
        h = spec.omega * n + spec.beta * h1
    return OperatorMatrix(h, hermitian=True)


def analytic_qfi_proportional(s: int, alpha, beta: float, t: float) -> float:
    """QFI of ``|alpha>`` under ``omega (n + beta (a+a^dagger)^s)``.

    Equals ``4 t^2 Var(n + beta G_s)`` on the initial coherent state, with
    every moment taken from normal-ordered expansions. Complex ``alpha``
    is accepted so the phase dependence can be probed.
    """
    if int(s) != s or not 1 <= s <= 4:
        raise UnsupportedExponent(f"analytic oracle covers s in 1..4, got {s}")
    s = int(s)
    g = normal_order_expand(s)
    g2 = normal_order_expand(2 * s)
    n_g = g.left_number()
    mean_n = abs(alpha) ** 2
    mean_n2 = abs(alpha) ** 4 + abs(alpha) ** 2
    mean_g = np.real(g.coherent_expectation(alpha))
    cross = 2.0 * np.real(n_g.coherent_expectation(alpha))
    mean_g2 = np.real(g2.coherent_expectation(alpha))
    second = mean_n2 + beta * cross + beta ** 2 * mean_g2
    first = mean_n + beta * mean_g
    return float(4.0 * t * t * max(second - first * first, 0.0))

