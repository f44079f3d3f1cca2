"""Single-mode bosonic states and operators on a truncated Fock basis."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln
from scipy.stats import poisson

from .errors import (
    DimensionMismatch,
    InvalidDimension,
    InvalidObservable,
    TruncationError,
)

NORM_TOL = 1e-12
HERMITIAN_TOL = 1e-12
COHERENT_TAIL_TOL = 1e-12
CONVERGED_TAIL = 1e-10


def _frozen(arr):
    arr = np.array(arr, dtype=complex)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TruncatedState:
    """Normalized amplitude vector on Fock levels ``0 .. dim-1``."""

    amps: np.ndarray

    def __post_init__(self):
        amps = _frozen(self.amps)
        if amps.ndim != 1 or amps.size < 1:
            raise InvalidDimension("state amplitudes must be a non-empty vector")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm={norm!r})")
        object.__setattr__(self, "amps", amps)

    @classmethod
    def from_amplitudes(cls, amps) -> "TruncatedState":
        """Build a state from raw amplitudes, normalizing them first."""
        amps = np.asarray(amps, dtype=complex)
        norm = np.linalg.norm(amps)
        if norm == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(amps / norm)

    @classmethod
    def fock(cls, n: int, dim: int) -> "TruncatedState":
        if not 0 <= n < dim:
            raise InvalidDimension(f"Fock level {n} outside 0..{dim - 1}")
        amps = np.zeros(dim, dtype=complex)
        amps[n] = 1.0
        return cls(amps)

    @property
    def dim(self) -> int:
        return self.amps.size

    @property
    def populations(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def tail_mass(self, k: int | None = None) -> float:
        """Probability carried by the top ``k`` Fock levels (default dim/10)."""
        if k is None:
            k = max(self.dim // 10, 1)
        k = min(max(int(k), 1), self.dim)
        return float(np.sum(self.populations[self.dim - k:]))

    @property
    def converged(self) -> bool:
        return self.tail_mass() < CONVERGED_TAIL

    def overlap(self, other: "TruncatedState") -> complex:
        _check_dims(self.dim, other.dim)
        return complex(np.vdot(self.amps, other.amps))

    def fidelity(self, other: "TruncatedState") -> float:
        return abs(self.overlap(other)) ** 2

    def padded(self, dim: int) -> "TruncatedState":
        """Embed the state into a larger truncation."""
        if dim < self.dim:
            raise InvalidDimension("padding cannot shrink a state")
        amps = np.zeros(dim, dtype=complex)
        amps[: self.dim] = self.amps
        return TruncatedState(amps)


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense ``dim x dim`` operator; ``hermitian`` is validated when set."""

    entries: np.ndarray
    hermitian: bool = False

    def __post_init__(self):
        entries = _frozen(self.entries)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise InvalidDimension("operator must be a square matrix")
        if self.hermitian:
            dev = np.max(np.abs(entries - entries.conj().T), initial=0.0)
            if dev > HERMITIAN_TOL * max(1.0, np.max(np.abs(entries), initial=0.0)):
                raise InvalidObservable(f"matrix flagged Hermitian deviates by {dev:.3e}")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_array(cls, entries, hermitian: bool | None = None) -> "OperatorMatrix":
        """Wrap a matrix; Hermiticity is detected when ``hermitian`` is None."""
        entries = np.asarray(entries, dtype=complex)
        if hermitian is None:
            scale = max(1.0, np.max(np.abs(entries), initial=0.0))
            hermitian = bool(
                np.max(np.abs(entries - entries.conj().T), initial=0.0)
                <= HERMITIAN_TOL * scale
            )
            if hermitian:
                entries = 0.5 * (entries + entries.conj().T)
        return cls(entries, hermitian)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def is_real(self) -> bool:
        return not np.any(self.entries.imag)

    def dag(self) -> "OperatorMatrix":
        return OperatorMatrix(self.entries.conj().T, self.hermitian)

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _check_dims(self.dim, other.dim)
        return OperatorMatrix.from_array(self.entries @ other.entries)

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _check_dims(self.dim, other.dim)
        return OperatorMatrix(
            self.entries + other.entries, self.hermitian and other.hermitian
        )

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _check_dims(self.dim, other.dim)
        return OperatorMatrix(
            self.entries - other.entries, self.hermitian and other.hermitian
        )

    def __mul__(self, scalar) -> "OperatorMatrix":
        scalar = complex(scalar)
        return OperatorMatrix(self.entries * scalar, self.hermitian and scalar.imag == 0)

    __rmul__ = __mul__

    def power(self, s: int) -> "OperatorMatrix":
        """Repeated dense multiplication, ``s >= 0``."""
        out = np.linalg.matrix_power(self.entries, int(s))
        return OperatorMatrix.from_array(out, hermitian=True if self.hermitian else None)

    def commutator(self, other: "OperatorMatrix") -> "OperatorMatrix":
        _check_dims(self.dim, other.dim)
        return OperatorMatrix(self.entries @ other.entries - other.entries @ self.entries)

    def apply(self, state: TruncatedState) -> np.ndarray:
        _check_dims(self.dim, state.dim)
        return self.entries @ state.amps


def _check_dims(a, b):
    if a != b:
        raise DimensionMismatch(f"dimension mismatch: {a} != {b}")


def ladder(dim: int) -> tuple[OperatorMatrix, OperatorMatrix]:
    """Annihilation and creation operators, ``a[n-1, n] = sqrt(n)``."""
    if dim < 2:
        raise InvalidDimension(f"ladder operators need dim >= 2, got {dim}")
    a = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1)
    return OperatorMatrix(a), OperatorMatrix(a.T.copy())


def number_operator(dim: int) -> OperatorMatrix:
    if dim < 1:
        raise InvalidDimension(f"dim must be positive, got {dim}")
    return OperatorMatrix(np.diag(np.arange(dim, dtype=float)), hermitian=True)


def quadrature(dim: int) -> OperatorMatrix:
    """The position-like quadrature ``a + a^dagger``."""
    a, adag = ladder(dim)
    return OperatorMatrix(a.entries + adag.entries, hermitian=True)


def coherent_tail(alpha: complex, dim: int) -> float:
    """Analytic weight of a coherent state above level ``dim - 1``."""
    mean = abs(alpha) ** 2
    if mean == 0:
        return 0.0
    return float(poisson.sf(dim - 1, mean))


def coherent_amplitudes(alpha: complex, dim: int) -> np.ndarray:
    """``exp(-|alpha|^2/2) alpha^n / sqrt(n!)`` computed in log space."""
    n = np.arange(dim)
    amps = np.zeros(dim, dtype=complex)
    r = abs(alpha)
    if r == 0:
        amps[0] = 1.0
        return amps
    logmag = -0.5 * r * r + n * math.log(r) - 0.5 * gammaln(n + 1)
    amps[:] = np.exp(logmag + 1j * n * np.angle(alpha))
    return amps


def complex_coherent_state(alpha: complex, dim: int) -> TruncatedState:
    if dim < 1:
        raise InvalidDimension(f"dim must be positive, got {dim}")
    tail = coherent_tail(alpha, dim)
    if tail >= COHERENT_TAIL_TOL:
        raise TruncationError(
            f"coherent amplitude {alpha} leaks {tail:.3e} beyond dim={dim}",
            tail_mass=tail,
            dim=dim,
        )
    return TruncatedState.from_amplitudes(coherent_amplitudes(alpha, dim))


def coherent_state(alpha: float, dim: int) -> TruncatedState:
    """Coherent state with a real amplitude.

    Raises TruncationError when the analytic tail beyond ``dim`` is not
    below 1e-12.
    """
    alpha = float(alpha)
    return complex_coherent_state(alpha, dim)


def default_dim(alpha: float) -> int:
    """Starting truncation ``ceil(alpha^2 + 10 alpha + 30)``."""
    alpha = abs(float(alpha))
    return int(math.ceil(alpha * alpha + 10.0 * alpha + 30.0))


def expectation(state: TruncatedState, op: OperatorMatrix) -> complex:
    _check_dims(state.dim, op.dim)
    value = complex(np.vdot(state.amps, op.entries @ state.amps))
    if op.hermitian:
        value = complex(value.real, 0.0)
    return value


def variance(state: TruncatedState, op: OperatorMatrix) -> float:
    """``<O^2> - <O>^2`` for a Hermitian observable, clamped at zero."""
    if not op.hermitian:
        raise InvalidObservable("variance requires a Hermitian observable")
    _check_dims(state.dim, op.dim)
    v = op.entries @ state.amps
    second = float(np.vdot(v, v).real)
    first = float(np.vdot(state.amps, v).real)
    return max(second - first * first, 0.0)


def number_moments(state: TruncatedState) -> tuple[float, float]:
    """Mean and variance of the photon number, from populations directly."""
    p = state.populations
    n = np.arange(state.dim, dtype=float)
    mean = float(p @ n)
    return mean, max(float(p @ (n - mean) ** 2), 0.0)
