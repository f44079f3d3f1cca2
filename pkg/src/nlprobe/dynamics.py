"""Unitary evolution by eigendecomposition, plus closed-form oracle states."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import DimensionMismatch, InvalidHamiltonian, TruncationError
from .fock import (
    CONVERGED_TAIL,
    OperatorMatrix,
    TruncatedState,
    coherent_state,
    complex_coherent_state,
    default_dim,
)

MAX_DOUBLINGS = 4


def _sectors(h: np.ndarray) -> list[np.ndarray]:
    """Index sets of the blocks that ``h`` leaves invariant.

    Parity for even polynomials, ``n mod s`` for generalized squeezing,
    single levels for Kerr; a single block otherwise.
    """
    pattern = csr_matrix(np.abs(h) > 0)
    count, labels = connected_components(pattern, directed=False)
    if count == 1:
        return [np.arange(h.shape[0])]
    return [np.flatnonzero(labels == c) for c in range(count)]


class Propagator:
    """Eigendecomposition of a Hermitian Hamiltonian, reusable for many times."""

    def __init__(self, hamiltonian: OperatorMatrix):
        if not hamiltonian.hermitian:
            raise InvalidHamiltonian("time evolution requires a Hermitian Hamiltonian")
        self.dim = hamiltonian.dim
        h = hamiltonian.entries
        if hamiltonian.is_real:
            h = h.real
        self._blocks = []
        for idx in _sectors(h):
            evals, evecs = np.linalg.eigh(h[np.ix_(idx, idx)])
            self._blocks.append((idx, evals, evecs))

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.sort(np.concatenate([e for _, e, _ in self._blocks]))

    def evolve_amplitudes(self, amps: np.ndarray, t: float) -> np.ndarray:
        if amps.shape[0] != self.dim:
            raise DimensionMismatch(f"state dim {amps.shape[0]} != Hamiltonian dim {self.dim}")
        out = np.zeros(self.dim, dtype=complex)
        for idx, evals, evecs in self._blocks:
            coeffs = evecs.T.conj() @ amps[idx]
            out[idx] = evecs @ (np.exp(-1j * t * evals) * coeffs)
        return out

    def evolve(self, state: TruncatedState, t: float) -> TruncatedState:
        if t == 0:
            return state
        return TruncatedState(self.evolve_amplitudes(state.amps, t))


@lru_cache(maxsize=48)
def _cached_propagator(base, dim) -> Propagator:
    return Propagator(base.hamiltonian(dim))


def propagator_for(probe, dim: int) -> Propagator:
    """Propagator for any probe exposing ``replace`` and ``hamiltonian(dim)``.

    Memoized on the probe with ``alpha`` and ``t`` zeroed, so one
    decomposition serves every time point. The cache is per process.
    """
    return _cached_propagator(probe.replace(alpha=0.0, t=0.0), int(dim))


def clear_propagator_cache():
    _cached_propagator.cache_clear()


@dataclass(frozen=True)
class EvolutionResult:
    state: TruncatedState
    dim_used: int
    tail_mass: float
    converged: bool


def evolve(hamiltonian, psi0: TruncatedState, t: float) -> EvolutionResult:
    """Evolve ``psi0`` for time ``t`` at a fixed truncation.

    ``hamiltonian`` is an OperatorMatrix or an existing Propagator.
    """
    prop = hamiltonian if isinstance(hamiltonian, Propagator) else Propagator(hamiltonian)
    if prop.dim != psi0.dim:
        raise DimensionMismatch(f"state dim {psi0.dim} != Hamiltonian dim {prop.dim}")
    state = prop.evolve(psi0, t)
    tail = state.tail_mass()
    return EvolutionResult(state, prop.dim, tail, tail < CONVERGED_TAIL)


def evolve_probe(probe, dim: int | None = None, strict: bool = True) -> EvolutionResult:
    """Evolve ``|alpha>`` under the probe, doubling dim until the tail is small.

    With an explicit ``dim`` no doubling happens. After four doublings
    without convergence a TruncationError is raised unless ``strict`` is off.
    """
    if dim is not None:
        dims = [int(dim)]
    else:
        d0 = default_dim(probe.alpha)
        dims = [d0 * 2 ** k for k in range(MAX_DOUBLINGS + 1)]
    result = None
    for d in dims:
        psi0 = coherent_state(probe.alpha, d)
        result = evolve(propagator_for(probe, d), psi0, probe.t)
        if result.converged:
            return result
    if strict and dim is None:
        raise TruncationError(
            f"evolved state not converged at dim={result.dim_used}",
            tail_mass=result.tail_mass,
            dim=result.dim_used,
        )
    return result


def closed_form_polynomial_s1(alpha, omega, beta, t, dim) -> TruncatedState:
    """Exact state for ``H = omega n + beta (a + a^dagger)``.

    The Hamiltonian is a displaced oscillator with ``b = a + beta/omega``,
    so the coherent amplitude is ``alpha e^{-i w t} - (beta/omega)(1 - e^{-i w t})``.
    """
    phase = cmath.exp(-1j * omega * t)
    amplitude = alpha * phase - (beta / omega) * (1 - phase)
    return complex_coherent_state(amplitude, dim)


def closed_form_polynomial_s2(alpha, omega, beta, t, dim) -> TruncatedState:
    """Frequency-renormalized rotation ``|alpha e^{-i sqrt(w^2 + 4 beta w) t}>``.

    Only an approximation: it ignores the squeezing generated by ``a^2 + a^dagger^2``
    and is accurate for ``beta << omega``.
    """
    shifted = omega * omega + 4.0 * beta * omega
    if not shifted > 0:
        raise ValueError("omega^2 + 4 beta omega must be positive")
    return complex_coherent_state(alpha * cmath.exp(-1j * math.sqrt(shifted) * t), dim)


def free_rotation(alpha, omega, t, dim) -> TruncatedState:
    return complex_coherent_state(alpha * cmath.exp(-1j * omega * t), dim)
