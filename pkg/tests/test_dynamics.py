import cmath

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlprobe.dynamics import (
    Propagator,
    closed_form_polynomial_s1,
    closed_form_polynomial_s2,
    evolve,
    evolve_probe,
    free_rotation,
    propagator_for,
)
from nlprobe.errors import DimensionMismatch, InvalidHamiltonian, TruncationError
from nlprobe.fock import OperatorMatrix, TruncatedState, coherent_state, expectation, ladder, number_operator
from nlprobe.hamiltonians import Family, ProbeSpec


def _spec(family, s, beta, t, alpha=1.0):
    return ProbeSpec(family, s, beta=beta, t=t, alpha=alpha)


def test_free_rotation_phases():
    dim = 40
    psi0 = coherent_state(1.0, dim)
    out = evolve(number_operator(dim), psi0, 0.3)
    np.testing.assert_allclose(out.state.amps, np.exp(-0.3j * np.arange(dim)) * psi0.amps, atol=1e-12)
    assert out.state.fidelity(free_rotation(1.0, 1.0, 0.3, dim)) == pytest.approx(1.0, abs=1e-10)
    assert out.converged


def test_zero_time_is_identity():
    psi0 = coherent_state(1.0, 40)
    h = _spec(Family.POLYNOMIAL, 3, 0.1, 0.0).hamiltonian(40)
    assert evolve(h, psi0, 0.0).state is psi0


def test_kerr_conserves_number():
    spec = _spec(Family.KERR, 2, 0.1, 0.5)
    out = evolve(spec.hamiltonian(60), coherent_state(1.0, 60), 0.5)
    assert expectation(out.state, number_operator(60)).real == pytest.approx(1.0, abs=1e-10)


def test_rejects_non_hermitian():
    a, _ = ladder(10)
    with pytest.raises(InvalidHamiltonian):
        Propagator(a)


def test_dim_mismatch():
    with pytest.raises(DimensionMismatch):
        evolve(number_operator(30), coherent_state(1.0, 40), 0.1)


def test_eigenvalues_match_dense():
    h = _spec(Family.SQUEEZING, 3, 0.2, 0.1).hamiltonian(30)
    np.testing.assert_allclose(Propagator(h).eigenvalues, np.linalg.eigvalsh(h.entries), atol=1e-10)


def test_blocked_matches_expm():
    from scipy.linalg import expm

    h = _spec(Family.SQUEEZING, 4, 0.2, 0.2).hamiltonian(40)
    psi0 = coherent_state(1.0, 40)
    direct = expm(-0.2j * h.entries) @ psi0.amps
    np.testing.assert_allclose(Propagator(h).evolve_amplitudes(psi0.amps, 0.2), direct, atol=1e-10)


def test_complex_hamiltonian_supported():
    rng = np.random.default_rng(0)
    m = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
    h = OperatorMatrix.from_array(m + m.conj().T)
    psi = TruncatedState(np.ones(6) / np.sqrt(6))
    out = evolve(h, psi, 0.7)
    assert np.linalg.norm(out.state.amps) == pytest.approx(1.0, abs=1e-12)


CASES = [
    (Family.POLYNOMIAL, 3, 0.1),
    (Family.POLYNOMIAL, 4, 0.05),
    (Family.SQUEEZING, 3, 0.2),
    (Family.KERR, 4, 0.3),
]


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(CASES), st.floats(0.0, 0.15), st.floats(0.0, 0.15))
def test_unitarity_composition_energy(case, t1, t2):
    family, s, beta = case
    dim = 100
    h = _spec(family, s, beta, 0.0).hamiltonian(dim)
    prop = Propagator(h)
    psi0 = coherent_state(1.0, dim)
    mid = evolve(prop, psi0, t1).state
    two_step = evolve(prop, mid, t2).state
    direct = evolve(prop, psi0, t1 + t2).state
    assert np.linalg.norm(direct.amps) == pytest.approx(1.0, abs=1e-10)
    assert 1 - two_step.fidelity(direct) < 1e-8
    e0 = expectation(psi0, h).real
    assert expectation(direct, h).real == pytest.approx(e0, rel=1e-8)


def test_kerr_factorization_uses_free_phase():
    dim, beta, t = 60, 0.3, 0.15
    spec = _spec(Family.KERR, 4, beta, t)
    psi = evolve(spec.hamiltonian(dim), coherent_state(1.0, dim), t).state
    diag = np.diag(spec.nonlinear_poly().matrix(dim).entries).real
    factored = np.exp(-1j * beta * t * diag) * free_rotation(1.0, 1.0, t, dim).amps
    assert abs(np.vdot(factored, psi.amps)) ** 2 == pytest.approx(1.0, abs=1e-8)


def test_closed_form_s1_limits():
    assert closed_form_polynomial_s1(1.0, 1.0, 0.0, 0.4, 40).fidelity(free_rotation(1.0, 1.0, 0.4, 40)) == pytest.approx(1)
    assert closed_form_polynomial_s1(1.0, 1.0, 0.3, 0.0, 40).fidelity(coherent_state(1.0, 40)) == pytest.approx(1)


@pytest.mark.parametrize("beta,t", [(0.05, 0.05), (0.5, 0.1), (1.0, 0.05)])
def test_closed_form_s1_matches_numeric(beta, t):
    dim = 60
    numeric = evolve(_spec(Family.POLYNOMIAL, 1, beta, t).hamiltonian(dim), coherent_state(1.0, dim), t).state
    # up to a global phase, so compare fidelities
    assert numeric.fidelity(closed_form_polynomial_s1(1.0, 1.0, beta, t, dim)) >= 1 - 1e-8


def test_closed_form_s1_sign():
    # the displaced amplitude moves towards negative real values
    dim = 60
    t = 0.05
    numeric = evolve(_spec(Family.POLYNOMIAL, 1, 1.0, t).hamiltonian(dim), coherent_state(1.0, dim), t).state
    a, _ = ladder(dim)
    mean = expectation(numeric, a)
    phase = cmath.exp(-1j * t)
    assert mean == pytest.approx(phase - (1 - phase), abs=1e-10)


def test_closed_form_s2_small_beta():
    dim = 60
    numeric = evolve(_spec(Family.POLYNOMIAL, 2, 0.01, 0.05).hamiltonian(dim), coherent_state(1.0, dim), 0.05).state
    assert numeric.fidelity(closed_form_polynomial_s2(1.0, 1.0, 0.01, 0.05, dim)) >= 0.999


def test_closed_form_s2_is_only_approximate():
    dim = 60
    numeric = evolve(_spec(Family.POLYNOMIAL, 2, 1.0, 0.05).hamiltonian(dim), coherent_state(1.0, dim), 0.05).state
    assert numeric.fidelity(closed_form_polynomial_s2(1.0, 1.0, 1.0, 0.05, dim)) < 1


def test_closed_form_s2_beta_zero():
    assert closed_form_polynomial_s2(1.0, 1.0, 0.0, 0.3, 40).fidelity(free_rotation(1.0, 1.0, 0.3, 40)) == pytest.approx(1)


def test_closed_form_truncation_guard():
    with pytest.raises(TruncationError):
        closed_form_polynomial_s1(3.0, 1.0, 1.0, 3.0, 12)


def test_evolve_probe_doubling_and_strictness():
    spec = _spec(Family.POLYNOMIAL, 3, 0.05, 1.0)
    result = evolve_probe(spec)
    assert result.converged and result.tail_mass < 1e-10
    with pytest.raises(TruncationError):
        evolve_probe(spec.replace(alpha=2.0), dim=8)


def test_evolve_probe_non_strict_returns_flag():
    spec = _spec(Family.SQUEEZING, 4, 0.1, 0.5)
    result = evolve_probe(spec, strict=False)
    assert not result.converged
    with pytest.raises(TruncationError):
        evolve_probe(spec, strict=True)


def test_propagator_cache_ignores_time_and_alpha():
    spec = _spec(Family.POLYNOMIAL, 3, 0.1, 0.2)
    assert propagator_for(spec, 50) is propagator_for(spec.replace(t=0.4, alpha=2.0), 50)
    assert propagator_for(spec, 50) is not propagator_for(spec.replace(beta=0.2), 50)
