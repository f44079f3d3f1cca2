import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from nlprobe.errors import RegimeError
from nlprobe.estimator import ProbeTransformer, spec_at
from nlprobe.hamiltonians import Family, ProbeSpec


def test_params_roundtrip_and_clone():
    tr = ProbeTransformer(family="squeezing", s=4, outputs=("qfi", "skew"))
    params = tr.get_params()
    assert params["family"] == "squeezing" and params["outputs"] == ("qfi", "skew")
    copy = clone(tr).set_params(alpha=2.0)
    assert copy.alpha == 2.0 and tr.alpha == 1.0


def test_transform_kerr_ratio():
    out = ProbeTransformer(family="kerr", s=4).fit_transform([[0.5, 0.025]])
    assert out.shape == (1, 1)
    assert out[0, 0] == pytest.approx(1 / 1.5, rel=1e-6)


def test_multiple_outputs_are_ordered():
    tr = ProbeTransformer(outputs=("q0", "qfi", "ratio", "converged")).fit([[0.01, 0.05]])
    q0, qfi, ratio, converged = tr.transform([[0.01, 0.05]])[0]
    assert ratio == pytest.approx(qfi / q0)
    assert converged == 1.0
    assert list(tr.get_feature_names_out()) == ["q0", "qfi", "ratio", "converged"]


def test_fit_validation():
    with pytest.raises(ValueError):
        ProbeTransformer().fit(np.ones((2, 3)))
    with pytest.raises(ValueError):
        ProbeTransformer(outputs=("nope",)).fit([[0.1, 0.01]])
    with pytest.raises(ValueError):
        ProbeTransformer(dim=1).fit([[0.1, 0.01]])


def test_transform_requires_fit():
    with pytest.raises(NotFittedError):
        ProbeTransformer().transform([[0.1, 0.01]])


def test_regime_enforced_per_row():
    tr = ProbeTransformer().fit([[0.1, 0.01]])
    with pytest.raises(RegimeError):
        tr.transform([[0.1, 0.2]])


def test_spec_at():
    spec = spec_at(ProbeSpec(Family.POLYNOMIAL, 3, omega=2.0), 0.01, 0.05)
    assert spec.beta == pytest.approx(0.02)
    assert spec.beta * spec.t == pytest.approx(0.05)
    with pytest.raises(ValueError):
        spec_at(ProbeSpec(Family.POLYNOMIAL, 3), 0.0, 0.05)


def test_docstring_example():
    import doctest

    from nlprobe import estimator

    assert doctest.testmod(estimator).failed == 0
