"""scikit-learn style front end: probe parameters in, metrology features out."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .hamiltonians import Coupling, Family, ProbeSpec
from .metrology import PhaseSpaceGrid, evaluate_point

OUTPUTS = (
    "qfi",
    "q0",
    "ratio",
    "skew",
    "time_normalized_qfi",
    "heterodyne_cfi",
    "dim_used",
    "converged",
)


def spec_at(template: ProbeSpec, beta_over_omega: float, beta_t: float) -> ProbeSpec:
    """Place a template on one ``(beta/omega, beta t)`` grid point."""
    beta = template.omega * float(beta_over_omega)
    if not beta > 0:
        raise ValueError("beta/omega must be positive on a (beta/omega, beta t) grid")
    return template.replace(beta=beta, t=float(beta_t) / beta)


class ProbeTransformer(TransformerMixin, BaseEstimator):
    """Evaluate a nonlinear probe on rows of ``(beta/omega, beta t)``.

    ``fit`` only validates the probe template; ``transform`` returns one
    column per entry of ``outputs`` (see ``OUTPUTS``), in that order.

    >>> tr = ProbeTransformer(family="kerr", s=4, outputs=("ratio",))
    >>> tr.fit_transform([[0.5, 0.025]]).round(6)
    array([[0.666667]])
    """

    def __init__(
        self,
        family="polynomial",
        s=3,
        alpha=1.0,
        omega=1.0,
        coupling="independent",
        outputs=("ratio",),
        allow_out_of_regime=False,
        strict=False,
        dim=None,
    ):
        self.family = family
        self.s = s
        self.alpha = alpha
        self.omega = omega
        self.coupling = coupling
        self.outputs = outputs
        self.allow_out_of_regime = allow_out_of_regime
        self.strict = strict
        self.dim = dim

    def _template(self):
        return ProbeSpec(
            family=Family.parse(self.family),
            s=self.s,
            omega=self.omega,
            alpha=self.alpha,
            coupling=Coupling.parse(self.coupling),
            allow_out_of_regime=self.allow_out_of_regime,
        )

    def fit(self, X, y=None):
        X = check_array(X, dtype=float, ensure_min_features=2)
        if X.shape[1] != 2:
            raise ValueError(f"expected 2 columns (beta_over_omega, beta_t), got {X.shape[1]}")
        outputs = tuple(str(o).lower() for o in self.outputs)
        unknown = sorted(set(outputs) - set(OUTPUTS))
        if unknown or not outputs:
            raise ValueError(f"unknown outputs {unknown}; choose from {OUTPUTS}")
        if self.dim is not None and int(self.dim) < 2:
            raise ValueError("dim must be at least 2")
        self.template_ = self._template()
        self.outputs_ = outputs
        self.n_features_in_ = 2
        return self

    def transform(self, X):
        check_is_fitted(self, "template_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        heterodyne = "heterodyne_cfi" in self.outputs_
        grid = PhaseSpaceGrid() if heterodyne else None
        out = np.empty((X.shape[0], len(self.outputs_)))
        for i, (ratio_b, beta_t) in enumerate(X):
            point = evaluate_point(
                spec_at(self.template_, ratio_b, beta_t),
                heterodyne=heterodyne,
                grid=grid,
                dim=self.dim,
                strict=self.strict,
            )
            out[i] = [_feature(point, name) for name in self.outputs_]
        return out

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "template_")
        return np.asarray(self.outputs_, dtype=object)


def _feature(point, name):
    if name == "dim_used":
        return point.diagnostics.dim_used
    if name == "converged":
        return float(point.diagnostics.converged)
    return getattr(point, name)
