"""Fisher information, energy-matched ratios, skew information and oracles.

Every derivative with respect to the frequency is a central finite
difference of evolved states. Each evaluation is validated twice: a
Richardson pair ``(delta, delta/2)`` and the fidelity form of the QFI.
Truncations double from ``fock.default_dim(alpha)`` until both the state
tail and the target functionals stop moving.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from .dynamics import MAX_DOUBLINGS, propagator_for
from .errors import (
    EnergyConstraintViolated,
    GridCoverageError,
    InvalidAmplitude,
    NumericalInstability,
    TruncationError,
    UnsupportedExponent,
)
from .fock import CONVERGED_TAIL, TruncatedState, coherent_state, default_dim
from .hamiltonians import (
    ProbeSpec,
    ProcessProbe,
    group_excitation_processes,
    normal_order_expand,
    parse_process_label,
    scale_process_energy,
)

FD_REL_STEP = 1e-5
RICHARDSON_TOL = 1e-4
FIDELITY_TOL = 1e-3
FUNCTIONAL_TOL = 1e-6
CFI_SLACK = 1e-3
DEFAULT_BETA_T = 0.05


@dataclass(frozen=True)
class Diagnostics:
    fd_step: float
    dim_used: int
    converged: bool
    tail_mass: float = 0.0


@dataclass(frozen=True)
class MetrologyPoint:
    spec: ProbeSpec
    qfi: float
    q0: float
    ratio: float
    skew: float
    heterodyne_cfi: float | None = None
    diagnostics: Diagnostics = field(default_factory=lambda: Diagnostics(0.0, 0, False))

    @property
    def time_normalized_qfi(self) -> float:
        """``Q / 4t^2``; equals the skew information when ``[H0, H1] = 0``."""
        return self.qfi / (4.0 * self.spec.t ** 2)


def _close(a, b, rel, floor=1e-14):
    return abs(a - b) <= rel * max(abs(a), abs(b)) + floor


def qfi_from_states(psi_minus, psi, psi_plus, delta) -> float:
    """Pure-state QFI from a central difference of three amplitude vectors."""
    deriv = (np.asarray(psi_plus) - np.asarray(psi_minus)) / (2.0 * delta)
    psi = np.asarray(psi)
    value = 4.0 * (np.vdot(deriv, deriv).real - abs(np.vdot(deriv, psi)) ** 2)
    return max(float(value), 0.0)


def fidelity_qfi(psi, psi_shifted, delta) -> float:
    """``8 (1 - |<psi(w)|psi(w+delta)>|) / delta^2`` without cancellation.

    The infidelity is taken from the component of the shifted state
    orthogonal to ``psi``.
    """
    psi = np.asarray(psi)
    phi = np.asarray(psi_shifted)
    perp = phi - np.vdot(psi, phi) / np.vdot(psi, psi).real * psi
    x = min(np.vdot(perp, perp).real / np.vdot(phi, phi).real, 1.0)
    one_minus = x / (1.0 + math.sqrt(1.0 - x))
    return 8.0 * one_minus / delta ** 2


class _StateFamily:
    """States ``psi(omega')`` of one probe at one truncation."""

    def __init__(self, probe, dim):
        self.probe = probe
        self.dim = dim
        self.psi0 = coherent_state(probe.alpha, dim).amps

    def __call__(self, omega):
        prop = propagator_for(self.probe.at_omega(omega), self.dim)
        return prop.evolve_amplitudes(self.psi0, self.probe.t)


def _fd_states(family, omega, delta):
    return family(omega - delta), family(omega + delta)


def _qfi_at_dim(family):
    """Return ``(qfi, delta, psi, shifted_states)`` at a fixed truncation."""
    omega = family.probe.omega
    psi = family(omega)
    delta = FD_REL_STEP * omega
    shifted = {}
    for attempt in range(2):
        for d in (delta, delta / 2):
            if d not in shifted:
                shifted[d] = _fd_states(family, omega, d)
        q_full = qfi_from_states(shifted[delta][0], psi, shifted[delta][1], delta)
        q_half = qfi_from_states(shifted[delta / 2][0], psi, shifted[delta / 2][1], delta / 2)
        if _close(q_full, q_half, RICHARDSON_TOL):
            break
        if attempt == 1:
            raise NumericalInstability(
                f"Richardson pair disagrees at delta={delta:.1e}", q_full, q_half
            )
        delta /= 10.0
    qfi = max((4.0 * q_half - q_full) / 3.0, 0.0)
    q_fid = fidelity_qfi(psi, shifted[delta][1], delta)
    if not _close(qfi, q_fid, FIDELITY_TOL, floor=1e-10):
        raise NumericalInstability(
            f"finite-difference QFI {qfi!r} disagrees with fidelity form {q_fid!r}",
            qfi,
            q_fid,
        )
    return qfi, delta, psi, shifted


def _dims(probe, dim):
    if dim is not None:
        return [int(dim)]
    d0 = default_dim(probe.alpha)
    return [d0 * 2 ** k for k in range(MAX_DOUBLINGS + 1)]


def _converge(probe, evaluate, dim=None, strict=True):
    """Run ``evaluate(family) -> (values, psi, extra)`` on doubling truncations.

    Stops once the tail of ``psi`` is below 1e-10 and every value moved by
    less than 1e-6 relative since the previous truncation. Without
    ``strict``, the last truncation that evaluated cleanly is returned
    flagged as unconverged.
    """
    previous = None
    last = None
    coverage = None
    for d in _dims(probe, dim):
        try:
            values, psi, extra = evaluate(_StateFamily(probe, d))
        except GridCoverageError as exc:
            # the window follows the state; a truncated state can be wider than the converged one
            coverage = exc
            previous = None
            continue
        tail = TruncatedState.from_amplitudes(psi).tail_mass()
        if dim is not None:
            return values, extra, Diagnostics(extra.get("delta", 0.0), d, tail < CONVERGED_TAIL, tail)
        if (
            previous is not None
            and tail < CONVERGED_TAIL
            and all(_close(v, p, FUNCTIONAL_TOL, floor=1e-13) for v, p in zip(values, previous))
        ):
            return values, extra, Diagnostics(extra.get("delta", 0.0), d, True, tail)
        previous = values
        last = (values, extra, Diagnostics(extra.get("delta", 0.0), d, False, tail))
    if last is None or (strict and coverage is not None and previous is None):
        raise coverage
    if strict:
        diag = last[2]
        raise TruncationError(
            f"no convergence after {MAX_DOUBLINGS} doublings (dim={diag.dim_used}, tail={diag.tail_mass:.2e})",
            tail_mass=diag.tail_mass,
            dim=diag.dim_used,
        )
    return last


def qfi_pure(spec, dim: int | None = None, strict: bool = True):
    """QFI of the evolved probe with respect to ``omega``.

    Returns ``(qfi, Diagnostics)``. ``spec`` may be a ProbeSpec or a
    ProcessProbe.
    """

    def evaluate(family):
        qfi, delta, psi, _ = _qfi_at_dim(family)
        return (qfi,), psi, {"delta": delta}

    (qfi,), _, diag = _converge(spec, evaluate, dim, strict)
    return qfi, diag


def energy_matched_alpha0(spec) -> float:
    """Amplitude of the linear probe carrying the same mean energy."""
    energy = spec.mean_energy()
    if not energy > 0:
        raise EnergyConstraintViolated(f"mean energy {energy!r} is not positive")
    return math.sqrt(energy / spec.omega)


def _check_ratio_inputs(spec):
    if spec.alpha == 0:
        raise InvalidAmplitude("the energy-matched ratio needs alpha != 0")
    if spec.t == 0:
        raise ValueError("the energy-matched ratio is undefined at t = 0")


def ratio_R(spec, dim: int | None = None, strict: bool = True) -> float:
    """``omega Q / (4 t^2 <alpha|H|alpha>)``; above 1 means nonlinear gain."""
    _check_ratio_inputs(spec)
    qfi, _ = qfi_pure(spec, dim, strict)
    return spec.omega * qfi / (4.0 * spec.t ** 2 * spec.mean_energy())


def skew_information(state: TruncatedState) -> float:
    """Skew information of a pure state with respect to ``a^dagger a``.

    For pure states it reduces to the photon-number variance.
    """
    p = state.populations if isinstance(state, TruncatedState) else np.abs(state) ** 2
    n = np.arange(p.size, dtype=float)
    mean = p @ n
    return max(float(p @ (n - mean) ** 2), 0.0)


# ---------------------------------------------------------------- heterodyne


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Rectangular window ``mean +- n_sigma * std`` per quadrature."""

    points: int = 201
    n_sigma: float = 6.0
    norm_tol: float = 1e-4
    p_floor: float = 1e-14


def husimi_moments(psi: np.ndarray):
    """Mean and variance of Re and Im of the heterodyne outcome."""
    n = np.arange(psi.size, dtype=float)
    mean_a = np.vdot(psi[:-1], np.sqrt(n[1:]) * psi[1:])
    mean_a2 = np.vdot(psi[:-2], np.sqrt(n[2:] * n[1:-1]) * psi[2:])
    mean_n = float(np.abs(psi) ** 2 @ n)
    ex2 = (2 * mean_a2.real + 2 * mean_n + 1) / 4
    ey2 = (-2 * mean_a2.real + 2 * mean_n + 1) / 4
    var_x = ex2 - mean_a.real ** 2 + 0.25
    var_y = ey2 - mean_a.imag ** 2 + 0.25
    return (mean_a.real, mean_a.imag), (max(var_x, 0.25), max(var_y, 0.25))


def husimi_amplitudes(xs, ys, states: np.ndarray) -> np.ndarray:
    """``<gamma|psi>`` on the grid ``gamma = x + i y`` for columns of ``states``.

    Returns an array of shape ``(len(xs), len(ys), n_states)``.
    """
    states = np.asarray(states)
    dim = states.shape[0]
    n = np.arange(dim, dtype=float)
    half_lgamma = 0.5 * gammaln(n + 1)
    out = np.empty((len(xs), len(ys), states.shape[1]), dtype=complex)
    ys = np.asarray(ys, dtype=float)
    for i, x in enumerate(xs):
        gamma = x + 1j * ys
        r = np.abs(gamma)
        logr = np.log(np.maximum(r, 1e-300))
        theta = np.angle(gamma)
        expo = -0.5 * r[:, None] ** 2 + logr[:, None] * n - half_lgamma
        coeff = np.exp(expo - 1j * theta[:, None] * n)
        out[i] = coeff @ states
    return out


def _axes(psi, grid, stretch):
    (mx, my), (vx, vy) = husimi_moments(psi)
    hx = grid.n_sigma * stretch * math.sqrt(vx)
    hy = grid.n_sigma * stretch * math.sqrt(vy)
    points = grid.points if stretch == 1.0 else int(grid.points * stretch) | 1
    return np.linspace(mx - hx, mx + hx, points), np.linspace(my - hy, my + hy, points)


def _integrate(xs, ys, values):
    return float(trapezoid(trapezoid(values, ys, axis=1), xs, axis=0))


def _cfi_on_grid(psi, shifted, grid):
    """Heterodyne CFI for every FD step in ``shifted``; returns dict and norm."""
    for stretch in (1.0, 2.0):
        xs, ys = _axes(psi, grid, stretch)
        steps = sorted(shifted)
        columns = [psi] + [v for d in steps for v in shifted[d]]
        amps = husimi_amplitudes(xs, ys, np.stack(columns, axis=1))
        prob = np.abs(amps) ** 2 / np.pi
        norm = _integrate(xs, ys, prob[..., 0])
        if abs(norm - 1.0) <= grid.norm_tol:
            break
    else:
        raise GridCoverageError(f"heterodyne distribution integrates to {norm:.6f}", norm)
    p = prob[..., 0]
    mask = p >= grid.p_floor
    safe = np.where(mask, p, 1.0)
    out = {}
    for k, d in enumerate(steps):
        dp = (prob[..., 2 + 2 * k] - prob[..., 1 + 2 * k]) / (2.0 * d)
        out[d] = _integrate(xs, ys, np.where(mask, dp ** 2 / safe, 0.0))
    return out, norm


def _cfi_at_dim(family, grid):
    qfi, delta, psi, shifted = _qfi_at_dim(family)
    cfis, _ = _cfi_on_grid(psi, shifted, grid)
    c_full, c_half = cfis[delta], cfis[delta / 2]
    if not _close(c_full, c_half, RICHARDSON_TOL, floor=1e-12):
        raise NumericalInstability("heterodyne CFI Richardson pair disagrees", c_full, c_half)
    cfi = max((4.0 * c_half - c_full) / 3.0, 0.0)
    if cfi > qfi * (1.0 + CFI_SLACK) + 1e-12:
        raise NumericalInstability(f"heterodyne CFI {cfi!r} exceeds QFI {qfi!r}", cfi, qfi)
    return qfi, cfi, delta, psi


def heterodyne_cfi(spec, grid: PhaseSpaceGrid | None = None, dim=None, strict=True) -> float:
    """Classical Fisher information of heterodyne detection on the evolved probe."""
    grid = grid or PhaseSpaceGrid()

    def evaluate(family):
        _, cfi, delta, psi = _cfi_at_dim(family, grid)
        return (cfi,), psi, {"delta": delta}

    (cfi,), _, _ = _converge(spec, evaluate, dim, strict)
    return cfi


# ------------------------------------------------------------ grid points


def evaluate_point(
    spec: ProbeSpec,
    heterodyne: bool = False,
    grid: PhaseSpaceGrid | None = None,
    dim: int | None = None,
    strict: bool = True,
) -> MetrologyPoint:
    """QFI, energy-matched ratio and skew (optionally heterodyne CFI) at one point."""
    _check_ratio_inputs(spec)
    grid = grid or PhaseSpaceGrid()

    def evaluate(family):
        if heterodyne:
            qfi, cfi, delta, psi = _cfi_at_dim(family, grid)
            values = (qfi, skew_information(psi), cfi)
        else:
            qfi, delta, psi, _ = _qfi_at_dim(family)
            values = (qfi, skew_information(psi))
        return values, psi, {"delta": delta}

    values, _, diag = _converge(spec, evaluate, dim, strict)
    alpha0 = energy_matched_alpha0(spec)
    q0 = 4.0 * spec.t ** 2 * alpha0 ** 2
    return MetrologyPoint(
        spec=spec,
        qfi=values[0],
        q0=q0,
        ratio=values[0] / q0,
        skew=values[1],
        heterodyne_cfi=values[2] if heterodyne else None,
        diagnostics=diag,
    )


# ------------------------------------------------------- process ratios


def excitation_process(s: int, j_label):
    j = parse_process_label(j_label)
    for proc in group_excitation_processes(normal_order_expand(s)):
        if proc.j == j:
            return proc
    raise ValueError(f"(a + a^dagger)^{s} has no process with net excitation {j}")


def ratio_Rj(
    j_label,
    s: int,
    alpha: float,
    omega: float = 1.0,
    beta: float = 0.01,
    t: float | None = None,
    count_commuting_energy: bool = False,
    dim: int | None = None,
    strict: bool = True,
) -> float:
    """Energy-matched ratio for a probe driven by one excitation process.

    ``H_j = omega n + beta A_j`` with ``A_j`` rescaled to mean ``2 alpha``
    on ``|alpha>``; ``t`` defaults to ``0.05 / beta``. A number-conserving
    process commutes with ``n`` and only adds an omega-independent phase,
    so by default its energy is not charged to the probe; set
    ``count_commuting_energy`` to charge it anyway.
    """
    if alpha == 0:
        raise InvalidAmplitude("the energy-matched ratio needs alpha != 0")
    if t is None:
        t = DEFAULT_BETA_T / beta
    proc = scale_process_energy(excitation_process(s, j_label), alpha)
    probe = ProcessProbe(proc, omega=omega, beta=beta, alpha=alpha, t=t)
    qfi, _ = qfi_pure(probe, dim, strict)
    energy = omega * alpha ** 2
    if count_commuting_energy or not proc.number_conserving:
        energy += probe.process_energy()
    return omega * qfi / (4.0 * t ** 2 * energy)


# ------------------------------------------------------------ optimizer


def maximize_R(
    spec_template: ProbeSpec,
    beta_t: float,
    n_coarse: int = 64,
    beta_range=(1e-4, 1.0),
    xtol: float = 1e-3,
    strict: bool = True,
    dim: int | None = None,
):
    """Maximize the ratio over ``beta/omega`` at fixed ``beta t``.

    A log-spaced scan locates the best bracket, then golden-section search
    on ``log10 beta`` refines it. Returns ``(r_max, beta_star)``.
    """
    omega = spec_template.omega

    def ratio_at(log_b):
        beta = omega * 10.0 ** log_b
        spec = spec_template.replace(beta=beta, t=beta_t / beta)
        return ratio_R(spec, dim=dim, strict=strict)

    logs = np.linspace(math.log10(beta_range[0]), math.log10(beta_range[1]), n_coarse)
    values = np.array([ratio_at(u) for u in logs])
    best = int(np.argmax(values))
    if best in (0, n_coarse - 1):
        return float(values[best]), float(omega * 10.0 ** logs[best])
    res = minimize_scalar(
        lambda u: -ratio_at(u),
        bracket=(logs[best - 1], logs[best], logs[best + 1]),
        method="golden",
        options={"xtol": xtol / max(abs(logs[best]), 1.0)},
    )
    if -res.fun >= values[best]:
        return float(-res.fun), float(omega * 10.0 ** res.x)
    return float(values[best]), float(omega * 10.0 ** logs[best])


# ------------------------------------------------------------- oracles


def series_ratio_oracle(s: int, alpha: float, beta: float, expansion: str) -> float:
    """Truncated small-alpha / small-beta series of the ratio (beta proportional to omega)."""
    if int(s) != s or not 1 <= s <= 4:
        raise UnsupportedExponent(f"series oracle covers s in 1..4, got {s}")
    key = str(expansion).lower().replace("_", "")
    a, b = float(alpha), float(beta)
    if key in ("smallalpha", "alpha"):
        if a > 0.1:
            warnings.warn(f"small-alpha series used at alpha={a}", stacklevel=2)
        return {
            1: lambda: b / (2 * a) + 0.75 + a / (8 * b),
            2: lambda: 2 * b + (6 + 1 / b + 8 * b) * a ** 2,
            3: lambda: 5 * b / (2 * a) + 7 / 12 + (5 / (72 * b) + 62 * b / 3) * a,
            4: lambda: 32 * b + (16 + 1 / b + 768 * b) * a ** 2 / 3,
        }[int(s)]()
    if key in ("smallbeta", "beta"):
        if b > 0.01:
            warnings.warn(f"small-beta series used at beta={b}", stacklevel=2)
        return {
            1: lambda: 1 + b ** 2 / a ** 2,
            2: lambda: 1 + (4 - 1 / a ** 2) * b,
            3: lambda: 1 + 16 * a * b,
            4: lambda: 1 + (24 - 3 / a ** 2 + 48 * a ** 2) * b,
        }[int(s)]()
    raise ValueError(f"unknown expansion {expansion!r}")


def series_slope(s: int, alpha: float) -> float:
    """Linear coefficient of the small-beta ratio series."""
    return {
        1: 0.0,
        2: 4 - 1 / alpha ** 2,
        3: 16 * alpha,
        4: 24 - 3 / alpha ** 2 + 48 * alpha ** 2,
    }[int(s)]
