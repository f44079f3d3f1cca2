"""Invariant and acceptance checks behind ``nlprobe validate``.

Each check returns one or more ``Measurement`` rows (measured vs
expected). Checks are grouped as ``properties`` (fast structural
invariants) and ``acceptance`` (figure-level numbers).
"""

from __future__ import annotations

import cmath
import tempfile
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .dynamics import Propagator, evolve, free_rotation
from .errors import ProbeError
from .fock import (
    coherent_state,
    coherent_tail,
    expectation,
    ladder,
    number_operator,
    quadrature,
)
from .hamiltonians import (
    Coupling,
    Family,
    ProbeSpec,
    ProcessProbe,
    analytic_qfi_proportional,
    group_excitation_processes,
    normal_order_expand,
    scale_process_energy,
)
from .metrology import (
    _StateFamily,
    evaluate_point,
    excitation_process,
    maximize_R,
    qfi_from_states,
    qfi_pure,
    ratio_R,
    ratio_Rj,
    series_slope,
)
from .sweep import Axis, Spacing, SweepConfig, run_ratio_sweep, skew_alignment


@dataclass(frozen=True)
class Measurement:
    name: str
    measured: object
    expected: str
    passed: bool


@dataclass
class CheckResult:
    name: str
    group: str
    measurements: list = field(default_factory=list)
    seconds: float = 0.0
    limit: float | None = None
    error: str | None = None
    fatal: bool = False

    @property
    def passed(self) -> bool:
        if self.error is not None:
            return False
        if self.limit is not None and self.seconds > self.limit:
            return False
        return all(m.passed for m in self.measurements)

    def lines(self) -> list[str]:
        status = "PASS" if self.passed else ("ERROR" if self.error else "FAIL")
        head = f"{status:5s} [{self.group}] {self.name} ({self.seconds:.1f} s"
        head += f", limit {self.limit:g} s)" if self.limit else ")"
        out = [head]
        if self.error:
            out.append(f"      {self.error}")
        for m in self.measurements:
            mark = "ok " if m.passed else "BAD"
            out.append(f"      {mark} {m.name}: measured={_short(m.measured)} expected {m.expected}")
        return out


@dataclass
class Context:
    dim: int | None = None
    expansion: object = normal_order_expand


def _short(value):
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def _within(name, measured, target, tol, relative=False):
    scale = abs(target) if relative else 1.0
    ok = abs(measured - target) <= tol * scale
    kind = "rel" if relative else "abs"
    return Measurement(name, float(measured), f"{target:.10g} within {tol:g} {kind}", bool(ok))


def _in_range(name, measured, lo, hi):
    return Measurement(name, float(measured), f"in [{lo:g}, {hi:g}]", bool(lo <= measured <= hi))


REGISTRY: list = []


def check(group, limit=None):
    def wrap(func):
        REGISTRY.append((func.__name__.replace("_", "-"), group, limit, func))
        return func

    return wrap


# ---------------------------------------------------------------- properties


@check("properties")
def commutator(ctx):
    out = []
    for dim in (16, 64, 200):
        a, adag = ladder(dim)
        c = (a.entries @ adag.entries - adag.entries @ a.entries)[:-1, :-1]
        dev = np.abs(c - np.eye(dim - 1)).max()
        out.append(Measurement(f"|[a,a+] - I| interior, dim={dim}", dev, "< 1e-10", dev < 1e-10))
    return out


@check("properties")
def norm_preservation(ctx):
    out = []
    for alpha, dim in ((0.0, 8), (1.0, 40), (2.5, 80)):
        norm = np.linalg.norm(coherent_state(alpha, dim).amps)
        out.append(_within(f"coherent alpha={alpha} dim={dim}", norm, 1.0, 1e-10))
    return out


@check("properties")
def truncation_monotonicity(ctx):
    tails = [coherent_tail(3.0, d) for d in (20, 40, 80, 160)]
    ok = all(b <= a for a, b in zip(tails, tails[1:]))
    return [Measurement("analytic tail of |3> over dims 20..160", tails, "nonincreasing", ok)]


@check("properties")
def expansion_soundness(ctx):
    out = []
    for s in range(1, 9):
        dim = max(4 * s, 16)
        dense = quadrature(dim).power(s).entries
        exact = ctx.expansion(s).matrix(dim).entries
        k = dim - s
        # the dense power is wrong in the last s rows: ladder truncation
        dev = np.abs(dense[:k, :k] - exact[:k, :k]).max() / max(1.0, np.abs(dense).max())
        out.append(Measurement(f"s={s} dim={dim} (interior, scaled max-norm)", dev, "< 1e-8", dev < 1e-8))
    return out


@check("properties")
def partition_completeness(ctx):
    out = []
    for s in range(1, 9):
        dim = max(4 * s, 16)
        procs = group_excitation_processes(ctx.expansion(s))
        total = sum(p.poly.matrix(dim).entries for p in procs)
        dense = quadrature(dim).power(s).entries
        k = dim - s
        dev = np.abs(total[:k, :k] - dense[:k, :k]).max() / max(1.0, np.abs(dense).max())
        out.append(Measurement(f"s={s}: sum of {len(procs)} processes", dev, "< 1e-8", dev < 1e-8))
    return out


@check("properties")
def commutation_facts(ctx):
    out = []
    dim = 40
    n = number_operator(dim)
    for s in range(1, 7):
        kerr = ProbeSpec(Family.KERR, s, beta=0.0).nonlinear_poly().matrix(dim)
        dev = np.abs(n.commutator(kerr).entries).max()
        out.append(Measurement(f"[n, a+^{s} a^{s}]", dev, "== 0", dev == 0))
    for s in (2, 4, 6):
        ns = excitation_process(s, "ns").poly.matrix(dim)
        dev = np.abs(n.commutator(ns).entries).max()
        out.append(Measurement(f"[n, A_ns^({s})]", dev, "== 0", dev == 0))
    return out


@check("properties")
def analytic_vs_numeric(ctx):
    out = []
    for s in (1, 2, 3, 4):
        for alpha in (1.0, 2.0):
            for beta in (0.01, 0.1):
                spec = ProbeSpec(Family.POLYNOMIAL, s, beta=beta, alpha=alpha, t=0.1, coupling=Coupling.PROPORTIONAL)
                # s=4, alpha=2, beta=0.1 keeps a 2e-9 tail at the largest truncation; the value is still exact
                q, _ = qfi_pure(spec, dim=ctx.dim, strict=False)
                exact = analytic_qfi_proportional(s, alpha, beta, 0.1)
                out.append(_within(f"s={s} alpha={alpha} beta={beta}", q, exact, 1e-6, relative=True))
    return out


def _unitary_cases():
    return [
        ProbeSpec(Family.POLYNOMIAL, 3, beta=0.1, t=0.4),
        ProbeSpec(Family.SQUEEZING, 4, beta=0.2, t=0.2),
        ProbeSpec(Family.KERR, 2, beta=0.1, t=0.5),
    ]


@check("properties")
def unitarity(ctx):
    out = []
    dim = ctx.dim or 80
    for spec in _unitary_cases():
        prop = Propagator(spec.hamiltonian(dim))
        psi = coherent_state(1.0, dim)
        norm = np.linalg.norm(prop.evolve_amplitudes(psi.amps, spec.t))
        out.append(_within(f"{spec.family.value} s={spec.s}", norm, 1.0, 1e-10))
        later = evolve(prop, evolve(prop, psi, 0.1).state, spec.t)
        direct = evolve(prop, psi, spec.t + 0.1)
        deficit = 1.0 - later.state.fidelity(direct.state)
        out.append(Measurement(f"{spec.family.value} s={spec.s} composition", deficit, "< 1e-8", deficit < 1e-8))
        h = spec.hamiltonian(dim)
        e0 = expectation(psi, h).real
        e1 = expectation(direct.state, h).real
        out.append(_within(f"{spec.family.value} s={spec.s} energy", e1, e0, 1e-8, relative=True))
    return out


@check("properties")
def kerr_factorization(ctx):
    dim = ctx.dim or 60
    alpha, omega, beta, t = 1.0, 1.0, 0.3, 0.15
    spec = ProbeSpec(Family.KERR, 4, omega=omega, beta=beta, alpha=alpha, t=t)
    psi = evolve(spec.hamiltonian(dim), coherent_state(alpha, dim), t).state
    diag = np.diag(spec.nonlinear_poly().matrix(dim).entries).real
    factored = np.exp(-1j * beta * t * diag) * free_rotation(alpha, omega, t, dim).amps
    fid = abs(np.vdot(factored, psi.amps)) ** 2
    return [_within("overlap with exp(-i beta t A) |alpha e^{-i w t}>", fid, 1.0, 1e-8)]


@check("properties")
def gauge_invariance(ctx):
    spec = ProbeSpec(Family.POLYNOMIAL, 3, beta=0.05, t=1.0)
    family = _StateFamily(spec, ctx.dim or 82)
    delta = 1e-5
    psi = family(1.0)
    minus, plus = family(1.0 - delta), family(1.0 + delta)
    q = qfi_from_states(minus, psi, plus, delta)
    phase = cmath.exp(0.731j)
    q_phase = qfi_from_states(phase * minus, phase * psi, phase * plus, delta)
    return [_within("qfi with a common global phase", q_phase, q, 1e-10, relative=True)]


@check("properties")
def cfi_below_qfi(ctx):
    out = []
    for spec in (
        ProbeSpec(Family.POLYNOMIAL, 3, beta=0.0, t=0.7),
        ProbeSpec(Family.POLYNOMIAL, 3, beta=0.0141, t=0.05 / 0.0141),
        ProbeSpec(Family.SQUEEZING, 3, beta=0.1, t=0.5),
    ):
        p = evaluate_point(spec, heterodyne=True, dim=ctx.dim)
        ok = p.heterodyne_cfi <= p.qfi * (1 + 1e-3)
        out.append(Measurement(f"{spec.family.value} s={spec.s} beta={spec.beta}", p.heterodyne_cfi / p.qfi, "<= 1.001", ok))
    return out


@check("properties")
def kerr_no_gain(ctx):
    betas = np.geomspace(1e-3, 1.0, 12)
    ratios = [ratio_R(ProbeSpec(Family.KERR, 4, beta=b, t=0.05 / b), dim=ctx.dim) for b in betas]
    below = all(r < 1 for r in ratios)
    decreasing = all(b < a for a, b in zip(ratios, ratios[1:]))
    return [
        Measurement("max ratio over beta in [1e-3, 1]", max(ratios), "< 1", below),
        Measurement("ratio strictly decreasing in beta", decreasing, "True", decreasing),
    ]


@check("properties")
def commuting_process_invariance(ctx):
    out = []
    for s in (2, 4):
        proc = scale_process_energy(excitation_process(s, "ns"), 1.0)
        q, _ = qfi_pure(ProcessProbe(proc, beta=0.1, alpha=1.0, t=0.5), dim=ctx.dim)
        q0, _ = qfi_pure(ProcessProbe(proc, beta=0.0, alpha=1.0, t=0.5), dim=ctx.dim)
        out.append(_within(f"s={s} with and without A_ns", q, q0, 1e-6, relative=True))
    return out


@check("properties")
def determinism(ctx):
    with tempfile.TemporaryDirectory() as tmp:
        base = SweepConfig(
            probe=ProbeSpec(Family.POLYNOMIAL, 3),
            beta_over_omega=Axis(1e-2, 1.0, 3, Spacing.LOG),
            beta_t=Axis(1e-2, 0.05, 2, Spacing.LOG),
            dim=ctx.dim,
        )
        blobs = []
        for workers in (1, 2):
            path = Path(tmp) / f"w{workers}.csv"
            run_ratio_sweep(base.replace(workers=workers, out_path=path))
            blobs.append(path.read_bytes())
    same = blobs[0] == blobs[1]
    return [Measurement("CSV bytes, 1 worker vs 2 workers", same, "True", same)]


# ---------------------------------------------------------------- acceptance


@lru_cache(maxsize=None)
def _rmax(family, s, dim=None):
    return maximize_R(ProbeSpec(family, s, alpha=1.0), 0.05, strict=False, dim=dim)


def _slope_series(s, dim, beta=1e-3):
    def ratio(b):
        spec = ProbeSpec(Family.POLYNOMIAL, s, beta=b, alpha=1.0, t=1.0, coupling=Coupling.PROPORTIONAL)
        return ratio_R(spec, dim=dim)

    d1 = (ratio(beta) - 1.0) / beta
    d2 = (ratio(2 * beta) - 1.0) / (2 * beta)
    # forward difference carries O(beta) curvature; extrapolate it away
    return 2 * d1 - d2


@check("acceptance", limit=1)
def free_probe_qfi(ctx):
    q, _ = qfi_pure(ProbeSpec(Family.POLYNOMIAL, 3, beta=0.0, alpha=1.0, t=0.7), dim=ctx.dim)
    return [_within("Q0 at beta=0, alpha=1, t=0.7", q, 1.96, 1e-8)]


@check("acceptance", limit=30)
def analytic_oracle(ctx):
    out = []
    for s in (1, 2, 3, 4):
        for beta in (1e-3, 1e-2, 1e-1):
            spec = ProbeSpec(Family.POLYNOMIAL, s, beta=beta, alpha=1.0, t=0.1, coupling=Coupling.PROPORTIONAL)
            q, _ = qfi_pure(spec, dim=ctx.dim)
            out.append(_within(f"s={s} beta={beta:g}", q, analytic_qfi_proportional(s, 1.0, beta, 0.1), 1e-6, True))
    return out


@check("acceptance", limit=30)
def series_slopes(ctx):
    return [
        _within(f"s={s} slope of R at beta=1e-3", _slope_series(s, ctx.dim), series_slope(s, 1.0), 0.02, True)
        for s in (3, 4)
    ]


@check("acceptance", limit=120)
def fig1a_peak(ctx):
    r, b = _rmax(Family.POLYNOMIAL, 3, ctx.dim)
    return [_in_range("R_max polynomial s=3", r, 1.3, 1.7), _in_range("beta*/omega", b, 3e-3, 3e-2)]


@check("acceptance", limit=120)
def fig1b_peak(ctx):
    r, b = _rmax(Family.POLYNOMIAL, 4, ctx.dim)
    return [_in_range("R_max polynomial s=4", r, 5, 20), _in_range("beta*/omega", b, 3e-2, 3e-1)]


@check("acceptance", limit=60)
def kerr_no_gain_grid(ctx):
    ratios = [
        ratio_R(ProbeSpec(Family.KERR, 4, beta=b, t=bt / b), dim=ctx.dim)
        for b in np.geomspace(1e-3, 1.0, 16)
        for bt in (1e-3, 0.05)
    ]
    half = ratio_R(ProbeSpec(Family.KERR, 4, beta=0.5, t=0.1), dim=ctx.dim)
    return [
        Measurement("max ratio on the Kerr grid", max(ratios), "<= 1 + 1e-9", max(ratios) <= 1 + 1e-9),
        _within("ratio at beta=0.5", half, 1 / 1.5, 1e-6),
    ]


@check("acceptance", limit=60)
def number_conserving_neutrality(ctx):
    return [_within(f"R_ns for s={s}", ratio_Rj("ns", s, 1.0, dim=ctx.dim), 1.0, 1e-6) for s in (2, 4)]


FIG3_PANELS = (
    (Family.POLYNOMIAL, 3),
    (Family.POLYNOMIAL, 4),
    (Family.SQUEEZING, 3),
    (Family.SQUEEZING, 4),
)


@check("acceptance", limit=300)
def skew_alignment_check(ctx):
    out = []
    for spec in (
        ProbeSpec(Family.POLYNOMIAL, 3, beta=0.0, alpha=1.3, t=2.0),
        ProbeSpec(Family.KERR, 4, beta=0.2, alpha=1.3, t=0.25),
    ):
        p = evaluate_point(spec, dim=ctx.dim)
        out.append(_within(f"commuting skew, {spec.family.value} beta={spec.beta}", p.skew, 1.69, 1e-8))
    for family, s in FIG3_PANELS:
        rows = []
        for b in np.geomspace(1e-3, 1.0, 25):
            p = evaluate_point(ProbeSpec(family, s, beta=b, t=0.05 / b), dim=ctx.dim, strict=False)
            rows.append(dict(beta_over_omega=b, beta_t=0.05, qfi=p.qfi, skew=p.skew))
        stats = skew_alignment(rows)
        out.append(
            Measurement(
                f"{family.value} s={s} |log10 beta*_skew - log10 beta*_qfi|",
                stats["log_distance"],
                "<= 0.3",
                stats["log_distance"] <= 0.3 + 1e-12,
            )
        )
        if (family, s) == (Family.SQUEEZING, 3):
            counts = (stats["local_maxima_skew"], stats["local_maxima_qfi"])
            out.append(Measurement("squeezing s=3 local maxima (skew, qfi)", counts, "(1, 1)", counts == (1, 1)))
    return out


@check("acceptance", limit=600)
def heterodyne_fractions(ctx):
    out = []
    base = evaluate_point(ProbeSpec(Family.POLYNOMIAL, 3, beta=0.0, t=0.7), heterodyne=True, dim=ctx.dim)
    out.append(_within("Gaussian baseline CFI/QFI", base.heterodyne_cfi / base.qfi, 0.5, 1e-3))
    for family, s, lo, hi in (
        (Family.POLYNOMIAL, 3, 0.2, 0.4),
        (Family.POLYNOMIAL, 4, 0.01, 0.05),
        (Family.SQUEEZING, 4, 0.05, 0.2),
    ):
        _, b = _rmax(family, s, ctx.dim)
        p = evaluate_point(ProbeSpec(family, s, beta=b, t=0.05 / b), heterodyne=True, dim=ctx.dim, strict=False)
        out.append(_in_range(f"{family.value} s={s} CFI/QFI at beta={b:.4g}", p.heterodyne_cfi / p.qfi, lo, hi))
    return out


@check("acceptance", limit=300)
def property_suites(ctx):
    results = run_checks(groups=("properties",), ctx=ctx)
    return [Measurement(r.name, "PASS" if r.passed else "FAIL", "PASS", r.passed) for r in results]


# ---------------------------------------------------------------- driver


def available_checks(groups=None):
    return [c for c in REGISTRY if groups is None or c[1] in groups]


def run_checks(groups=None, names=None, ctx=None, echo=None) -> list[CheckResult]:
    ctx = ctx or Context()
    results = []
    for name, group, limit, func in available_checks(groups):
        if names and name not in names:
            continue
        done = [r for r in results if r.group == "properties"]
        if name == "property-suites" and done:
            # the properties were already run in this pass
            result = _summarize(done, limit)
        else:
            result = CheckResult(name, group, limit=limit)
            t0 = time.perf_counter()
            try:
                result.measurements = list(func(ctx))
            except ProbeError as exc:
                result.error = f"{type(exc).__name__}: {exc}"
            except Exception as exc:  # noqa: BLE001 - reported, then exit code 3
                result.error = f"{type(exc).__name__}: {exc}"
                result.fatal = True
            result.seconds = time.perf_counter() - t0
        results.append(result)
        if echo:
            for line in result.lines():
                echo(line)
    return results


def _summarize(props, limit):
    result = CheckResult("property-suites", "acceptance", limit=limit)
    result.measurements = [Measurement(r.name, "PASS" if r.passed else "FAIL", "PASS", r.passed) for r in props]
    result.seconds = sum(r.seconds for r in props)
    return result


def run_validate(groups=None, force_dim=None, expansion=None, echo=print) -> int:
    """Run the registry and return an exit code: 0 all pass, 2 failures, 3 crashes."""
    ctx = Context(dim=force_dim, expansion=expansion or normal_order_expand)
    results = run_checks(groups=groups, ctx=ctx, echo=echo)
    failed = [r for r in results if not r.passed]
    if echo:
        echo(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if any(r.fatal for r in results):
        return 3
    return 2 if failed else 0
