"""Configuration-driven sweeps that regenerate the figure data as CSV files.

A sweep evaluates independent grid points (optionally in worker
processes), sorts the results, and writes them through a single writer.
Output is written to a hidden partial file that replaces the target only
on success; an aborted run leaves nothing behind. Runs are not resumable.
"""

from __future__ import annotations

import configparser
import contextlib
import csv
import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.signal import find_peaks

from . import __version__
from .errors import (
    ConfigError,
    GridCoverageError,
    NumericalInstability,
    TruncationError,
    UnscalableProcess,
)
from .estimator import spec_at
from .hamiltonians import Coupling, Family, ProbeSpec, group_excitation_processes, normal_order_expand
from .metrology import (
    FD_REL_STEP,
    FUNCTIONAL_TOL,
    PhaseSpaceGrid,
    evaluate_point,
    maximize_R,
    ratio_Rj,
)

RECORD_FIELDS = (
    "beta_over_omega",
    "beta_t",
    "dim_used",
    "qfi",
    "q0",
    "ratio",
    "skew",
    "heterodyne_cfi",
    "converged",
    "flag",
)
# a point that raises one of these is flagged and the run carries on
FLAGGABLE = (NumericalInstability, TruncationError, GridCoverageError, UnscalableProcess)
PEAK_PROMINENCE = 0.1


class Spacing(str, enum.Enum):
    LOG = "log"
    LINEAR = "linear"


class Output(str, enum.Enum):
    RATIO = "ratio"
    SKEW = "skew"
    QFI = "qfi"
    HETERODYNE_CFI = "heterodynecfi"
    PROCESS_RATIOS = "processratios"
    RMAX = "rmax"

    @classmethod
    def parse(cls, value) -> "Output":
        return cls(str(value).strip().lower().replace("_", "").replace("-", ""))


@dataclass(frozen=True)
class Axis:
    """Either ``count`` points from ``min`` to ``max`` or an explicit ``values`` list."""

    min: float | None = None
    max: float | None = None
    count: int | None = None
    spacing: Spacing = Spacing.LOG
    values: tuple | None = None

    def __post_init__(self):
        if self.values is not None:
            if not self.values:
                raise ConfigError("an explicit axis needs at least one value")
            return
        if self.min is None or self.max is None or self.count is None:
            raise ConfigError("an axis needs min, max and count, or values")
        if self.count < 2:
            raise ConfigError(f"axis count must be >= 2, got {self.count}")
        if not self.min < self.max:
            raise ConfigError(f"axis min {self.min} must be below max {self.max}")
        if self.spacing is Spacing.LOG and not self.min > 0:
            raise ConfigError("log spacing needs min > 0")

    def points(self) -> np.ndarray:
        if self.values is not None:
            return np.asarray(self.values, dtype=float)
        if self.spacing is Spacing.LOG:
            return np.geomspace(self.min, self.max, self.count)
        return np.linspace(self.min, self.max, self.count)

    def describe(self) -> str:
        if self.values is not None:
            return "values=" + ",".join(_fmt(v) for v in self.values)
        return f"min={_fmt(self.min)} max={_fmt(self.max)} count={self.count} spacing={self.spacing.value}"


@dataclass(frozen=True)
class SweepConfig:
    probe: ProbeSpec
    beta_over_omega: Axis
    beta_t: Axis
    outputs: frozenset = frozenset({Output.RATIO})
    workers: int = 1
    out_path: Path = Path("sweep.csv")
    strict: bool = False
    dim: int | None = None
    alphas: Axis | None = None
    s_max: int = 6
    name: str = "sweep"

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("workers must be a positive integer")
        if self.dim is not None and self.dim < 2:
            raise ConfigError("dim must be at least 2")
        if not 1 <= self.s_max <= 6:
            raise ConfigError(f"s_max must lie in 1..6, got {self.s_max}")

    def replace(self, **changes) -> "SweepConfig":
        return replace(self, **changes)


@dataclass
class SweepResult:
    path: Path
    rows: list
    flagged: int
    footer: list = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return 2 if self.flagged else 0


# ------------------------------------------------------------------ config


def builtin_configs() -> list[str]:
    folder = resources.files("nlprobe") / "configs"
    return sorted(p.name[:-4] for p in folder.iterdir() if p.name.endswith(".ini"))


def _read_source(source) -> tuple[str, str]:
    path = Path(source)
    if path.is_file():
        return path.read_text(encoding="utf-8"), path.stem
    builtin = resources.files("nlprobe") / "configs" / f"{source}.ini"
    if builtin.is_file():
        return builtin.read_text(encoding="utf-8"), str(source)
    raise ConfigError(f"no config file or built-in config named {source!r}; built-ins: {builtin_configs()}")


def _apply_override(parser, item):
    key, sep, value = item.partition("=")
    section, dot, option = key.strip().rpartition(".")
    if not sep or not dot or not option:
        raise ConfigError(f"override {item!r} must look like SECTION.KEY=VALUE")
    if not parser.has_section(section):
        parser.add_section(section)
    parser.set(section, option, value.strip())


def _floats(text):
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _axis(parser, section, required=True):
    if not parser.has_section(section):
        if required:
            raise ConfigError(f"missing [{section}] section")
        return None
    sec = parser[section]
    try:
        if "values" in sec:
            return Axis(values=_floats(sec["values"]))
        return Axis(
            min=float(sec["min"]),
            max=float(sec["max"]),
            count=int(sec["count"]),
            spacing=Spacing(sec.get("spacing", "log").strip().lower()),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad [{section}] section: {exc}") from exc


def load_config(source, overrides=(), allow_out_of_regime=False) -> SweepConfig:
    """Read an INI file (or a built-in name such as ``fig1a``) plus overrides."""
    text, name = _read_source(source)
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    for item in overrides or ():
        _apply_override(parser, item)
    try:
        probe = parser["probe"]
        template = ProbeSpec(
            family=Family.parse(probe.get("family", "polynomial")),
            s=int(probe.get("s", "3")),
            alpha=float(probe.get("alpha", "1")),
            omega=float(probe.get("omega", "1")),
            coupling=Coupling.parse(probe.get("coupling", "independent")),
            allow_out_of_regime=allow_out_of_regime,
        )
        run = parser["run"] if parser.has_section("run") else {}
        outputs = frozenset(Output.parse(o) for o in run.get("outputs", "ratio").split(",") if o.strip())
        dim = run.get("dim", "").strip()
        return SweepConfig(
            probe=template,
            beta_over_omega=_axis(parser, "beta_over_omega"),
            beta_t=_axis(parser, "beta_t"),
            outputs=outputs,
            workers=int(run.get("workers", "1")),
            out_path=Path(run.get("out_path", f"{name}.csv")),
            strict=_bool(run.get("strict", "false")),
            dim=int(dim) if dim else None,
            alphas=_axis(parser, "alpha", required=False),
            s_max=int(parser.get("processes", "s_max", fallback="6")),
            name=name,
        )
    except ConfigError:
        raise
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc


def _bool(text):
    key = str(text).strip().lower()
    if key in ("1", "true", "yes", "on"):
        return True
    if key in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


# ------------------------------------------------------------------ output


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    value = float(value)
    if math.isnan(value):
        return ""
    return f"{value:.12g}"


@contextlib.contextmanager
def _atomic_output(path: Path):
    """Yield a partial path that replaces ``path`` only when the block succeeds."""
    path = Path(path)
    partial = path.with_name(f".{path.name}.partial")
    # fail fast on an unwritable destination, before any computation
    partial.open("w", encoding="utf-8").close()
    try:
        yield partial
    except BaseException:
        partial.unlink(missing_ok=True)
        raise
    os.replace(partial, path)


def _write_csv(partial: Path, header, rows, footer):
    with partial.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row.get(h)) for h in header])
        for line in footer:
            fh.write(f"# {line}\n")


def _write_plot(path: Path, lines):
    script = Path(path).with_suffix(".gp")
    body = [
        f"# gnuplot script for {Path(path).name}",
        "set datafile separator ','",
        "set datafile commentschars '#'",
        "set key autotitle columnhead",
        *lines,
        "",
    ]
    script.write_text("\n".join(body), encoding="utf-8", newline="\n")
    return script


def _common_footer(command, config, rows):
    p = config.probe
    flagged = sum(1 for r in rows if r.get("flag"))
    unconverged = sum(1 for r in rows if r.get("converged") is False)
    return [
        f"tool: nlprobe {__version__}",
        f"command: {command}",
        f"probe: family={p.family.value} s={p.s} alpha={_fmt(p.alpha)} omega={_fmt(p.omega)} coupling={p.coupling.value}",
        f"beta_over_omega: {config.beta_over_omega.describe()}",
        f"beta_t: {config.beta_t.describe()}",
        "truncation: start=ceil(alpha^2+10*alpha+30) doublings<=4 tail(dim/10)<1e-10 "
        f"functional_rel<{FUNCTIONAL_TOL:g} strict={str(config.strict).lower()}"
        + (f" forced_dim={config.dim}" if config.dim else ""),
        f"fd_step: {FD_REL_STEP:g}*omega central, richardson (d, d/2) at 1e-4, fidelity check at 1e-3",
        f"rows: {len(rows)} flagged: {flagged} unconverged: {unconverged}",
    ]


# ------------------------------------------------------------------ points


def _evaluate_record(task):
    template, ratio_b, beta_t, heterodyne, strict, dim = task
    row = {"beta_over_omega": ratio_b, "beta_t": beta_t}
    try:
        point = evaluate_point(
            spec_at(template, ratio_b, beta_t),
            heterodyne=heterodyne,
            grid=PhaseSpaceGrid() if heterodyne else None,
            dim=dim,
            strict=strict,
        )
    except FLAGGABLE as exc:
        row["flag"] = type(exc).__name__
        return row
    row.update(
        dim_used=point.diagnostics.dim_used,
        qfi=point.qfi,
        q0=point.q0,
        ratio=point.ratio,
        skew=point.skew,
        heterodyne_cfi=point.heterodyne_cfi,
        converged=point.diagnostics.converged,
        flag="",
    )
    return row


def _map(func, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _grid_tasks(config, heterodyne):
    tasks = []
    for r in config.beta_over_omega.points():
        for bt in config.beta_t.points():
            spec_at(config.probe, r, bt)  # regime errors surface before any work starts
            tasks.append((config.probe, float(r), float(bt), heterodyne, config.strict, config.dim))
    return tasks


def _grid_rows(config, heterodyne):
    rows = _map(_evaluate_record, _grid_tasks(config, heterodyne), config.workers)
    rows.sort(key=lambda r: (r["beta_over_omega"], r["beta_t"]))
    return rows


def _by_beta_t(rows):
    groups = {}
    for r in rows:
        groups.setdefault(r["beta_t"], []).append(r)
    return groups


def _good(rows, key):
    return [r for r in rows if not r.get("flag") and r.get(key) is not None]


def count_local_maxima(values, prominence=PEAK_PROMINENCE) -> int:
    """Interior peaks whose prominence exceeds a fraction of the curve's range."""
    values = np.asarray(values, dtype=float)
    span = float(np.ptp(values)) if values.size else 0.0
    if span == 0:
        return 0
    peaks, _ = find_peaks(values, prominence=prominence * span)
    return len(peaks)


# ------------------------------------------------------------------ runners


def run_ratio_sweep(config: SweepConfig) -> SweepResult:
    """Ratio, QFI and skew on the full ``(beta/omega, beta t)`` grid."""
    heterodyne = Output.HETERODYNE_CFI in config.outputs
    with _atomic_output(config.out_path) as partial:
        rows = _grid_rows(config, heterodyne)
        footer = _common_footer("ratio-sweep", config, rows)
        good = _good(rows, "ratio")
        if good:
            best = max(good, key=lambda r: r["ratio"])
            footer.append(
                f"max_ratio: {_fmt(best['ratio'])} at beta_over_omega={_fmt(best['beta_over_omega'])} "
                f"beta_t={_fmt(best['beta_t'])}"
            )
        _write_csv(partial, RECORD_FIELDS, rows, footer)
    name = Path(config.out_path).name
    _write_plot(
        config.out_path,
        [
            "set logscale xy",
            "set xlabel 'beta/omega'",
            "set ylabel 'beta t'",
            "set pm3d map",
            f"splot '{name}' using 1:2:6 with pm3d title 'ratio'",
        ],
    )
    return SweepResult(Path(config.out_path), rows, sum(1 for r in rows if r.get("flag")), footer)


def _rmax_task(task):
    template, alpha, beta_t, beta_axis, strict, dim = task
    row = {"alpha": alpha, "beta_t": beta_t}
    try:
        r_max, beta_star = maximize_R(
            template.replace(alpha=alpha),
            beta_t,
            n_coarse=beta_axis.count,
            beta_range=(beta_axis.min, beta_axis.max),
            strict=strict,
            dim=dim,
        )
    except FLAGGABLE as exc:
        row["flag"] = type(exc).__name__
        return row
    row.update(r_max=r_max, beta_star=beta_star, flag="")
    return row


def rmax_shape(alphas, r_max) -> tuple[bool, list]:
    """Whether ``r_max`` rises monotonically with alpha, and the alphas of interior dips."""
    r = np.asarray(r_max, dtype=float)
    monotone = bool(np.all(np.diff(r) >= 0))
    dips = [alphas[i] for i in range(1, len(r) - 1) if r[i] < r[i - 1] and r[i] <= r[i + 1]]
    return monotone, dips


def run_rmax_scan(config: SweepConfig, alphas=None) -> SweepResult:
    """Maximized ratio versus alpha for each fixed ``beta t``."""
    if alphas is None:
        if config.alphas is None:
            raise ConfigError("rmax-scan needs an [alpha] axis")
        alphas = config.alphas.points()
    alphas = [float(a) for a in alphas]
    axis = config.beta_over_omega
    if axis.values is not None or axis.spacing is not Spacing.LOG:
        raise ConfigError("rmax-scan needs a log-spaced [beta_over_omega] range for the coarse scan")
    if any(a <= 0 for a in alphas):
        raise ConfigError("rmax-scan alphas must be positive")
    tasks = [
        (config.probe, a, float(bt), config.beta_over_omega, config.strict, config.dim)
        for a in alphas
        for bt in config.beta_t.points()
    ]
    header = ("alpha", "beta_t", "r_max", "beta_star", "flag")
    with _atomic_output(config.out_path) as partial:
        rows = _map(_rmax_task, tasks, config.workers)
        rows.sort(key=lambda r: (r["alpha"], r["beta_t"]))
        footer = _common_footer("rmax-scan", config, rows)
        for bt, group in sorted(_by_beta_t(rows).items()):
            good = _good(group, "r_max")
            monotone, dips = rmax_shape([r["alpha"] for r in good], [r["r_max"] for r in good])
            footer.append(
                f"beta_t={_fmt(bt)} monotone={str(monotone).lower()} "
                f"dips_at_alpha={','.join(_fmt(a) for a in dips) or 'none'}"
            )
        _write_csv(partial, header, rows, footer)
    name = Path(config.out_path).name
    _write_plot(
        config.out_path,
        [
            "set xlabel 'alpha'",
            "set ylabel 'R_max'",
            f"plot '{name}' using 1:3:2 with linespoints palette title 'R_max (colour: beta t)'",
        ],
    )
    return SweepResult(Path(config.out_path), rows, sum(1 for r in rows if r.get("flag")), footer)


def _process_task(task):
    s, label, alpha, beta, beta_t, omega, strict, dim = task
    row = {"s": s, "process": label}
    try:
        row["ratio_Rj"] = ratio_Rj(
            label, s, alpha, omega=omega, beta=beta, t=beta_t / beta, dim=dim, strict=strict
        )
        row["flag"] = ""
    except FLAGGABLE as exc:
        row["flag"] = type(exc).__name__
    return row


def _process_order(label):
    return -1 if label == "ns" else int(label[1:])


def run_process_ratios(
    s_max: int,
    alpha: float,
    beta_t: float,
    beta_over_omega: float = 0.01,
    omega: float = 1.0,
    out_path="process_ratios.csv",
    workers: int = 1,
    strict: bool = False,
    dim: int | None = None,
) -> SweepResult:
    """One ``ratio_Rj`` row per excitation process of ``(a + a^dagger)^s``, ``s = 1..s_max``."""
    if not 1 <= int(s_max) <= 6:
        raise ConfigError(f"s_max must lie in 1..6, got {s_max}")
    beta = omega * beta_over_omega
    tasks = [
        (s, proc.label, alpha, beta, beta_t, omega, strict, dim)
        for s in range(1, int(s_max) + 1)
        for proc in group_excitation_processes(normal_order_expand(s))
    ]
    header = ("s", "process", "ratio_Rj", "flag")
    with _atomic_output(Path(out_path)) as partial:
        rows = _map(_process_task, tasks, workers)
        rows.sort(key=lambda r: (r["s"], _process_order(r["process"])))
        footer = [
            f"tool: nlprobe {__version__}",
            "command: process-ratios",
            f"alpha={_fmt(alpha)} omega={_fmt(omega)} beta_over_omega={_fmt(beta_over_omega)} beta_t={_fmt(beta_t)}",
            "process energy: <A_j> scaled to 2*alpha on the initial coherent state; "
            "number-conserving energy not charged",
            f"rows: {len(rows)} flagged: {sum(1 for r in rows if r['flag'])}",
        ]
        _write_csv(partial, header, rows, footer)
    name = Path(out_path).name
    _write_plot(
        out_path,
        [
            "set xlabel 's'",
            "set ylabel 'R_j'",
            "set logscale y",
            f"plot for [p in 'ns J1 J2 J3 J4 J5 J6'] '{name}' using 1:(strcol(2) eq p ? $3 : 1/0) "
            "with linespoints title p",
        ],
    )
    return SweepResult(Path(out_path), rows, sum(1 for r in rows if r["flag"]), footer)


def run_process_ratios_config(config: SweepConfig) -> SweepResult:
    return run_process_ratios(
        config.s_max,
        config.probe.alpha,
        float(config.beta_t.points()[0]),
        beta_over_omega=float(config.beta_over_omega.points()[0]),
        omega=config.probe.omega,
        out_path=config.out_path,
        workers=config.workers,
        strict=config.strict,
        dim=config.dim,
    )


def skew_alignment(rows) -> dict:
    """Argmax of skew and of ``Q / 4t^2`` along beta, their log-distance and peak counts."""
    good = _good(rows, "skew")
    if len(good) < 2:
        return {}
    betas = np.array([r["beta_over_omega"] for r in good])
    skew = np.array([r["skew"] for r in good])
    qn = np.array([r["qfi"] * r["beta_over_omega"] ** 2 / (4.0 * r["beta_t"] ** 2) for r in good])
    b_skew = float(betas[np.argmax(skew)])
    b_qfi = float(betas[np.argmax(qn)])
    return {
        "argmax_beta_skew": b_skew,
        "argmax_beta_qfi": b_qfi,
        "log_distance": abs(math.log10(b_skew) - math.log10(b_qfi)),
        "local_maxima_skew": count_local_maxima(skew),
        "local_maxima_qfi": count_local_maxima(qn),
    }


def run_skew_scan(config: SweepConfig) -> SweepResult:
    """QFI and skew along beta; the footer compares where each peaks."""
    with _atomic_output(config.out_path) as partial:
        rows = _grid_rows(config, heterodyne=False)
        footer = _common_footer("skew-scan", config, rows)
        footer.append("qfi curve used for the argmax: qfi / (4 t^2)")
        for bt, group in sorted(_by_beta_t(rows).items()):
            stats = skew_alignment(group)
            if stats:
                footer.append(
                    f"beta_t={_fmt(bt)} "
                    + " ".join(f"{k}={_fmt(v)}" for k, v in stats.items())
                )
        _write_csv(partial, RECORD_FIELDS, rows, footer)
    name = Path(config.out_path).name
    _write_plot(
        config.out_path,
        [
            "set logscale x",
            "set xlabel 'beta/omega'",
            "set ylabel 'Q / 4t^2'",
            "set y2label 'skew [a.u.]'",
            "set y2tics",
            f"plot '{name}' using 1:($4*$1*$1/(4*$2*$2)) with linespoints title 'Q/4t^2', "
            f"'{name}' using 1:7 axes x1y2 with linespoints title 'skew'",
        ],
    )
    return SweepResult(Path(config.out_path), rows, sum(1 for r in rows if r.get("flag")), footer)


def run_heterodyne_scan(config: SweepConfig) -> SweepResult:
    """Heterodyne CFI next to the QFI; the footer reports CFI/QFI at the best ratio."""
    with _atomic_output(config.out_path) as partial:
        rows = _grid_rows(config, heterodyne=True)
        footer = _common_footer("heterodyne-scan", config, rows)
        footer.append(f"grid: {PhaseSpaceGrid()}")
        for bt, group in sorted(_by_beta_t(rows).items()):
            good = _good(group, "heterodyne_cfi")
            if good:
                best = max(good, key=lambda r: r["ratio"])
                footer.append(
                    f"beta_t={_fmt(bt)} fraction_at_max_ratio={_fmt(best['heterodyne_cfi'] / best['qfi'])} "
                    f"beta_over_omega={_fmt(best['beta_over_omega'])}"
                )
        _write_csv(partial, RECORD_FIELDS, rows, footer)
    name = Path(config.out_path).name
    _write_plot(
        config.out_path,
        [
            "set logscale x",
            "set xlabel 'beta/omega'",
            "set ylabel 'F_het / Q'",
            "set y2label 'ratio'",
            "set y2tics",
            f"plot '{name}' using 1:($8/$4) with linespoints title 'F_het/Q', "
            f"'{name}' using 1:6 axes x1y2 with linespoints title 'ratio'",
        ],
    )
    return SweepResult(Path(config.out_path), rows, sum(1 for r in rows if r.get("flag")), footer)


RUNNERS = {
    "ratio-sweep": run_ratio_sweep,
    "rmax-scan": run_rmax_scan,
    "process-ratios": run_process_ratios_config,
    "skew-scan": run_skew_scan,
    "heterodyne-scan": run_heterodyne_scan,
}
