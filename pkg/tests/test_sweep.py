import csv

import numpy as np
import pytest

from nlprobe import sweep
from nlprobe.errors import ConfigError, RegimeError
from nlprobe.sweep import (
    Axis,
    Output,
    Spacing,
    builtin_configs,
    count_local_maxima,
    load_config,
    rmax_shape,
    run_process_ratios,
    run_ratio_sweep,
    run_rmax_scan,
    run_skew_scan,
)

SMALL = ["beta_over_omega.count=3", "beta_t.count=2"]


def _read(path):
    text = path.read_text(encoding="utf-8")
    body = [line for line in text.splitlines() if not line.startswith("#")]
    footer = [line[2:] for line in text.splitlines() if line.startswith("# ")]
    return list(csv.DictReader(body)), footer, text


# ------------------------------------------------------------------ config


def test_builtin_configs_present():
    names = builtin_configs()
    for name in ("fig1a", "fig1b", "fig1c", "fig1d", "fig2a", "fig2c", "fig2d", "fig3a", "figS3a"):
        assert name in names


def test_load_builtin_and_override(tmp_path):
    config = load_config("fig1a", ["beta_over_omega.count=4", "run.workers=2", f"run.out_path={tmp_path / 'x.csv'}"])
    assert config.probe.s == 3 and config.probe.family.value == "polynomial"
    assert config.beta_over_omega.count == 4
    assert config.workers == 2
    np.testing.assert_allclose(config.beta_over_omega.points(), np.geomspace(1e-3, 1, 4))
    assert Output.RATIO in config.outputs


def test_load_from_file(tmp_path):
    path = tmp_path / "mine.ini"
    path.write_text(
        "[probe]\nfamily = squeezing\ns = 4\n"
        "[beta_over_omega]\nvalues = 0.01, 0.1\n"
        "[beta_t]\nmin = 0.01\nmax = 0.05\ncount = 3\nspacing = linear\n"
    )
    config = load_config(path)
    assert config.name == "mine"
    assert config.beta_over_omega.points().tolist() == [0.01, 0.1]
    np.testing.assert_allclose(config.beta_t.points(), [0.01, 0.03, 0.05])


@pytest.mark.parametrize(
    "overrides",
    [
        ["beta_over_omega.count=1"],
        ["beta_over_omega.min=2"],
        ["beta_over_omega.min=0"],
        ["run.workers=0"],
        ["probe.family=cubic"],
        ["beta_t.spacing=quadratic"],
        ["nodot=1"],
        ["processes.s_max=7"],
    ],
)
def test_bad_configs(overrides):
    with pytest.raises(ConfigError):
        load_config("fig1a", overrides)


def test_unknown_config():
    with pytest.raises(ConfigError):
        load_config("fig9z")


def test_regime_guard_and_escape(tmp_path):
    out = tmp_path / "r.csv"
    bad = ["beta_t.max=0.2", "beta_t.count=2", "beta_over_omega.count=2", f"run.out_path={out}"]
    with pytest.raises(RegimeError):
        run_ratio_sweep(load_config("fig2d", bad))
    config = load_config("fig2d", bad, allow_out_of_regime=True)
    assert run_ratio_sweep(config).exit_code == 0


def test_axis_invariants():
    with pytest.raises(ConfigError):
        Axis(min=1.0, max=1.0, count=3)
    with pytest.raises(ConfigError):
        Axis(values=())
    assert Axis(values=(0.5,)).points().tolist() == [0.5]
    assert Axis(min=0.0, max=1.0, count=3, spacing=Spacing.LINEAR).points().tolist() == [0, 0.5, 1]


# ------------------------------------------------------------------ ratio sweep


def test_ratio_sweep_csv_format(tmp_path):
    out = tmp_path / "fig2d.csv"
    result = run_ratio_sweep(load_config("fig2d", SMALL + [f"run.out_path={out}"]))
    assert result.exit_code == 0
    rows, footer, text = _read(out)
    assert "\r" not in text
    assert list(rows[0]) == list(sweep.RECORD_FIELDS)
    assert len(rows) == 6
    keys = [(float(r["beta_over_omega"]), float(r["beta_t"])) for r in rows]
    assert keys == sorted(keys)
    for r in rows:
        assert float(r["ratio"]) <= 1 + 1e-9
        # 12 significant digits at most
        digits = r["qfi"].replace(".", "").replace("-", "").split("e")[0].lstrip("0")
        assert len(digits) <= 12
    assert any(line.startswith("truncation:") for line in footer)
    assert any(line.startswith("max_ratio:") for line in footer)
    assert (tmp_path / "fig2d.gp").read_text().startswith("# gnuplot script")
    assert not list(tmp_path.glob(".*.partial"))


def test_small_beta_limit_is_free_probe(tmp_path):
    out = tmp_path / "limit.csv"
    config = load_config("fig1a", ["beta_over_omega.values=1e-7", "beta_t.values=1e-8", f"run.out_path={out}"])
    run_ratio_sweep(config)
    rows, _, _ = _read(out)
    assert float(rows[0]["ratio"]) == pytest.approx(1.0, abs=1e-3)


def test_workers_do_not_change_bytes(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_ratio_sweep(load_config("fig1a", SMALL + [f"run.out_path={a}", "run.workers=1"]))
    run_ratio_sweep(load_config("fig1a", SMALL + [f"run.out_path={b}", "run.workers=2"]))
    assert a.read_bytes() == b.read_bytes()


def test_flagged_rows_give_exit_two(tmp_path):
    out = tmp_path / "flag.csv"
    config = load_config("fig1a", SMALL + ["probe.alpha=2", "run.dim=8", f"run.out_path={out}"])
    result = run_ratio_sweep(config)
    assert result.exit_code == 2
    rows, footer, _ = _read(out)
    assert all(r["flag"] == "TruncationError" for r in rows)
    assert "rows: 6 flagged: 6 unconverged: 0" in footer


def test_abort_removes_partial(tmp_path, monkeypatch):
    out = tmp_path / "abort.csv"

    def boom(*args, **kwargs):
        raise KeyboardInterrupt

    monkeypatch.setattr(sweep, "_map", boom)
    with pytest.raises(KeyboardInterrupt):
        run_ratio_sweep(load_config("fig1a", SMALL + [f"run.out_path={out}"]))
    assert not out.exists()
    assert not list(tmp_path.iterdir())


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        run_ratio_sweep(load_config("fig1a", SMALL + [f"run.out_path={tmp_path / 'missing' / 'x.csv'}"]))


# ------------------------------------------------------------------ other runners


def test_process_ratio_rows(tmp_path):
    out = tmp_path / "proc.csv"
    result = run_process_ratios(4, 1.0, 0.05, out_path=out)
    assert result.exit_code == 0
    rows, _, _ = _read(out)
    labels = [(r["s"], r["process"]) for r in rows]
    assert labels == [
        ("1", "J1"), ("2", "ns"), ("2", "J2"), ("3", "J1"), ("3", "J3"), ("4", "ns"), ("4", "J2"), ("4", "J4"),
    ]
    by = {(int(r["s"]), r["process"]): float(r["ratio_Rj"]) for r in rows}
    assert by[(2, "ns")] == pytest.approx(1.0, abs=1e-10)
    assert by[(4, "ns")] == pytest.approx(1.0, abs=1e-10)
    assert by[(3, "J3")] > by[(3, "J1")]
    assert by[(4, "J4")] > by[(4, "J2")]


def test_rmax_scan(tmp_path):
    out = tmp_path / "rmax.csv"
    config = load_config(
        "fig1c",
        ["alpha.count=3", "alpha.max=1", "beta_over_omega.count=8", "beta_t.values=0.05", f"run.out_path={out}"],
    )
    result = run_rmax_scan(config)
    rows, footer, _ = _read(out)
    assert [float(r["alpha"]) for r in rows] == pytest.approx([0.1, 0.55, 1.0])
    assert all(float(r["r_max"]) > 1 for r in rows)
    assert any(line.startswith("beta_t=0.05 monotone=") for line in footer)
    assert result.exit_code == 0


def test_rmax_needs_log_range(tmp_path):
    config = load_config("fig1c", ["beta_over_omega.values=0.1", f"run.out_path={tmp_path / 'x.csv'}"])
    with pytest.raises(ConfigError):
        run_rmax_scan(config)


def test_skew_scan_commuting_limit(tmp_path):
    out = tmp_path / "skew.csv"
    config = load_config("fig3b", ["beta_over_omega.min=1e-5", "beta_over_omega.count=6", f"run.out_path={out}"])
    run_skew_scan(config)
    rows, footer, _ = _read(out)
    assert float(rows[0]["skew"]) == pytest.approx(1.0, abs=1e-3)
    assert any("log_distance=" in line for line in footer)


def test_shape_helpers():
    assert rmax_shape([0.1, 0.2, 0.3, 0.4], [2.0, 1.5, 1.8, 2.5]) == (False, [0.2])
    assert rmax_shape([1, 2, 3], [1, 2, 3]) == (True, [])
    x = np.linspace(0, 1, 50)
    assert count_local_maxima(np.exp(-((x - 0.5) ** 2) / 0.01)) == 1
    assert count_local_maxima(x) == 0
    assert count_local_maxima(np.ones(5)) == 0
