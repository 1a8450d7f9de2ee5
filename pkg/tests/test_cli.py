import csv
import subprocess
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose

from hazardcv import cli, data, estimators, forecasting, kernels, selection, simulation
from hazardcv.forecasting import RunOffTriangle


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def column(path, name):
    rows = read_csv(path)
    i = rows[0].index(name)
    return np.array([float(r[i]) for r in rows[1:]])


@pytest.fixture
def grid_csv(tmp_path):
    cfg = simulation.SimulationConfig(simulation.default_model("bimodal"), 400, 60, "uniform", 17)
    path = tmp_path / "sample.csv"
    data.write_grid_csv(simulation.generate(cfg), path)
    return path


@pytest.fixture
def triangle_csv(tmp_path):
    rng = np.random.default_rng(4)
    m = 12
    path = tmp_path / "triangle.csv"
    RunOffTriangle(m, np.where(RunOffTriangle.observed_mask(m), rng.poisson(30, (m, m)), 0)).to_csv(path)
    return path


# ---------------------------------------------------------------- constants
def test_constants_single_kernel(tmp_path, capsys):
    assert cli.main(["constants", "--kernel", "sextic", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "constants.csv")[1:]
    assert len(rows) == 8
    assert {r[0] for r in rows} == {"sextic"}
    table = kernels.psi_table([kernels.sextic()])
    for name, est, method, val in rows:
        assert float(val) == table[(method, est, name)]
    assert len(capsys.readouterr().out.splitlines()) == 8
    rho = read_csv(tmp_path / "rho.csv")
    assert float(rho[1][1]) == kernels.rho_ll(kernels.sextic())


# ----------------------------------------------------------------- fit/select
def test_fit_zero_occurrences_writes_zero_hazard(tmp_path):
    s = data.GridSample(0.0, 1.0, [0] * 20, [5.0] * 20, n=100)
    data.write_grid_csv(s, tmp_path / "z.csv")
    code = cli.main(["fit", "--input", str(tmp_path / "z.csv"), "--bandwidth", "0.2", "--out", str(tmp_path)])
    assert code == 0
    assert_allclose(column(tmp_path / "hazard.csv", "hazard"), 0.0)


def test_mbc_on_zero_occurrences_is_numeric_failure(tmp_path, capsys):
    s = data.GridSample(0.0, 1.0, [0] * 20, [5.0] * 20, n=100)
    data.write_grid_csv(s, tmp_path / "z.csv")
    code = cli.main(["fit", "--input", str(tmp_path / "z.csv"), "--estimator", "mbc", "--bandwidth", "0.2",
                     "--out", str(tmp_path)])
    assert code == 3
    assert capsys.readouterr().err.startswith("hazardcv:")


@pytest.mark.parametrize(
    "argv",
    [
        ["fit", "--input", "does-not-exist.csv", "--bandwidth", "0.2"],
        ["select", "--input", "{grid}", "--bandwidth-grid", "0.5:0.1:3"],
        ["select", "--input", "{grid}", "--weights", "custom:{bad}"],
        ["simulate", "--model", "nope", "--replications", "1"],
    ],
)
def test_input_errors_exit_two(tmp_path, grid_csv, argv):
    (tmp_path / "bad.csv").write_text("weight\n1\n2\n")
    argv = [a.format(grid=grid_csv, bad=tmp_path / "bad.csv") for a in argv] + ["--out", str(tmp_path / "o")]
    assert cli.main(argv) == 2


def test_unknown_option_exits_two():
    with pytest.raises(SystemExit) as err:
        cli.main(["fit", "--no-such-flag"])
    assert err.value.code == 2


@pytest.mark.parametrize("method", ["cv", "do", "bo"])
@pytest.mark.parametrize("estimator", ["ll", "mbc"])
def test_select_replays_library(tmp_path, grid_csv, method, estimator):
    argv = ["select", "--input", str(grid_csv), "--method", method, "--estimator", estimator, "--kernel", "quartic",
            "--bandwidth-grid", "0.04:0.4:19", "--out", str(tmp_path)]
    assert cli.main(argv) == 0
    s = data.load_grid_csv(grid_csv)
    res = selection.select(method, s, selection.BandwidthGrid.parse("0.04:0.4:19"), estimator.upper(),
                           kernels.get_kernel("quartic"))
    row = read_csv(tmp_path / "selection.csv")[1]
    assert float(row[2]) == res.bandwidth and float(row[3]) == res.raw_bandwidth
    assert np.array_equal(column(tmp_path / "score_trace.csv", "score"), res.score_trace[:, 1])
    if method == "do":
        assert (tmp_path / "score_trace_left.csv").exists() and (tmp_path / "score_trace_right.csv").exists()


def test_fit_selected_best_one_sided_replays_library(tmp_path, grid_csv):
    argv = ["fit", "--input", str(grid_csv), "--best-one-sided", "--side-mode", "occurrence", "--out", str(tmp_path)]
    assert cli.main(argv) == 0
    s = data.load_grid_csv(grid_csv)
    k = kernels.epanechnikov()
    grid = selection.BandwidthGrid.linspace(2 * s.delta, (s.t_end - s.t0) / 2, 100)
    b = selection.select("BO", s, grid, "LL", k, mode="occurrence").bandwidth
    fit = estimators.estimate(s, b, k, "BO_LL", "occurrence")
    assert np.array_equal(column(tmp_path / "hazard.csv", "hazard"), fit.values)


def test_custom_weights_are_used(tmp_path, grid_csv):
    s = data.load_grid_csv(grid_csv)
    w = np.linspace(0.5, 2.0, s.R)
    (tmp_path / "w.csv").write_text("weight\n" + "\n".join(repr(float(v)) for v in w) + "\n")
    argv = ["select", "--input", str(grid_csv), "--method", "cv", "--bandwidth-grid", "0.04:0.4:10",
            "--weights", f"custom:{tmp_path / 'w.csv'}", "--out", str(tmp_path)]
    assert cli.main(argv) == 0
    res = selection.select("CV", s, selection.BandwidthGrid.parse("0.04:0.4:10"), "LL", kernels.epanechnikov(),
                           data.WeightScheme.from_values(w))
    assert np.array_equal(column(tmp_path / "score_trace.csv", "score"), res.score_trace[:, 1])


# ------------------------------------------------------------------ forecast
def test_forecast_replays_library(tmp_path, triangle_csv):
    argv = ["forecast", "--input", str(triangle_csv), "--bandwidths", "3,4", "--out", str(tmp_path)]
    assert cli.main(argv) == 0
    tri = forecasting.load_triangle_csv(triangle_csv)
    comps, _ = forecasting.fit_components(tri, kernels.epanechnikov(), bandwidths=(3.0, 4.0))
    fc = forecasting.forecast(tri, comps)
    assert np.array_equal(column(tmp_path / "components.csv", "f1"), comps.f1_hat)
    cells = read_csv(tmp_path / "forecast_cells.csv")
    assert len(cells) - 1 == len(fc.cell_forecasts)
    for name in ("forecast.csv", "chain_ladder.csv", "components.csv"):
        assert (tmp_path / name).exists()


def test_forecast_with_selection_writes_traces(tmp_path, triangle_csv):
    assert cli.main(["forecast", "--input", str(triangle_csv), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "score_trace_component1.csv").exists()
    assert (tmp_path / "score_trace_component2.csv").exists()


# --------------------------------------------------------------- determinism
def _run_twice(tmp_path, argv):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert cli.main(argv + ["--out", str(out)]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))})
    return outs


def test_simulate_rerun_is_byte_identical(tmp_path):
    argv = ["simulate", "--model", "unimodal", "--n", "300", "--R", "50", "--replications", "3", "--seed", "11",
            "--truncation", "uniform", "--bandwidth-grid", "0.05:0.4:12", "--threads", "1"]
    a, b = _run_twice(tmp_path, argv)
    assert set(a) == {"results.csv", "bandwidths.csv"}
    assert a == b


def test_simulate_thread_count_does_not_change_output(tmp_path):
    base = ["simulate", "--model", "unimodal", "--n", "300", "--R", "50", "--replications", "3", "--seed", "11",
            "--bandwidth-grid", "0.05:0.4:12"]
    assert cli.main(base + ["--threads", "1", "--out", str(tmp_path / "one")]) == 0
    assert cli.main(base + ["--threads", "2", "--out", str(tmp_path / "two")]) == 0
    for name in ("results.csv", "bandwidths.csv"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_simulate_json_config(tmp_path):
    (tmp_path / "c.json").write_text(
        '{"model": "bimodal", "n": 200, "R": 40, "replications": 2, "seed": 5, "estimator": "MBC", '
        '"methods": ["CV", "BO"], "grid": "0.05:0.4:8"}'
    )
    out = tmp_path / "o"
    assert cli.main(["simulate", "--config", str(tmp_path / "c.json"), "--threads", "1", "--out", str(out)]) == 0
    rows = read_csv(out / "results.csv")
    assert [r[3] for r in rows[1:]] == ["ISE", "MISE", "CV", "BO"]
    assert {r[2] for r in rows[1:]} == {"MBC"}


def test_pipeline_rerun_is_byte_identical(tmp_path, grid_csv, triangle_csv):
    for argv in (
        ["select", "--input", str(grid_csv), "--method", "do", "--bandwidth-grid", "0.04:0.4:15"],
        ["fit", "--input", str(grid_csv), "--estimator", "mbc", "--method", "bo"],
        ["forecast", "--input", str(triangle_csv)],
        ["constants", "--kernel", "quartic"],
    ):
        a, b = _run_twice(tmp_path / argv[0], argv)
        assert a and a == b


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hazardcv", "constants", "--kernel", "epanechnikov", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert (tmp_path / "constants.csv").exists()
