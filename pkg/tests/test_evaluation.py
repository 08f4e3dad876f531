import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from seasoncast import evaluation as ev
from seasoncast.errors import AllTargetsNearZero, DataError, HorizonMismatch, KeyMismatch, ZeroBaseMetric
from seasoncast.evaluation import MetricBucket


def loop_rmse(y, f):
    pts = [(a - b) ** 2 for a, b in zip(np.ravel(y), np.ravel(f))]
    return math.sqrt(sum(pts) / len(pts))


def loop_mape(y, f):
    pts = [abs(a - b) / abs(a) for a, b in zip(np.ravel(y), np.ravel(f)) if abs(a) >= 1e-6]
    return sum(pts) / len(pts)


def test_metric_examples():
    assert ev.rmse([1, 2, 3], [1, 2, 3]) == 0.0
    assert ev.rmse([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5))
    assert ev.mae([0, 0], [3, -4]) == 3.5
    assert ev.mape([100, 200], [110, 180]) == pytest.approx(0.1)


def test_mape_skips_near_zero_targets():
    assert ev.mape_with_count([0.0, 100.0], [5.0, 90.0]) == (pytest.approx(0.1), 1)
    with pytest.raises(AllTargetsNearZero):
        ev.mape([0.0, 1e-9], [1.0, 1.0])


def test_bucketed_report_against_loop_oracle():
    rng = np.random.default_rng(0)
    y = rng.uniform(10, 100, (30, 12))
    f = y + rng.normal(0, 5, (30, 12))
    report = {b.label: b for b in ev.bucketed_report(f, y)}
    for label, lo, hi in ev.BUCKETS:
        assert report[label].rmse == pytest.approx(loop_rmse(y[:, lo:hi], f[:, lo:hi]), rel=1e-12)
        assert report[label].mape == pytest.approx(loop_mape(y[:, lo:hi], f[:, lo:hi]), rel=1e-12)
        assert report[label].n_points == 30 * (hi - lo)


def test_pooled_rmse_identity():
    rng = np.random.default_rng(1)
    for _ in range(50):
        y = rng.uniform(1, 100, (rng.integers(1, 40), 12))
        f = y + rng.normal(0, 10, y.shape)
        b = {x.label: x for x in ev.bucketed_report(f, y)}
        pooled = math.sqrt((b["W1_4"].rmse ** 2 + b["W5_8"].rmse ** 2 + b["W9_12"].rmse ** 2) / 3)
        assert abs(pooled - b["Overall"].rmse) <= 1e-9


def test_perfect_forecast_report_is_zero():
    y = np.random.default_rng(2).uniform(1, 10, (5, 12))
    for b in ev.bucketed_report(y, y):
        assert (b.rmse, b.mape, b.mae) == (0.0, 0.0, 0.0)


def test_report_horizon_mismatch():
    with pytest.raises(HorizonMismatch):
        ev.bucketed_report(np.ones((3, 8)), np.ones((3, 8)))


def bucket_report(mape, rmse, mae=1.0):
    return [MetricBucket(label, rmse, mape, mae) for label, _, _ in ev.BUCKETS]


def test_error_reduction():
    row = ev.error_reduction(bucket_report(0.22, 1.0, 2.0), bucket_report(0.19, 0.85, 2.5), "Favorita")
    assert row.mape_reduction_pct == pytest.approx(13.636363636, abs=1e-6)
    assert row.rmse_reduction_pct == pytest.approx(15.0)
    assert row.mae_reduction_pct == pytest.approx(-25.0)
    with pytest.raises(ZeroBaseMetric):
        ev.error_reduction(bucket_report(0.0, 1.0), bucket_report(0.1, 1.0))


def brute_verdict(c, b):
    wins = 0
    if c["mape"] <= b["mape"]:
        wins += 1
    if c["rmse"] <= b["rmse"]:
        wins += 1
    return ["Worse", "Tie", "Better"][wins]


@given(st.dictionaries(st.tuples(st.sampled_from("ABC"), st.sampled_from("XYZ")),
                       st.tuples(st.sampled_from([0.1, 0.2, 0.3]), st.sampled_from([1.0, 2.0]),
                                 st.sampled_from([0.1, 0.2, 0.3]), st.sampled_from([1.0, 2.0])),
                       min_size=1))
def test_win_tie_loss_brute_force(data):
    climate = {k: {"mape": v[0], "rmse": v[1]} for k, v in data.items()}
    base = {k: {"mape": v[2], "rmse": v[3]} for k, v in data.items()}
    verdicts, summary = ev.win_tie_loss(climate, base)
    for v in verdicts:
        assert v.verdict == brute_verdict(climate[v.scenario], base[v.scenario])
    assert sum(summary.values()) == pytest.approx(100.0)


def test_win_tie_loss_equal_counts_as_win():
    m = {("A", "X"): {"mape": 0.1, "rmse": 1.0}}
    verdicts, summary = ev.win_tie_loss(m, m)
    assert verdicts[0].verdict == "Better" and summary["Better"] == 100.0
    with pytest.raises(KeyMismatch):
        ev.win_tie_loss(m, {("B", "X"): m[("A", "X")]})


def test_scenario_metrics_keys():
    y = np.full((3, 12), 10.0)
    out = ev.scenario_metrics(["S1/P1", "S1/P1", "S2/P1"], y + 1, y)
    assert set(out) == {("P1", "S1"), ("P1", "S2")}
    assert out[("P1", "S1")]["mape"] == pytest.approx(0.1)


def test_report_files_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    y = rng.uniform(1, 10, (4, 12))
    report = ev.bucketed_report(y + 0.5, y)
    ev.write_report(tmp_path, "synthetic", "LRL-SNN", report, ["note"])
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert len(lines) == 1 + 4 * 3
    ds, model, back = ev.read_report(tmp_path / "report.csv")
    assert (ds, model) == ("synthetic", "LRL-SNN")
    for a, b in zip(report, back):
        assert (a.label, a.rmse, a.mape, a.mae) == (b.label, b.rmse, b.mape, b.mae)
    assert "note" in (tmp_path / "report.txt").read_text()


def test_read_report_names_missing_column(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("dataset,model,bucket,value\nx,y,Overall,1\n")
    with pytest.raises(DataError, match="metric"):
        ev.read_report(p)


def test_scenarios_round_trip(tmp_path):
    sc = {("P1", "S1"): {"rmse": 1.5, "mape": 0.25, "mae": 1.0}}
    ev.write_scenarios(tmp_path / "s.csv", sc)
    assert ev.read_scenarios(tmp_path / "s.csv") == sc


def test_format_table_two_decimals():
    text = ev.format_table([("M", bucket_report(0.123, 4.567))])
    assert "4.57   0.12" in text
    assert text.splitlines()[0].startswith("Algorithms")


def test_favorita_fixture_renders_published_row():
    rows = ev.favorita_fixture()
    assert [name for name, _ in rows] == ["TFT", "TFT + Climate", "LRL-SNN", "LRL-SNN + Climate"]
    text = ev.format_table(rows)
    line = [ln for ln in text.splitlines() if ln.startswith("LRL-SNN + Climate")][0]
    cells = [c.split() for c in line.split("|")[1:]]
    assert cells == [["0.64", "0.19"], ["0.87", "0.17"], ["0.85", "0.18"], ["0.85", "0.19"]]


def test_format_comparison():
    row = ev.ComparisonRow("synthetic", 12.5, 10.0, -1.0)
    text = ev.format_comparison(row, {"Better": 50.0, "Tie": 25.0, "Worse": 25.0})
    assert "12.50" in text and "better or equal: 75.0%" in text
