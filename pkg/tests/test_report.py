"""CSV round trips and figure rendering."""

import math

import pytest

from efdn.report import (
    plot_loss_curves,
    plot_metrics,
    read_loss_csv,
    write_loss_csv,
    write_metrics_csv,
)
from efdn.train import StepRecord


def records():
    return [StepRecord("warmup", 0, 0.5, 1e-3),
            StepRecord("warmup", 1, 0.25, 9e-4),
            StepRecord("edge", 2, 0.125, 1e-4)]


class TestLossCsv:
    def test_round_trip_with_seed(self, tmp_path):
        path = tmp_path / "loss.csv"
        write_loss_csv(path, records(), seed=7)
        seed, rows = read_loss_csv(path)
        assert seed == 7
        assert [r["stage"] for r in rows] == ["warmup", "warmup", "edge"]
        assert [r["step"] for r in rows] == [0, 1, 2]
        assert rows[0]["loss"] == pytest.approx(0.5)
        assert rows[2]["lr"] == pytest.approx(1e-4)

    def test_round_trip_without_seed(self, tmp_path):
        path = tmp_path / "loss.csv"
        write_loss_csv(path, records())
        seed, rows = read_loss_csv(path)
        assert seed is None
        assert len(rows) == 3

    def test_header_row(self, tmp_path):
        path = tmp_path / "loss.csv"
        write_loss_csv(path, records(), seed=1)
        lines = path.read_text().splitlines()
        assert lines[0] == "# seed=1"
        assert lines[1] == "stage,step,loss,lr"


class TestMetricsCsv:
    def test_mean_row_appended(self, tmp_path):
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, [("a.png", 30.0, 0.9), ("b.png", 34.0, 0.95)])
        lines = path.read_text().splitlines()
        assert lines[0] == "name,psnr_db,ssim"
        assert lines[-1].startswith("mean,32,")

    def test_infinity_written_readably(self, tmp_path):
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, [("a.png", math.inf, 1.0)])
        body = path.read_text()
        assert "inf" in body
        assert math.isinf(float(body.splitlines()[1].split(",")[1]))


class TestFigures:
    def test_loss_figure_written(self, tmp_path):
        path = tmp_path / "loss.png"
        plot_loss_curves(path, {"run": records()})
        assert path.stat().st_size > 0

    def test_metrics_figure_written(self, tmp_path):
        path = tmp_path / "metrics.png"
        plot_metrics(path, [("a.png", 30.0, 0.9), ("b.png", math.inf, 1.0)])
        assert path.stat().st_size > 0
