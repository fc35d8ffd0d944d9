import csv
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from stpn.evaluation import EvalReport, write_report
from stpn.localize import LocalizeConfig, load_video_features, video_signals, write_trace
from stpn.model import init_params
from stpn.report import line_chart, report
from stpn.train import CSV_HEADER, EpochStats

SVG = "{http://www.w3.org/2000/svg}"


def polylines(path):
    root = ET.parse(path).getroot()
    return {p.get("data-series"): p for p in root.iter(f"{SVG}polyline")}


def floats(attr):
    return [float(v) for v in attr.split()]


def write_eval(path, thresholds):
    rep = EvalReport(thresholds=thresholds, num_classes=2)
    for k, t in enumerate(thresholds):
        rep.ap[(t, 0)], rep.ap[(t, 1)] = 1 - 0.1 * k, 0.5 - 0.05 * k
        rep.mAP[t] = (rep.ap[(t, 0)] + rep.ap[(t, 1)]) / 2
    write_report(rep, path)
    return rep


def test_map_curve(tmp_path):
    thresholds = [k / 10 for k in range(1, 10)]
    rep = write_eval(tmp_path / "eval.csv", thresholds)
    written = report(tmp_path)
    svgs = [p for p in written if p.suffix == ".svg"]
    assert [p.name for p in svgs] == ["eval_map_vs_iou.svg"]
    (line,) = polylines(svgs[0]).values()
    assert floats(line.get("data-x")) == thresholds
    assert floats(line.get("data-y")) == [rep.mAP[t] for t in thresholds]
    assert len(line.get("points").split()) == 9


def test_loss_curve_has_one_point_per_epoch(tmp_path):
    n = 17
    rows = [EpochStats(e, 1.0 / e, 0.5, 1.0 / e + 0.05, 0.5).csv_row() for e in range(1, n + 1)]
    (tmp_path / "rgb.ckpt.train.csv").write_text("\n".join([CSV_HEADER] + rows) + "\n")
    report(tmp_path, tmp_path / "figs")
    lines = polylines(tmp_path / "figs" / "rgb.ckpt_loss.svg")
    assert set(lines) == {"loss_class", "loss_sparsity", "loss_total"}
    for line in lines.values():
        assert len(floats(line.get("data-x"))) == n
        assert len(line.get("points").split()) == n
    assert floats(lines["loss_class"].get("data-y")) == [1.0 / e for e in range(1, n + 1)]
    with open(tmp_path / "figs" / "rgb.ckpt_loss.csv") as f:
        assert len(list(csv.reader(f))) == n + 1


def test_trace_svg_matches_csv(tmp_path, small_dataset):
    rec = small_dataset.videos[0]
    rgb, flow = init_params(6, 4, 3, seed=1), init_params(6, 4, 3, seed=2)
    sig = video_signals(rgb, flow, load_video_features(rec, small_dataset.root),
                        LocalizeConfig(T_out=10, rho=3))
    (tmp_path / "traces").mkdir()
    write_trace(sig, rec, tmp_path / "traces" / f"{rec.id}.csv")
    report(tmp_path)
    with open(tmp_path / "traces" / f"{rec.id}.csv") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    assert len(body) == sig.T_dense == 28
    lines = polylines(tmp_path / "figures" / f"{rec.id}_psi.svg")
    assert list(lines) == header[2:]
    for j, name in enumerate(header[2:], start=2):
        ys = floats(lines[name].get("data-y"))
        assert ys == [float(r[j]) for r in body]
        assert floats(lines[name].get("data-x")) == [float(r[1]) for r in body]
    np.testing.assert_array_equal(
        floats(lines["psi_flow_2"].get("data-y")), sig.psi["flow"].values[:, 2])


def test_line_chart_degenerate_inputs():
    svg = line_chart({"flat": ([1.0], [2.0])}, "t", "x", "y")
    ET.fromstring(svg)
    assert 'data-y="2.0"' in svg


def test_report_needs_inputs(tmp_path):
    (tmp_path / "notes.csv").write_text("a,b\n")
    with pytest.raises(FileNotFoundError):
        report(tmp_path)
