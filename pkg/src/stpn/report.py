"""Static CSV and SVG figures rendered from the logs and reports in a run directory."""

from __future__ import annotations

import csv
from pathlib import Path
from xml.sax.saxutils import escape

from .evaluation import MAP_ROW, read_report
from .train import CSV_HEADER

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]
W, H, PAD = 640, 360, 48


def _fmt(v: float) -> str:
    return f"{v:.3f}"


def line_chart(series: dict, title: str, xlabel: str, ylabel: str) -> str:
    """SVG line chart. Exact data values ride along in ``data-x``/``data-y``."""
    xs = [x for xv, _ in series.values() for x in xv]
    ys = [y for _, yv in series.values() for y in yv]
    x0, x1 = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y0, y1 = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0

    def px(x):
        return PAD + (x - x0) / (x1 - x0) * (W - 2 * PAD)

    def py(y):
        return H - PAD - (y - y0) / (y1 - y0) * (H - 2 * PAD)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">',
        f"<title>{escape(title)}</title>",
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{H - PAD}" stroke="black"/>',
        f'<text x="{W / 2}" y="{PAD / 2}" text-anchor="middle">{escape(title)}</text>',
        f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="14" y="{H / 2}" transform="rotate(-90 14 {H / 2})" '
        f'text-anchor="middle">{escape(ylabel)}</text>',
        f'<text x="{PAD - 4}" y="{H - PAD}" text-anchor="end">{_fmt(y0)}</text>',
        f'<text x="{PAD - 4}" y="{PAD}" text-anchor="end">{_fmt(y1)}</text>',
        f'<text x="{PAD}" y="{H - PAD + 16}" text-anchor="middle">{_fmt(x0)}</text>',
        f'<text x="{W - PAD}" y="{H - PAD + 16}" text-anchor="middle">{_fmt(x1)}</text>',
    ]
    for k, (name, (xv, yv)) in enumerate(series.items()):
        color = _PALETTE[k % len(_PALETTE)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xv, yv))
        out.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
            f'data-series="{escape(name)}" '
            f'data-x="{" ".join(repr(float(x)) for x in xv)}" '
            f'data-y="{" ".join(repr(float(y)) for y in yv)}" points="{pts}"/>')
        out.append(f'<text x="{W - PAD + 4}" y="{PAD + 14 * k}" fill="{color}" '
                   f'font-size="11">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _read_csv(path: Path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def render_loss(train_csv: Path, out_dir: Path) -> list[Path]:
    rows = _read_csv(train_csv)
    cols = rows[0]
    data = [[float(v) for v in r] for r in rows[1:] if r]
    epochs = [r[0] for r in data]
    series = {name: (epochs, [r[i] for r in data])
              for i, name in enumerate(cols) if name.startswith("loss_")}
    stem = train_csv.name.removesuffix(".csv").removesuffix(".train")
    csv_out, svg_out = out_dir / f"{stem}_loss.csv", out_dir / f"{stem}_loss.svg"
    _write_csv(csv_out, ["epoch"] + list(series),
               [[int(e)] + [repr(series[k][1][j]) for k in series] for j, e in enumerate(epochs)])
    svg_out.write_text(line_chart(series, f"training loss ({stem})", "epoch", "loss"))
    return [csv_out, svg_out]


def render_map_curve(report_csv: Path, out_dir: Path) -> list[Path]:
    rows = [r for r in read_report(report_csv) if r[1] == MAP_ROW]
    ious = [r[0] for r in rows]
    maps = [r[2] for r in rows]
    stem = report_csv.stem
    csv_out, svg_out = out_dir / f"{stem}_map_vs_iou.csv", out_dir / f"{stem}_map_vs_iou.svg"
    _write_csv(csv_out, ["iou", "mAP"], [[repr(i), repr(m)] for i, m in zip(ious, maps)])
    svg_out.write_text(line_chart({"mAP": (ious, maps)}, "mAP vs IoU threshold",
                                  "IoU threshold", "mAP"))
    return [csv_out, svg_out]


def render_trace(trace_csv: Path, out_dir: Path) -> list[Path]:
    rows = _read_csv(trace_csv)
    cols = rows[0]
    data = [[float(v) for v in r] for r in rows[1:] if r]
    t = [r[1] for r in data]
    series = {name: (t, [r[i] for r in data]) for i, name in enumerate(cols) if i >= 2}
    svg_out = out_dir / f"{trace_csv.stem}_psi.svg"
    svg_out.write_text(line_chart(series, f"weighted T-CAM ({trace_csv.stem})",
                                  "time (s)", "psi"))
    return [svg_out]


def _kind(path: Path) -> str | None:
    with open(path, newline="") as f:
        header = next(csv.reader(f), [])
    if ",".join(header) == CSV_HEADER:
        return "train"
    if header == ["iou", "class", "ap"]:
        return "eval"
    if header[:2] == ["t", "time_s"]:
        return "trace"
    return None


def report(run_dir, out_dir=None) -> list[Path]:
    """Render every recognised CSV under ``run_dir`` (and ``run_dir/traces``)."""
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise FileNotFoundError(f"run directory {run_dir} does not exist")
    out_dir = Path(out_dir) if out_dir is not None else run_dir / "figures"
    candidates = sorted(run_dir.glob("*.csv")) + sorted((run_dir / "traces").glob("*.csv"))
    jobs = [(p, _kind(p)) for p in candidates]
    jobs = [(p, k) for p, k in jobs if k is not None]
    if not jobs:
        raise FileNotFoundError(f"no training logs, eval reports or traces in {run_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    render = {"train": render_loss, "eval": render_map_curve, "trace": render_trace}
    written = []
    for path, kind in jobs:
        written.extend(render[kind](path, out_dir))
    return written
