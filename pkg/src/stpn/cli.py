"""``stpn`` command line: synth, train, localize, eval, report.

Exit codes: 0 success, 1 usage error, 2 data or validation error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from ._validation import DataError

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _default_seed() -> int:
    env = os.environ.get("STPN_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"STPN_SEED must be an integer, got {env!r}") from None


def _iou_list(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals or not all(0 < v <= 1 for v in vals):
        raise argparse.ArgumentTypeError("IoU thresholds must lie in (0, 1]")
    return vals


def build_parser(seed: int) -> argparse.ArgumentParser:
    p = _Parser(prog="stpn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"stpn {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic two-stream dataset")
    s.add_argument("--out", required=True, type=Path)
    s.add_argument("--videos", type=int, default=50)
    s.add_argument("--classes", type=int, default=4)
    s.add_argument("--dim", type=int, default=20)
    s.add_argument("--raw-t", type=int, default=100)
    s.add_argument("--actions-per-video", type=int, default=2)
    s.add_argument("--noise", type=float, default=0.5)
    s.add_argument("--signal", type=float, default=3.0)
    s.add_argument("--seed", type=int, default=seed)

    t = sub.add_parser("train", help="train one stream from video-level labels")
    t.add_argument("--manifest", required=True, type=Path)
    t.add_argument("--stream", required=True, choices=["rgb", "flow"])
    t.add_argument("--out", required=True, type=Path)
    t.add_argument("--beta", type=float, default=0.1)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--epochs", type=int, default=100)
    t.add_argument("--t-out", type=int, default=400)
    t.add_argument("--hidden", type=int, default=256)
    t.add_argument("--seed", type=int, default=seed)

    lo = sub.add_parser("localize", help="detect actions with two trained streams")
    lo.add_argument("--manifest", required=True, type=Path)
    lo.add_argument("--rgb", required=True, type=Path)
    lo.add_argument("--flow", required=True, type=Path)
    lo.add_argument("--out", required=True, type=Path)
    lo.add_argument("--alpha", type=float, default=0.5)
    lo.add_argument("--tau", type=float, default=0.05)
    lo.add_argument("--nms-iou", type=float, default=0.5)
    lo.add_argument("--interp", type=int, default=4)
    lo.add_argument("--class-reject", type=float, default=0.1)
    lo.add_argument("--t-out", type=int, default=400)
    lo.add_argument("--traces", type=Path, default=None,
                    help="also write per-video weighted T-CAM traces to this directory")
    lo.add_argument("--threads", type=int, default=1)

    e = sub.add_parser("eval", help="mAP at IoU thresholds against manifest ground truth")
    e.add_argument("--manifest", required=True, type=Path)
    e.add_argument("--detections", required=True, type=Path)
    e.add_argument("--iou", type=_iou_list, default=_iou_list("0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"))
    e.add_argument("--out", required=True, type=Path)
    e.add_argument("--threads", type=int, default=1)

    r = sub.add_parser("report", help="render loss curves, mAP curves and traces")
    r.add_argument("--run-dir", required=True, type=Path)
    r.add_argument("--out", type=Path, default=None)
    return p


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def _write_metadata(path: Path, command: str, args: argparse.Namespace, extra=None) -> None:
    config = {k: (str(v) if isinstance(v, Path) else v)
              for k, v in sorted(vars(args).items()) if k != "command"}
    doc = {"command": command, "version": __version__, "config": config}
    if extra:
        doc.update(extra)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _cmd_synth(args) -> int:
    from .data import SynthConfig, synth_dataset
    cfg = SynthConfig(num_videos=args.videos, C=args.classes, m=args.dim, raw_T=args.raw_t,
                      actions_per_video=args.actions_per_video, noise_scale=args.noise,
                      signal_scale=args.signal)
    cfg.validate()
    synth_dataset(cfg, args.seed, args.out)
    _write_metadata(args.out / "synth.json", "synth", args)
    return 0


def _cmd_train(args) -> int:
    from .data import load_manifest
    from .model import save_checkpoint
    from .train import CSV_HEADER, Hyperparams, train
    hyper = Hyperparams(beta=args.beta, lr=args.lr, T_out=args.t_out, epochs=args.epochs,
                        hidden=args.hidden, seed=args.seed)
    manifest = load_manifest(args.manifest)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    log_path = args.out.with_name(args.out.name + ".train.csv")
    lines = [CSV_HEADER]
    print(CSV_HEADER, flush=True)

    def on_epoch(stats):
        lines.append(stats.csv_row())
        print(lines[-1], flush=True)

    params = train(manifest, args.stream, hyper, on_epoch=on_epoch)
    save_checkpoint(params, args.out)
    log_path.write_text("\n".join(lines) + "\n")
    _write_metadata(_sidecar(args.out), "train", args,
                    {"hyperparams": hyper.__dict__, "train_log": log_path.name})
    return 0


def _cmd_localize(args) -> int:
    from .data import load_manifest
    from .localize import (LocalizeConfig, load_video_features, localize_manifest,
                           video_signals, write_detections, write_trace)
    from .model import load_checkpoint
    cfg = LocalizeConfig(alpha=args.alpha, class_reject_p=args.class_reject, tau=args.tau,
                         nms_iou=args.nms_iou, rho=args.interp, T_out=args.t_out)
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    manifest = load_manifest(args.manifest)
    rgb, flow = load_checkpoint(args.rgb), load_checkpoint(args.flow)
    dets = localize_manifest(rgb, flow, manifest, cfg, threads=args.threads)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_detections(dets, args.out)
    if args.traces is not None:
        args.traces.mkdir(parents=True, exist_ok=True)
        for rec in manifest.videos:
            sig = video_signals(rgb, flow, load_video_features(rec, manifest.root), cfg)
            write_trace(sig, rec, args.traces / f"{rec.id}.csv")
    _write_metadata(_sidecar(args.out), "localize", args,
                    {"localize_config": cfg.to_dict(), "num_detections": len(dets)})
    return 0


def _cmd_eval(args) -> int:
    from .data import load_manifest
    from .evaluation import evaluate, write_report
    from .localize import read_detections
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    manifest = load_manifest(args.manifest)
    dets = read_detections(args.detections)
    rep = evaluate(dets, manifest, args.iou, threads=args.threads)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_report(rep, args.out)
    for t in rep.thresholds:
        print(f"mAP@{t:g}\t{rep.mAP[t]:.4f}")
    _write_metadata(_sidecar(args.out), "eval", args,
                    {"mAP": {repr(t): rep.mAP[t] for t in rep.thresholds}})
    return 0


def _cmd_report(args) -> int:
    from .report import report
    for path in report(args.run_dir, args.out):
        print(path)
    return 0


COMMANDS = {"synth": _cmd_synth, "train": _cmd_train, "localize": _cmd_localize,
            "eval": _cmd_eval, "report": _cmd_report}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser = build_parser(_default_seed())
        if not argv:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_USAGE
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ValueError, FileNotFoundError, KeyError, OSError) as e:
        print(f"stpn: error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
