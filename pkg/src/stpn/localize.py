"""Temporal localization from class activation maps and attention weights."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._validation import ShapeError, check_features
from .data import DatasetManifest, VideoRecord, read_features, sample_segments
from .evaluation import iou
from .model import ModelParams, forward, sigmoid


@dataclass(frozen=True)
class LocalizeConfig:
    alpha: float = 0.5
    class_reject_p: float = 0.1
    tau: float = 0.05
    nms_iou: float = 0.5
    rho: int = 4
    T_out: int = 400

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must be in [0, 1]")
        if not 0 <= self.class_reject_p <= 1:
            raise ValueError("class_reject_p must be in [0, 1]")
        if not 0 < self.tau < 1:
            raise ValueError("tau must be in (0, 1)")
        if not 0 <= self.nms_iou <= 1:
            raise ValueError("nms_iou must be in [0, 1]")
        if int(self.rho) != self.rho or self.rho < 1:
            raise ValueError("rho must be an integer >= 1")
        if self.T_out < 1:
            raise ValueError("T_out must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class TCam:
    values: np.ndarray  # (T, C)
    stream: str = "rgb"


@dataclass(frozen=True, eq=False)
class WeightedTCam:
    values: np.ndarray  # (T_dense, C)
    rho: int = 1
    stream: str = "rgb"

    @property
    def T_dense(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, order=True)
class Proposal:
    c: int
    t_start: int
    t_end: int
    stream: str = field(default="rgb", compare=False)


@dataclass(frozen=True)
class Detection:
    video_id: str
    c: int
    start_s: float
    end_s: float
    score: float

    @property
    def interval(self):
        return (self.start_s, self.end_s)


def tcam(params: ModelParams, X, stream: str = "rgb") -> TCam:
    """Per-segment class activations ``X @ Wc.T`` (no attention, no sigmoid)."""
    X = check_features(X, params.m)
    return TCam(values=X @ params.Wc.T, stream=stream)


def dense_length(T: int, rho: int) -> int:
    return (T - 1) * rho + 1


def interpolate(signal, rho: int) -> np.ndarray:
    """Linear interpolation onto ``rho`` sub-steps per segment; endpoints are kept."""
    signal = np.asarray(signal, dtype=np.float64)
    if rho < 1:
        raise ValueError("rho must be >= 1")
    if rho == 1:
        return signal.copy()
    T = signal.shape[0]
    pos = np.arange(dense_length(T, rho)) / rho
    lo = np.minimum(np.floor(pos).astype(np.int64), T - 1)
    hi = np.minimum(lo + 1, T - 1)
    frac = pos - lo
    if signal.ndim == 2:
        frac = frac[:, None]
    return signal[lo] * (1.0 - frac) + signal[hi] * frac


def weighted_tcam(lam, tc: TCam, rho: int = 1) -> WeightedTCam:
    lam = np.asarray(lam, dtype=np.float64)
    if lam.shape != (tc.values.shape[0],):
        raise ShapeError("attention and T-CAM lengths differ")
    psi = lam[:, None] * sigmoid(tc.values)
    return WeightedTCam(values=interpolate(psi, rho), rho=rho, stream=tc.stream)


def _runs(mask: np.ndarray):
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return zip(edges[::2], edges[1::2] - 1)


def extract_proposals(wt: WeightedTCam, tau: float, classes=None) -> list[Proposal]:
    """Maximal runs of dense indices with ``psi > tau``, every run kept, per class."""
    if not 0 < tau < 1:
        raise ValueError("tau must be in (0, 1)")
    if classes is None:
        classes = range(wt.values.shape[1])
    out = []
    for c in classes:
        for a, b in _runs(wt.values[:, c] > tau):
            out.append(Proposal(int(c), int(a), int(b), wt.stream))
    return out


def score_proposal(p: Proposal, lam_dense_src, a_rgb_dense, a_flow_dense, alpha: float) -> float:
    """Attention-weighted mean of the modality-blended raw T-CAM inside the proposal."""
    lam = np.asarray(lam_dense_src, dtype=np.float64)
    a_rgb = np.asarray(a_rgb_dense, dtype=np.float64)
    a_flow = np.asarray(a_flow_dense, dtype=np.float64)
    if not (lam.shape[0] == a_rgb.shape[0] == a_flow.shape[0]):
        raise ShapeError("score_proposal: signals are not on the same grid")
    if not 0 <= p.t_start <= p.t_end < lam.shape[0]:
        raise ShapeError("proposal outside the dense grid")
    span = slice(p.t_start, p.t_end + 1)
    if a_rgb.ndim == 2:
        a_rgb, a_flow = a_rgb[:, p.c], a_flow[:, p.c]
    blend = alpha * a_rgb[span] + (1.0 - alpha) * a_flow[span]
    return float(np.sum(lam[span] * blend) / (p.t_end - p.t_start + 1))


def nms(dets: list[Detection], iou_thresh: float) -> list[Detection]:
    """Greedy NMS over one video and class.

    Order is score descending, then earlier start, then shorter interval.
    """
    order = sorted(dets, key=lambda d: (-d.score, d.start_s, d.end_s - d.start_s))
    keep = []
    for d in order:
        if all(iou(d.interval, k.interval) <= iou_thresh for k in keep):
            keep.append(d)
    return keep


@dataclass(frozen=True, eq=False)
class VideoSignals:
    """Everything computed for one video before proposal extraction."""
    q: np.ndarray               # fused video-level probabilities (C,)
    lam: dict                   # stream -> dense attention
    a: dict                     # stream -> dense raw T-CAM (T_dense, C)
    psi: dict                   # stream -> WeightedTCam
    T_dense: int


def video_signals(rgb_params: ModelParams, flow_params: ModelParams, features: dict,
                  cfg: LocalizeConfig) -> VideoSignals:
    if rgb_params.C != flow_params.C:
        raise ShapeError(f"checkpoints disagree on class count "
                         f"({rgb_params.C} vs {flow_params.C})")
    models = {"rgb": rgb_params, "flow": flow_params}
    probs, lam, a, psi = {}, {}, {}, {}
    for stream, params in models.items():
        X = sample_segments(features[stream], cfg.T_out, "deterministic")
        cache = forward(params, X)
        tc = tcam(params, X, stream)
        probs[stream] = cache.p
        psi[stream] = weighted_tcam(cache.lam, tc, cfg.rho)
        lam[stream] = interpolate(cache.lam, cfg.rho)
        a[stream] = interpolate(tc.values, cfg.rho)
    q = cfg.alpha * probs["rgb"] + (1.0 - cfg.alpha) * probs["flow"]
    return VideoSignals(q=q, lam=lam, a=a, psi=psi, T_dense=psi["rgb"].T_dense)


def load_video_features(rec: VideoRecord, root=".") -> dict:
    out = {}
    for stream, rel in rec.feature_paths.items():
        p = Path(rel)
        out[stream] = read_features(p if p.is_absolute() else Path(root) / p)
    return out


def detect(rgb_params: ModelParams, flow_params: ModelParams, video_id: str,
           duration_s: float, features: dict, cfg: LocalizeConfig) -> list[Detection]:
    """Full localization of one video from in-memory ``{"rgb": X, "flow": X}``."""
    sig = video_signals(rgb_params, flow_params, features, cfg)
    kept = [c for c in range(len(sig.q)) if sig.q[c] >= cfg.class_reject_p]
    if not kept:
        return []
    # proposals from both streams are pooled; NMS removes the duplicates
    proposals = []
    for stream in ("rgb", "flow"):
        proposals.extend(extract_proposals(sig.psi[stream], cfg.tau, kept))
    scale = duration_s / sig.T_dense
    by_class: dict[int, list[Detection]] = {}
    for p in proposals:
        score = score_proposal(p, sig.lam[p.stream], sig.a["rgb"], sig.a["flow"], cfg.alpha)
        det = Detection(video_id, p.c, p.t_start * scale,
                        min((p.t_end + 1) * scale, duration_s), score)
        by_class.setdefault(p.c, []).append(det)
    return [d for c in sorted(by_class) for d in nms(by_class[c], cfg.nms_iou)]


def localize_video(rgb_params: ModelParams, flow_params: ModelParams, rec: VideoRecord,
                   cfg: LocalizeConfig, features: dict | None = None, root=".") -> list[Detection]:
    if features is None:
        features = load_video_features(rec, root)
    return detect(rgb_params, flow_params, rec.id, rec.duration_s, features, cfg)


def sort_detections(dets):
    return sorted(dets, key=lambda d: (d.video_id, d.c, -d.score, d.start_s, d.end_s))


def localize_manifest(rgb_params: ModelParams, flow_params: ModelParams,
                      manifest: DatasetManifest, cfg: LocalizeConfig,
                      threads: int = 1) -> list[Detection]:
    if rgb_params.C != flow_params.C:
        raise ShapeError("checkpoints disagree on class count")
    if rgb_params.C != manifest.num_classes:
        raise ShapeError(f"checkpoints have {rgb_params.C} classes, "
                         f"manifest has {manifest.num_classes}")

    def run(rec):
        return localize_video(rgb_params, flow_params, rec, cfg, root=manifest.root)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as pool:
            per_video = list(pool.map(run, manifest.videos))
    else:
        per_video = [run(rec) for rec in manifest.videos]
    return sort_detections(d for dets in per_video for d in dets)


DETECTION_HEADER = ["video_id", "class", "start_s", "end_s", "score"]


def write_detections(dets, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(DETECTION_HEADER)
        for d in sort_detections(dets):
            w.writerow([d.video_id, d.c, repr(float(d.start_s)), repr(float(d.end_s)),
                        repr(float(d.score))])


def read_detections(path) -> list[Detection]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != DETECTION_HEADER:
        raise ValueError(f"{path}: expected header {','.join(DETECTION_HEADER)}")
    return [Detection(r[0], int(r[1]), float(r[2]), float(r[3]), float(r[4]))
            for r in rows[1:] if r]


def write_trace(sig: VideoSignals, rec: VideoRecord, path) -> None:
    """Dense weighted T-CAM of both streams, one row per dense index."""
    C = sig.q.shape[0]
    cols = [f"psi_{s}_{c}" for s in ("rgb", "flow") for c in range(C)]
    scale = rec.duration_s / sig.T_dense
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["t", "time_s"] + cols)
        for t in range(sig.T_dense):
            vals = [repr(float(sig.psi[s].values[t, c])) for s in ("rgb", "flow") for c in range(C)]
            w.writerow([t, repr(t * scale)] + vals)
