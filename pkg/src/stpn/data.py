"""Dataset manifests and feature files, plus segment sampling and synthetic data generation."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import DataError, check_features

STREAMS = ("rgb", "flow")
FEATURE_MAGIC = b"STPNFEAT"
_HEADER = struct.Struct("<8sII")


@dataclass(frozen=True)
class VideoRecord:
    id: str
    duration_s: float
    labels: tuple[int, ...]
    feature_paths: dict[str, str]
    gt_intervals: tuple[tuple[int, float, float], ...] | None = None

    def has_gt(self) -> bool:
        return self.gt_intervals is not None


@dataclass(frozen=True)
class DatasetManifest:
    class_names: tuple[str, ...]
    videos: tuple[VideoRecord, ...]
    stream_names: tuple[str, str] = STREAMS
    # directory that relative feature paths are resolved against
    root: Path = field(default=Path("."), compare=False)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def feature_path(self, video: VideoRecord, stream: str) -> Path:
        if stream not in self.stream_names:
            raise DataError(f"unknown stream {stream!r}")
        p = Path(video.feature_paths[stream])
        return p if p.is_absolute() else self.root / p

    def video(self, video_id: str) -> VideoRecord:
        for v in self.videos:
            if v.id == video_id:
                return v
        raise KeyError(video_id)


def validate_manifest(manifest: DatasetManifest) -> None:
    C = len(manifest.class_names)
    if C == 0:
        raise DataError("manifest has no classes")
    if len(set(manifest.class_names)) != C:
        raise DataError("class names are not unique")
    seen = set()
    for v in manifest.videos:
        where = f"video {v.id!r}"
        if v.id in seen:
            raise DataError(f"{where}: duplicate video id")
        seen.add(v.id)
        if not (math.isfinite(v.duration_s) and v.duration_s > 0):
            raise DataError(f"{where}: duration_s must be > 0")
        for c in v.labels:
            if not 0 <= c < C:
                raise DataError(f"{where}: label {c} outside [0, {C})")
        missing = [s for s in manifest.stream_names if s not in v.feature_paths]
        if missing:
            raise DataError(f"{where}: features missing stream(s) {missing}")
        if v.gt_intervals is not None:
            for c, start, end in v.gt_intervals:
                if not 0 <= c < C:
                    raise DataError(f"{where}: gt class {c} outside [0, {C})")
                if not (0 <= start < end <= v.duration_s):
                    raise DataError(
                        f"{where}: gt interval ({start}, {end}) violates "
                        f"0 <= start < end <= duration_s")
            if set(v.labels) != {c for c, _, _ in v.gt_intervals}:
                raise DataError(f"{where}: labels do not match gt classes")


def manifest_to_dict(manifest: DatasetManifest) -> dict:
    videos = []
    for v in manifest.videos:
        d = {
            "id": v.id,
            "duration_s": v.duration_s,
            "labels": list(v.labels),
            "features": {s: v.feature_paths[s] for s in manifest.stream_names},
        }
        if v.gt_intervals is not None:
            d["gt"] = [[c, s, e] for c, s, e in v.gt_intervals]
        videos.append(d)
    return {"classes": list(manifest.class_names), "videos": videos}


def manifest_from_dict(doc, root: Path = Path(".")) -> DatasetManifest:
    try:
        classes = tuple(str(c) for c in doc["classes"])
        videos = []
        for i, d in enumerate(doc["videos"]):
            vid = d.get("id", f"#{i}")
            try:
                gt = None
                if d.get("gt") is not None:
                    gt = tuple((int(c), float(s), float(e)) for c, s, e in d["gt"])
                videos.append(VideoRecord(
                    id=str(d["id"]),
                    duration_s=float(d["duration_s"]),
                    labels=tuple(sorted(int(c) for c in d["labels"])),
                    feature_paths={str(k): str(p) for k, p in d["features"].items()},
                    gt_intervals=gt,
                ))
            except (KeyError, TypeError, ValueError) as e:
                raise DataError(f"video {vid!r}: malformed record ({e!r})") from e
    except (KeyError, TypeError) as e:
        raise DataError(f"malformed manifest: {e!r}") from e
    manifest = DatasetManifest(classes, tuple(videos), root=Path(root))
    validate_manifest(manifest)
    return manifest


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as e:
        raise DataError(f"cannot read manifest {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"manifest {path} is not valid JSON: {e}") from e
    return manifest_from_dict(doc, root=path.parent)


def save_manifest(manifest: DatasetManifest, path) -> None:
    validate_manifest(manifest)
    text = json.dumps(manifest_to_dict(manifest), indent=2)
    Path(path).write_text(text + "\n")


def write_features(path, X) -> None:
    """Write a T x m matrix as float32 little-endian with an 8-byte magic header."""
    X = check_features(X)
    T, m = X.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(FEATURE_MAGIC, T, m))
        f.write(np.ascontiguousarray(X, dtype="<f4").tobytes())


def read_features(path) -> np.ndarray:
    """Read a feature file; returns a float64 array of shape (T, m)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"cannot read feature file {path}: {e}") from e
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, T, m = _HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if T < 1 or m < 1:
        raise DataError(f"{path}: header declares empty matrix ({T}, {m})")
    payload = len(raw) - _HEADER.size
    if payload < 4 * T * m:
        raise DataError(f"{path}: truncated, expected {T * m} values, "
                        f"found {payload // 4}")
    if payload != 4 * T * m:
        raise DataError(f"{path}: header ({T}, {m}) does not match payload "
                        f"of {payload} bytes")
    X = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(T, m)
    if not np.all(np.isfinite(X)):
        raise DataError(f"{path}: non-finite feature values")
    return X.astype(np.float64)


def sample_indices(raw_T: int, T_out: int, perturbed: bool = False, rng=None) -> np.ndarray:
    if raw_T < 1 or T_out < 1:
        raise ValueError("raw_T and T_out must be >= 1")
    i = np.arange(T_out)
    if not perturbed:
        # integer arithmetic keeps floor(i * raw_T / T_out) exact
        return (i * raw_T) // T_out
    if rng is None:
        raise ValueError("perturbed sampling needs an rng")
    u = rng.random(T_out)
    idx = np.floor((i + u) * raw_T / T_out).astype(np.int64)
    # float rounding can land exactly on the upper stratum edge
    hi = -((-(i + 1) * raw_T) // T_out) - 1
    return np.clip(idx, (i * raw_T) // T_out, np.maximum(hi, (i * raw_T) // T_out))


def sample_segments(raw, T_out: int, mode: str = "deterministic", rng=None) -> np.ndarray:
    """Resample ``raw`` to ``T_out`` rows.

    ``deterministic`` takes row ``floor(i * T / T_out)``; ``perturbed`` draws one
    row uniformly from each of ``T_out`` equal-width strata of ``[0, T)``.
    """
    raw = check_features(raw)
    if mode not in ("deterministic", "perturbed"):
        raise ValueError(f"unknown sampling mode {mode!r}")
    idx = sample_indices(raw.shape[0], T_out, mode == "perturbed", rng)
    return raw[idx]


@dataclass(frozen=True)
class SynthConfig:
    num_videos: int = 50
    C: int = 4
    m: int = 20
    raw_T: int = 100
    actions_per_video: int = 2
    noise_scale: float = 0.5
    signal_scale: float = 3.0
    segment_seconds: float = 1.6

    def validate(self) -> None:
        if self.C < 2:
            raise DataError("synthetic data needs C >= 2")
        if self.m < self.C:
            raise DataError("synthetic data needs m >= C")
        if self.num_videos < 1 or self.raw_T < 1:
            raise DataError("num_videos and raw_T must be >= 1")
        if self.actions_per_video < 0:
            raise DataError("actions_per_video must be >= 0")
        if self.noise_scale < 0 or self.signal_scale <= 0 or self.segment_seconds <= 0:
            raise DataError("noise_scale >= 0, signal_scale > 0, segment_seconds > 0 required")
        if self.actions_per_video and self.raw_T < 2 * self.actions_per_video:
            raise DataError("raw_T too short for the requested actions per video")


def class_signatures(C: int, m: int, seed: int, scale: float = 1.0) -> np.ndarray:
    """Orthogonal per-class directions (C x m) for the RGB stream."""
    rng = np.random.default_rng([seed, 0x5167])
    q, r = np.linalg.qr(rng.standard_normal((m, C)))
    q = q * np.sign(np.diag(r))
    return scale * q.T


def flow_signature(rgb_signatures: np.ndarray) -> np.ndarray:
    return np.roll(rgb_signatures, 1, axis=-1)


def plant_features(raw_T: int, signatures: np.ndarray, intervals, noise_scale: float, rng) -> np.ndarray:
    """Noise background plus ``signatures[c]`` on every row of each ``(c, start, end)``."""
    X = noise_scale * rng.standard_normal((raw_T, signatures.shape[1]))
    for c, start, end in intervals:
        X[start:end] += signatures[c]
    return X


def _draw_intervals(raw_T: int, count: int, C: int, rng):
    lo = max(1, raw_T // 10)
    hi = max(lo, raw_T // 4)
    for _ in range(1000):
        lengths = rng.integers(lo, hi + 1, size=count)
        slack = raw_T - int(lengths.sum()) - (count - 1)
        if slack >= 0:
            break
    else:
        lengths = np.ones(count, dtype=np.int64)
        slack = raw_T - 2 * count + 1
    # distribute the slack into count + 1 gaps (stars and bars)
    cuts = np.sort(rng.integers(0, slack + 1, size=count))
    gaps = np.diff(np.concatenate([[0], cuts]))
    classes = rng.integers(0, C, size=count)
    out, pos = [], 0
    for k in range(count):
        pos += int(gaps[k]) + (1 if k else 0)
        out.append((int(classes[k]), pos, pos + int(lengths[k])))
        pos += int(lengths[k])
    return out


def synth_dataset(config: SynthConfig, seed: int, out_dir) -> DatasetManifest:
    """Generate a synthetic two-stream dataset under ``out_dir``.

    Each video gets between 1 and ``actions_per_video`` planted intervals.
    Output is a pure function of ``(config, seed)``.
    """
    config.validate()
    out_dir = Path(out_dir)
    (out_dir / "features").mkdir(parents=True, exist_ok=True)
    sig = {"rgb": class_signatures(config.C, config.m, seed, config.signal_scale)}
    sig["flow"] = flow_signature(sig["rgb"])
    rng = np.random.default_rng(seed)
    width = len(str(config.num_videos - 1))
    videos = []
    for n in range(config.num_videos):
        vid = f"video_{n:0{width}d}"
        K = config.actions_per_video
        count = int(rng.integers(1, K + 1)) if K else 0
        intervals = _draw_intervals(config.raw_T, count, config.C, rng) if count else []
        paths = {}
        for stream in STREAMS:
            X = plant_features(config.raw_T, sig[stream], intervals, config.noise_scale, rng)
            rel = f"features/{vid}_{stream}.stpf"
            write_features(out_dir / rel, X)
            paths[stream] = rel
        sec = config.segment_seconds
        videos.append(VideoRecord(
            id=vid,
            duration_s=config.raw_T * sec,
            labels=tuple(sorted({c for c, _, _ in intervals})),
            feature_paths=paths,
            gt_intervals=tuple((c, s * sec, e * sec) for c, s, e in intervals),
        ))
    manifest = DatasetManifest(
        class_names=tuple(f"class_{c}" for c in range(config.C)),
        videos=tuple(videos),
        root=out_dir,
    )
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest


def load_stream(manifest: DatasetManifest, stream: str, threads: int = 1) -> list[np.ndarray]:
    paths = [manifest.feature_path(v, stream) for v in manifest.videos]
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(read_features, paths))
    return [read_features(p) for p in paths]


def label_matrix(manifest: DatasetManifest) -> np.ndarray:
    Y = np.zeros((len(manifest.videos), manifest.num_classes))
    for i, v in enumerate(manifest.videos):
        Y[i, list(v.labels)] = 1.0
    return Y


__all__ = [
    "STREAMS", "VideoRecord", "DatasetManifest", "SynthConfig", "load_manifest",
    "save_manifest", "read_features", "write_features", "sample_segments",
    "sample_indices", "synth_dataset", "class_signatures", "flow_signature",
    "plant_features", "load_stream", "label_matrix", "validate_manifest",
]
