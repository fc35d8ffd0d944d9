"""Forward pass of the sparse temporal pooling network for one stream."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import DataError, ShapeError, check_features, check_vector

CHECKPOINT_MAGIC = b"STPNMODL"
CHECKPOINT_VERSION = 1
_CKPT_HEADER = struct.Struct("<8sIIII")


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    # split by sign so exp never overflows
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@dataclass(frozen=True, eq=False)
class ModelParams:
    W1: np.ndarray  # (h, m)
    b1: np.ndarray  # (h,)
    W2: np.ndarray  # (1, h)
    b2: float
    Wc: np.ndarray  # (C, m), no bias

    def __post_init__(self):
        h, m = np.shape(self.W1)
        if np.shape(self.b1) != (h,) or np.shape(self.W2) != (1, h):
            raise ShapeError("attention parameter shapes are inconsistent")
        if np.ndim(self.Wc) != 2 or np.shape(self.Wc)[1] != m:
            raise ShapeError(f"classifier must have shape (C, {m})")
        for name in ("W1", "b1", "W2", "Wc"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DataError(f"{name} contains non-finite values")
        if not np.isfinite(self.b2):
            raise DataError("b2 is not finite")

    @property
    def m(self) -> int:
        return self.W1.shape[1]

    @property
    def h(self) -> int:
        return self.W1.shape[0]

    @property
    def C(self) -> int:
        return self.Wc.shape[0]

    def tensors(self) -> dict:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2,
                "b2": np.array(self.b2), "Wc": self.Wc}

    @classmethod
    def from_tensors(cls, t: dict) -> "ModelParams":
        return cls(W1=np.array(t["W1"], dtype=np.float64),
                   b1=np.array(t["b1"], dtype=np.float64),
                   W2=np.array(t["W2"], dtype=np.float64),
                   b2=float(t["b2"]),
                   Wc=np.array(t["Wc"], dtype=np.float64))

    def equals(self, other: "ModelParams") -> bool:
        a, b = self.tensors(), other.tensors()
        return all(np.array_equal(a[k], b[k]) for k in a)


@dataclass(frozen=True, eq=False)
class ForwardCache:
    X: np.ndarray
    z1: np.ndarray
    r1: np.ndarray
    z2: np.ndarray
    lam: np.ndarray
    xbar: np.ndarray
    s: np.ndarray
    p: np.ndarray

    @property
    def T(self) -> int:
        return self.X.shape[0]


def _glorot(rng, fan_out, fan_in):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def init_params(m: int, h: int, C: int, seed: int) -> ModelParams:
    if min(m, h, C) < 1:
        raise ValueError("m, h and C must be >= 1")
    rng = np.random.default_rng(seed)
    return ModelParams(
        W1=_glorot(rng, h, m),
        b1=np.zeros(h),
        W2=_glorot(rng, 1, h),
        b2=0.0,
        Wc=_glorot(rng, C, m),
    )


def attention_forward(params: ModelParams, X):
    """Class-agnostic attention: FC, ReLU, FC, sigmoid.

    Returns ``(lam, z1, r1, z2)``.
    """
    X = check_features(X, params.m)
    z1 = X @ params.W1.T + params.b1
    r1 = np.maximum(z1, 0.0)
    z2 = r1 @ params.W2[0] + params.b2
    return sigmoid(z2), z1, r1, z2


def pool(X, lam) -> np.ndarray:
    """Attention-weighted temporal sum ``sum_t lam[t] * X[t]``."""
    X = np.asarray(X, dtype=np.float64)
    lam = check_vector(lam, X.shape[0], "lambda")
    return lam @ X


def classify(params: ModelParams, xbar):
    xbar = check_vector(xbar, params.m, "xbar")
    s = params.Wc @ xbar
    return s, sigmoid(s)


def forward(params: ModelParams, X) -> ForwardCache:
    X = check_features(X, params.m)
    lam, z1, r1, z2 = attention_forward(params, X)
    xbar = pool(X, lam)
    s, p = classify(params, xbar)
    return ForwardCache(X=X, z1=z1, r1=r1, z2=z2, lam=lam, xbar=xbar, s=s, p=p)


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def _param_payload(params: ModelParams) -> bytes:
    parts = [params.W1, params.b1, params.W2, np.array([params.b2]), params.Wc]
    return b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in parts)


def save_checkpoint(params: ModelParams, path) -> None:
    payload = _param_payload(params)
    header = _CKPT_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
                               params.m, params.h, params.C)
    Path(path).write_bytes(header + payload + struct.pack("<Q", fnv1a64(payload)))


def load_checkpoint(path) -> ModelParams:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e
    if len(raw) < _CKPT_HEADER.size:
        raise DataError(f"{path}: truncated checkpoint header")
    magic, version, m, h, C = _CKPT_HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a checkpoint (magic {magic!r})")
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    sizes = [h * m, h, h, 1, C * m]
    n = sum(sizes)
    expected = _CKPT_HEADER.size + 8 * n + 8
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(raw)}")
    payload = raw[_CKPT_HEADER.size:-8]
    (checksum,) = struct.unpack("<Q", raw[-8:])
    if fnv1a64(payload) != checksum:
        raise DataError(f"{path}: checksum mismatch")
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    W1, b1, W2, b2, Wc = np.split(flat, np.cumsum(sizes)[:-1])
    return ModelParams(W1=W1.reshape(h, m), b1=b1, W2=W2.reshape(1, h),
                       b2=float(b2[0]), Wc=Wc.reshape(C, m))
