"""Dense per-modality feature streams and their binary file format.

Streams are produced by external feature extractors and consumed by the
fusion model; files follow the convention ``<clip_id>.<modality>.fst``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MODALITIES = ("global", "mouthing", "hand")

_FST_MAGIC = b"FST1"


@dataclass
class FeatureStream:
    clip_id: str
    modality: str
    data: np.ndarray  # (T, D) float

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2 or self.data.shape[0] < 1:
            raise ValueError(f"{self.clip_id}: feature data must be a non-empty T x D matrix")
        if not np.isfinite(self.data).all():
            raise ValueError(f"{self.clip_id}: non-finite feature values")
        if self.modality == "hand" and self.data.shape[1] % 2 != 0:
            raise ValueError(f"{self.clip_id}: hand stream dim must be even (left+right concat)")

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]


def stream_path(feature_dir: Path | str, clip_id: str, modality: str) -> Path:
    return Path(feature_dir) / f"{clip_id}.{modality}.fst"


def write_feature_stream(stream: FeatureStream, path: Path | str) -> None:
    """Binary layout: magic "FST1", u32 T, u32 D, then T*D little-endian
    f32 row-major."""
    t, d = stream.data.shape
    with open(path, "wb") as f:
        f.write(_FST_MAGIC)
        f.write(struct.pack("<II", t, d))
        f.write(np.ascontiguousarray(stream.data, dtype="<f4").tobytes())


def read_feature_stream(path: Path | str, clip_id: str, modality: str) -> FeatureStream:
    data = Path(path).read_bytes()
    if data[:4] != _FST_MAGIC:
        raise ValueError(f"{path}: not an FST1 file")
    t, d = struct.unpack_from("<II", data, 4)
    expected = 12 + 4 * t * d
    if len(data) < expected:
        raise ValueError(f"{path}: truncated ({len(data)} bytes, need {expected})")
    matrix = np.frombuffer(data, dtype="<f4", count=t * d, offset=12).reshape(t, d)
    return FeatureStream(clip_id=clip_id, modality=modality, data=matrix.copy())
