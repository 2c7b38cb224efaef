"""Per-image feature grids: a deterministic desk-scale encoder plus an
interchange format for features exported by external tooling."""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .clustering import block_bounds
from .errors import FormatError, InvalidInputError
from .imaging import ImagePair, overlap_views

MAGIC = b"SDF1"
DEFAULT_DIM = 9


@dataclass
class FeatureGridPair:
    """Spatial feature tensors for the two images, shape (H', W', D) each."""

    f1: np.ndarray
    f2: np.ndarray

    def __post_init__(self):
        f1, f2 = np.asarray(self.f1), np.asarray(self.f2)
        if f1.shape != f2.shape or f1.ndim != 3:
            raise InvalidInputError("feature grids must share one (H', W', D) shape")
        if not (np.isfinite(f1).all() and np.isfinite(f2).all()):
            raise InvalidInputError("feature grids must be finite")
        self.f1, self.f2 = f1, f2

    @property
    def grid_h(self) -> int:
        return self.f1.shape[0]

    @property
    def grid_w(self) -> int:
        return self.f1.shape[1]

    @property
    def dim(self) -> int:
        return self.f1.shape[2]


def encode_pair(pair: ImagePair, grid_h: int = 14, grid_w: int = 14) -> FeatureGridPair:
    """Deterministic desk-scale encoder over the registered overlap region.

    Each cell yields, per image: the 3 channel means, the 3 channel standard
    deviations, and the 3 mean absolute cross-image channel differences (the
    same for both images), all divided by 255 so every feature lies in [0, 1].
    """
    v1, v2 = overlap_views(pair.img1, pair.img2, *pair.shift)
    h, w = v1.shape[:2]
    if grid_h < 1 or grid_w < 1 or grid_h > h or grid_w > w:
        raise InvalidInputError("grid must be at least 1x1 and no larger than the overlap")
    a = v1.astype(np.float64)
    b = v2.astype(np.float64)
    rows = block_bounds(h, grid_h)
    cols = block_bounds(w, grid_w)
    f1 = np.empty((grid_h, grid_w, DEFAULT_DIM))
    f2 = np.empty((grid_h, grid_w, DEFAULT_DIM))
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            ba = a[r0:r1, c0:c1].reshape(-1, 3)
            bb = b[r0:r1, c0:c1].reshape(-1, 3)
            diff = np.abs(ba - bb).mean(axis=0) / 255.0
            f1[i, j] = np.concatenate([ba.mean(axis=0) / 255.0, ba.std(axis=0) / 255.0, diff])
            f2[i, j] = np.concatenate([bb.mean(axis=0) / 255.0, bb.std(axis=0) / 255.0, diff])
    return FeatureGridPair(f1=f1, f2=f2)


def save_features(path, feats: FeatureGridPair) -> None:
    """Write a feature grid pair in the binary interchange format.

    Layout (little-endian): magic "SDF1", u32 gridH, u32 gridW, u32 D, then
    gridH*gridW*D float32 values row-major for F1, then the same for F2.
    """
    gh, gw, d = feats.grid_h, feats.grid_w, feats.dim
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", gh, gw, d))
        fh.write(np.ascontiguousarray(feats.f1, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(feats.f2, dtype="<f4").tobytes())


def load_precomputed_features(path) -> FeatureGridPair:
    """Read a feature grid pair written by :func:`save_features` or exported
    by external tooling. Any feature depth is accepted."""
    with open(path, "rb") as fh:
        raw = fh.read()
    header = 4 + 12
    if len(raw) < header:
        raise FormatError("feature file truncated before header")
    if raw[:4] != MAGIC:
        raise FormatError("bad magic; not a feature file")
    gh, gw, d = struct.unpack("<III", raw[4:header])
    if gh < 1 or gw < 1 or d < 1:
        raise FormatError("feature file header has a zero dimension")
    count = gh * gw * d
    expected = header + 2 * count * 4
    if len(raw) != expected:
        raise FormatError(f"feature file has {len(raw)} bytes, expected {expected}")
    flat = np.frombuffer(raw, dtype="<f4", count=2 * count, offset=header)
    if not np.isfinite(flat).all():
        raise FormatError("feature file contains non-finite values")
    f1 = flat[:count].reshape(gh, gw, d).copy()
    f2 = flat[count:].reshape(gh, gw, d).copy()
    return FeatureGridPair(f1=f1, f2=f2)
