"""Image pair loading, translation registration, and pixel difference masks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import InvalidInputError


def load_image(path) -> np.ndarray:
    """Decode a PNG or JPEG file to an 8-bit RGB array (H, W, 3).

    Alpha channels are dropped; grayscale is promoted by channel replication.
    """
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def validate_rgb(img: np.ndarray) -> np.ndarray:
    if not isinstance(img, np.ndarray) or img.ndim != 3 or img.shape[2] != 3:
        raise InvalidInputError("expected an (H, W, 3) RGB array")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise InvalidInputError("image must be at least 1x1")
    if img.dtype != np.uint8:
        if np.any(img < 0) or np.any(img > 255):
            raise InvalidInputError("channel values must lie in [0, 255]")
        img = img.astype(np.uint8)
    return img


@dataclass
class ImagePair:
    """Two same-sized RGB images plus the shift that registers img2 onto img1.

    A shift of (dy, dx) means img2[r + dy, c + dx] corresponds to img1[r, c].
    """

    img1: np.ndarray
    img2: np.ndarray
    shift: tuple[int, int] = (0, 0)

    def __post_init__(self):
        self.img1 = validate_rgb(self.img1)
        self.img2 = validate_rgb(self.img2)
        if self.img1.shape != self.img2.shape:
            raise InvalidInputError("image pair dimensions differ")
        self.shift = (int(self.shift[0]), int(self.shift[1]))

    @property
    def height(self) -> int:
        return self.img1.shape[0]

    @property
    def width(self) -> int:
        return self.img1.shape[1]


@dataclass
class PixelDiffMask:
    """Binary matrix of changed pixels in the coordinates of img1.

    Only the registered overlap region can carry active bits; outside it the
    mask is zero so downstream coordinates stay in the original frame.
    """

    bits: np.ndarray
    delta: float

    def __post_init__(self):
        bits = np.asarray(self.bits)
        if bits.ndim != 2:
            raise InvalidInputError("mask must be a 2-d matrix")
        if not np.isin(bits, (0, 1)).all():
            raise InvalidInputError("mask elements must be 0 or 1")
        self.bits = bits.astype(np.uint8)

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def active_count(self) -> int:
        return int(self.bits.sum())


def overlap_slices(shape: tuple[int, int], dy: int, dx: int):
    """Index ranges of the overlap region for a shift, in img1 coordinates."""
    h, w = shape
    r0, r1 = max(0, -dy), h + min(0, -dy)
    c0, c1 = max(0, -dx), w + min(0, -dx)
    return r0, r1, c0, c1


def overlap_views(img1: np.ndarray, img2: np.ndarray, dy: int, dx: int):
    """Aligned sub-images of img1 and img2 under shift (dy, dx)."""
    r0, r1, c0, c1 = overlap_slices(img1.shape[:2], dy, dx)
    v1 = img1[r0:r1, c0:c1]
    v2 = img2[r0 + dy:r1 + dy, c0 + dx:c1 + dx]
    return v1, v2


def pixel_l2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-pixel Euclidean distance between 3-channel color vectors."""
    diff = a.astype(np.float64) - b.astype(np.float64)
    return np.sqrt((diff * diff).sum(axis=-1))


def mean_pixel_l2(a: np.ndarray, b: np.ndarray) -> float:
    return float(pixel_l2(a, b).mean())


def whole_image_l2(a: np.ndarray, b: np.ndarray) -> float:
    """Euclidean norm of the full channel-difference vector of two images."""
    diff = a.astype(np.float64) - b.astype(np.float64)
    return float(np.sqrt((diff * diff).sum()))


def align_pair(img1: np.ndarray, img2: np.ndarray, max_shift: int = 5) -> tuple[int, int]:
    """Find the integer translation of img2 that best matches img1.

    Searches every (dy, dx) in [-max_shift, max_shift]^2 and returns the one
    minimizing mean per-pixel L2 distance over the overlap region (mean, not
    sum, so shifts with different overlap sizes compare fairly). Ties break by
    smallest |dy| + |dx|, then smallest dy, then smallest dx.
    """
    img1 = validate_rgb(img1)
    img2 = validate_rgb(img2)
    if img1.shape != img2.shape:
        raise InvalidInputError("image pair dimensions differ")
    h, w = img1.shape[:2]
    max_shift = int(max_shift)
    if max_shift < 0 or max_shift >= min(h, w) / 2:
        raise InvalidInputError("max_shift must be >= 0 and < min(h, w)/2")

    best_key = None
    best = (0, 0)
    for dy in range(-max_shift, max_shift + 1):
        for dx in range(-max_shift, max_shift + 1):
            v1, v2 = overlap_views(img1, img2, dy, dx)
            key = (mean_pixel_l2(v1, v2), abs(dy) + abs(dx), dy, dx)
            if best_key is None or key < best_key:
                best_key = key
                best = (dy, dx)
    return best


def compute_diff_mask(pair: ImagePair, delta: float = 30.0) -> PixelDiffMask:
    """Mark pixels whose cross-image color distance exceeds ``delta``.

    Compared on the registered overlap only; the result is zero-padded back
    to the full img1 frame.
    """
    if delta <= 0:
        raise InvalidInputError("delta must be positive")
    dy, dx = pair.shift
    r0, r1, c0, c1 = overlap_slices(pair.img1.shape[:2], dy, dx)
    v1, v2 = overlap_views(pair.img1, pair.img2, dy, dx)
    bits = np.zeros(pair.img1.shape[:2], dtype=np.uint8)
    bits[r0:r1, c0:c1] = pixel_l2(v1, v2) > delta
    return PixelDiffMask(bits=bits, delta=float(delta))
