"""Segment pixel difference masks into clusters and project them onto feature grids."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .imaging import PixelDiffMask


@dataclass
class DifferenceCluster:
    """One group of changed pixels, a proxy for an object-level change."""

    id: int
    mask: np.ndarray                      # binary H x W
    bbox: tuple[int, int, int, int]       # (row_min, col_min, row_max, col_max) inclusive
    active_count: int
    features: np.ndarray = field(default=None)  # (length, width, area, count), normalized


@dataclass
class ClusterSet:
    clusters: list[DifferenceCluster]
    noise_mask: np.ndarray

    @property
    def k(self) -> int:
        return len(self.clusters)

    def feature_matrix(self) -> np.ndarray:
        """K x 4 matrix of per-cluster salience features."""
        if not self.clusters:
            return np.zeros((0, 4))
        return np.stack([c.features for c in self.clusters])


@dataclass
class ProjectedMask:
    """Cluster mask downsampled to feature-grid resolution, values in [0, 1]."""

    grid: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        if grid.ndim != 2:
            raise InvalidInputError("projected mask must be 2-d")
        if grid.min() < 0.0 or grid.max() > 1.0:
            raise InvalidInputError("projected mask values must lie in [0, 1]")
        self.grid = grid


def cluster_features(cluster: DifferenceCluster, image_h: int, image_w: int) -> np.ndarray:
    """Salience features: bbox extent and pixel count, normalized by image size.

    length = vertical extent / image height, width = horizontal extent /
    image width, area = length * width, count = active pixels / image area.
    """
    r0, c0, r1, c1 = cluster.bbox
    length = (r1 - r0 + 1) / image_h
    width = (c1 - c0 + 1) / image_w
    return np.array([length, width, length * width,
                     cluster.active_count / (image_h * image_w)])


def _neighbor_offsets(eps: float) -> list[tuple[int, int]]:
    reach = int(math.floor(eps))
    return [(di, dj)
            for di in range(-reach, reach + 1)
            for dj in range(-reach, reach + 1)
            if di * di + dj * dj <= eps * eps]


def dbscan_cluster(mask: PixelDiffMask, eps: float = 5.0, min_pts: int = 10) -> ClusterSet:
    """Density-based clustering of the active pixels of a difference mask.

    Core point: at least ``min_pts`` active pixels within Euclidean distance
    ``eps`` (the point itself counts). Clusters grow breadth-first from core
    points scanned in row-major order, so the output is deterministic: cluster
    ids follow discovery order and a border pixel reachable from several
    clusters joins the one discovered first. Pixels reached by no core point
    are collected in the noise mask.
    """
    if eps <= 0:
        raise InvalidInputError("eps must be positive")
    if min_pts < 1:
        raise InvalidInputError("min_pts must be >= 1")

    bits = mask.bits
    coords = np.argwhere(bits)          # row-major order
    n = len(coords)
    shape = bits.shape
    if n == 0:
        return ClusterSet(clusters=[], noise_mask=np.zeros(shape, dtype=np.uint8))

    index = {(int(r), int(c)): i for i, (r, c) in enumerate(coords)}
    offsets = _neighbor_offsets(eps)
    neighbors: list[list[int]] = []
    for r, c in coords:
        nbr = [index[(r + di, c + dj)]
               for di, dj in offsets
               if (r + di, c + dj) in index]
        nbr.sort()
        neighbors.append(nbr)
    core = np.array([len(nb) >= min_pts for nb in neighbors])

    labels = np.full(n, -1, dtype=np.int64)
    expanded = np.zeros(n, dtype=bool)
    n_clusters = 0
    for seed in range(n):
        if not core[seed] or labels[seed] >= 0:
            continue
        cid = n_clusters
        n_clusters += 1
        labels[seed] = cid
        expanded[seed] = True
        queue = deque(neighbors[seed])
        while queue:
            j = queue.popleft()
            if labels[j] < 0:
                labels[j] = cid
            if labels[j] == cid and core[j] and not expanded[j]:
                expanded[j] = True
                queue.extend(neighbors[j])

    clusters = []
    for cid in range(n_clusters):
        member = coords[labels == cid]
        cmask = np.zeros(shape, dtype=np.uint8)
        cmask[member[:, 0], member[:, 1]] = 1
        bbox = (int(member[:, 0].min()), int(member[:, 1].min()),
                int(member[:, 0].max()), int(member[:, 1].max()))
        cluster = DifferenceCluster(id=cid, mask=cmask, bbox=bbox,
                                    active_count=len(member))
        cluster.features = cluster_features(cluster, shape[0], shape[1])
        clusters.append(cluster)

    noise = np.zeros(shape, dtype=np.uint8)
    outliers = coords[labels < 0]
    noise[outliers[:, 0], outliers[:, 1]] = 1
    return ClusterSet(clusters=clusters, noise_mask=noise)


def block_bounds(total: int, parts: int) -> list[tuple[int, int]]:
    """Split ``total`` indices into ``parts`` contiguous blocks, as evenly as
    possible; when it does not divide, earlier blocks are one element larger."""
    base, rem = divmod(total, parts)
    bounds = []
    start = 0
    for i in range(parts):
        size = base + (1 if i < rem else 0)
        bounds.append((start, start + size))
        start += size
    return bounds


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with a unit-sum kernel and reflective padding."""
    if sigma <= 0:
        return img.astype(np.float64)
    k = _gaussian_kernel(sigma)
    r = len(k) // 2
    out = img.astype(np.float64)
    padded = np.pad(out, ((r, r), (0, 0)), mode="symmetric")
    out = np.apply_along_axis(lambda v: np.convolve(v, k, mode="valid"), 0, padded)
    padded = np.pad(out, ((0, 0), (r, r)), mode="symmetric")
    out = np.apply_along_axis(lambda v: np.convolve(v, k, mode="valid"), 1, padded)
    return out


def project_mask(cluster, grid_h: int, grid_w: int, sigma: float = 2.0) -> ProjectedMask:
    """Downsample a binary cluster mask to the feature-grid resolution.

    The mask is Gaussian-smoothed (unit-sum kernel, reflective padding,
    truncated at 3 sigma) and block-averaged into grid cells. Cells partition
    the pixels as evenly as possible, earlier cells one pixel larger when the
    dimensions do not divide. Output values are clamped to [0, 1].
    """
    mask = cluster.mask if isinstance(cluster, DifferenceCluster) else np.asarray(cluster)
    h, w = mask.shape
    if grid_h < 1 or grid_w < 1 or grid_h > h or grid_w > w:
        raise InvalidInputError("grid must be at least 1x1 and no larger than the mask")
    smooth = gaussian_blur(mask.astype(np.float64), sigma)
    rows = block_bounds(h, grid_h)
    cols = block_bounds(w, grid_w)
    grid = np.empty((grid_h, grid_w), dtype=np.float64)
    for i, (r0, r1) in enumerate(rows):
        for j, (c0, c1) in enumerate(cols):
            grid[i, j] = smooth[r0:r1, c0:c1].mean()
    return ProjectedMask(grid=np.clip(grid, 0.0, 1.0))


def union_mask(clusters: ClusterSet) -> np.ndarray:
    """Binary union of all cluster masks (noise excluded)."""
    out = np.zeros(clusters.noise_mask.shape, dtype=np.uint8)
    for c in clusters.clusters:
        out |= c.mask
    return out
