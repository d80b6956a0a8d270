"""Seeded synthetic imagery: golden test images and labeled patch datasets."""

from __future__ import annotations

import math
from typing import Mapping

import numpy as np

from .image import Image, Similarity, save_pgm, warp_similarity
from .pattern import GRID_SIDE, PATCHES_PER_GRID, PATCHES_PER_ROW, WINDOW, PatchDataset


def random_image(size: int = 256, seed: int = 0, low: int = 0, high: int = 255) -> Image:
    """Uniform i.i.d. integer intensities in ``[low, high]``."""
    rng = np.random.default_rng(seed)
    return Image(rng.integers(low, high + 1, size=(size, size)).astype(np.float64))


def gaussian_blur(a: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with reflected borders."""
    radius = max(1, int(math.ceil(3 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    k /= k.sum()
    out = np.pad(a, radius, mode="reflect")
    out = np.apply_along_axis(lambda r: np.convolve(r, k, mode="valid"), 1, out)
    out = np.apply_along_axis(lambda c: np.convolve(c, k, mode="valid"), 0, out)
    return out


def scene_image(size: int = 384, seed: int = 0, shapes: int = 90, low: float = 30.0, high: float = 220.0) -> Image:
    """Integer-valued scene of overlapping flat shapes on a smooth background.

    Corners of the shapes give FAST something repeatable to find; the range
    is kept inside ``[low, high]`` so moderate brightness shifts never clip.
    """
    rng = np.random.default_rng(seed)
    field = gaussian_blur(rng.normal(size=(size, size)), size / 24.0)
    field = (field - field.mean()) / (field.std() + 1e-12)
    img = 125.0 + 25.0 * field
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    for _ in range(shapes):
        level = rng.uniform(low, high)
        cx, cy = rng.uniform(0, size, size=2)
        r = rng.uniform(size / 40.0, size / 10.0)
        kind = rng.integers(3)
        if kind == 0:
            ang = rng.uniform(0, math.pi)
            c, s = math.cos(ang), math.sin(ang)
            du, dv = (xx - cx) * c + (yy - cy) * s, -(xx - cx) * s + (yy - cy) * c
            region = (np.abs(du) <= r) & (np.abs(dv) <= r * rng.uniform(0.3, 1.0))
        elif kind == 1:
            region = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
        else:
            pts = [(cx + r * math.cos(a), cy + r * math.sin(a)) for a in rng.uniform(0, 2 * math.pi, size=3)]
            region = _triangle(xx, yy, pts)
        img[region] = level
    img = gaussian_blur(img, 0.8)
    return Image(np.clip(np.round(img), low, high))


def _triangle(xx, yy, pts) -> np.ndarray:
    (x1, y1), (x2, y2), (x3, y3) = pts
    d1 = (xx - x2) * (y1 - y2) - (x1 - x2) * (yy - y2)
    d2 = (xx - x3) * (y2 - y3) - (x2 - x3) * (yy - y3)
    d3 = (xx - x1) * (y3 - y1) - (x3 - x1) * (yy - y1)
    neg = (d1 < 0) | (d2 < 0) | (d3 < 0)
    pos = (d1 > 0) | (d2 > 0) | (d3 > 0)
    return ~(neg & pos)


def perturb(image: Image, noise: float, brightness: float, rng: np.random.Generator) -> Image:
    """Add seeded Gaussian noise and a brightness offset, then clamp to [0, 255]."""
    out = image.pixels.copy()
    if noise > 0:
        out = out + rng.normal(0.0, noise, size=out.shape)
    out = out + brightness
    return Image(np.clip(out, 0.0, 255.0))


def view_patches(
    n_scenes: int = 6,
    views: int = 3,
    points_per_scene: int = 250,
    seed: int = 0,
    size: int = 384,
    threshold: float = 20.0,
) -> PatchDataset:
    """Same/not-same patch dataset built from warped views of synthetic scenes.

    Each label is one scene point; its patches are the oriented upright
    windows around that point in randomly rotated, scaled, noisy views,
    so matching patches differ the way detected keypoints do in practice.
    Views of one point are stored consecutively.
    """
    from .detect import Keypoint, detect_and_orient, orient
    from .latch import extract_window, in_margin

    rng = np.random.default_rng(seed)
    patches, labels = [], []
    label = 0
    for s in range(n_scenes):
        scene = scene_image(size, seed=int(rng.integers(1 << 31)))
        warps = []
        for _ in range(views):
            angle = rng.uniform(-math.pi, math.pi)
            scale = rng.uniform(0.9, 1.1)
            sim = Similarity.about_center(scene, angle, scale)
            view = warp_similarity(scene, angle, scale, 0.0, 0.0)
            view = perturb(view, rng.uniform(0.0, 4.0), rng.uniform(-20.0, 20.0), rng)
            warps.append((sim, Image(np.round(view.pixels))))
        base = detect_and_orient(scene, threshold)
        rng.shuffle(base)
        taken = 0
        for kp in base:
            if taken >= points_per_scene:
                break
            group = []
            for sim, view in warps:
                u, v = sim.forward(kp.x, kp.y)
                cand = Keypoint(float(np.round(u)), float(np.round(v)))
                if not in_margin(view, cand):
                    break
                group.append(extract_window(view, orient(view, cand)))
            if len(group) != views:
                continue
            patches.extend(group)
            labels.extend([label] * views)
            label += 1
            taken += 1
    return PatchDataset(np.clip(np.array(patches), 0, 255), np.array(labels))


def brown_files(dataset: PatchDataset) -> Mapping[str, bytes]:
    """Serialize a dataset as 1024x1024 PGM grids plus ``info.txt``."""
    n = len(dataset)
    n_grids = max(1, -(-n // PATCHES_PER_GRID))
    files: dict[str, bytes] = {}
    for g in range(n_grids):
        grid = np.zeros((PATCHES_PER_ROW, PATCHES_PER_ROW, WINDOW, WINDOW))
        block = dataset.patches[g * PATCHES_PER_GRID : (g + 1) * PATCHES_PER_GRID]
        flat = grid.reshape(PATCHES_PER_GRID, WINDOW, WINDOW)
        flat[: block.shape[0]] = block
        raster = grid.swapaxes(1, 2).reshape(GRID_SIDE, GRID_SIDE)
        files[f"patches{g:04d}.pgm"] = save_pgm(Image(np.clip(raster, 0, 255)))
    files["info.txt"] = "".join(f"{lab} 0\n" for lab in dataset.labels).encode("ascii")
    return files
