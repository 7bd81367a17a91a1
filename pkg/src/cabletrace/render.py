"""Rasterise scenes to 8-bit grayscale images and augment them."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage
from scipy.spatial import cKDTree

from . import geometry as geo
from .scene import Scene

PEAK = 255.0


@dataclass
class RenderConfig:
    thickness_jitter: float = 0.2
    seam: bool = False
    seam_width: float = 2.0
    seam_depth: float = 40.0


@dataclass
class AugmentConfig:
    enabled: bool = True
    noise_sigma: float = 6.0
    brightness_sigma: float = 5.0
    sharpen: bool = True
    sharpen_amount: float = 1.0


def _band_pixels(points, reach, shape):
    h, w = shape
    r = int(np.ceil(reach))
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    disk = dx**2 + dy**2 <= (reach + 1.0) ** 2
    base = np.round(points).astype(int)
    # dilate the rasterized centreline inside its padded bounding box
    lo = base.min(axis=0) - r
    hi = base.max(axis=0) + r + 1
    mask = np.zeros((hi[1] - lo[1], hi[0] - lo[0]), dtype=bool)
    mask[base[:, 1] - lo[1], base[:, 0] - lo[0]] = True
    mask = ndimage.binary_dilation(mask, structure=disk)
    ys, xs = np.nonzero(mask)
    pix = np.stack([xs + lo[0], ys + lo[1]], axis=1)
    ok = (pix[:, 0] >= 0) & (pix[:, 0] < w) & (pix[:, 1] >= 0) & (pix[:, 1] < h)
    return pix[ok]


def stroke_distance(points, reach, shape):
    """Pixels within ``reach`` of a polyline and their exact-ish distance to it."""
    fine = geo.resample_polyline(points, 0.25)
    pix = _band_pixels(fine, reach, shape)
    if len(pix) == 0:
        return pix, np.zeros(0)
    d, _ = cKDTree(fine).query(pix.astype(float), distance_upper_bound=reach + 1.0)
    keep = np.isfinite(d) & (d <= reach)
    return pix[keep], d[keep]


def profile(d, radius):
    """Cylindrical shading: bright centreline falling to black at the edge."""
    t = np.clip(np.asarray(d) / radius, 0.0, 1.0)
    return PEAK * np.sqrt(1.0 - t * t)


def render_thicknesses(scene: Scene, rng_seed, config: RenderConfig | None = None) -> dict:
    config = config or RenderConfig()
    rng = np.random.default_rng(rng_seed)
    j = config.thickness_jitter
    return {c.id: c.thickness * (1.0 + rng.uniform(-j, j)) for c in scene.cables}


def _over_pieces(scene: Scene, widths: dict):
    """Arc-length windows of the over strand at each crossing, clipped between crossings."""
    cum = {c.id: geo.cumulative_length(c.points) for c in scene.cables}
    visits: dict[int, list[float]] = {c.id: [] for c in scene.cables}

    def arc(strand, t):
        cid, i = strand
        s = cum[cid]
        return s[i] + t * (s[i + 1] - s[i])

    for c in scene.crossings_gt:
        visits[c.strand_a[0]].append(arc(c.strand_a, c.t_a))
        visits[c.strand_b[0]].append(arc(c.strand_b, c.t_b))
    for cid in visits:
        visits[cid].sort()
    pieces = []
    for c in scene.crossings_gt:
        if c.over == "a":
            (oc, oi), ot, (uc, ui), ut = c.strand_a, c.t_a, c.strand_b, c.t_b
        else:
            (oc, oi), ot, (uc, ui), ut = c.strand_b, c.t_b, c.strand_a, c.t_a
        po, pu = scene.cable(oc).points, scene.cable(uc).points
        to, tu = geo.tangent_at(po, oi), geo.tangent_at(pu, ui)
        sin = abs(to[0] * tu[1] - to[1] * tu[0])
        half = (widths[oc] + widths[uc]) / 2.0 / max(sin, 0.3) + 3.0
        s0 = arc((oc, oi), ot)
        vs = np.array(visits[oc])
        lo = max([s0 - half] + [(s0 + v) / 2 for v in vs if v < s0 - 1e-6])
        hi = min([s0 + half] + [(s0 + v) / 2 for v in vs if v > s0 + 1e-6])
        sel = geo.point_at_length(po, np.linspace(lo, hi, max(int((hi - lo) / 0.5), 2)),
                                  cum[oc])
        pieces.append((oc, sel))
    return pieces


def render(scene: Scene, rng_seed=0, config: RenderConfig | None = None) -> np.ndarray:
    """White shaded strokes on black; over strands are redrawn on top at crossings."""
    config = config or RenderConfig()
    shape = (scene.height, scene.width)
    img = np.zeros(shape)
    widths = render_thicknesses(scene, rng_seed, config)
    for c in scene.cables:
        r = widths[c.id] / 2.0
        pix, d = stroke_distance(c.points, r, shape)
        v = profile(d, r)
        cur = img[pix[:, 1], pix[:, 0]]
        img[pix[:, 1], pix[:, 0]] = np.maximum(cur, v)
    for cid, piece in _over_pieces(scene, widths):
        r = widths[cid] / 2.0
        if config.seam:
            pix, d = stroke_distance(piece, r + config.seam_width, shape)
            ring = d > r
            img[pix[ring, 1], pix[ring, 0]] = np.maximum(
                img[pix[ring, 1], pix[ring, 0]] - config.seam_depth, 0.0)
        pix, d = stroke_distance(piece, r, shape)
        img[pix[:, 1], pix[:, 0]] = profile(d, r)
    return np.clip(np.round(img), 0, 255).astype(np.uint8)


def augmentation_draws(shape, rng_seed, config: AugmentConfig | None = None):
    """The random parts of :func:`augment`: per-pixel noise and a global brightness shift."""
    config = config or AugmentConfig()
    rng = np.random.default_rng(rng_seed)
    noise = rng.normal(0.0, config.noise_sigma, size=shape)
    shift = rng.normal(0.0, config.brightness_sigma)
    return noise, shift


def augment(image, rng_seed=0, config: AugmentConfig | None = None) -> np.ndarray:
    """Pixel noise, brightness shift, then a 3x3 unsharp mask; clamped to [0, 255]."""
    config = config or AugmentConfig()
    image = np.asarray(image)
    if not config.enabled:
        return image.copy()
    noise, shift = augmentation_draws(image.shape, rng_seed, config)
    out = image.astype(float) + noise + shift
    if config.sharpen:
        blur = ndimage.uniform_filter(out, size=3, mode="nearest")
        out = out + config.sharpen_amount * (out - blur)
    return np.clip(np.round(out), 0, 255).astype(np.uint8)


def save_image(path, image) -> None:
    """Write an 8-bit grayscale image as binary PGM (``.pgm``) or PNG."""
    path = Path(path)
    arr = np.ascontiguousarray(np.asarray(image, dtype=np.uint8))
    if path.suffix.lower() == ".pgm":
        h, w = arr.shape
        path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + arr.tobytes())
    else:
        # noisy images barely compress; fast deflate keeps dataset writes cheap
        Image.fromarray(arr, mode="L").save(path, compress_level=1)


def load_image(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.array(im.convert("L"), dtype=np.uint8)


def stroke_mask(scene: Scene, shrink: float = 0.8) -> np.ndarray:
    """Boolean mask of pixels that are certainly on some cable stroke."""
    shape = (scene.height, scene.width)
    mask = np.zeros(shape, dtype=bool)
    for c in scene.cables:
        pix, _ = stroke_distance(c.points, c.thickness * shrink / 2.0, shape)
        mask[pix[:, 1], pix[:, 0]] = True
    return mask
