"""Synthetic camera captures and the footprint extraction pipeline.

Stages run in a fixed order::

    demosaic -> color_balance -> denoise -> segment_foreground -> extract_footprint

and the resulting :class:`Footprint` is matched against a record database
with :func:`match_footprint`. Images are ``float64`` arrays of shape
``(H, W, 3)`` with values in ``[0, 1]``.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import kernels

__all__ = [
    "Decision",
    "ObjectClass",
    "RawCapture",
    "Footprint",
    "PipelineResult",
    "EmptyForeground",
    "DegenerateImage",
    "BACKGROUND_RGB",
    "FOOTPRINT_SIZE",
    "render_clean",
    "synth_capture",
    "demosaic",
    "color_balance",
    "denoise",
    "segment_foreground",
    "extract_footprint",
    "match_footprint",
    "run_pipeline",
    "calibrate_thresholds",
    "write_pnm",
]

BACKGROUND_RGB = (0.12, 0.30, 0.35)
HIST_BINS = 8
N_MOMENTS = 8
FOOTPRINT_SIZE = 3 * HIST_BINS + N_MOMENTS
# Shape moments are an order of magnitude smaller than histogram mass.
MOMENT_WEIGHT = 4.0
MIN_FOREGROUND_FRACTION = 0.01
# Seeded placement jitter (pixels) around the canvas centre.
MAX_OFFSET = 6


class Decision(str, enum.Enum):
    BIODEGRADABLE = "biodegradable"
    NON_BIODEGRADABLE = "non_biodegradable"

    def flipped(self) -> "Decision":
        if self is Decision.BIODEGRADABLE:
            return Decision.NON_BIODEGRADABLE
        return Decision.BIODEGRADABLE


class EmptyForeground(ValueError):
    """The segmented foreground covers too few pixels to describe an object."""


class DegenerateImage(UserWarning):
    """Gray-world balancing was skipped because a channel mean is zero."""


@dataclass(frozen=True)
class ObjectClass:
    """Ground-truth object category and its procedural texture.

    ``texture`` keys: ``shape`` (disc, square, ellipse, ring, cross,
    triangle, bar, diamond), ``size`` (pixels), ``color`` and ``color2``
    (RGB triples), ``pattern`` (solid, stripes, checker, radial) and
    ``period`` (pixels).
    """

    class_id: int
    decision: Decision
    texture: dict = field(default_factory=dict, hash=False, compare=False)
    name: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectClass":
        return cls(
            class_id=int(d["class_id"]),
            decision=Decision(d["decision"]),
            texture=dict(d.get("texture", {})),
            name=d.get("name", ""),
        )

    def to_dict(self) -> dict:
        return {
            "class_id": self.class_id,
            "name": self.name,
            "decision": self.decision.value,
            "texture": self.texture,
        }


@dataclass(frozen=True, eq=False)
class RawCapture:
    """Single-channel RGGB mosaic as delivered by the camera."""

    width: int
    height: int
    mosaic: np.ndarray
    noise_seed: int
    subject_id: Optional[int] = None

    def __post_init__(self):
        if self.width % 2 or self.height % 2 or self.width < 8 or self.height < 8:
            raise ValueError(f"capture must be even-sized and >= 8x8, got {self.width}x{self.height}")
        if self.mosaic.shape != (self.height, self.width):
            raise ValueError("mosaic shape does not match width/height")


@dataclass(frozen=True, eq=False)
class Footprint:
    vector: np.ndarray

    def __post_init__(self):
        v = np.array(self.vector, dtype=np.float64)
        if not np.all(np.isfinite(v)):
            raise ValueError("footprint contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "vector", v)

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.vector, self.vector)))

    def distance(self, other: "Footprint") -> float:
        d = self.vector - other.vector
        return float(np.sqrt(np.dot(d, d)))

    def tolist(self) -> list:
        return self.vector.tolist()


# ---------------------------------------------------------------------------
# renderer

def _shape_mask(shape: str, size: float, yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
    ay, ax = np.abs(yy), np.abs(xx)
    if shape == "disc":
        return yy**2 + xx**2 <= size**2
    if shape == "square":
        return (ay <= size * 0.85) & (ax <= size * 0.85)
    if shape == "ellipse":
        return (yy / (0.55 * size)) ** 2 + (xx / size) ** 2 <= 1.0
    if shape == "ring":
        r2 = yy**2 + xx**2
        return (r2 <= size**2) & (r2 >= (0.4 * size) ** 2)
    if shape == "cross":
        arm = 0.35 * size
        return ((ay <= arm) & (ax <= size)) | ((ax <= arm) & (ay <= size))
    if shape == "triangle":
        # apex up, base at +size
        return (yy <= 0.7 * size) & (yy >= -size) & (ax <= (yy + size) * 0.6)
    if shape == "bar":
        return (ay <= 0.3 * size) & (ax <= 1.2 * size)
    if shape == "diamond":
        return ay + ax <= size * 1.1
    raise ValueError(f"unknown shape {shape!r}")


def _pattern(tex: dict, yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
    """Blend weight in [0, 1] between ``color`` (0) and ``color2`` (1)."""
    kind = tex.get("pattern", "solid")
    period = float(tex.get("period", 6.0))
    if kind == "solid":
        return np.zeros_like(yy, dtype=np.float64)
    if kind == "stripes":
        return ((np.floor(xx / period)) % 2).astype(np.float64)
    if kind == "checker":
        return ((np.floor(xx / period) + np.floor(yy / period)) % 2).astype(np.float64)
    if kind == "radial":
        r = np.sqrt(yy**2 + xx**2)
        return np.clip(r / max(float(tex.get("size", 10.0)), 1.0), 0.0, 1.0)
    raise ValueError(f"unknown pattern {kind!r}")


def _offset(seed: int) -> tuple[int, int]:
    rng = np.random.default_rng([int(seed), 0])
    dy, dx = rng.integers(-MAX_OFFSET, MAX_OFFSET + 1, size=2)
    return int(dy), int(dx)


def render_clean(obj: ObjectClass, seed: int, size: int = 64,
                 offset: Optional[tuple[int, int]] = None):
    """Noise-free RGB render of ``obj`` on the fixed background.

    Returns ``(rgb, mask)`` where ``mask`` marks the object's pixels.
    The placement offset is drawn from ``seed`` unless given explicitly.
    """
    tex = obj.texture
    dy, dx = _offset(seed) if offset is None else offset
    cy = size / 2.0 - 0.5 + dy
    cx = size / 2.0 - 0.5 + dx
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    yy -= cy
    xx -= cx
    mask = _shape_mask(tex.get("shape", "disc"), float(tex.get("size", 10.0)), yy, xx)
    w = _pattern(tex, yy, xx)[..., None]
    c1 = np.asarray(tex.get("color", (0.8, 0.8, 0.8)), dtype=np.float64)
    c2 = np.asarray(tex.get("color2", tex.get("color", (0.8, 0.8, 0.8))), dtype=np.float64)
    obj_rgb = (1.0 - w) * c1 + w * c2
    rgb = np.empty((size, size, 3), dtype=np.float64)
    rgb[...] = np.asarray(BACKGROUND_RGB)
    rgb[mask] = obj_rgb[mask]
    return np.clip(rgb, 0.0, 1.0), mask


def mosaic_rggb(rgb: np.ndarray) -> np.ndarray:
    """Sample an RGB image through an RGGB color filter array."""
    h, w, _ = rgb.shape
    out = np.empty((h, w), dtype=np.float64)
    out[0::2, 0::2] = rgb[0::2, 0::2, 0]
    out[0::2, 1::2] = rgb[0::2, 1::2, 1]
    out[1::2, 0::2] = rgb[1::2, 0::2, 1]
    out[1::2, 1::2] = rgb[1::2, 1::2, 2]
    return out


def synth_capture(obj: ObjectClass, seed: int, noise_sigma: float, size: int = 64,
                  subject_id: Optional[int] = None) -> RawCapture:
    """Render ``obj``, mosaic it and add clamped Gaussian sensor noise."""
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    rgb, _ = render_clean(obj, seed, size)
    mosaic = mosaic_rggb(rgb)
    if noise_sigma > 0:
        rng = np.random.default_rng([int(seed), 1])
        mosaic = np.clip(mosaic + rng.normal(0.0, noise_sigma, mosaic.shape), 0.0, 1.0)
    return RawCapture(size, size, mosaic, int(seed), subject_id)


# ---------------------------------------------------------------------------
# pipeline stages

def demosaic(raw: RawCapture) -> np.ndarray:
    """Bilinear reconstruction of the full-colour image."""
    return kernels.demosaic_bilinear(raw.mosaic)


def color_balance(img: np.ndarray) -> np.ndarray:
    """Gray-world balance: scale each channel mean to the global mean.

    A zero channel mean makes the scaling undefined; the input is then
    returned unchanged and a :class:`DegenerateImage` warning is issued.
    """
    means = img.reshape(-1, 3).mean(axis=0)
    if np.any(means == 0.0):
        warnings.warn("channel mean is zero; color balance skipped", DegenerateImage, stacklevel=2)
        return img
    if means[0] == means[1] == means[2]:
        return img.copy()
    target = means.mean()
    return np.clip(img * (target / means), 0.0, 1.0)


def denoise(img: np.ndarray) -> np.ndarray:
    out = np.empty_like(img)
    for ch in range(3):
        out[..., ch] = kernels.median3x3(img[..., ch])
    return out


def segment_foreground(img: np.ndarray, theta_bg: float):
    """Separate the object from the background and stretch its contrast.

    The background colour is the per-channel median of the frame. Pixels
    farther than ``theta_bg`` (Euclidean, RGB) from it form the mask.
    Masked values are stretched jointly over all channels using their 1st
    and 99th percentiles; background pixels are zeroed.

    Returns
    -------
    mask : ndarray of bool, shape (H, W)
    enhanced : ndarray, shape (H, W, 3)
    """
    bg = np.median(img.reshape(-1, 3), axis=0)
    diff = img - bg
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    mask = dist > theta_bg
    n = int(mask.sum())
    if n < MIN_FOREGROUND_FRACTION * mask.size:
        raise EmptyForeground(f"foreground covers {n} of {mask.size} pixels")
    vals = img[mask]
    lo, hi = np.percentile(vals, [1.0, 99.0])
    enhanced = np.zeros_like(img)
    if hi > lo:
        enhanced[mask] = np.clip((vals - lo) / (hi - lo), 0.0, 1.0)
    return mask, enhanced


def _central_moments(mask: np.ndarray) -> np.ndarray:
    ys, xs = np.nonzero(mask)
    ys = ys.astype(np.float64)
    xs = xs.astype(np.float64)
    m00 = float(ys.size)
    dy = ys - ys.mean()
    dx = xs - xs.mean()

    def eta(p, q):
        mu = float(np.sum(dx**p * dy**q))
        return mu / m00 ** (1.0 + (p + q) / 2.0)

    return np.array([
        eta(2, 0), eta(0, 2), eta(1, 1),
        eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2),
        m00 / mask.size,
    ])


def _soft_histogram(values: np.ndarray) -> np.ndarray:
    """Histogram with linear interpolation between adjacent bin centres.

    A value at a bin centre adds 1 to that bin; a value between two centres
    splits its unit weight between them, so small perturbations move mass
    continuously instead of jumping across a hard bin edge.
    """
    pos = np.clip(values * HIST_BINS - 0.5, 0.0, HIST_BINS - 1.0)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, HIST_BINS - 1)
    frac = pos - lo
    h = np.bincount(lo, weights=1.0 - frac, minlength=HIST_BINS)
    h += np.bincount(hi, weights=frac, minlength=HIST_BINS)
    return h


def extract_footprint(img: np.ndarray, mask: np.ndarray) -> Footprint:
    """Per-channel foreground histograms plus normalized shape moments.

    Both feature groups depend only on the foreground pixels' values and
    their positions relative to the centroid, so whole-pixel translations
    of the object leave the footprint unchanged.
    """
    if not mask.any():
        raise EmptyForeground("empty mask")
    vals = img[mask]
    n = float(vals.shape[0])
    hists = [_soft_histogram(vals[:, ch]) / n for ch in range(3)]
    vec = np.concatenate(hists + [MOMENT_WEIGHT * _central_moments(mask)])
    return Footprint(vec)


def match_footprint(fp: Footprint, db: Iterable, theta_match: float):
    """Nearest database record within ``theta_match``.

    ``db`` holds objects with ``record_id`` and ``footprint`` attributes.
    Returns ``(record, distance)`` or ``None``. Equal distances resolve to
    the lowest ``record_id``.
    """
    records = sorted(db, key=lambda r: r.record_id)
    if not records:
        return None
    mat = np.stack([r.footprint.vector for r in records])
    idx, d2 = kernels.nearest_sq(fp.vector, mat)
    dist = float(np.sqrt(d2))
    if dist <= theta_match:
        return records[idx], dist
    return None


@dataclass(eq=False)
class PipelineResult:
    footprint: Footprint
    rgb: np.ndarray
    balanced: np.ndarray
    denoised: np.ndarray
    mask: np.ndarray
    enhanced: np.ndarray


def run_pipeline(raw: RawCapture, theta_bg: float) -> PipelineResult:
    """Run every stage on ``raw``; raises :class:`EmptyForeground`."""
    rgb = demosaic(raw)
    balanced = color_balance(rgb)
    den = denoise(balanced)
    mask, enhanced = segment_foreground(den, theta_bg)
    return PipelineResult(extract_footprint(enhanced, mask), rgb, balanced, den, mask, enhanced)


def calibrate_thresholds(classes: Sequence[ObjectClass], noise_sigma: float = 0.02,
                         n_seeds: int = 40, size: int = 64, theta_bg: float = 0.2):
    """Measure footprint distance distributions over seeded captures.

    Returns a dict with the largest same-class distance, the smallest
    cross-class distance and a suggested ``theta_match`` placed so that
    cross-class pairs sit beyond twice the threshold when the gap allows.
    """
    fps = {}
    for c in classes:
        fps[c.class_id] = [
            run_pipeline(synth_capture(c, 10_000 + s, noise_sigma, size), theta_bg).footprint
            for s in range(n_seeds)
        ]
    intra = []
    for vs in fps.values():
        for i in range(len(vs)):
            for j in range(i + 1, len(vs)):
                intra.append(vs[i].distance(vs[j]))
    inter = []
    ids = sorted(fps)
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            for fa in fps[ids[a]]:
                for fb in fps[ids[b]]:
                    inter.append(fa.distance(fb))
    intra_max = max(intra) if intra else 0.0
    inter_min = min(inter) if inter else float("inf")
    return {
        "intra_max": intra_max,
        "intra_p99": float(np.percentile(intra, 99)) if intra else 0.0,
        "inter_min": inter_min,
        "theta_match": float(np.sqrt(intra_max * inter_min / 2.0)) if inter else 2 * intra_max,
    }


def write_pnm(path, img: np.ndarray) -> None:
    """Write an 8-bit binary PGM (2-D) or PPM (3-channel) file."""
    a = np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    if a.ndim == 2:
        header = b"P5 %d %d 255\n" % (a.shape[1], a.shape[0])
    else:
        header = b"P6 %d %d 255\n" % (a.shape[1], a.shape[0])
    Path(path).write_bytes(header + a.tobytes())
