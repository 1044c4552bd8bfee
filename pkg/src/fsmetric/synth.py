"""Procedural "shapes benchmark": small grayscale images of parameterised primitives.

Shapes are rendered from signed distance fields with a one-pixel
anti-aliasing ramp, then jittered (position, scale, intensity) and corrupted
with additive Gaussian noise.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import ImageSample, LabeledDataset

TARGET_KINDS = ("disk", "cross", "ring")
AUX_KINDS = ("square", "triangle", "diamond", "bar", "frame", "saltire")


def _box(dx, dy, hx, hy):
    qx, qy = np.abs(dx) - hx, np.abs(dy) - hy
    outside = np.hypot(np.maximum(qx, 0), np.maximum(qy, 0))
    return outside + np.minimum(np.maximum(qx, qy), 0)


def signed_distance(kind, dx, dy, r, t):
    """Signed distance (pixels, negative inside) of primitive ``kind`` of size ``r``."""
    if kind == "disk":
        return np.hypot(dx, dy) - r
    if kind == "ring":
        return np.abs(np.hypot(dx, dy) - r) - t / 2
    if kind == "cross":
        return np.minimum(_box(dx, dy, r, t / 2), _box(dx, dy, t / 2, r))
    if kind == "square":
        return _box(dx, dy, 0.8 * r, 0.8 * r)
    if kind == "diamond":
        return (np.abs(dx) + np.abs(dy) - r) / np.sqrt(2)
    if kind == "bar":
        return _box(dx, dy, r, t)
    if kind == "frame":
        return np.abs(_box(dx, dy, 0.8 * r, 0.8 * r)) - t / 2
    if kind == "saltire":
        u, v = (dx + dy) / np.sqrt(2), (dx - dy) / np.sqrt(2)
        return np.minimum(_box(u, v, r, t / 2), _box(u, v, t / 2, r))
    if kind == "triangle":
        # equilateral, apex up, circumradius r
        k = np.sqrt(3) / 2
        d1 = dy - r / 2
        d2 = -k * dx - 0.5 * dy - r / 2
        d3 = k * dx - 0.5 * dy - r / 2
        return np.maximum(np.maximum(d1, d2), d3)
    raise ValueError(f"unknown primitive {kind!r}")


@dataclass
class ShapesSpec:
    kinds: tuple = TARGET_KINDS
    per_category: int = 150
    size: int = 32
    radius: float = 0.25          # fraction of image size
    thickness: float = 0.09       # fraction of image size
    jitter: float = 0.18          # position jitter, fraction of size; also scales size/intensity jitter
    noise: float = 0.15

    def __post_init__(self):
        self.kinds = tuple(self.kinds)
        if len(self.kinds) < 2:
            raise ValueError("the shapes benchmark needs at least 2 categories")
        if self.per_category < 6:
            raise ValueError("the shapes benchmark needs at least 6 samples per category")

    @classmethod
    def auxiliary(cls, **overrides):
        """Variant rendering primitives disjoint from the target kinds."""
        return cls(**{"kinds": AUX_KINDS, **overrides})


def render(kind, size, cx, cy, r, t, intensity=1.0):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    sd = signed_distance(kind, xx - cx, yy - cy, r, t)
    return intensity * np.clip(0.5 - sd, 0.0, 1.0)


def generate_synthetic(spec=None, seed=0):
    """Render ``per_category`` images of each kind; labels index ``spec.kinds``."""
    spec = spec or ShapesSpec()
    s = spec.size
    samples = []
    for label, kind in enumerate(spec.kinds):
        for i in range(spec.per_category):
            rng = np.random.default_rng([seed, label, i])
            j = spec.jitter
            cx = (s - 1) / 2 + rng.uniform(-j, j) * s
            cy = (s - 1) / 2 + rng.uniform(-j, j) * s
            r = spec.radius * s * (1 + rng.uniform(-2 * j, 2 * j))
            intensity = 1 - rng.uniform(0, 2 * j)
            img = render(kind, s, cx, cy, r, spec.thickness * s, intensity)
            if spec.noise:
                img = img + rng.normal(0, spec.noise, img.shape)
            px = np.clip(img, 0, 1).astype(np.float32)[..., None]
            samples.append(ImageSample(px, label, f"synth:{kind}:{i}"))
    return LabeledDataset(samples, list(spec.kinds))
