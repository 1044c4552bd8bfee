"""Dataset ingestion, preprocessing, augmentation, splitting and pair sampling.

Images are float32 arrays shaped (H, W, C) with values in [0, 1].
"""

import io
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, FormatError

RAW_MAGIC = b"FSDT"
RAW_VERSION = 1
RAW_SUFFIX = ".fsdt"
PNM_SUFFIXES = (".pgm", ".ppm", ".pnm")


@dataclass
class ImageSample:
    pixels: np.ndarray
    label: int
    source_id: str = ""

    @property
    def shape(self):
        return self.pixels.shape


@dataclass
class LabeledDataset:
    samples: list
    category_names: list

    def __post_init__(self):
        if len(self.category_names) < 2:
            raise DataError("a dataset needs at least 2 categories")
        for s in self.samples:
            if not 0 <= s.label < len(self.category_names):
                raise DataError(f"label {s.label} of {s.source_id!r} has no category name")

    def __len__(self):
        return len(self.samples)

    @property
    def labels(self):
        return np.array([s.label for s in self.samples], dtype=np.int64)

    @property
    def num_categories(self):
        return len(self.category_names)

    def images(self):
        """Stack all samples into one (N, H, W, C) float32 array."""
        return np.stack([s.pixels for s in self.samples]).astype(np.float32, copy=False)

    def subset(self, indices):
        return LabeledDataset([self.samples[i] for i in indices], list(self.category_names))

    def category_counts(self):
        return np.bincount(self.labels, minlength=self.num_categories)


@dataclass
class SplitDataset:
    parent: LabeledDataset
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray

    @property
    def train(self):
        return self.parent.subset(self.train_idx)

    @property
    def validation(self):
        return self.parent.subset(self.val_idx)

    @property
    def test(self):
        return self.parent.subset(self.test_idx)


@dataclass
class PairBatch:
    a: np.ndarray
    b: np.ndarray
    same: np.ndarray

    def __len__(self):
        return len(self.a)

    def __iter__(self):
        return zip(self.a.tolist(), self.b.tolist(), self.same.tolist())


@dataclass
class AugmentParams:
    rotation: float = 10.0          # degrees, symmetric range
    shear: float = 0.1
    zoom: tuple = (0.9, 1.1)
    seed: int = 0
    fill: str = "edge"              # "edge" or "constant"
    fill_value: float = 0.0

    def __post_init__(self):
        if self.rotation < 0 or self.shear < 0:
            raise ValueError("rotation and shear ranges must be non-negative")
        lo, hi = self.zoom
        if lo <= 0 or hi < lo:
            raise ValueError(f"zoom interval {self.zoom} must be positive and ordered")
        if self.fill not in ("edge", "constant"):
            raise ValueError(f"unknown fill mode {self.fill!r}")


# ingestion -----------------------------------------------------------------

def _pnm_tokens(data, count, pos):
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and chr(data[pos]).isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not chr(data[pos]).isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError("unexpected end of header")
        tokens.append(data[start:pos])
    return tokens, pos


def read_pnm(path):
    """Read a PGM/PPM (P2, P3, P5, P6) file as float32 (H, W, C) scaled by maxval."""
    with open(path, "rb") as f:
        data = f.read()
    try:
        (magic, ws, hs, ms), pos = _pnm_tokens(data, 4, 0)
        magic = magic.decode()
        w, h, maxval = int(ws), int(hs), int(ms)
        if magic not in ("P2", "P3", "P5", "P6") or not 0 < maxval < 65536 or w < 1 or h < 1:
            raise FormatError(f"unsupported header {magic} {w}x{h} max {maxval}")
        channels = 3 if magic in ("P3", "P6") else 1
        count = w * h * channels
        if magic in ("P5", "P6"):
            pos += 1  # single whitespace byte before the raster
            dtype = ">u2" if maxval > 255 else "u1"
            width = np.dtype(dtype).itemsize
            raster = data[pos:pos + count * width]
            if len(raster) != count * width:
                raise FormatError("truncated raster")
            values = np.frombuffer(raster, dtype=dtype)
        else:
            toks, _ = _pnm_tokens(data, count, pos)
            values = np.array([int(t) for t in toks])
    except (FormatError, ValueError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from None
    if values.max(initial=0) > maxval:
        raise DataError(f"cannot read image {path}: sample exceeds maxval {maxval}")
    pixels = (values.astype(np.float64) / maxval).astype(np.float32)
    return pixels.reshape(h, w, channels)


def write_pnm(path, pixels, maxval=255):
    """Write (H, W, 1|3) values in [0,1] as binary PGM/PPM."""
    pixels = np.asarray(pixels)
    if pixels.ndim == 2:
        pixels = pixels[..., None]
    h, w, c = pixels.shape
    magic = {1: "P5", 3: "P6"}[c]
    q = np.rint(np.clip(pixels, 0, 1) * maxval).astype(">u2" if maxval > 255 else "u1")
    with open(path, "wb") as f:
        f.write(f"{magic}\n{w} {h}\n{maxval}\n".encode())
        f.write(q.tobytes())


def to_grayscale(pixels):
    if pixels.shape[2] == 1:
        return pixels
    return pixels.mean(axis=2, keepdims=True, dtype=np.float64).astype(np.float32)


def dumps_samples(samples):
    f = io.BytesIO()
    f.write(RAW_MAGIC)
    f.write(struct.pack("<II", RAW_VERSION, len(samples)))
    for s in samples:
        h, w, c = s.pixels.shape
        f.write(struct.pack("<IIII", s.label, h, w, c))
        f.write(np.ascontiguousarray(s.pixels, dtype="<f4").tobytes())
    return f.getvalue()


def loads_samples(data, source="<bytes>"):
    if data[:4] != RAW_MAGIC:
        raise DataError(f"{source}: not a raw-tensor container (bad magic)")
    try:
        version, n = struct.unpack_from("<II", data, 4)
        if version != RAW_VERSION:
            raise FormatError(f"unsupported version {version}")
        pos = 12
        samples = []
        for i in range(n):
            label, h, w, c = struct.unpack_from("<IIII", data, pos)
            pos += 16
            size = h * w * c * 4
            if pos + size > len(data):
                raise FormatError("truncated payload")
            px = np.frombuffer(data, dtype="<f4", count=h * w * c, offset=pos)
            pos += size
            samples.append(ImageSample(px.reshape(h, w, c).astype(np.float32),
                                       int(label), f"{source}#{i}"))
    except (struct.error, FormatError) as exc:
        raise DataError(f"cannot read container {source}: {exc}") from None
    return samples


def write_container(ds, path):
    """Write every sample (labels included) to a raw-tensor container file."""
    with open(path, "wb") as f:
        f.write(dumps_samples(ds.samples))


def read_container(path, category_names=None):
    with open(path, "rb") as f:
        samples = loads_samples(f.read(), str(path))
    if category_names is None:
        top = max((s.label for s in samples), default=1)
        category_names = [str(i) for i in range(max(top + 1, 2))]
    return LabeledDataset(samples, list(category_names))


def load_dataset(root, grayscale=True):
    """Load ``<root>/<category>/<file>``; labels follow sorted category names.

    Files may be PGM/PPM or raw-tensor containers.  Samples inside a
    container take the label of the directory holding it.
    """
    if not os.path.isdir(root):
        raise DataError(f"dataset root {root} is not a directory")
    names = sorted(d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d)))
    if not names:
        raise DataError(f"dataset root {root} has no category directories")
    samples = []
    for label, name in enumerate(names):
        cat_dir = os.path.join(root, name)
        found = 0
        for fname in sorted(os.listdir(cat_dir)):
            path = os.path.join(cat_dir, fname)
            ext = os.path.splitext(fname)[1].lower()
            if ext in PNM_SUFFIXES:
                px = read_pnm(path)
                loaded = [ImageSample(px, label, path)]
            elif ext == RAW_SUFFIX:
                with open(path, "rb") as f:
                    loaded = loads_samples(f.read(), path)
                for s in loaded:
                    s.label = label
            else:
                continue
            for s in loaded:
                if grayscale:
                    s.pixels = to_grayscale(s.pixels)
            samples.extend(loaded)
            found += len(loaded)
        if not found:
            raise DataError(f"category directory {cat_dir} contains no images")
    return LabeledDataset(samples, names)


# geometry ------------------------------------------------------------------

def _bilinear(pixels, ys, xs, fill="edge", fill_value=0.0):
    """Sample (H, W, C) pixels at float coordinates ys, xs (any equal shapes)."""
    h, w, _ = pixels.shape
    outside = None
    if fill == "constant":
        outside = (ys < 0) | (ys > h - 1) | (xs < 0) | (xs > w - 1)
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[..., None]
    fx = (xs - x0)[..., None]
    p = pixels.astype(np.float64)
    top = p[y0, x0] * (1 - fx) + p[y0, x1] * fx
    bottom = p[y1, x0] * (1 - fx) + p[y1, x1] * fx
    out = top * (1 - fy) + bottom * fy
    if outside is not None:
        out[outside] = fill_value
    return np.clip(out, 0.0, 1.0).astype(np.float32)


def resize(img, target=(224, 224)):
    """Corner-aligned bilinear resize to ``target`` = (H', W')."""
    th, tw = target
    if th < 1 or tw < 1:
        raise ValueError("target dimensions must be >= 1")
    h, w, _ = img.pixels.shape
    if (h, w) == (th, tw):
        return ImageSample(img.pixels.copy(), img.label, img.source_id)

    def axis(src, dst):
        if dst == 1:
            return np.array([(src - 1) / 2.0])
        return np.arange(dst) * ((src - 1) / (dst - 1))

    ys, xs = np.meshgrid(axis(h, th), axis(w, tw), indexing="ij")
    return ImageSample(_bilinear(img.pixels, ys, xs), img.label, img.source_id)


def _snap(coords, tol=1e-9):
    nearest = np.rint(coords)
    return np.where(np.abs(coords - nearest) < tol, nearest, coords)


def affine_transform(img, rotation=0.0, shear=0.0, zoom=1.0, fill="edge", fill_value=0.0):
    """Rotate (degrees), shear and zoom about the image centre with bilinear sampling.

    The forward map is rotation @ shear @ zoom; each output pixel samples
    the source at the inverse-mapped location.  Source coordinates within
    1e-9 of a lattice point are snapped so exact lattice maps (e.g. 90°
    rotations of square images) reproduce pixels exactly.
    """
    px = img.pixels
    h, w, _ = px.shape
    t = math.radians(rotation)
    rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    forward = rot @ np.array([[1.0, shear], [0.0, 1.0]]) @ np.diag([zoom, zoom])
    inv = np.linalg.inv(forward)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64),
                         indexing="ij")
    # coordinates as (x, y) column vectors relative to the centre
    dx, dy = xx - cx, yy - cy
    sx = inv[0, 0] * dx + inv[0, 1] * dy + cx
    sy = inv[1, 0] * dx + inv[1, 1] * dy + cy
    out = _bilinear(px, _snap(sy), _snap(sx), fill, fill_value)
    return ImageSample(out, img.label, img.source_id)


def augment(img, params, index=0):
    """Random rotation/shear/zoom; the draw depends only on (params.seed, index)."""
    rng = np.random.default_rng([params.seed, index])
    theta = rng.uniform(-params.rotation, params.rotation)
    shear = rng.uniform(-params.shear, params.shear)
    zoom = rng.uniform(*params.zoom)
    if params.rotation == 0 and params.shear == 0 and params.zoom[0] == params.zoom[1] == 1:
        return ImageSample(img.pixels.copy(), img.label, img.source_id)
    out = affine_transform(img, theta, shear, zoom, params.fill, params.fill_value)
    out.source_id = f"{img.source_id}+aug{index}"
    return out


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def _apportion(total, weights):
    """Largest-remainder allocation of ``total`` units proportionally to ``weights``."""
    weights = np.asarray(weights, dtype=np.float64)
    exact = total * weights / weights.sum()
    base = np.floor(exact).astype(np.int64)
    rest = total - base.sum()
    order = sorted(range(len(weights)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:rest]:
        base[i] += 1
    return base


def expand_dataset(ds, fraction, params):
    """Append round(fraction * N) augmented copies, balanced across categories."""
    if not 0 <= fraction <= 1:
        raise ValueError("fraction must lie in [0, 1]")
    extra = _round_half_up(fraction * len(ds))
    if extra == 0:
        return LabeledDataset(list(ds.samples), list(ds.category_names))
    counts = ds.category_counts()
    per_cat = _apportion(extra, counts)
    rng = np.random.default_rng([params.seed, 0x5EED])
    labels = ds.labels
    sources = []
    for c, k in enumerate(per_cat):
        members = np.flatnonzero(labels == c)
        replace = k > len(members)
        sources.extend(rng.choice(members, size=k, replace=replace).tolist())
    added = [augment(ds.samples[src], params, index=len(ds) + j)
             for j, src in enumerate(sources)]
    return LabeledDataset(list(ds.samples) + added, list(ds.category_names))


def split(ds, ratios=(0.6, 0.2, 0.2), seed=0):
    """Stratified, seeded train/validation/test split.

    Each category is shuffled by its own generator (seed, category) and
    cut by largest-remainder apportionment of the ratios.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) <= 0 or abs(sum(ratios) - 1) > 1e-9:
        raise ValueError(f"ratios must be three positive numbers summing to 1, got {ratios}")
    labels = ds.labels
    parts = ([], [], [])
    too_small = []
    for c, name in enumerate(ds.category_names):
        members = np.flatnonzero(labels == c)
        sizes = _apportion(len(members), ratios)
        if len(members) < 3 or sizes.min() == 0:
            too_small.append(f"{name} ({len(members)} samples)")
            continue
        members = np.random.default_rng([seed, c]).permutation(members)
        bounds = np.cumsum(sizes)[:-1]
        for part, chunk in zip(parts, np.split(members, bounds)):
            part.extend(chunk.tolist())
    if too_small:
        raise DataError("categories too small for every split: " + ", ".join(too_small))
    train, val, test = (np.array(sorted(p), dtype=np.int64) for p in parts)
    return SplitDataset(ds, train, val, test)


def sample_pairs(ds, n, positive_ratio=0.5, seed=0, labels=None):
    """Draw ``n`` index pairs, round(n * positive_ratio) of them same-category.

    Pairs are drawn uniformly over ordered index pairs of each type by
    rejection, then shuffled together.
    """
    if not 0 < positive_ratio < 1:
        raise ValueError("positive_ratio must lie strictly between 0 and 1")
    labels = ds.labels if labels is None else np.asarray(labels)
    counts = np.bincount(labels)
    present = np.flatnonzero(counts)
    n_pos = _round_half_up(n * positive_ratio)
    n_neg = n - n_pos
    if n_pos and counts[present].min() < 2:
        raise DataError("every category needs at least 2 samples to form same-category pairs")
    if n_neg and len(present) < 2:
        raise DataError("a single category cannot form cross-category pairs")
    rng = np.random.default_rng(seed)
    total = len(labels)
    out = []
    for want_same, k in ((True, n_pos), (False, n_neg)):
        got = []
        while len(got) < k:
            a = rng.integers(0, total, size=2 * (k - len(got)) + 8)
            b = rng.integers(0, total, size=a.size)
            same = labels[a] == labels[b]
            ok = (same & (a != b)) if want_same else ~same
            got.extend(zip(a[ok].tolist(), b[ok].tolist()))
        out.extend((x, y, want_same) for x, y in got[:k])
    order = rng.permutation(len(out))
    a = np.array([out[i][0] for i in order], dtype=np.int64)
    b = np.array([out[i][1] for i in order], dtype=np.int64)
    same = np.array([out[i][2] for i in order], dtype=bool)
    return PairBatch(a, b, same)
