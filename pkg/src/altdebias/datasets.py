"""Digit datasets with controlled spurious color correlations.

The multi-color variant paints the left and right background halves with
one of ten palette colors each. Per training image of class ``c`` the half
is painted with palette color ``c`` (bias-aligned) with the configured
ratio, otherwise with a color drawn uniformly from the other nine. The two
halves are drawn independently. Single-bias variants color either the
digit strokes (``colored_fg``) or the whole background (``colored_bg``).
The test split is exactly stratified: every (class x alignment
combination) cell holds the same number of images.

A synthetic glyph generator provides a hermetic stand-in for MNIST so the
whole pipeline runs without downloads.
"""

import gzip
import os
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d

IMAGE_SIDE = 28
NUM_CLASSES = 10
PIXELS_PER_IMAGE = 3 * IMAGE_SIDE * IMAGE_SIDE

# Fixed palette: 10 well-separated RGB triples, class c <-> color c.
PALETTE = np.array([
    (255, 0, 0),      # red
    (255, 255, 0),    # yellow
    (0, 255, 0),      # green
    (0, 255, 255),    # cyan
    (0, 0, 255),      # blue
    (255, 0, 255),    # magenta
    (255, 128, 0),    # orange
    (128, 0, 255),    # violet
    (0, 255, 128),    # spring green
    (255, 0, 128),    # rose
], dtype=np.uint8)

LEFT_COLUMNS = slice(0, 14)
RIGHT_COLUMNS = slice(14, 28)

VARIANTS = ("multi_color", "colored_fg", "colored_bg", "synthetic_glyph")
_VARIANT_CODE = {name: i for i, name in enumerate(VARIANTS)}

_CACHE_MAGIC = b"DBMC"
_CACHE_VERSION = 1

_IDX_IMAGE_MAGIC = 2051
_IDX_LABEL_MAGIC = 2049


class ParseError(ValueError):
    """IDX or cache parse failure; message carries the byte offset."""


@dataclass
class DatasetConfig:
    variant: str
    ratios: tuple
    seed: int
    train_count: int = 60000
    test_count: int = 10000
    jitter_std: float = 0.0

    def __post_init__(self):
        self.ratios = tuple(float(r) for r in self.ratios)
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        expected = 2 if self.variant == "multi_color" else 1
        if self.variant != "synthetic_glyph" and len(self.ratios) != expected:
            raise ValueError(
                f"{self.variant} takes {expected} ratio(s), got {len(self.ratios)}")
        if len(self.ratios) > 2:
            raise ValueError("at most 2 bias attributes are supported")
        for r in self.ratios:
            if not 0.0 < r <= 1.0:
                raise ValueError(f"ratio {r} outside (0, 1]")
        if self.train_count <= 0 or self.test_count <= 0:
            raise ValueError("counts must be positive")
        if self.jitter_std < 0:
            raise ValueError("jitter_std must be nonnegative")


@dataclass
class BiasedDataset:
    """Immutable sample store; pixels stay uint8 until batches are cut."""

    variant: str
    ratios: tuple
    seed: int
    pixels: np.ndarray        # (n, 3, 28, 28) uint8
    targets: np.ndarray       # (n,) uint8
    bias_groups: np.ndarray   # (n, A) uint8
    aligned: np.ndarray       # (n, A) bool

    @property
    def count(self):
        return self.targets.shape[0]

    @property
    def num_attributes(self):
        return self.bias_groups.shape[1]

    def images_float(self, indices=None, dtype=np.float32):
        pix = self.pixels if indices is None else self.pixels[indices]
        flat = pix.reshape(pix.shape[0], PIXELS_PER_IMAGE)
        return np.ascontiguousarray(flat, dtype=dtype) / dtype(255.0)


@dataclass
class ClassBatch:
    class_id: int
    indices: np.ndarray  # positions into the dataset


# -- IDX files ---------------------------------------------------------------

def parse_idx(blob):
    """Parse an IDX blob into scaled images (n, 28, 28 in [0,1]) or labels."""
    if len(blob) < 4:
        raise ParseError("truncated header at offset 0")
    (magic,) = struct.unpack_from(">I", blob, 0)
    if magic == _IDX_IMAGE_MAGIC:
        ndims = 3
    elif magic == _IDX_LABEL_MAGIC:
        ndims = 1
    else:
        raise ParseError(f"unknown magic 0x{magic:08x} at offset 0")
    header_len = 4 + 4 * ndims
    if len(blob) < header_len:
        raise ParseError(f"truncated dimension header at offset {len(blob)}")
    dims = struct.unpack_from(f">{ndims}I", blob, 4)
    expected = int(np.prod(dims))
    payload = np.frombuffer(blob, dtype=np.uint8, offset=header_len)
    if payload.size != expected:
        raise ParseError(
            f"payload size {payload.size} != {expected} at offset {header_len}")
    if magic == _IDX_LABEL_MAGIC:
        return payload.astype(np.int64)
    if dims[1] != IMAGE_SIDE or dims[2] != IMAGE_SIDE:
        raise ParseError(f"dimension mismatch {dims[1]}x{dims[2]} at offset 8")
    images = payload.reshape(dims).astype(np.float64) / 255.0
    return images


def write_idx_images(images_u8, path):
    with open(path, "wb") as f:
        n, rows, cols = images_u8.shape
        f.write(struct.pack(">IIII", _IDX_IMAGE_MAGIC, n, rows, cols))
        f.write(images_u8.tobytes())


def write_idx_labels(labels, path):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", _IDX_LABEL_MAGIC, len(labels)))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


def _read_maybe_gz(path):
    if os.path.exists(path + ".gz"):
        with gzip.open(path + ".gz", "rb") as f:
            return f.read()
    with open(path, "rb") as f:
        return f.read()


def load_mnist(mnist_dir):
    """Load the four official IDX files (optionally gzipped) as uint8."""
    def load_pair(img_name, lbl_name):
        imgs = parse_idx(_read_maybe_gz(os.path.join(mnist_dir, img_name)))
        lbls = parse_idx(_read_maybe_gz(os.path.join(mnist_dir, lbl_name)))
        if imgs.shape[0] != lbls.shape[0]:
            raise ParseError("image/label count mismatch")
        return np.rint(imgs * 255.0).astype(np.uint8), lbls.astype(np.uint8)

    train = load_pair("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
    test = load_pair("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
    return train, test


# -- synthetic glyphs ---------------------------------------------------------

# Seven-segment layout on an 18x12 box placed at (top=5, left=8). Each
# segment is a stroke whose thickness, end insets and shade are drawn per
# image, so the ten digit shapes span a wide style space the way
# handwriting does instead of being ten rigid templates.
_GLYPH_BOX_H, _GLYPH_BOX_W = 18, 12
_GLYPH_TOP, _GLYPH_LEFT = 5, 8

_SEGMENT_NAMES = "abcdefg"


def _segment_span(seg, t):
    """(row0, row1, col0, col1) of segment ``seg`` with thickness ``t``
    inside the glyph box."""
    h, w = _GLYPH_BOX_H, _GLYPH_BOX_W
    half = h // 2
    return {
        "a": (0, t, 0, w), "b": (0, half, w - t, w), "c": (half, h, w - t, w),
        "d": (h - t, h, 0, w), "e": (half, h, 0, t), "f": (0, half, 0, t),
        "g": (half - t // 2, half - t // 2 + t, 0, w),
    }[seg]

_DIGIT_SEGMENTS = {
    0: "abcdef", 1: "bc", 2: "abged", 3: "abgcd", 4: "fgbc",
    5: "afgcd", 6: "afgedc", 7: "abc", 8: "abcdefg", 9: "abcfgd",
}


def _render_glyph_batch(labels, rng):
    """(m, 28, 28) float glyphs in [0,1] with per-segment style jitter:
    stroke thickness 2-4, each stroke shortened by random end insets, and a
    per-segment shade."""
    m = labels.shape[0]
    out = np.zeros((m, IMAGE_SIDE, IMAGE_SIDE), dtype=np.float64)
    ys = np.arange(IMAGE_SIDE)[None, :, None]
    xs = np.arange(IMAGE_SIDE)[None, None, :]
    seg_on = np.zeros((NUM_CLASSES, len(_SEGMENT_NAMES)), dtype=bool)
    for digit, segs in _DIGIT_SEGMENTS.items():
        for seg in segs:
            seg_on[digit, _SEGMENT_NAMES.index(seg)] = True
    for si, seg in enumerate(_SEGMENT_NAMES):
        t = rng.integers(2, 5, size=m)
        i0 = rng.integers(0, 3, size=m)
        i1 = rng.integers(0, 3, size=m)
        shade = rng.uniform(0.75, 1.0, size=m)
        spans = np.array([_segment_span(seg, tk) for tk in t], dtype=np.int64)
        r0, r1, c0, c1 = (spans[:, k] for k in range(4))
        if seg in "bcef":           # vertical stroke: shorten rows
            r0, r1 = r0 + i0, r1 - i1
        else:                       # horizontal stroke: shorten columns
            c0, c1 = c0 + i0, c1 - i1
        r0, r1 = r0 + _GLYPH_TOP, r1 + _GLYPH_TOP
        c0, c1 = c0 + _GLYPH_LEFT, c1 + _GLYPH_LEFT
        on = seg_on[labels, si]
        mask = ((ys >= r0[:, None, None]) & (ys < r1[:, None, None])
                & (xs >= c0[:, None, None]) & (xs < c1[:, None, None])
                & on[:, None, None])
        np.maximum(out, np.where(mask, shade[:, None, None], 0.0), out=out)
    return out


def _affine_sample(image, angle, scale, dx, dy):
    """Bilinear resample of ``image`` under rotation/scale/shift about the
    center."""
    return _affine_sample_batch(image[None], np.atleast_1d(angle),
                                np.atleast_1d(scale), np.atleast_1d(dx),
                                np.atleast_1d(dy))[0]


def _affine_coords(angles, scales, dxs, dys):
    """Inverse-map source coordinates (output pixel -> source location) for
    per-image rotation/scale/shift about the image center."""
    c = (IMAGE_SIDE - 1) / 2.0
    ys, xs = np.mgrid[0:IMAGE_SIDE, 0:IMAGE_SIDE].astype(np.float64)
    cos_a = np.cos(angles)[:, None, None]
    sin_a = np.sin(angles)[:, None, None]
    ys_c = (ys[None] - c - dys[:, None, None]) / scales[:, None, None]
    xs_c = (xs[None] - c - dxs[:, None, None]) / scales[:, None, None]
    src_y = cos_a * ys_c + sin_a * xs_c + c
    src_x = -sin_a * ys_c + cos_a * xs_c + c
    return src_y, src_x


def _bilinear_gather(images, src_y, src_x):
    """Sample each image at per-pixel source coordinates (zero outside)."""
    n = images.shape[0]
    y0 = np.floor(src_y).astype(np.int64)
    x0 = np.floor(src_x).astype(np.int64)
    wy = src_y - y0
    wx = src_x - x0
    rows = np.arange(n)[:, None, None]
    out = np.zeros_like(images, dtype=np.float64)
    for oy, ox, w in ((0, 0, (1 - wy) * (1 - wx)), (0, 1, (1 - wy) * wx),
                      (1, 0, wy * (1 - wx)), (1, 1, wy * wx)):
        yy = y0 + oy
        xx = x0 + ox
        valid = (yy >= 0) & (yy < IMAGE_SIDE) & (xx >= 0) & (xx < IMAGE_SIDE)
        yc = np.clip(yy, 0, IMAGE_SIDE - 1)
        xc = np.clip(xx, 0, IMAGE_SIDE - 1)
        out += np.where(valid, w * images[rows, yc, xc], 0.0)
    return out


def _affine_sample_batch(images, angles, scales, dxs, dys):
    """Vectorized bilinear resample: one transform per image."""
    return _bilinear_gather(images, *_affine_coords(angles, scales, dxs, dys))


def _elastic_field(m, alphas, rng):
    """Smooth per-image displacement fields (two of them): uniform noise
    blurred by a separable Gaussian, scaled to amplitude ``alphas``."""
    fields = []
    for _ in range(2):
        u = rng.uniform(-1.0, 1.0, size=(m, IMAGE_SIDE, IMAGE_SIDE))
        u = gaussian_filter1d(u, _ELASTIC_SIGMA, axis=1, mode="constant")
        u = gaussian_filter1d(u, _ELASTIC_SIGMA, axis=2, mode="constant")
        fields.append(u * alphas[:, None, None])
    return fields


_ELASTIC_SIGMA = 3.5
_ELASTIC_ALPHA = (4.0, 9.0)


def synthesize_glyphs(count, seed):
    """Deterministic stratified digit glyphs: uint8 images and labels.

    Style pipeline per image: segment rendering with jittered stroke
    thickness/length/shade, a smooth elastic deformation, then a small
    affine perturbation. The jitter keeps the ten shapes learnable but not
    memorizable from a handful of examples, which is what makes the colored
    variants behave like handwritten digits rather than rigid templates.
    """
    rng = np.random.default_rng(np.random.PCG64(seed))
    labels = (np.arange(count) % NUM_CLASSES).astype(np.uint8)
    labels = labels[rng.permutation(count)]
    images = np.empty((count, IMAGE_SIDE, IMAGE_SIDE), dtype=np.uint8)
    chunk = 2048
    for start in range(0, count, chunk):
        lbls = labels[start:start + chunk].astype(np.int64)
        m = lbls.size
        glyphs = _render_glyph_batch(lbls, rng)
        angles = rng.uniform(-0.15, 0.15, size=m)
        scales = rng.uniform(0.9, 1.1, size=m)
        dxs = rng.uniform(-2.0, 2.0, size=m)
        dys = rng.uniform(-2.0, 2.0, size=m)
        alphas = rng.uniform(*_ELASTIC_ALPHA, size=m)
        src_y, src_x = _affine_coords(angles, scales, dxs, dys)
        disp_y, disp_x = _elastic_field(m, alphas, rng)
        glyphs = _bilinear_gather(glyphs, src_y + disp_y, src_x + disp_x)
        images[start:start + m] = np.rint(
            np.clip(glyphs, 0.0, 1.0) * 255.0).astype(np.uint8)
    return images, labels


# -- colorization -------------------------------------------------------------

def _pick_colors(targets, ratio, rng):
    """Per-sample color ids: the class color with probability ``ratio``,
    otherwise uniform over the other nine."""
    n = targets.shape[0]
    aligned = rng.random(n) < ratio
    offsets = rng.integers(1, NUM_CLASSES, size=n)
    colors = np.where(aligned, targets,
                      (targets + offsets) % NUM_CLASSES).astype(np.uint8)
    return colors, colors == targets


def _jittered_palette(color_ids, jitter_std, rng):
    """(n, 3) float colors in [0,1], optionally Gaussian-jittered."""
    colors = PALETTE[color_ids].astype(np.float64) / 255.0
    if jitter_std > 0.0:
        colors = np.clip(colors + rng.normal(0.0, jitter_std, colors.shape),
                         0.0, 1.0)
    return colors


def _compose_background(gray_u8, colors, column_slice, out):
    """Paint ``column_slice`` of the background with per-image colors while
    keeping the digit strokes white: pixel = color*(1-g) + g."""
    g = gray_u8[:, None, :, column_slice].astype(np.float64) / 255.0
    col = colors[:, :, None, None]
    out[:, :, :, column_slice] = np.rint(
        (col * (1.0 - g) + g) * 255.0).astype(np.uint8)


def _compose_foreground(gray_u8, colors, out):
    """Color the digit strokes on a black background: pixel = color*g."""
    g = gray_u8[:, None, :, :].astype(np.float64) / 255.0
    col = colors[:, :, None, None]
    out[:] = np.rint(col * g * 255.0).astype(np.uint8)


def _colorize(gray_u8, targets, color_grid, variant, jitter_std, rng):
    """color_grid: (n, A) color ids per attribute."""
    n = gray_u8.shape[0]
    out = np.zeros((n, 3, IMAGE_SIDE, IMAGE_SIDE), dtype=np.uint8)
    if variant == "multi_color":
        left = _jittered_palette(color_grid[:, 0], jitter_std, rng)
        right = _jittered_palette(color_grid[:, 1], jitter_std, rng)
        _compose_background(gray_u8, left, LEFT_COLUMNS, out)
        _compose_background(gray_u8, right, RIGHT_COLUMNS, out)
    elif variant == "colored_bg":
        col = _jittered_palette(color_grid[:, 0], jitter_std, rng)
        _compose_background(gray_u8, col, slice(0, IMAGE_SIDE), out)
    elif variant == "colored_fg":
        col = _jittered_palette(color_grid[:, 0], jitter_std, rng)
        _compose_foreground(gray_u8, col, out)
    else:
        raise ValueError(f"cannot colorize variant {variant!r}")
    return out


def _stratified_test_assignment(targets, cells_per_class, per_cell, rng):
    """Pick per_cell test images for every (class, alignment cell) pair.

    Returns (indices, cell_ids) where cell_ids encode the alignment
    combination (bit per attribute: 1 = aligned).
    """
    indices = []
    cell_ids = []
    for k in range(NUM_CLASSES):
        pool = np.flatnonzero(targets == k)
        needed = cells_per_class * per_cell
        if pool.size < needed:
            raise ValueError(
                f"class {k}: {pool.size} test digits < {needed} required")
        chosen = pool[rng.permutation(pool.size)[:needed]]
        indices.append(chosen)
        cell_ids.append(np.repeat(np.arange(cells_per_class), per_cell))
    return np.concatenate(indices), np.concatenate(cell_ids)


def _conflicting_colors(targets, rng):
    offsets = rng.integers(1, NUM_CLASSES, size=targets.shape[0])
    return ((targets + offsets) % NUM_CLASSES).astype(np.uint8)


def generate_biased(raw_train, raw_test, config):
    """Build the train/test BiasedDataset pair for any colored variant."""
    if config.variant == "synthetic_glyph":
        raise ValueError("synthesize glyphs first, then pick a colored variant")
    train_images, train_labels = raw_train
    test_images, test_labels = raw_test
    if train_images.shape[0] == 0 or test_images.shape[0] == 0:
        raise ValueError("empty source digit set")
    rng = np.random.default_rng(np.random.PCG64(config.seed))
    num_attrs = len(config.ratios)

    # train: independent biased color draw per attribute
    n_train = min(config.train_count, train_images.shape[0])
    t_imgs = train_images[:n_train]
    t_lbls = train_labels[:n_train].astype(np.uint8)
    groups = np.empty((n_train, num_attrs), dtype=np.uint8)
    for a, ratio in enumerate(config.ratios):
        groups[:, a], _ = _pick_colors(t_lbls, ratio, rng)
    train_pixels = _colorize(t_imgs, t_lbls, groups, config.variant,
                             config.jitter_std, rng)
    train_set = BiasedDataset(
        variant=config.variant, ratios=config.ratios, seed=config.seed,
        pixels=train_pixels, targets=t_lbls, bias_groups=groups,
        aligned=groups == t_lbls[:, None])

    # test: exact stratification over alignment combinations
    cells = 2 ** num_attrs
    per_cell = config.test_count // (cells * NUM_CLASSES)
    if per_cell == 0:
        raise ValueError("test_count too small for exact stratification")
    idx, cell_ids = _stratified_test_assignment(
        test_labels, cells, per_cell, rng)
    s_lbls = test_labels[idx].astype(np.uint8)
    s_groups = np.empty((idx.size, num_attrs), dtype=np.uint8)
    for a in range(num_attrs):
        aligned_bit = (cell_ids >> (num_attrs - 1 - a)) & 1
        conf = _conflicting_colors(s_lbls, rng)
        s_groups[:, a] = np.where(aligned_bit == 1, s_lbls, conf)
    test_pixels = _colorize(test_images[idx], s_lbls, s_groups,
                            config.variant, config.jitter_std, rng)
    test_set = BiasedDataset(
        variant=config.variant, ratios=config.ratios, seed=config.seed,
        pixels=test_pixels, targets=s_lbls, bias_groups=s_groups,
        aligned=s_groups == s_lbls[:, None])
    return train_set, test_set


def generate_multi_color(raw_train, raw_test, config):
    if config.variant != "multi_color":
        raise ValueError("config variant must be multi_color")
    return generate_biased(raw_train, raw_test, config)


def generate_colored(raw_train, raw_test, config):
    if config.variant not in ("colored_fg", "colored_bg"):
        raise ValueError("config variant must be colored_fg or colored_bg")
    return generate_biased(raw_train, raw_test, config)


# -- on-disk cache -------------------------------------------------------------

def save_dataset(dataset, path):
    n = dataset.count
    num_attrs = dataset.num_attributes
    header = _CACHE_MAGIC + struct.pack(
        "<HBB", _CACHE_VERSION, _VARIANT_CODE[dataset.variant], num_attrs)
    header += struct.pack(f"<{num_attrs}f", *dataset.ratios)
    header += struct.pack("<I", n)
    rec = np.dtype([("target", "u1"), ("groups", "u1", (num_attrs,)),
                    ("flags", "u1", (num_attrs,)),
                    ("pix", "u1", (PIXELS_PER_IMAGE,))])
    body = np.empty(n, dtype=rec)
    body["target"] = dataset.targets
    body["groups"] = dataset.bias_groups
    body["flags"] = dataset.aligned.astype(np.uint8)
    body["pix"] = dataset.pixels.reshape(n, PIXELS_PER_IMAGE)
    with open(path, "wb") as f:
        f.write(header)
        f.write(body.tobytes())


def load_dataset(path, seed=None):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != _CACHE_MAGIC:
        raise ParseError(f"bad cache magic {blob[:4]!r} at offset 0")
    version, variant_code, num_attrs = struct.unpack_from("<HBB", blob, 4)
    if version != _CACHE_VERSION:
        raise ParseError(f"unsupported cache version {version} at offset 4")
    if variant_code >= len(VARIANTS) or not 1 <= num_attrs <= 2:
        raise ParseError("bad variant/attribute header at offset 6")
    off = 8
    ratios = struct.unpack_from(f"<{num_attrs}f", blob, off)
    off += 4 * num_attrs
    (n,) = struct.unpack_from("<I", blob, off)
    off += 4
    rec = np.dtype([("target", "u1"), ("groups", "u1", (num_attrs,)),
                    ("flags", "u1", (num_attrs,)),
                    ("pix", "u1", (PIXELS_PER_IMAGE,))])
    if len(blob) - off != n * rec.itemsize:
        raise ParseError(f"payload size mismatch at offset {off}")
    body = np.frombuffer(blob, dtype=rec, count=n, offset=off)
    return BiasedDataset(
        variant=VARIANTS[variant_code], ratios=tuple(ratios),
        seed=-1 if seed is None else seed,
        pixels=body["pix"].reshape(n, 3, IMAGE_SIDE, IMAGE_SIDE).copy(),
        targets=body["target"].copy(),
        bias_groups=body["groups"].reshape(n, num_attrs).copy(),
        aligned=body["flags"].reshape(n, num_attrs).astype(bool))


# -- batching ------------------------------------------------------------------

class EpochSampler:
    """Shuffled epochs of index batches; covers every index exactly once
    per epoch (final batch may be short)."""

    def __init__(self, count, batch_size, rng):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.count = count
        self.batch_size = batch_size
        self.rng = rng

    def epoch(self):
        order = self.rng.permutation(self.count)
        for start in range(0, self.count, self.batch_size):
            yield order[start:start + self.batch_size]

    @property
    def batches_per_epoch(self):
        return -(-self.count // self.batch_size)


def split_by_class(targets, batch_indices):
    """Partition a sampled batch into nonempty per-class sub-batches."""
    batch_targets = targets[batch_indices]
    out = []
    for k in range(NUM_CLASSES):
        sub = batch_indices[batch_targets == k]
        if sub.size:
            out.append(ClassBatch(class_id=k, indices=sub))
    return out
