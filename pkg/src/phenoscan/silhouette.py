"""Background scoring in LAB space, silhouette masks and signed distance fields."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
from scipy import ndimage

log = logging.getLogger(__name__)

# sRGB primaries to CIE XYZ, D65 white
_M_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_WHITE = np.array([0.95047, 1.0, 1.08883])
_EPS = (6.0 / 29.0) ** 3


def _linear_lut() -> np.ndarray:
    c = np.arange(256) / 255.0
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


_LUT = _linear_lut()


def rgb_to_lab(rgb) -> np.ndarray:
    """8-bit sRGB (H, W, 3) to float CIE L*a*b* under D65.

    L is in [0, 100]; a and b roughly in [-128, 127].
    """
    rgb = np.asarray(rgb)
    if rgb.dtype != np.uint8:
        raise TypeError("expected 8-bit RGB input")
    if rgb.shape[-1] != 3:
        raise ValueError("last axis must hold R, G, B")
    lin = _LUT[rgb]
    xyz = lin @ _M_XYZ.T / _WHITE
    f = np.where(xyz > _EPS, np.cbrt(xyz), xyz / (3 * (6.0 / 29.0) ** 2) + 4.0 / 29.0)
    L = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


@dataclass(frozen=True)
class ScoreParams:
    alpha: float = 0.1  # luminance weight
    beta: float = 0.5  # colour weight
    gamma: float = 0.4  # texture weight
    t: float = 5.0
    min_component: int = 25  # speckle and hole size limit (px); 0 disables cleanup

    def __post_init__(self):
        w = (self.alpha, self.beta, self.gamma)
        if min(w) < 0 or sum(w) <= 0:
            raise ValueError("weights must be non-negative with a positive sum")
        if self.min_component < 0:
            raise ValueError("min_component must be >= 0")


def _as_lab(img) -> np.ndarray:
    a = np.asarray(img)
    if a.dtype == np.uint8:
        return rgb_to_lab(a)
    if a.ndim != 3 or a.shape[-1] != 3:
        raise ValueError("expected an (H, W, 3) image")
    return a.astype(float, copy=False)


def _ratios(L: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """L over its right and lower neighbour; the last column/row reuse their own value."""
    d = np.maximum(L, 1.0)
    right = np.concatenate([d[:, 1:], d[:, -1:]], axis=1)
    down = np.concatenate([d[1:, :], d[-1:, :]], axis=0)
    return L / right, L / down


def score_map(img, bg, p: ScoreParams = ScoreParams()) -> np.ndarray:
    """Per-pixel foreground score Ω.

    ``img`` and ``bg`` are either 8-bit RGB arrays or float LAB arrays of the
    same shape.  Ω combines luminance, colour and neighbour-ratio texture
    differences, weighted and normalized by the weight sum.
    """
    lab, labb = _as_lab(img), _as_lab(bg)
    if lab.shape != labb.shape:
        raise ValueError(f"image {lab.shape[:2]} and background {labb.shape[:2]} differ in size")
    delta = np.abs(lab[..., 0] - labb[..., 0])
    theta = np.abs(lab[..., 1] - labb[..., 1]) + np.abs(lab[..., 2] - labb[..., 2])
    ru, rv = _ratios(lab[..., 0])
    bu, bv = _ratios(labb[..., 0])
    psi = np.abs(ru - bu) + np.abs(rv - bv)
    return (p.alpha * delta + p.beta * theta + p.gamma * psi) / (p.alpha + p.beta + p.gamma)


def clean_mask(mask: np.ndarray, min_size: int) -> np.ndarray:
    """Drop foreground specks and fill enclosed holes smaller than ``min_size`` pixels."""
    mask = np.asarray(mask, dtype=bool).copy()
    if min_size <= 0:
        return mask
    lab, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=int))
    if n:
        sizes = np.bincount(lab.ravel())
        small = sizes < min_size
        small[0] = False
        mask[small[lab]] = False
    lab, n = ndimage.label(~mask)
    if n:
        sizes = np.bincount(lab.ravel())
        edge = np.unique(np.concatenate([lab[0], lab[-1], lab[:, 0], lab[:, -1]]))
        fill = sizes < min_size
        fill[0] = False
        fill[edge] = False
        mask[fill[lab]] = True
    return mask


def segment(img, bg, p: ScoreParams = ScoreParams()) -> np.ndarray:
    """Boolean silhouette: Ω > t, then speckle/hole cleanup."""
    return clean_mask(score_map(img, bg, p) > p.t, p.min_component)


# ---------------------------------------------------------------------------
# exact Euclidean distance transform (lower envelope of parabolas)

_INF = 1e20


@numba.njit(cache=True)
def _edt_1d(f, d, v, z):
    n = f.shape[0]
    k = 0
    v[0] = 0
    z[0] = -_INF
    z[1] = _INF
    for q in range(1, n):
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = _INF
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) * (q - v[k]) + f[v[k]]


@numba.njit(cache=True)
def _edt_sq(feature):
    """Squared distance from every pixel to the nearest True pixel."""
    h, w = feature.shape
    out = np.empty((h, w))
    for i in range(h):
        for j in range(w):
            out[i, j] = 0.0 if feature[i, j] else _INF
    n = max(h, w)
    f = np.empty(n)
    d = np.empty(n)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1)
    for j in range(w):
        for i in range(h):
            f[i] = out[i, j]
        _edt_1d(f[:h], d[:h], v, z)
        for i in range(h):
            out[i, j] = d[i]
    for i in range(h):
        for j in range(w):
            f[j] = out[i, j]
        _edt_1d(f[:w], d[:w], v, z)
        for j in range(w):
            out[i, j] = d[j]
    return out


def distance_transform(mask) -> np.ndarray:
    """Signed distance field (float64): positive inside the foreground.

    Pixel values are measured between pixel centres and shifted by half a
    pixel so the zero level lies on the boundary between the classes:
    foreground pixels hold ``dist_to_background - 0.5`` and background
    pixels ``-(dist_to_foreground - 0.5)``.  Neighbouring values then differ
    by at most their centre distance.  A mask of one class only measures to
    a ring of the other class just outside the image.
    """
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2 or m.size == 0:
        raise ValueError("mask must be a non-empty 2-D array")
    uniform = m.all() or not m.any()
    if uniform:
        padded = np.pad(m, 1, constant_values=not m.flat[0])
        sdf = _signed(padded)[1:-1, 1:-1]
    else:
        sdf = _signed(m)
    return sdf


def _signed(m: np.ndarray) -> np.ndarray:
    d_bg = np.sqrt(_edt_sq(~m))
    d_fg = np.sqrt(_edt_sq(m))
    return np.where(m, d_bg - 0.5, -(d_fg - 0.5))


# ---------------------------------------------------------------------------
# PPM / PGM


def _read_netpbm(path, magic: bytes):
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated header")
        tokens.append(data[start:pos])
    if tokens[0] != magic:
        raise ValueError(f"{path}: expected {magic.decode()} file, got {tokens[0][:2]!r}")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit files are supported")
    pos += 1  # single whitespace before the raster
    return data[pos:], w, h


def read_ppm(path) -> np.ndarray:
    raw, w, h = _read_netpbm(path, b"P6")
    if len(raw) < w * h * 3:
        raise ValueError(f"{path}: raster is truncated")
    return np.frombuffer(raw[: w * h * 3], dtype=np.uint8).reshape(h, w, 3).copy()


def read_pgm(path) -> np.ndarray:
    raw, w, h = _read_netpbm(path, b"P5")
    if len(raw) < w * h:
        raise ValueError(f"{path}: raster is truncated")
    return np.frombuffer(raw[: w * h], dtype=np.uint8).reshape(h, w).copy()


def write_ppm(path, rgb) -> None:
    a = np.ascontiguousarray(rgb, dtype=np.uint8)
    h, w, _ = a.shape
    Path(path).write_bytes(b"P6\n%d %d\n255\n" % (w, h) + a.tobytes())


def write_pgm(path, gray) -> None:
    a = np.ascontiguousarray(gray, dtype=np.uint8)
    h, w = a.shape
    Path(path).write_bytes(b"P5\n%d %d\n255\n" % (w, h) + a.tobytes())


def read_mask(path) -> np.ndarray:
    return read_pgm(path) >= 128


def write_mask(path, mask) -> None:
    write_pgm(path, np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8))


def write_score(path, omega) -> None:
    """Debug dump of Ω clamped to [0, 255]."""
    write_pgm(path, np.clip(np.round(omega), 0, 255).astype(np.uint8))
