"""Colour composites of a known mask over a flat, noisy background."""

from __future__ import annotations

import numpy as np

from ..silhouette import rgb_to_lab

BACKGROUND_RGB = (150, 150, 150)


def plant_colour(background=BACKGROUND_RGB, delta_l: float = 30.0) -> np.ndarray:
    """A leaf green whose L* sits ``delta_l`` below the background's."""
    target = rgb_to_lab(np.array([[background]], dtype=np.uint8))[0, 0, 0] - delta_l
    best, err = None, np.inf
    # search the scale of a fixed green hue for the requested luminance
    for s in np.linspace(0.05, 1.5, 600):
        rgb = np.clip(np.round(np.array([70.0, 140.0, 45.0]) * s), 0, 255).astype(np.uint8)
        e = abs(rgb_to_lab(rgb[None, None])[0, 0, 0] - target)
        if e < err:
            best, err = rgb, e
    return best


def make_composite(
    mask,
    rng: np.random.Generator,
    background=BACKGROUND_RGB,
    delta_l: float = 30.0,
    noise: float = 2.0,
    texture: float = 6.0,
) -> tuple[np.ndarray, np.ndarray]:
    """(image, separate background capture) for a boolean paste mask.

    Both frames carry independent Gaussian sensor noise; plant pixels get
    extra texture noise.
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    base = np.broadcast_to(np.asarray(background, dtype=float), (h, w, 3))
    bg = base + rng.normal(scale=noise, size=(h, w, 3))
    img = base + rng.normal(scale=noise, size=(h, w, 3))
    leaf = plant_colour(background, delta_l).astype(float)
    tex = rng.normal(scale=texture, size=(h, w, 1))
    img = np.where(mask[..., None], leaf + tex + rng.normal(scale=noise, size=(h, w, 3)), img)
    to8 = lambda a: np.clip(np.round(a), 0, 255).astype(np.uint8)
    return to8(img), to8(bg)


def f1_score(pred, truth) -> float:
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    tp = np.sum(pred & truth)
    fp = np.sum(pred & ~truth)
    fn = np.sum(~pred & truth)
    if tp == 0:
        return 1.0 if fp == 0 and fn == 0 else 0.0
    return float(2 * tp / (2 * tp + fp + fn))
