"""Array plumbing shared by every attack: distances, clipping, rounding, RNG.

Images are float64 (H, W, C) arrays in [0, 255].  Grayscale callers pass
C=1; nothing in the toolkit squeezes that axis.  All stochastic code takes
an explicit np.random.Generator so runs replay bit-for-bit.
"""

import numpy as np

from .errors import ContractViolation

PIXEL_MIN = 0.0
PIXEL_MAX = 255.0


def make_rng(seed):
    """PCG64 generator for a given integer seed."""
    if seed is None or int(seed) != seed or seed < 0:
        raise ContractViolation("seed must be a non-negative integer, got %r" % (seed,))
    return np.random.Generator(np.random.PCG64(int(seed)))


def as_image(x, name="image"):
    """Validate and coerce x to a float64 (H, W, C) array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 3:
        raise ContractViolation(
            "%s must be (H, W, C), got shape %r" % (name, tuple(arr.shape)))
    if arr.shape[0] < 1 or arr.shape[1] < 1 or arr.shape[2] < 1:
        raise ContractViolation(
            "%s has a zero-length axis: %r" % (name, tuple(arr.shape)))
    return arr


def check_same_shape(a, b, what="arrays"):
    if a.shape != b.shape:
        raise ContractViolation(
            "%s must share a shape, got %r vs %r" % (what, a.shape, b.shape))


def l2_distance(a, b):
    """Euclidean distance between two images of identical shape."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    check_same_shape(a, b, "l2_distance arguments")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def clip_to_valid(x):
    """Clip into the [0, 255] pixel box.  Always returns a fresh array."""
    return np.clip(np.asarray(x, dtype=np.float64), PIXEL_MIN, PIXEL_MAX)


def round_for_query(x):
    """Quantize to whole pixel values, halves away from zero.

    np.round would take 0.5 to 0.0 (banker's rounding); classifiers that
    consume uint8 inputs round half up, so match that: sign(x)*floor(|x|+0.5).
    Inputs are expected inside [0, 255] already, so the sign term only
    matters for tiny negative float noise that clipping already removed.
    """
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def is_rounded(x, tol=0.0):
    """True when every entry is already a whole number (within tol)."""
    x = np.asarray(x, dtype=np.float64)
    return bool(np.all(np.abs(x - np.round(x)) <= tol))


def gaussian_noise(shape, stddev, rng):
    """I.i.d. N(0, stddev^2) array of the given shape."""
    if stddev <= 0:
        raise ContractViolation("stddev must be positive, got %r" % (stddev,))
    if not isinstance(rng, np.random.Generator):
        raise ContractViolation("rng must be a numpy Generator")
    return rng.normal(0.0, stddev, size=shape)
