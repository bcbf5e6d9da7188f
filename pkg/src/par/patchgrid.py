"""Patch geometry and the three masks driving patch selection.

A grid tiles an (H, W, C) image with square patch_size x patch_size
patches; edge patches are ragged when patch_size does not divide H or W.
The noise-magnitude mask m_n holds each patch's l2 noise norm (channels
pooled), the sensitivity mask m_s is binary and flips 1 -> 0 when zeroing
a patch breaks adversariality, and their elementwise product m_q ranks
patches for the next removal attempt.
"""

from dataclasses import dataclass

import numpy as np

from .core import check_same_shape
from .errors import ContractViolation
from .imgio import mask_to_text, write_heatmap_pgm
from .kernels import patch_l2_norms


@dataclass(frozen=True)
class PatchGrid:
    patch_size: int
    rows: int
    cols: int
    image_shape: tuple

    def patch_slice(self, row, col):
        """(row_slice, col_slice) of patch (row, col), clipped to the image."""
        self._check_index(row, col)
        h, w, _ = self.image_shape
        ps = self.patch_size
        return (slice(row * ps, min((row + 1) * ps, h)),
                slice(col * ps, min((col + 1) * ps, w)))

    def _check_index(self, row, col):
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise ContractViolation(
                "patch index (%r, %r) outside %dx%d grid" % (row, col, self.rows, self.cols))


@dataclass
class MaskPair:
    m_n: np.ndarray
    m_s: np.ndarray


def build_grid(image_shape, patch_size):
    """Grid of ceil(H/ps) x ceil(W/ps) patches over an (H, W, C) image."""
    if len(image_shape) != 3:
        raise ContractViolation("image_shape must be (H, W, C), got %r" % (image_shape,))
    h, w, c = image_shape
    if min(h, w, c) < 1:
        raise ContractViolation("image_shape has a zero axis: %r" % (image_shape,))
    if patch_size < 1 or patch_size != int(patch_size):
        raise ContractViolation("patch_size must be a positive integer, got %r" % (patch_size,))
    patch_size = int(patch_size)
    if patch_size > min(h, w):
        raise ContractViolation(
            "patch_size %d exceeds min image side %d" % (patch_size, min(h, w)))
    rows = -(-h // patch_size)
    cols = -(-w // patch_size)
    return PatchGrid(patch_size=patch_size, rows=rows, cols=cols,
                     image_shape=(int(h), int(w), int(c)))


def init_masks(x, x_adv, grid):
    """Fresh masks for the current noise: m_n from per-patch norms, m_s all-ones."""
    x = np.asarray(x, dtype=np.float64)
    x_adv = np.asarray(x_adv, dtype=np.float64)
    check_same_shape(x, x_adv, "init_masks images")
    if tuple(x.shape) != tuple(grid.image_shape):
        raise ContractViolation(
            "grid built for %r, images are %r" % (grid.image_shape, x.shape))
    m_n = patch_l2_norms(x_adv - x, grid.patch_size)
    m_s = np.ones((grid.rows, grid.cols), dtype=np.float64)
    return MaskPair(m_n=m_n, m_s=m_s)


def query_value(masks):
    """m_q = m_n * m_s elementwise."""
    return masks.m_n * masks.m_s


def select_patch(m_q):
    """Argmax entry of m_q; ties go to the smallest row, then column.

    All-zero m_q is a contract violation: the caller should halve the patch
    size instead of selecting.
    """
    m_q = np.asarray(m_q, dtype=np.float64)
    if m_q.sum() <= 0:
        raise ContractViolation("query-value mask sums to zero; nothing to select")
    flat = int(np.argmax(m_q))  # np.argmax returns the first max in C order
    return flat // m_q.shape[1], flat % m_q.shape[1]


def zero_patch(z, grid, row, col):
    """Copy of noise z with patch (row, col) zeroed across all channels."""
    z = np.asarray(z, dtype=np.float64)
    if tuple(z.shape) != tuple(grid.image_shape):
        raise ContractViolation(
            "noise shape %r does not match grid image shape %r" % (z.shape, grid.image_shape))
    rs, cs = grid.patch_slice(row, col)
    out = z.copy()
    out[rs, cs, :] = 0.0
    return out


def halve(grid):
    """Next grid in the coarse-to-fine schedule: patch_size // 2."""
    if grid.patch_size < 2:
        raise ContractViolation("cannot halve a patch size of 1")
    return build_grid(grid.image_shape, grid.patch_size // 2)


def mask_text(matrix):
    return mask_to_text(matrix)


def export_mask_pgm(path, matrix):
    write_heatmap_pgm(path, matrix)
