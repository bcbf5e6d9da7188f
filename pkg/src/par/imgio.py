"""Image and mask I/O.

Native format is a 16-byte header (magic ``PARIMG01``, then H, W, C and a
reserved word as little-endian u16) followed by H*W*C float64 values in
row-major order.  8-bit PGM (P5) and PPM (P6) are supported for reading
external images; PGM is also the heatmap export target.
"""

import struct

import numpy as np

from .core import as_image
from .errors import ContractViolation

MAGIC = b"PARIMG01"
_HEADER = struct.Struct("<8sHHHH")


def write_parimg(path, image):
    image = as_image(image)
    h, w, c = image.shape
    if max(h, w, c) > 0xFFFF:
        raise ContractViolation("axis too large for u16 header: %r" % (image.shape,))
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, h, w, c, 0))
        f.write(np.ascontiguousarray(image, dtype="<f8").tobytes())


def read_parimg(path):
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ContractViolation("%s: truncated header" % path)
        magic, h, w, c, _reserved = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ContractViolation("%s: bad magic %r" % (path, magic))
        n = h * w * c
        raw = f.read(8 * n)
        if len(raw) != 8 * n:
            raise ContractViolation(
                "%s: expected %d float64 values, file is short" % (path, n))
        extra = f.read(1)
        if extra:
            raise ContractViolation("%s: trailing bytes after pixel data" % path)
    return np.frombuffer(raw, dtype="<f8").reshape(h, w, c).astype(np.float64)


def _read_pnm_token(f):
    # tokens are separated by whitespace; '#' starts a comment to end of line
    tok = b""
    while True:
        ch = f.read(1)
        if not ch:
            if tok:
                return tok
            raise ContractViolation("unexpected end of PNM header")
        if ch == b"#":
            while ch and ch != b"\n":
                ch = f.read(1)
            continue
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def read_pnm(path):
    """Read an 8-bit binary PGM (P5) or PPM (P6) as float64 (H, W, C)."""
    with open(path, "rb") as f:
        magic = _read_pnm_token(f)
        if magic not in (b"P5", b"P6"):
            raise ContractViolation("%s: unsupported PNM magic %r" % (path, magic))
        w = int(_read_pnm_token(f))
        h = int(_read_pnm_token(f))
        maxval = int(_read_pnm_token(f))
        if maxval <= 0 or maxval > 255:
            raise ContractViolation(
                "%s: only 8-bit PNM supported, maxval=%d" % (path, maxval))
        c = 1 if magic == b"P5" else 3
        n = h * w * c
        raw = f.read(n)
        if len(raw) != n:
            raise ContractViolation("%s: expected %d pixel bytes" % (path, n))
    arr = np.frombuffer(raw, dtype=np.uint8).reshape(h, w, c)
    return arr.astype(np.float64)


def write_pgm(path, gray):
    """Write a 2-D uint8-range array as binary PGM (P5)."""
    gray = np.asarray(gray)
    if gray.ndim == 3 and gray.shape[2] == 1:
        gray = gray[:, :, 0]
    if gray.ndim != 2:
        raise ContractViolation("PGM writer needs a 2-D array, got %r" % (gray.shape,))
    data = np.clip(np.round(gray), 0, 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (w, h))
        f.write(data.tobytes())


def heatmap_bytes(matrix):
    """Linearly rescale a non-negative matrix so its max maps to 255.

    An all-zero matrix stays all-zero rather than dividing by zero.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2:
        raise ContractViolation("heatmap needs a 2-D matrix, got %r" % (m.shape,))
    peak = float(m.max()) if m.size else 0.0
    if peak <= 0.0:
        return np.zeros(m.shape, dtype=np.uint8)
    return np.clip(np.round(m * (255.0 / peak)), 0, 255).astype(np.uint8)


def write_heatmap_pgm(path, matrix):
    write_pgm(path, heatmap_bytes(matrix))


def mask_to_text(matrix, fmt="%g"):
    """Plain-text dump of a 2-D matrix, one row per line, space-separated."""
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise ContractViolation("mask dump needs a 2-D matrix, got %r" % (m.shape,))
    lines = [" ".join(fmt % v for v in row) for row in m]
    return "\n".join(lines) + "\n"
