"""Deterministic stub models and the model-spec parser.

A served model exposes predict(u8 image) -> class index, a declared
(height, width, channels) shape and num_classes.  Predictions must be
deterministic per input; models that score classes break argmax ties by
the lowest class index.
"""

import numpy as np


class ModelSpecError(ValueError):
    pass


class ChecksumModel:
    """Label = sum of all pixel bytes mod num_classes."""

    def __init__(self, shape, num_classes):
        self.shape = tuple(int(v) for v in shape)
        self.num_classes = int(num_classes)
        if len(self.shape) != 3 or any(v < 1 for v in self.shape):
            raise ModelSpecError("shape must be three positive ints, got %r"
                                 % (shape,))
        if self.num_classes < 2:
            raise ModelSpecError("num_classes must be >= 2")

    def predict(self, img):
        img = np.asarray(img, dtype=np.uint8)
        if img.shape != self.shape:
            raise ValueError("shape mismatch: expected %r, got %r"
                             % (self.shape, img.shape))
        return int(img.sum(dtype=np.int64) % self.num_classes)


class ConstModel:
    """Always answers one fixed label; handy for protocol tests."""

    def __init__(self, shape, num_classes, label):
        self.shape = tuple(int(v) for v in shape)
        self.num_classes = int(num_classes)
        self.label = int(label)
        if len(self.shape) != 3 or any(v < 1 for v in self.shape):
            raise ModelSpecError("shape must be three positive ints, got %r"
                                 % (shape,))
        if not (2 <= self.num_classes and 0 <= self.label < self.num_classes):
            raise ModelSpecError("label %r outside %r classes"
                                 % (label, num_classes))

    def predict(self, img):
        img = np.asarray(img, dtype=np.uint8)
        if img.shape != self.shape:
            raise ValueError("shape mismatch: expected %r, got %r"
                             % (self.shape, img.shape))
        return self.label


def _parse_shape(text):
    parts = text.lower().split("x")
    if len(parts) != 3:
        raise ModelSpecError("shape must look like HxWxC, got %r" % (text,))
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise ModelSpecError("shape must look like HxWxC, got %r" % (text,))


def load_model(spec):
    """Parse a --model spec string.

    checksum:HxWxC:N      byte-sum mod N
    const:HxWxC:N:LABEL   fixed label out of N classes
    """
    parts = str(spec).split(":")
    kind = parts[0].strip().lower()
    try:
        if kind == "checksum" and len(parts) == 3:
            return ChecksumModel(_parse_shape(parts[1]), int(parts[2]))
        if kind == "const" and len(parts) == 4:
            return ConstModel(_parse_shape(parts[1]), int(parts[2]),
                              int(parts[3]))
    except ValueError as e:
        raise ModelSpecError(str(e))
    raise ModelSpecError("unrecognized model spec %r" % (spec,))
