"""Shared fixture builders for the test modules."""

import numpy as np


def cifar_record(label: int, fill=None, rng=None) -> bytes:
    """One 3073-byte CIFAR-10 record: label byte then 3072 pixel bytes."""
    if fill is not None:
        pixels = np.full(3072, fill, dtype=np.uint8)
    else:
        pixels = (rng or np.random.default_rng(label)).integers(0, 256, 3072, dtype=np.uint8)
    return bytes([label]) + pixels.tobytes()


def cifar_fixture(labels, seed=0):
    """Bytes plus the expected (pixels / 255, labels) for a hand-built file."""
    rng = np.random.default_rng(seed)
    pixels = rng.integers(0, 256, size=(len(labels), 3072), dtype=np.uint8)
    raw = b"".join(bytes([y]) + p.tobytes() for y, p in zip(labels, pixels))
    return raw, pixels.astype(np.float64) / 255.0, np.asarray(labels)
