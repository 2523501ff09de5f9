"""Normalization and the signal/image reshaping used by the convolutional nets."""

from __future__ import annotations

import numpy as np

from .exceptions import DegenerateSignalError, ShapeError
from .signals import DEFAULT_SAMPLE_RATE, ComplexSignal

IMAGE_COLS = 80  # half a symbol period at the default rate (160 samples/symbol)


def normalize(signal: ComplexSignal) -> ComplexSignal:
    """Scale a signal by its largest I/Q component magnitude.

    The divisor is the joint maximum of |Re| and |Im| over the record, so the
    result has every component in [-1, 1] with the extreme component exactly
    at magnitude 1. All-zero input raises DegenerateSignalError.
    """
    scale = _component_scale(signal.samples)
    # divide the float view so each component sees one true division; complex
    # array division multiplies by a rounded reciprocal and misses the exact 1.0
    scaled = (np.ascontiguousarray(signal.samples).view(np.float64) / scale).view(np.complex128)
    return ComplexSignal(scaled, signal.sample_rate)


def _component_scale(samples: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(samples.real))), float(np.max(np.abs(samples.imag))))
    if scale == 0.0:
        raise DegenerateSignalError("cannot normalize an all-zero signal")
    return scale


def signal_to_image(signal: ComplexSignal | np.ndarray, cols: int = IMAGE_COLS) -> np.ndarray:
    """Reshape a length-M record into a (2, M/cols, cols) float image.

    Sample k lands at row k // cols, column k % cols; channel 0 is the real
    part, channel 1 the imaginary part. M must divide evenly by cols.
    """
    samples = signal.samples if isinstance(signal, ComplexSignal) else np.asarray(signal)
    if samples.ndim != 1:
        raise ShapeError(f"expected a 1-D record, got shape {samples.shape}")
    if cols < 1 or samples.size % cols != 0:
        raise ShapeError(f"record length {samples.size} does not divide into rows of {cols}")
    grid = samples.reshape(samples.size // cols, cols)
    return np.stack([grid.real.astype(np.float64), grid.imag.astype(np.float64)])


def image_to_signal(image: np.ndarray,
                    sample_rate: float = DEFAULT_SAMPLE_RATE) -> ComplexSignal:
    """Exact inverse of signal_to_image (bitwise round trip)."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[0] != 2:
        raise ShapeError(f"expected shape (2, rows, cols), got {image.shape}")
    samples = image[0].astype(np.float64) + 1j * image[1].astype(np.float64)
    return ComplexSignal(samples.reshape(-1), sample_rate)


def batch_to_images(signals: np.ndarray, cols: int = IMAGE_COLS) -> np.ndarray:
    """Normalize each row of an (N, M) complex array and stack the images.

    Returns float32 (N, 2, M/cols, cols), the layout consumed by the networks.
    """
    signals = np.asarray(signals)
    if signals.ndim != 2:
        raise ShapeError(f"expected (N, M) signals, got shape {signals.shape}")
    n, m = signals.shape
    if cols < 1 or m % cols != 0:
        raise ShapeError(f"record length {m} does not divide into rows of {cols}")
    signals = np.ascontiguousarray(signals, dtype=np.complex128)
    scales = np.maximum(np.max(np.abs(signals.real), axis=1), np.max(np.abs(signals.imag), axis=1))
    if np.any(scales == 0.0):
        raise DegenerateSignalError("batch contains an all-zero signal")
    scaled = (signals.view(np.float64) / scales[:, None]).view(np.complex128)
    grid = scaled.reshape(n, m // cols, cols)
    return np.stack([grid.real, grid.imag], axis=1).astype(np.float32)
