"""Binary morphology with square structuring elements on boolean grids.

Pixels outside the array count as background (False) for both operations, so
erosion shrinks regions touching the border and dilation is clipped at it.
"""

from __future__ import annotations

import numpy as np


def _shifted(mask: np.ndarray, offset: int, axis: int) -> np.ndarray:
    out = np.zeros_like(mask)
    if offset == 0:
        return mask.copy()
    if abs(offset) >= mask.shape[axis]:
        return out
    src = [slice(None)] * mask.ndim
    dst = [slice(None)] * mask.ndim
    if offset > 0:
        src[axis] = slice(0, mask.shape[axis] - offset)
        dst[axis] = slice(offset, None)
    else:
        src[axis] = slice(-offset, None)
        dst[axis] = slice(0, mask.shape[axis] + offset)
    out[tuple(dst)] = mask[tuple(src)]
    return out


def _axis_pass(mask: np.ndarray, radius: int, axis: int, combine) -> np.ndarray:
    out = mask.copy()
    for s in range(1, radius + 1):
        combine(out, _shifted(mask, s, axis), out=out)
        combine(out, _shifted(mask, -s, axis), out=out)
    return out


def binary_dilate(mask: np.ndarray, kernel_size: int = 3, iterations: int = 1) -> np.ndarray:
    """Dilate `mask` with a kernel_size x kernel_size square, `iterations` times."""
    if kernel_size % 2 != 1 or kernel_size < 1:
        raise ValueError("kernel_size must be odd and positive")
    radius = kernel_size // 2
    out = np.asarray(mask, dtype=bool).copy()
    for _ in range(iterations):
        out = _axis_pass(out, radius, 0, np.logical_or)
        out = _axis_pass(out, radius, 1, np.logical_or)
    return out


def binary_erode(mask: np.ndarray, kernel_size: int = 3, iterations: int = 1) -> np.ndarray:
    """Erode `mask` with a kernel_size x kernel_size square, `iterations` times."""
    if kernel_size % 2 != 1 or kernel_size < 1:
        raise ValueError("kernel_size must be odd and positive")
    radius = kernel_size // 2
    out = np.asarray(mask, dtype=bool).copy()
    for _ in range(iterations):
        out = _axis_pass(out, radius, 0, np.logical_and)
        out = _axis_pass(out, radius, 1, np.logical_and)
    return out
