"""Focus slicing: a space-to-depth rearrangement of an (H, W, C) feature map.

Channel blocks of the output are ordered (even row / even col,
odd row / even col, even row / odd col, odd row / odd col), each block keeping
the input channel order. Arrays are numpy ``(height, width, channels)`` in
row-major layout.
"""

from __future__ import annotations

import numpy as np

_OFFSETS = ((0, 0), (1, 0), (0, 1), (1, 1))  # (row, col) parity per block


def focus_slice(x: np.ndarray) -> np.ndarray:
    """(H, W, C) -> (H/2, W/2, 4C)."""
    x = np.asarray(x)
    if x.ndim != 3:
        raise ValueError(f"expected an (H, W, C) array, got shape {x.shape}")
    h, w, _ = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"height and width must be even, got {h}x{w}")
    return np.concatenate([x[r::2, c::2, :] for r, c in _OFFSETS], axis=-1)


def focus_unslice(y: np.ndarray) -> np.ndarray:
    """Inverse of :func:`focus_slice`: (H, W, 4C) -> (2H, 2W, C)."""
    y = np.asarray(y)
    if y.ndim != 3 or y.shape[2] % 4:
        raise ValueError(f"expected (H, W, 4C) array, got shape {y.shape}")
    h, w, c4 = y.shape
    c = c4 // 4
    out = np.empty((2 * h, 2 * w, c), dtype=y.dtype)
    for k, (r, col) in enumerate(_OFFSETS):
        out[r::2, col::2, :] = y[:, :, k * c:(k + 1) * c]
    return out
