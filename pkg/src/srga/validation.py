"""Input validation helpers used across the package.

Images and patches are plain numpy arrays: 8-bit RGB rasters of shape
(H, W, 3). Feature tensors are float32 arrays of shape (N, H, W, C).
"""

from __future__ import annotations

import numpy as np

from .errors import DataError, ValidationError


def check_image(arr, name: str = "image") -> np.ndarray:
    """Validate an 8-bit RGB raster of shape (H, W, 3)."""
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValidationError(
            f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.dtype != np.uint8:
        raise ValidationError(f"{name} must be uint8, got {arr.dtype}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValidationError(f"{name} has empty spatial dimensions")
    return arr


def check_patch(arr, size: int | None = None, name: str = "patch") -> np.ndarray:
    """Validate an RGB patch, optionally enforcing an exact square size."""
    arr = check_image(arr, name=name)
    if size is not None and arr.shape[:2] != (size, size):
        raise ValidationError(
            f"{name} must be {size}x{size}, got {arr.shape[0]}x{arr.shape[1]}")
    return arr


def check_feature_array(arr, name: str = "features") -> np.ndarray:
    """Validate a float32 feature stack of shape (N, H, W, C).

    Non-finite values are a data error; the message names the first
    offending tensor index.
    """
    arr = np.asarray(arr)
    if arr.ndim != 4:
        raise ValidationError(
            f"{name} must be 4-D (N, H, W, C), got shape {arr.shape}")
    if arr.dtype != np.float32:
        raise ValidationError(f"{name} must be float32, got {arr.dtype}")
    if arr.shape[0] < 1:
        raise ValidationError(f"{name} must contain at least one tensor")
    finite_per_tensor = np.isfinite(arr).all(axis=(1, 2, 3))
    if not finite_per_tensor.all():
        idx = int(np.flatnonzero(~finite_per_tensor)[0])
        raise DataError(f"{name} contains NaN/Inf in tensor {idx}")
    return arr


def check_matrix(arr, name: str = "matrix") -> np.ndarray:
    """Validate a 2-D floating-point matrix."""
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    if not np.isfinite(arr).all():
        raise DataError(f"{name} contains non-finite values")
    return arr


def check_samples(arr, name: str = "samples") -> np.ndarray:
    """Flatten to a 1-D float64 sample vector and require finiteness."""
    x = np.asarray(arr, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValidationError(f"{name} is empty")
    if not np.isfinite(x).all():
        raise DataError(f"{name} contains non-finite values")
    return x
