"""Deterministic, framework-free convolutional feature extractor.

Stands in for a trained super-resolution backbone so the statistics
pipeline can run end-to-end at desk scale: four 3x3 convolutions
(channels 3 -> 16 -> 32 -> 64 -> 64), rectification after every layer
except the last, stride 1, reflection padding, and no bias or
normalization terms. The absence of bias makes the network exactly
positively homogeneous: scaling all input intensities by c > 0 scales
every feature by the same factor.

Weights are a pure function of the seed: layer l draws its
(3, 3, c_in, c_out) tensor in C order from a Philox generator keyed by
(seed, l), uniform on +-sqrt(3 / fan_in) with fan_in = 9 * c_in.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ValidationError
from .featstore import FeatureSet

_MASK64 = (1 << 64) - 1


class ProbeNet(BaseEstimator, TransformerMixin):
    """Fixed-weight convolutional probe producing (N, H, W, 64) features.

    Stateless apart from the seed; `fit` exists only for pipeline
    compatibility. Inputs are RGB patches on the [0, 255] scale (uint8 or
    float); they are divided by 255 internally.
    """

    channels = (3, 16, 32, 64, 64)
    kernel_size = 3
    _chunk = 64

    def __init__(self, seed: int = 0):
        self.seed = seed

    # -- weights ------------------------------------------------------------

    def _weights(self) -> list[np.ndarray]:
        if getattr(self, "_weight_cache_seed", None) != self.seed:
            weights = []
            for layer, (c_in, c_out) in enumerate(
                    zip(self.channels[:-1], self.channels[1:])):
                key = np.array([self.seed & _MASK64, layer], dtype=np.uint64)
                rng = np.random.Generator(np.random.Philox(key=key))
                bound = np.sqrt(3.0 / (self.kernel_size ** 2 * c_in))
                w = rng.uniform(-bound, bound,
                                size=(self.kernel_size, self.kernel_size,
                                      c_in, c_out))
                weights.append(w.astype(np.float32))
            self._weight_cache = weights
            self._weight_cache_seed = self.seed
        return self._weight_cache

    # -- sklearn surface ----------------------------------------------------

    def fit(self, X=None, y=None):
        return self

    def transform(self, patches) -> np.ndarray:
        """Extract features for a batch of same-sized RGB patches.

        Accepts a list of (H, W, 3) arrays or a stacked (N, H, W, 3)
        array; returns float32 features of shape (N, H, W, 64).
        """
        batch = self._stack(patches)
        out = np.empty(batch.shape[:3] + (self.channels[-1],), dtype=np.float32)
        for start in range(0, batch.shape[0], self._chunk):
            out[start:start + self._chunk] = self._forward(
                batch[start:start + self._chunk])
        return out

    def extract(self, patches, model_id: str | None = None,
                dataset_id: str = "unknown") -> FeatureSet:
        """Like transform, but wraps the result with provenance metadata."""
        tensors = self.transform(patches)
        return FeatureSet(
            tensors=tensors,
            model_id=model_id or f"probe-seed{self.seed}",
            dataset_id=dataset_id,
            layer_tag="conv4",
        )

    # -- internals ----------------------------------------------------------

    def _stack(self, patches) -> np.ndarray:
        if isinstance(patches, np.ndarray) and patches.ndim == 4:
            batch = patches
        else:
            patches = list(patches)
            if not patches:
                raise ValidationError("no patches to extract features from")
            shapes = {np.asarray(p).shape for p in patches}
            if len(shapes) != 1:
                raise ValidationError(
                    f"patches have mixed shapes: {sorted(shapes)}")
            batch = np.stack([np.asarray(p) for p in patches])
        if batch.ndim != 4 or batch.shape[3] != 3:
            raise ValidationError(
                f"expected (N, H, W, 3) input, got {batch.shape}")
        if batch.shape[1] < self.kernel_size or batch.shape[2] < self.kernel_size:
            raise ValidationError("patches are smaller than the kernel")
        return batch.astype(np.float32) / np.float32(255.0)

    def _forward(self, x: np.ndarray) -> np.ndarray:
        weights = self._weights()
        for layer, w in enumerate(weights):
            x = self._conv(x, w)
            if layer < len(weights) - 1:
                np.maximum(x, 0.0, out=x)
        return x

    @staticmethod
    def _conv(x: np.ndarray, w: np.ndarray) -> np.ndarray:
        """3x3 stride-1 convolution with reflection padding (b a | a b c).

        Runs one GEMM per kernel tap over the whole padded array and
        accumulates shifted views of the products; this avoids the
        gather copy of an im2col layout and keeps the BLAS path hot.
        """
        n, h, wd, c_in = x.shape
        k = w.shape[0]
        pad = k // 2
        padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)),
                        mode="reflect")
        flat = padded.reshape(-1, c_in)
        out = np.zeros((n, h, wd, w.shape[3]), dtype=np.float32)
        for dy in range(k):
            for dx in range(k):
                z = (flat @ w[dy, dx]).reshape(
                    n, h + 2 * pad, wd + 2 * pad, -1)
                out += z[:, dy:dy + h, dx:dx + wd, :]
        return out
