import numpy as np
import pytest
from scipy.ndimage import gaussian_filter


def make_hr_patch(rng: np.random.Generator, size: int = 128) -> np.ndarray:
    """Synthetic photo-like patch: three band-limited layers (coarse,
    mid, fine) with per-channel normalized energies.

    Content varies freely between patches while the energy spectrum
    stays stationary across the corpus, like a photographic collection
    shot under consistent exposure and texture density; blur and noise
    degradations then act on every patch comparably."""
    base = gaussian_filter(rng.standard_normal((size, size, 3)), (8, 8, 0))
    base = base / base.std(axis=(0, 1), keepdims=True) * 14.0
    fine = gaussian_filter(rng.standard_normal((size, size, 3)), (1, 1, 0))
    fine = fine / fine.std(axis=(0, 1), keepdims=True) * 26.0
    mid = gaussian_filter(rng.standard_normal((size, size, 3)), (3, 3, 0))
    mid = mid / mid.std(axis=(0, 1), keepdims=True) * 12.0
    return np.clip(128.0 + base + mid + fine, 0, 255).astype(np.uint8)


def make_hr_pool(seed: int, count: int, size: int = 128) -> list[np.ndarray]:
    rng = np.random.Generator(np.random.Philox(key=[seed, 0xC0FFEE]))
    return [make_hr_patch(rng, size) for _ in range(count)]


def write_source_images(directory, seed: int, n_images: int,
                        grid: int = 8) -> None:
    """Write mosaic source images (grid x grid patches of 128 px each)
    that a synthesizer can tile back into the same patch stream."""
    from srga.degrade import write_image

    rng = np.random.Generator(np.random.Philox(key=[seed, 0xC0FFEE]))
    for i in range(n_images):
        rows = []
        for _ in range(grid):
            rows.append(np.concatenate(
                [make_hr_patch(rng) for _ in range(grid)], axis=1))
        write_image(directory / f"src{i:03d}.png", np.concatenate(rows, axis=0))


@pytest.fixture(scope="session")
def hr_pool_small():
    """120 HR patches: enough for pipeline tests at reduced dimension."""
    return make_hr_pool(seed=2024, count=120)
