"""Image emission: log-compressed B-mode and color-mapped speed maps."""

from __future__ import annotations

import numpy as np

DEFAULT_DYNAMIC_RANGE_DB = 60.0


def bmode(iq_pixels: np.ndarray, dynamic_range_db: float = DEFAULT_DYNAMIC_RANGE_DB) -> np.ndarray:
    """Log-compressed envelope as uint8 grayscale; a zero image stays black."""
    env = np.abs(np.asarray(iq_pixels))
    peak = env.max()
    if peak <= 0:
        return np.zeros(env.shape, dtype=np.uint8)
    db = 20.0 * np.log10(np.maximum(env / peak, 10.0 ** (-dynamic_range_db / 20.0 - 1)))
    scaled = (db + dynamic_range_db) / dynamic_range_db
    return (np.clip(scaled, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_bmode(path, iq_pixels: np.ndarray,
               dynamic_range_db: float = DEFAULT_DYNAMIC_RANGE_DB) -> None:
    import matplotlib.image
    matplotlib.image.imsave(path, bmode(iq_pixels, dynamic_range_db),
                            cmap="gray", vmin=0, vmax=255)


def save_speed_map(path, speed_map: np.ndarray, vmin: float = 1400.0,
                   vmax: float = 1700.0) -> None:
    import matplotlib.image
    matplotlib.image.imsave(path, np.asarray(speed_map, dtype=np.float64),
                            cmap="viridis", vmin=vmin, vmax=vmax)
