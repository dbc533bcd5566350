"""Corpus access: reads the simulation toolkit's sample directories.

A corpus directory holds ``manifest.json`` plus ``sample_*/`` directories
with ``input.ustn`` (6, N, M float32), ``target.ustn`` (N, M float32) and
``meta.json``.  Inputs are standardized per plane; targets are z-scored
with corpus statistics stored alongside the checkpoint so predictions map
back to m/s.
"""

from __future__ import annotations

import json
import os

import numpy as np
import torch
from torch.utils.data import Dataset

from .ustn import read_tensor

EPS = 1e-8


def normalize_planes(planes: np.ndarray) -> np.ndarray:
    """Per-plane standardization of the (6, N, M) input tensor."""
    out = np.empty_like(planes, dtype=np.float32)
    for k in range(planes.shape[0]):
        p = planes[k]
        std = p.std()
        out[k] = (p - p.mean()) / (std + EPS)
    return out


def thermal_noise_sigma(meta: dict, level_db: float) -> float:
    """Image-domain sigma for channel noise at level_db re the pulse RMS.

    Channel noise of RMS ``pulse_rms * 10^(dB/20)`` sums incoherently over
    the receive elements during beamforming, so the image-plane sigma is
    scaled by sqrt(n_elements).  The mapping is approximate but consistent
    between training augmentation and evaluation injection.
    """
    pulse_rms = float(meta.get("pulse_rms") or 0.5)
    n_el = int(meta.get("n_elements") or 128)
    return pulse_rms * 10.0 ** (level_db / 20.0) * np.sqrt(n_el)


def inject_thermal_noise(planes: np.ndarray, meta: dict, level_db: float,
                         rng: np.random.Generator) -> np.ndarray:
    """Add white Gaussian channel-equivalent noise to raw IQ planes."""
    sigma = thermal_noise_sigma(meta, level_db)
    return planes + rng.normal(0.0, sigma, planes.shape).astype(np.float32)


class CorpusDataset(Dataset):
    """Torch dataset over a corpus split with optional train-time TNA."""

    def __init__(self, corpus_dir, split: str = "train", tna_probability: float = 0.0,
                 tna_range_db=(-120.0, -80.0), seed: int = 0,
                 target_stats: tuple[float, float] | None = None):
        self.corpus_dir = os.fspath(corpus_dir)
        with open(os.path.join(self.corpus_dir, "manifest.json")) as f:
            self.manifest = json.load(f)
        if split == "all":
            ids = sorted(self.manifest["train"] + self.manifest["val"])
        else:
            ids = list(self.manifest[split])
        if not ids:
            raise ValueError(f"corpus split {split!r} is empty")
        self.ids = ids
        self.tna_probability = tna_probability
        self.tna_range_db = tna_range_db
        self.rng = np.random.default_rng(seed)
        if target_stats is None:
            target_stats = self.compute_target_stats()
        self.target_mean, self.target_std = target_stats

    def compute_target_stats(self) -> tuple[float, float]:
        total, total2, n = 0.0, 0.0, 0
        for sid in self.ids:
            t = read_tensor(os.path.join(self.corpus_dir, sid, "target.ustn")).astype(np.float64)
            total += t.sum()
            total2 += (t * t).sum()
            n += t.size
        mean = total / n
        var = max(total2 / n - mean * mean, 1e-6)
        return float(mean), float(np.sqrt(var))

    def __len__(self):
        return len(self.ids)

    def load_raw(self, idx: int):
        sid = self.ids[idx]
        d = os.path.join(self.corpus_dir, sid)
        planes = read_tensor(os.path.join(d, "input.ustn"))
        target = read_tensor(os.path.join(d, "target.ustn"))
        with open(os.path.join(d, "meta.json")) as f:
            meta = json.load(f)
        return planes, target, meta

    def __getitem__(self, idx: int):
        planes, target, meta = self.load_raw(idx)
        if self.tna_probability > 0 and self.rng.random() < self.tna_probability:
            level = self.rng.uniform(*self.tna_range_db)
            planes = inject_thermal_noise(planes, meta, level, self.rng)
        x = torch.from_numpy(normalize_planes(planes))
        y = (torch.from_numpy(target.astype(np.float32)) - self.target_mean) / self.target_std
        return x, y.unsqueeze(0)

    def denormalize(self, y: torch.Tensor) -> torch.Tensor:
        return y * self.target_std + self.target_mean
