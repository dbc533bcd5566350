"""Inference: emit sound-speed estimates in the toolkit tensor format."""

from __future__ import annotations

import json
import os

import numpy as np
import torch

from .data import inject_thermal_noise, normalize_planes
from .train import load_checkpoint
from .ustn import read_tensor, write_tensor


def predict_sample(model, ckpt: dict, sample_dir, noise_db: float | None = None,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Estimate the sound-speed map of one stored sample, in m/s."""
    planes = read_tensor(os.path.join(sample_dir, "input.ustn"))
    if noise_db is not None:
        with open(os.path.join(sample_dir, "meta.json")) as f:
            meta = json.load(f)
        planes = inject_thermal_noise(planes, meta, noise_db,
                                      rng or np.random.default_rng(0))
    x = torch.from_numpy(normalize_planes(planes)).unsqueeze(0)
    with torch.no_grad():
        y = model(x)[0, 0].numpy()
    return y * ckpt["target_std"] + ckpt["target_mean"]


def predict_corpus(checkpoint_path, corpus_dir, ids=None, noise_db: float | None = None,
                   seed: int = 0, out_name: str = "estimate.ustn") -> list[str]:
    """Write ``estimate.ustn`` next to each sample so the simulation
    toolkit's evaluation commands can score them."""
    model, ckpt = load_checkpoint(checkpoint_path)
    corpus_dir = os.fspath(corpus_dir)
    if ids is None:
        with open(os.path.join(corpus_dir, "manifest.json")) as f:
            manifest = json.load(f)
        ids = [e["id"] for e in manifest["samples"]]
    rng = np.random.default_rng(seed)
    written = []
    for sid in ids:
        d = os.path.join(corpus_dir, sid)
        est = predict_sample(model, ckpt, d, noise_db=noise_db, rng=rng)
        write_tensor(os.path.join(d, out_name), est.astype(np.float32))
        written.append(sid)
    return written
