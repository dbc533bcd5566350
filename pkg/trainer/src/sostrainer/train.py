"""Training loop: AdamW, MSE loss, early stopping on validation loss."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
import torch
from torch.utils.data import DataLoader

from .data import CorpusDataset
from .model import ModelSpec, build_model


@dataclass
class TrainConfig:
    batch_size: int = 6
    epochs: int = 138
    learning_rate: float = 1e-3
    weight_decay: float = 1e-4
    early_stopping_patience: int = 20
    tna_probability: float = 0.0     # train-time re-augmentation
    tna_range_db: tuple = (-120.0, -80.0)
    seed: int = 0
    num_workers: int = 0
    device: str = "cpu"

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["tna_range_db"] = list(self.tna_range_db)
        return d


def seed_everything(seed: int):
    torch.manual_seed(seed)
    np.random.seed(seed % 2 ** 32)


def _epoch(model, loader, optimizer, device):
    training = optimizer is not None
    model.train(training)
    total, n = 0.0, 0
    with torch.set_grad_enabled(training):
        for x, y in loader:
            x, y = x.to(device), y.to(device)
            pred = model(x)
            loss = torch.mean((pred - y) ** 2)
            if training:
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
            total += loss.detach().item() * x.shape[0]
            n += x.shape[0]
    return total / n


def train(corpus_dir, out_dir, cfg: TrainConfig | None = None,
          spec: ModelSpec | None = None, split_train: str = "train",
          split_val: str = "val") -> dict:
    """Train on a corpus and keep the best-validation checkpoint.

    Returns the metrics log; the checkpoint (with embedded model spec,
    target normalization, and config) lands in ``out_dir/checkpoint.pt``.
    """
    cfg = cfg or TrainConfig()
    spec = spec or ModelSpec()
    seed_everything(cfg.seed)
    os.makedirs(out_dir, exist_ok=True)

    train_ds = CorpusDataset(corpus_dir, split_train, tna_probability=cfg.tna_probability,
                             tna_range_db=cfg.tna_range_db, seed=cfg.seed)
    stats = (train_ds.target_mean, train_ds.target_std)
    val_ds = CorpusDataset(corpus_dir, split_val, target_stats=stats)

    g = torch.Generator()
    g.manual_seed(cfg.seed)
    train_loader = DataLoader(train_ds, batch_size=cfg.batch_size, shuffle=True,
                              generator=g, num_workers=cfg.num_workers)
    val_loader = DataLoader(val_ds, batch_size=cfg.batch_size, shuffle=False,
                            num_workers=cfg.num_workers)

    model = build_model(spec).to(cfg.device)
    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate,
                                  weight_decay=cfg.weight_decay)

    log = {"train_mse": [], "val_mse": [], "target_mean": stats[0], "target_std": stats[1]}
    best_val = float("inf")
    best_epoch = -1
    ckpt_path = os.path.join(out_dir, "checkpoint.pt")
    for epoch in range(cfg.epochs):
        tr = _epoch(model, train_loader, optimizer, cfg.device)
        va = _epoch(model, val_loader, None, cfg.device)
        log["train_mse"].append(tr)
        log["val_mse"].append(va)
        if va < best_val:
            best_val = va
            best_epoch = epoch
            torch.save({
                "state_dict": model.state_dict(),
                "model_spec": spec.to_dict(),
                "target_mean": stats[0],
                "target_std": stats[1],
                "config": cfg.to_dict(),
                "epoch": epoch,
                "val_mse": va,
            }, ckpt_path)
        if epoch - best_epoch >= cfg.early_stopping_patience:
            break
    log["best_epoch"] = best_epoch
    log["best_val_mse"] = best_val
    with open(os.path.join(out_dir, "metrics.json"), "w") as f:
        json.dump(log, f, indent=2)
    return log


def load_checkpoint(path, device: str = "cpu"):
    ckpt = torch.load(path, map_location=device, weights_only=False)
    model = build_model(ModelSpec.from_dict(ckpt["model_spec"]))
    model.load_state_dict(ckpt["state_dict"])
    model.eval()
    return model, ckpt
