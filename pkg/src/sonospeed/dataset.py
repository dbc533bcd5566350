"""Deterministic dataset assembly.

One sample = three steered plane-wave acquisitions through one randomized
phantom, processed to beamformed IQ images, stacked into a 6-plane input
tensor and paired with the region-averaged sound-speed target on the same
pixel grid.  Sample builds are independent jobs seeded from
(master_seed, sample_index), so the corpus is byte-identical for any level
of parallelism and every sample can be regenerated from its meta.json alone.

Corpus layout:

    corpus/
      manifest.json
      sample_000000/
        input.ustn    (6, N, M) float32
        target.ustn   (N, M) float32
        meta.json
"""

from __future__ import annotations

import json
import logging
import math
import os
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__ as PIPELINE_VERSION
from .phantom import PHANTOM_CLASSES, GridSpec, Phantom, compose_phantom
from .seeding import sample_streams, split_rng
from .sigproc import (BANDWIDTH_RANGE, BandpassSpec, BeamformGrid, IQImage, TnaSpec,
                      align_t0, analytic_signal, apply_tna, bandpass, das_beamform,
                      resample, stack_model_input)
from .ustn import read_tensor, write_tensor
from .wavesim import SolverConfig, TransducerSpec, make_plane_wave, simulate_planewave

log = logging.getLogger(__name__)

PROCESSING_ORDER = ["simulate", "resample", "bandpass", "tna", "align_t0",
                    "analytic", "beamform", "stack"]
PLANE_LAYOUT = "re/im pairs per angle, angles ascending"
TX_FREQ_JITTER = 0.10
MAX_RETRIES = 3


@dataclass
class DatasetSample:
    inputs: np.ndarray   # (6, N, M) float32
    target: np.ndarray   # (N, M) float32
    meta: dict

    def validate(self):
        if self.inputs.ndim != 3 or self.inputs.shape[0] != 6:
            raise ValueError(f"inputs must be (6, N, M), got {self.inputs.shape}")
        if self.target.shape != self.inputs.shape[1:]:
            raise ValueError(
                f"target {self.target.shape} incongruent with inputs {self.inputs.shape}")


@dataclass
class BuildConfig:
    """Everything that parameterizes a dataset build besides seed and size."""

    grid: GridSpec = field(default_factory=GridSpec)
    image_shape: tuple[int, int] = (256, 256)     # (nz, nx) of the IQ/target grid
    angles_deg: tuple[float, ...] = (-8.0, 0.0, 8.0)
    n_elements: int = 128
    c0: float = 1540.0
    target_fs: float = 40e6
    tna: TnaSpec = field(default_factory=TnaSpec)
    pml_thickness: int = 24
    center_freq: float = 5e6
    scatter_ref_amplitude: float = 10.0
    alpha_coeff: float = 0.75

    def transducer(self) -> TransducerSpec:
        return TransducerSpec(n_elements=self.n_elements, center_freq=self.center_freq)

    def beamform_grid(self, c0: float | None = None) -> BeamformGrid:
        """Image grid spanning the phantom extent in the transducer frame."""
        half = self.grid.width / 2.0
        nz, nx = self.image_shape
        return BeamformGrid(nx=nx, nz=nz,
                            x_min=-half + self.grid.origin, x_max=half + self.grid.origin,
                            z_min=0.0, z_max=self.grid.depth, c0=c0 or self.c0)

    def to_meta(self) -> dict:
        return {
            "grid": {"nx": self.grid.nx, "nz": self.grid.nz, "dx": self.grid.dx,
                     "dz": self.grid.dz, "origin": self.grid.origin},
            "image_shape": list(self.image_shape),
            "angles_deg": list(self.angles_deg),
            "n_elements": self.n_elements,
            "c0": self.c0,
            "target_fs": self.target_fs,
            "tna": asdict(self.tna),
            "pml_thickness": self.pml_thickness,
            "center_freq": self.center_freq,
            "scatter_ref_amplitude": self.scatter_ref_amplitude,
            "alpha_coeff": self.alpha_coeff,
        }

    @staticmethod
    def from_meta(meta: dict) -> "BuildConfig":
        g = meta["grid"]
        return BuildConfig(
            grid=GridSpec(nx=g["nx"], nz=g["nz"], dx=g["dx"], dz=g["dz"], origin=g["origin"]),
            image_shape=tuple(meta["image_shape"]),
            angles_deg=tuple(meta["angles_deg"]),
            n_elements=meta["n_elements"],
            c0=meta["c0"],
            target_fs=meta["target_fs"],
            tna=TnaSpec(**meta["tna"]),
            pml_thickness=meta["pml_thickness"],
            center_freq=meta["center_freq"],
            scatter_ref_amplitude=meta.get("scatter_ref_amplitude", 10.0),
            alpha_coeff=meta.get("alpha_coeff", 0.75),
        )


def target_on_image_grid(phantom: Phantom, bgrid: BeamformGrid) -> np.ndarray:
    """Sample the phantom's target map at image pixel centers (nearest, clamped)."""
    g = phantom.grid
    xs = bgrid.x() - g.origin + (g.nx - 1) / 2 * g.dx   # transducer frame -> local
    zs = bgrid.z()
    cols = np.clip(np.round(xs / g.dx).astype(int), 0, g.nx - 1)
    rows = np.clip(np.round(zs / g.dz).astype(int), 0, g.nz - 1)
    return phantom.target[np.ix_(rows, cols)]


def process_channels(ch, cfg: BuildConfig, bw: float, tna_level_db, tna_seed=None):
    """Resample, band-pass, optional forced TNA, align, analytic."""
    ch = resample(ch, cfg.target_fs)
    ch = bandpass(ch, BandpassSpec(center_freq=cfg.center_freq, fractional_bandwidth=bw))
    if tna_level_db is not None:
        ch = apply_tna(ch, TnaSpec(min_db=tna_level_db, max_db=tna_level_db, probability=1.0),
                       seed=tna_seed if tna_seed is not None else 0)
    ch = align_t0(ch)
    return analytic_signal(ch)


def build_sample(master_seed: int, index: int, class_kind: str, cfg: BuildConfig,
                 retry: int = 0) -> DatasetSample:
    """Run the full phantom -> simulate -> process pipeline for one sample."""
    phantom_seed, acq_rng, proc_rng = sample_streams(master_seed, index, retry)
    phantom = compose_phantom(class_kind, cfg.grid, phantom_seed,
                              scatter_ref_amplitude=cfg.scatter_ref_amplitude,
                              alpha_coeff=cfg.alpha_coeff)
    tx = cfg.transducer()
    tx_freq = float(acq_rng.uniform(cfg.center_freq * (1 - TX_FREQ_JITTER),
                                    cfg.center_freq * (1 + TX_FREQ_JITTER)))
    bw = float(proc_rng.uniform(*BANDWIDTH_RANGE))

    tna_draws = []
    t0_list = []
    pulse_rms = None
    images: list[IQImage] = []
    bgrid = cfg.beamform_grid()
    solver = SolverConfig(pml_thickness=cfg.pml_thickness)
    for angle in sorted(cfg.angles_deg):
        pw = make_plane_wave(tx, angle, tx_freq=tx_freq, c_ref=cfg.c0)
        t0_list.append(pw.t0)
        ch = simulate_planewave(phantom, tx, pw, solver)
        pulse_rms = ch.pulse_rms
        ch = resample(ch, cfg.target_fs)
        ch = bandpass(ch, BandpassSpec(center_freq=cfg.center_freq, fractional_bandwidth=bw))
        ch = apply_tna(ch, cfg.tna, seed=proc_rng)
        tna_draws.append(ch.provenance.get("tna"))
        ch = align_t0(ch)
        ch = analytic_signal(ch)
        images.append(das_beamform(ch, tx, angle, bgrid))

    inputs = stack_model_input(images).astype(np.float32)
    target = target_on_image_grid(phantom, bgrid).astype(np.float32)

    meta = {
        "pipeline_version": PIPELINE_VERSION,
        "master_seed": int(master_seed),
        "index": int(index),
        "retry": int(retry),
        "class": class_kind,
        "phantom_seed": int(phantom_seed),
        "phantom": phantom.meta,
        "tx_freq": tx_freq,
        "bandwidth": bw,
        "tna_draws_db": tna_draws,
        "t0_s": t0_list,
        "pulse_rms": pulse_rms,
        "n_elements": tx.n_elements,
        "processing_order": PROCESSING_ORDER,
        "plane_layout": PLANE_LAYOUT,
        "config": cfg.to_meta(),
    }
    sample = DatasetSample(inputs=inputs, target=target, meta=meta)
    sample.validate()
    return sample


def rebuild_sample(meta: dict) -> DatasetSample:
    """Regenerate a sample bit-identically from its stored metadata."""
    cfg = BuildConfig.from_meta(meta["config"])
    return build_sample(meta["master_seed"], meta["index"], meta["class"], cfg,
                        retry=meta.get("retry", 0))


def sample_dir_name(index: int) -> str:
    return f"sample_{index:06d}"


def write_sample(path, sample: DatasetSample) -> None:
    """Write input.ustn / target.ustn / meta.json atomically into ``path``."""
    sample.validate()
    path = os.fspath(path)
    parent = os.path.dirname(path.rstrip("/")) or "."
    tmp = tempfile.mkdtemp(dir=parent, prefix=".sample-")
    try:
        write_tensor(os.path.join(tmp, "input.ustn"), sample.inputs.astype(np.float32))
        write_tensor(os.path.join(tmp, "target.ustn"), sample.target.astype(np.float32))
        with open(os.path.join(tmp, "meta.json"), "w") as f:
            json.dump(sample.meta, f, indent=2, sort_keys=True)
            f.write("\n")
        if os.path.isdir(path):
            shutil.rmtree(path)
        os.replace(tmp, path)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def read_sample(path) -> DatasetSample:
    path = os.fspath(path)
    inputs = read_tensor(os.path.join(path, "input.ustn"))
    target = read_tensor(os.path.join(path, "target.ustn"))
    with open(os.path.join(path, "meta.json")) as f:
        meta = json.load(f)
    sample = DatasetSample(inputs=inputs, target=target, meta=meta)
    sample.validate()
    return sample


def allocate_classes(n: int, mix: dict | None = None) -> list[str]:
    """Deterministic class sequence honoring the mix proportions.

    Counts come from largest-remainder rounding; the sequence interleaves
    classes in canonical order so any prefix is as balanced as possible.
    """
    if mix is None:
        mix = {c: 1.0 for c in PHANTOM_CLASSES}
    for c in mix:
        if c not in PHANTOM_CLASSES:
            raise ValueError(f"unknown class {c!r} in mix")
    total = sum(mix.values())
    if total <= 0:
        raise ValueError("class mix weights must sum to a positive value")
    ordered = [c for c in PHANTOM_CLASSES if mix.get(c, 0) > 0]
    quota = {c: n * mix[c] / total for c in ordered}
    counts = {c: int(math.floor(quota[c])) for c in ordered}
    rem = n - sum(counts.values())
    for c in sorted(ordered, key=lambda c: quota[c] - counts[c], reverse=True)[:rem]:
        counts[c] += 1
    seq = []
    while len(seq) < n:
        for c in ordered:
            if counts[c] > 0:
                counts[c] -= 1
                seq.append(c)
    return seq[:n]


def _build_one(args) -> dict:
    out_dir, master_seed, index, class_kind, cfg_meta = args
    cfg = BuildConfig.from_meta(cfg_meta)
    last_err = None
    for retry in range(MAX_RETRIES):
        try:
            sample = build_sample(master_seed, index, class_kind, cfg, retry=retry)
            write_sample(os.path.join(out_dir, sample_dir_name(index)), sample)
            return {"index": index, "id": sample_dir_name(index), "class": class_kind,
                    "retry": retry}
        except Exception as exc:  # noqa: BLE001 - bounded retry with fresh sub-seed
            last_err = exc
            log.warning("sample %d attempt %d failed: %s", index, retry, exc)
    raise RuntimeError(f"sample {index} failed after {MAX_RETRIES} attempts") from last_err


def class_balanced_split(entries: list[dict], master_seed: int,
                         val_fraction: float = 1.0 / 6.0) -> tuple[list[str], list[str]]:
    """Disjoint train/val id lists with val drawn equally from all classes."""
    n = len(entries)
    n_val = min(n - 1, max(1, round(n * val_fraction))) if n > 1 else 0
    by_class: dict[str, list[str]] = {}
    for e in sorted(entries, key=lambda e: e["index"]):
        by_class.setdefault(e["class"], []).append(e["id"])
    classes = sorted(by_class)
    rng = split_rng(master_seed)
    take = {c: 0 for c in classes}
    i = 0
    order = list(rng.permutation(classes))
    while sum(take.values()) < n_val:
        c = order[i % len(classes)]
        if take[c] < len(by_class[c]):
            take[c] += 1
        i += 1
        if i > 10 * len(classes) * (n_val + 1):
            break
    val: list[str] = []
    for c in classes:
        ids = by_class[c]
        if take[c]:
            pick = rng.choice(len(ids), size=take[c], replace=False)
            val.extend(ids[k] for k in sorted(pick))
    val = sorted(val)
    train = sorted(set(e["id"] for e in entries) - set(val))
    return train, val


def build_dataset(out_dir, n_samples: int, master_seed: int, cfg: BuildConfig | None = None,
                  mix: dict | None = None, parallelism: int = 1,
                  val_fraction: float = 1.0 / 6.0) -> dict:
    """Build a corpus of ``n_samples`` and write its manifest.

    The output is byte-identical for any ``parallelism`` given the same seed
    and configuration.
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    cfg = cfg or BuildConfig()
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    classes = allocate_classes(n_samples, mix)
    jobs = [(out_dir, int(master_seed), i, classes[i], cfg.to_meta())
            for i in range(n_samples)]
    if parallelism <= 1:
        entries = [_build_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            entries = list(pool.map(_build_one, jobs))
    entries.sort(key=lambda e: e["index"])

    train, val = class_balanced_split(entries, master_seed, val_fraction)
    manifest = {
        "pipeline_version": PIPELINE_VERSION,
        "master_seed": int(master_seed),
        "n_samples": n_samples,
        "config": cfg.to_meta(),
        "class_counts": {c: classes.count(c) for c in sorted(set(classes))},
        "samples": entries,
        "train": train,
        "val": val,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def corpus_digest(corpus_dir) -> str:
    """SHA-256 over the corpus content (samples + manifest), path-ordered.

    Invocation metadata (run_config.json) is excluded: it records how a run
    was launched (e.g. --jobs), which may legitimately differ between
    byte-identical corpora.
    """
    import hashlib
    corpus_dir = os.fspath(corpus_dir)
    h = hashlib.sha256()
    for root, _dirs, files in sorted(os.walk(corpus_dir)):
        for name in sorted(files):
            if name == "run_config.json":
                continue
            full = os.path.join(root, name)
            h.update(os.path.relpath(full, corpus_dir).encode())
            with open(full, "rb") as f:
                h.update(f.read())
    return h.hexdigest()


def corpus_stats(corpus_dir) -> dict:
    """Counts, target histograms, amplitude statistics, range containment."""
    corpus_dir = os.fspath(corpus_dir)
    with open(os.path.join(corpus_dir, "manifest.json")) as f:
        manifest = json.load(f)
    counts: dict[str, int] = {}
    t_min, t_max = math.inf, -math.inf
    hist = np.zeros(70, dtype=np.int64)
    edges = np.linspace(1400.0, 1750.0, 71)
    amp_mean = []
    amp_max = []
    n_pixels = 0
    for e in manifest["samples"]:
        s = read_sample(os.path.join(corpus_dir, e["id"]))
        counts[s.meta["class"]] = counts.get(s.meta["class"], 0) + 1
        t = s.target.astype(np.float64)
        t_min, t_max = min(t_min, float(t.min())), max(t_max, float(t.max()))
        hist += np.histogram(t, bins=edges)[0]
        n_pixels += t.size
        a = np.abs(s.inputs.astype(np.float64))
        amp_mean.append(float(a.mean()))
        amp_max.append(float(a.max()))
    return {
        "n_samples": len(manifest["samples"]),
        "class_counts": counts,
        "target_min": t_min,
        "target_max": t_max,
        "target_hist_edges": edges.tolist(),
        "target_hist": hist.tolist(),
        "target_hist_mass": int(hist.sum()),
        "n_target_pixels": n_pixels,
        "input_abs_mean": float(np.mean(amp_mean)) if amp_mean else 0.0,
        "input_abs_max": float(np.max(amp_max)) if amp_max else 0.0,
        "targets_within_table_ranges": bool(t_min >= 1480.0 and t_max <= 1670.0),
    }
