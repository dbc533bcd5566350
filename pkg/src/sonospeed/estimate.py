"""Classical sound-speed estimation and evaluation metrics.

The speckle-brightness sweep beamforms a region of interest at a range of
candidate speeds and picks the speed that maximizes mean envelope
brightness; it is the verification oracle for the simulation pipeline.  The
remaining functions compute the regional / per-class error statistics used
to benchmark learned estimators.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .sigproc import BeamformGrid, analytic_signal, das_beamform
from .wavesim import ChannelData, TransducerSpec


@dataclass(frozen=True)
class SweepSpec:
    """Candidate-speed sweep over a fixed region of interest.

    The ROI is quoted in meters at ``roi_ref_speed``; during the sweep its
    depth extent scales with the candidate speed so every candidate
    evaluates the same time gate of data (a depth-fixed gate would compare
    different tissue at every speed and swamp the focus signal with
    depth-dependent trends).
    """

    c_min: float = 1400.0
    c_max: float = 1700.0
    c_step: float = 5.0
    roi: tuple[float, float, float, float] = (-5e-3, 5e-3, 5e-3, 13e-3)  # x0, x1, z0, z1
    roi_ref_speed: float = 1540.0

    def __post_init__(self):
        if self.c_min >= self.c_max:
            raise ValueError("c_min must be below c_max")
        if self.c_step <= 0:
            raise ValueError("c_step must be positive")
        x0, x1, z0, z1 = self.roi
        if not (x0 < x1 and z0 < z1):
            raise ValueError("roi extents are inverted")

    def speeds(self) -> np.ndarray:
        return np.arange(self.c_min, self.c_max + 0.5 * self.c_step, self.c_step)


@dataclass
class SweepResult:
    c_hat: float | None
    speeds: np.ndarray
    brightness: np.ndarray
    indeterminate: bool


FLATNESS_RATIO = 1.01


def speckle_brightness_sweep(channels, tx: TransducerSpec, angle_deg=None,
                             sweep: SweepSpec = None, pixel_pitch: float = 8.0e-5,
                             bias: float = 0.0, rx_aperture="center") -> SweepResult:
    """Estimate the medium speed from the beamform-speed sweep maximum.

    ``channels`` is one ChannelData or a list covering several steering
    angles.  With several angles the score is the magnitude of the
    normalized zero-lag cross-correlation between the per-angle images
    (coherent-compounding registration quality), which peaks sharply at the
    true speed.  With a single transmission the score falls back to mean
    envelope brightness; on plane-wave data receive-only focusing carries
    little speed information (the van Cittert-Zernike coherence of diffuse
    scattering spans about one element), so single-angle results are
    indicative only.

    ``rx_aperture`` defaults to the center half of the array so the default
    pixel pitch samples the point-spread function properly; pass a
    (lo, hi) element range or None for the full aperture.  ``bias``
    subtracts an instrument calibration constant (see
    ``verify.calibrate_sweep_bias``).  A flat curve (max/min below 1.01)
    marks the result indeterminate, e.g. for an anechoic ROI.
    """
    if sweep is None:
        sweep = SweepSpec()
    if isinstance(channels, ChannelData):
        channels = [channels]
    channels = [analytic_signal(c) if not np.iscomplexobj(c.samples) else c
                for c in channels]
    if rx_aperture == "center":
        n = tx.n_elements
        rx_aperture = (n // 4, n - n // 4)
    x0, x1, z0, z1 = sweep.roi
    nx = max(8, int(round((x1 - x0) / pixel_pitch)))
    nz = max(8, int(round((z1 - z0) / pixel_pitch)))
    speeds = sweep.speeds()
    score = np.empty(speeds.size)
    for i, c in enumerate(speeds):
        s = c / sweep.roi_ref_speed
        grid = BeamformGrid(nx=nx, nz=nz, x_min=x0, x_max=x1,
                            z_min=z0 * s, z_max=z1 * s, c0=float(c))
        imgs = [das_beamform(ch, tx, ch.angle_deg, grid, rx_aperture=rx_aperture).pixels
                for ch in channels]
        if len(imgs) == 1:
            score[i] = np.mean(np.abs(imgs[0]))
        else:
            num = den = 0.0
            for a in range(len(imgs)):
                for b in range(a + 1, len(imgs)):
                    num += abs(np.vdot(imgs[a], imgs[b]))
                    den += 0.5 * (np.vdot(imgs[a], imgs[a]).real
                                  + np.vdot(imgs[b], imgs[b]).real)
            score[i] = num / den if den > 0 else 0.0

    s_min = score.min()
    if score.max() <= 0 or s_min <= 0 or score.max() / s_min < FLATNESS_RATIO:
        return SweepResult(c_hat=None, speeds=speeds, brightness=score, indeterminate=True)

    smooth = np.convolve(score, [0.25, 0.5, 0.25], mode="same")
    k = 1 + int(np.argmax(smooth[1:-1])) if speeds.size > 2 else int(np.argmax(smooth))
    c_hat = float(speeds[k])
    if 0 < k < speeds.size - 1:
        y0, y1, y2 = smooth[k - 1: k + 2]
        denom = y0 - 2.0 * y1 + y2
        if denom < 0:
            c_hat += float(0.5 * (y0 - y2) / denom) * sweep.c_step
    return SweepResult(c_hat=c_hat - bias, speeds=speeds, brightness=score,
                       indeterminate=False)


@dataclass
class RegionStats:
    label: int
    n_pixels: int
    mean_estimate: float
    mean_target: float
    error: float            # mean(estimate) - mean(target), m/s
    rel_error: float        # error / mean(target)
    pixel_mae: float        # mean |estimate - target| over the region
    pixel_std: float


@dataclass
class ErrorReport:
    regions: dict = field(default_factory=dict)   # label -> RegionStats
    pixel_mae: float = 0.0
    pixel_std: float = 0.0
    region_mae: float = 0.0                       # mean |regional error|

    def to_dict(self) -> dict:
        return {
            "pixel_mae": self.pixel_mae,
            "pixel_std": self.pixel_std,
            "region_mae": self.region_mae,
            "regions": {
                str(lab): {
                    "n_pixels": st.n_pixels,
                    "mean_estimate": st.mean_estimate,
                    "mean_target": st.mean_target,
                    "error": st.error,
                    "rel_error": st.rel_error,
                    "pixel_mae": st.pixel_mae,
                    "pixel_std": st.pixel_std,
                } for lab, st in self.regions.items()
            },
        }


def regional_mean_error(estimate: np.ndarray, target: np.ndarray,
                        labels: np.ndarray) -> ErrorReport:
    """Per-region signed errors plus per-class and global MAE statistics."""
    if estimate.shape != target.shape or estimate.shape != labels.shape:
        raise ValueError("estimate, target and labels must be congruent")
    est = np.asarray(estimate, dtype=np.float64)
    tgt = np.asarray(target, dtype=np.float64)
    report = ErrorReport()
    diff = est - tgt
    report.pixel_mae = float(np.abs(diff).mean())
    report.pixel_std = float(diff.std())
    errors = []
    for lab in np.unique(labels):
        sel = labels == lab
        n = int(sel.sum())
        if n == 0:
            warnings.warn(f"region {lab} is empty; excluded from the report")
            continue
        me, mt = float(est[sel].mean()), float(tgt[sel].mean())
        err = me - mt
        report.regions[int(lab)] = RegionStats(
            label=int(lab), n_pixels=n, mean_estimate=me, mean_target=mt,
            error=err, rel_error=err / mt if mt else np.nan,
            pixel_mae=float(np.abs(diff[sel]).mean()),
            pixel_std=float(diff[sel].std()))
        errors.append(abs(err))
    report.region_mae = float(np.mean(errors)) if errors else 0.0
    return report


def error_vs_depth(estimates, targets, n_bins: int = 16):
    """Mean relative error per axial bin, averaged across samples.

    Returns (bin_centers, profile); centers are fractional depths in [0, 1].
    """
    if len(estimates) == 0 or len(estimates) != len(targets):
        raise ValueError("need matching, non-empty estimate/target lists")
    profiles = []
    for est, tgt in zip(estimates, targets):
        if est.shape != tgt.shape:
            raise ValueError("estimate/target shapes differ")
        rel = (np.asarray(est, dtype=np.float64) - tgt) / tgt
        nz = rel.shape[0]
        edges = np.linspace(0, nz, n_bins + 1).astype(int)
        profiles.append([rel[a:b].mean() for a, b in zip(edges[:-1], edges[1:])])
    centers = (np.arange(n_bins) + 0.5) / n_bins
    return centers, np.mean(profiles, axis=0)


def temporal_consistency(frames, roi=None, remove_outliers: bool = False,
                         mad_k: float = 3.0) -> dict:
    """Frame-wise ROI means and their spread over consecutive frames.

    ``roi`` is an index tuple (row slice, col slice) or None for the whole
    map.  With ``remove_outliers`` frames whose ROI mean deviates from the
    median by more than ``mad_k`` scaled MADs are discarded first.
    """
    if len(frames) < 2:
        raise ValueError("temporal consistency needs at least 2 frames")
    if roi is None:
        roi = (slice(None), slice(None))
    means = np.array([float(np.asarray(f, dtype=np.float64)[roi].mean()) for f in frames])
    kept = means
    n_removed = 0
    if remove_outliers:
        med = np.median(means)
        mad = np.median(np.abs(means - med))
        if mad > 0:
            sel = np.abs(means - med) <= mad_k * 1.4826 * mad
            if sel.sum() >= 2:
                kept = means[sel]
                n_removed = int((~sel).sum())
    return {
        "frame_means": means,
        "mean": float(kept.mean()),
        "std": float(kept.std()),
        "n_frames": len(frames),
        "n_removed": n_removed,
    }
