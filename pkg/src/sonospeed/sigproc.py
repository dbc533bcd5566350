"""Channel-data processing: resampling, band-pass, noise augmentation,
t0 alignment, analytic signal, and dynamic-receive delay-and-sum.

All operations are pure: they return new ChannelData / IQImage values and
log what they did into the provenance dict.  Channel samples are processed
in float64 (complex128 once analytic).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np
from scipy.signal import hilbert, resample_poly

from .seeding import rng_from
from .wavesim import ChannelData, TransducerSpec, last_firing_x


@dataclass(frozen=True)
class BandpassSpec:
    """Gaussian magnitude response modeling the transducer impulse response."""

    center_freq: float = 5e6
    fractional_bandwidth: float = 0.6

    def __post_init__(self):
        if not 0.0 < self.fractional_bandwidth < 2.0:
            raise ValueError("fractional bandwidth must lie in (0, 2)")
        if self.center_freq <= 0:
            raise ValueError("center frequency must be positive")

    @property
    def sigma_hz(self) -> float:
        # -6 dB full width equals fractional_bandwidth * center_freq
        return self.fractional_bandwidth * self.center_freq / (2.0 * math.sqrt(2.0 * math.log(2.0)))

    def gain(self, freq_hz) -> np.ndarray:
        f = np.asarray(freq_hz, dtype=np.float64)
        return np.exp(-((f - self.center_freq) ** 2) / (2.0 * self.sigma_hz ** 2))


@dataclass(frozen=True)
class TnaSpec:
    """Thermal-noise augmentation levels relative to the transmit-pulse RMS."""

    min_db: float = -120.0
    max_db: float = -80.0
    probability: float = 0.2

    def __post_init__(self):
        if self.min_db > self.max_db:
            raise ValueError("min_db must not exceed max_db")
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("probability must lie in [0, 1]")


BANDWIDTH_RANGE = (0.5, 0.9)


@dataclass(frozen=True)
class BeamformGrid:
    """Cartesian pixel grid for beamformed images, transducer-centered frame.

    x spans laterally (columns), z is depth below the array (rows); c0 is the
    assumed beamforming sound speed.
    """

    nx: int = 256
    nz: int = 256
    x_min: float = -18.75e-3
    x_max: float = 18.75e-3
    z_min: float = 0.0
    z_max: float = 30e-3
    c0: float = 1540.0

    def __post_init__(self):
        if self.nx < 2 or self.nz < 2:
            raise ValueError("beamform grid needs at least 2x2 pixels")
        if not (self.x_min < self.x_max and self.z_min < self.z_max):
            raise ValueError("beamform grid extents are inverted")
        if not 1400.0 <= self.c0 <= 1700.0:
            raise ValueError("assumed sound speed must lie in [1400, 1700] m/s")

    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    def z(self) -> np.ndarray:
        return np.linspace(self.z_min, self.z_max, self.nz)


@dataclass
class IQImage:
    pixels: np.ndarray  # (nz, nx) complex
    angle_deg: float
    grid: BeamformGrid


def resample(ch: ChannelData, target_fs: float, band_upper_hz: float = 9.5e6) -> ChannelData:
    """Band-limited polyphase resampling; duration and t0 are preserved."""
    if target_fs <= 2.0 * band_upper_hz:
        raise ValueError(
            f"target fs {target_fs:.3g} violates Nyquist for content up to {band_upper_hz:.3g} Hz")
    if abs(target_fs - ch.fs) < 1e-9 * ch.fs:
        return replace(ch, provenance={**ch.provenance, "resampled": "identity"})
    frac = (Fraction(target_fs).limit_denominator(10 ** 6)
            / Fraction(ch.fs).limit_denominator(10 ** 6)).limit_denominator(10 ** 4)
    up, down = frac.numerator, frac.denominator
    out = resample_poly(np.asarray(ch.samples, dtype=np.float64), up, down, axis=1)
    return replace(ch, samples=out, fs=ch.fs * up / down,
                   provenance={**ch.provenance, "resampled": [up, down]})


def bandpass(ch: ChannelData, spec: BandpassSpec) -> ChannelData:
    """Zero-phase Gaussian band-pass along the time axis."""
    x = np.asarray(ch.samples, dtype=np.float64)
    n = x.shape[1]
    freqs = np.fft.rfftfreq(n, 1.0 / ch.fs)
    out = np.fft.irfft(np.fft.rfft(x, axis=1) * spec.gain(freqs)[None, :], n, axis=1)
    return replace(ch, samples=out,
                   provenance={**ch.provenance,
                               "bandpass": [spec.center_freq, spec.fractional_bandwidth]})


def apply_tna(ch: ChannelData, spec: TnaSpec, pulse_rms: float | None = None,
              seed=0) -> ChannelData:
    """Maybe add white Gaussian noise at a level drawn from the spec.

    The decision and the level come first from the seed stream, then the
    noise samples, so a forced configuration (probability=1, min=max) is
    reproducible sample for sample.
    """
    if pulse_rms is None:
        pulse_rms = ch.pulse_rms
    if pulse_rms <= 0:
        raise ValueError("pulse RMS reference must be positive")
    rng = rng_from(seed)
    applied = rng.random() < spec.probability
    if not applied:
        return replace(ch, provenance={**ch.provenance, "tna": None})
    level_db = float(rng.uniform(spec.min_db, spec.max_db))
    sigma = pulse_rms * 10.0 ** (level_db / 20.0)
    noise = rng.standard_normal(ch.samples.shape) * sigma
    return replace(ch, samples=ch.samples + noise,
                   provenance={**ch.provenance, "tna": level_db})


def align_t0(ch: ChannelData, t0: float | None = None) -> ChannelData:
    """Drop samples before t0 and re-zero the time axis."""
    if t0 is None:
        t0 = ch.t0
    n_cut = round(t0 * ch.fs)
    if n_cut < 0 or n_cut >= ch.n_samples:
        raise ValueError(f"t0 {t0:.3e} s lies outside the {ch.n_samples}-sample recording")
    return replace(ch, samples=ch.samples[:, n_cut:], t0=0.0,
                   provenance={**ch.provenance, "aligned_samples_cut": n_cut})


def analytic_signal(ch: ChannelData) -> ChannelData:
    """Per-trace analytic signal via the Hilbert transform."""
    if ch.n_samples < 16:
        raise ValueError("need at least 16 samples for the analytic signal")
    out = hilbert(np.asarray(ch.samples.real, dtype=np.float64), axis=1)
    return replace(ch, samples=out, provenance={**ch.provenance, "analytic": True})


def das_beamform(ch: ChannelData, tx: TransducerSpec, angle_deg: float,
                 grid: BeamformGrid, pulse_center_offset: float | None = None,
                 rx_aperture: tuple[int, int] | None = None) -> IQImage:
    """Per-angle dynamic-receive delay-and-sum of analytic channel data.

    The transmit delay of a pixel is the steered plane wavefront's arrival
    referenced to t0 (the pulse end leaving the last firing element); the
    pulse-center offset (default -pulse_duration/2) re-centers the gather on
    the echo envelope.  Receive delays are geometric.  Complex samples are
    gathered with linear interpolation and summed with rectangular
    apodization over all elements (or the half-open ``rx_aperture`` index
    range); pixels outside temporal coverage contribute zero.
    """
    if not np.iscomplexobj(ch.samples):
        raise ValueError("beamforming expects analytic (complex) channel data")
    if abs(ch.t0) > 1e-12:
        raise ValueError("beamforming expects t0-aligned channel data")
    if pulse_center_offset is None:
        pulse_center_offset = -0.5 * ch.pulse_duration
    lo, hi = rx_aperture if rx_aperture is not None else (0, tx.n_elements)
    if not 0 <= lo < hi <= tx.n_elements:
        raise ValueError(f"receive aperture {rx_aperture} outside [0, {tx.n_elements})")

    theta = math.radians(angle_deg)
    x_last = last_firing_x(tx, angle_deg)
    xs = grid.x()[None, :]
    zs = grid.z()[:, None]
    c0 = grid.c0
    tau_tx = (zs * math.cos(theta) + (xs - x_last) * math.sin(theta)) / c0 + pulse_center_offset

    n = ch.n_samples
    data = ch.samples
    image = np.zeros((grid.nz, grid.nx), dtype=np.complex128)
    elem_x = tx.element_x()
    for e in range(lo, hi):
        tau_rx = np.sqrt((xs - elem_x[e]) ** 2 + zs ** 2) / c0
        idx = (tau_tx + tau_rx) * ch.fs
        i0 = np.floor(idx).astype(np.int64)
        frac = idx - i0
        valid = (i0 >= 0) & (i0 < n - 1)
        i0c = np.clip(i0, 0, n - 2)
        tr = data[e]
        image += np.where(valid, tr[i0c] * (1.0 - frac) + tr[i0c + 1] * frac, 0.0)
    return IQImage(pixels=image, angle_deg=angle_deg, grid=grid)


PLANE_ORDER = ("real", "imag")


def stack_model_input(images: list[IQImage]) -> np.ndarray:
    """Stack per-angle IQ images into the 6-plane model input tensor.

    Images must come ordered by ascending steering angle; the plane layout is
    [re(a0), im(a0), re(a1), im(a1), re(a2), im(a2)] with a0 < a1 < a2.
    """
    if len(images) != 3:
        raise ValueError("need exactly three per-angle images")
    shapes = {im.pixels.shape for im in images}
    if len(shapes) != 1:
        raise ValueError(f"image shapes differ: {sorted(shapes)}")
    angles = [im.angle_deg for im in images]
    if angles != sorted(angles):
        raise ValueError("images must be ordered by ascending steering angle")
    planes = []
    for im in images:
        planes.append(im.pixels.real)
        planes.append(im.pixels.imag)
    return np.stack(planes)


def unstack_model_input(tensor: np.ndarray, angles: list[float],
                        grid: BeamformGrid) -> list[IQImage]:
    """Inverse of stack_model_input."""
    if tensor.ndim != 3 or tensor.shape[0] != 6:
        raise ValueError("expected a (6, N, M) tensor")
    out = []
    for k, angle in enumerate(angles):
        pix = tensor[2 * k].astype(np.float64) + 1j * tensor[2 * k + 1].astype(np.float64)
        out.append(IQImage(pixels=pix, angle_deg=angle, grid=grid))
    return out
