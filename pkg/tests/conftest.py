import math

import numpy as np
import pytest

from sonospeed.sigproc import analytic_signal
from sonospeed.wavesim import ChannelData, TransducerSpec, last_firing_x, tone_burst


def burst_at(t, tx_freq, cycles):
    """Continuous tone burst, support [0, cycles/tx_freq], peak ~1."""
    duration = cycles / tx_freq
    inside = (t >= 0) & (t <= duration)
    tt = np.where(inside, t, 0.0)
    w = np.sin(2 * np.pi * tx_freq * tt) * 0.5 * (1 - np.cos(2 * np.pi * tt / duration))
    return np.where(inside, w, 0.0)


def synth_channels(tx: TransducerSpec, angle_deg: float, scatterers, c: float,
                   fs: float = 40e6, t_max: float = 25e-6, tx_freq: float = 5e6,
                   cycles: float = 1.0, analytic: bool = True,
                   spreading: bool = False) -> ChannelData:
    """Analytic delay-model echoes in the t0-aligned convention.

    ``scatterers`` is a list of (x, z, amplitude) in the transducer frame.
    The pulse end passes a point at (z cos a + (x - x_last) sin a) / c after
    t0; the echo at an element ends after the geometric return delay.  This
    is the independent oracle the beamformer is checked against.  With
    ``spreading`` the return leg decays cylindrically (1/sqrt(r)), which
    diffuse-speckle tests need so distant clutter does not swamp the cell.
    """
    theta = math.radians(angle_deg)
    x_last = last_firing_x(tx, angle_deg)
    n = int(round(t_max * fs))
    duration = cycles / tx_freq
    elem_x = tx.element_x()
    traces = np.zeros((tx.n_elements, n))
    scat = np.asarray(scatterers, dtype=np.float64).reshape(-1, 3)
    sx, sz, amp = scat[:, 0], scat[:, 1], scat[:, 2]
    t_tx = (sz * math.cos(theta) + (sx - x_last) * math.sin(theta)) / c
    r = np.hypot(sx[:, None] - elem_x[None, :], sz[:, None])    # (n_scat, n_el)
    lead = t_tx[:, None] + r / c - duration
    gain = amp[:, None] * (1.0 / np.sqrt(np.maximum(r, 1e-4) / 1e-2) if spreading else 1.0)
    # accumulate each echo only over its short support
    n_sup = int(math.ceil(duration * fs)) + 2
    i0 = np.ceil(lead * fs).astype(np.int64)                    # first sample inside
    offs = np.arange(n_sup)
    idx = i0[:, :, None] + offs[None, None, :]                  # (n_scat, n_el, n_sup)
    tt = idx / fs - lead[:, :, None]
    vals = gain[:, :, None] * burst_at(tt, tx_freq, cycles)
    valid = (idx >= 0) & (idx < n)
    e_idx = np.broadcast_to(np.arange(tx.n_elements)[None, :, None], idx.shape)
    np.add.at(traces, (e_idx[valid], idx[valid]), vals[valid])
    pulse = tone_burst(tx_freq, cycles, fs)
    ch = ChannelData(samples=traces, fs=fs, t0=0.0, angle_deg=angle_deg,
                     pulse_duration=duration,
                     pulse_rms=float(np.sqrt(np.mean(pulse ** 2))),
                     provenance={"synthetic": True})
    return analytic_signal(ch) if analytic else ch


@pytest.fixture(scope="session")
def small_tx():
    return TransducerSpec(n_elements=64, tx_aperture=(16, 48))
