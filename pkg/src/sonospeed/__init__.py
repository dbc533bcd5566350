"""Synthetic breast-ultrasound sound-speed dataset toolkit.

Pipeline: randomized tissue phantoms -> steered plane-wave pulse-echo
simulation -> channel processing and per-angle IQ beamforming -> serialized
training samples, plus classical sound-speed estimators for verification.
"""

__version__ = "0.1.0"

from .phantom import (GridSpec, EllipseParams, Phantom, Tissue, PHANTOM_CLASSES,
                      compose_phantom, ellipse_mask, gen_grf_gland, gen_scatterers,
                      gen_skin_band, homogeneous_phantom, region_average_target)
from .wavesim import (ChannelData, PlaneWaveTx, SolverConfig, TransducerSpec,
                      make_plane_wave, simulate_planewave, tone_burst, transmit_delays)
from .sigproc import (BandpassSpec, BeamformGrid, IQImage, TnaSpec, align_t0,
                      analytic_signal, apply_tna, bandpass, das_beamform, resample,
                      stack_model_input, unstack_model_input)
from .estimate import (ErrorReport, SweepSpec, error_vs_depth, regional_mean_error,
                       speckle_brightness_sweep, temporal_consistency)
from .dataset import (BuildConfig, DatasetSample, build_dataset, build_sample,
                      corpus_digest, corpus_stats, read_sample, rebuild_sample,
                      write_sample)
from .ustn import read_tensor, write_tensor
