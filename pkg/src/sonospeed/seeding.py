"""Deterministic RNG stream derivation.

Every random draw in the toolkit comes from a ``numpy.random.Generator``
seeded through ``numpy.random.SeedSequence``.  Independent streams are
derived from a master seed with fixed ``spawn_key`` tuples, so results never
depend on execution order, thread count, or process layout:

* sample ``i`` (retry ``r``) of a dataset build uses ``spawn_key=(0, i, r)``
* the train/val split of a build uses ``spawn_key=(1,)``

Within one sample the stream is split again into a phantom stream and a
processing stream (see :func:`sample_streams`).
"""

from __future__ import annotations

import numpy as np

_SAMPLE_DOMAIN = 0
_SPLIT_DOMAIN = 1


def rng_from(seed) -> np.random.Generator:
    """Coerce an int seed, SeedSequence, or Generator into a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def sample_seed_sequence(master_seed: int, index: int, retry: int = 0) -> np.random.SeedSequence:
    """Root SeedSequence for one dataset sample."""
    return np.random.SeedSequence(int(master_seed), spawn_key=(_SAMPLE_DOMAIN, int(index), int(retry)))


def sample_streams(master_seed: int, index: int, retry: int = 0):
    """Per-sample (phantom_seed, acquisition_rng, processing_rng).

    ``phantom_seed`` is a plain 64-bit int so it can be stored in metadata and
    fed back to ``compose_phantom`` verbatim.  The acquisition stream drives
    transmit-frequency sampling; the processing stream drives bandwidth and
    TNA draws.
    """
    root = sample_seed_sequence(master_seed, index, retry)
    phantom_ss, acq_ss, proc_ss = root.spawn(3)
    phantom_seed = int(phantom_ss.generate_state(1, np.uint64)[0])
    return phantom_seed, np.random.default_rng(acq_ss), np.random.default_rng(proc_ss)


def split_rng(master_seed: int) -> np.random.Generator:
    """Stream used to draw the validation split of a dataset build."""
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(_SPLIT_DOMAIN,)))
