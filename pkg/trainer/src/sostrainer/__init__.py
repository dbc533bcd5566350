"""Sound-speed regression trainer for simulated plane-wave IQ corpora."""

__version__ = "0.1.0"

from .data import CorpusDataset, inject_thermal_noise, normalize_planes
from .model import DenseBlock, ModelSpec, SpeedRegressor, build_model
from .predict import predict_corpus, predict_sample
from .train import TrainConfig, load_checkpoint, train
from .ustn import read_tensor, write_tensor
