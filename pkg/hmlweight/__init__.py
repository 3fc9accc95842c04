"""Node-wise imbalance and uncertainty weighting for hierarchical multi-label classification."""

from .config import RunConfig, TrainConfig
from .constraint import f_cm, mcm_forward, predict
from .data import Dataset, DatasetSplits, load_dataset, parse_arff
from .ensemble import Ensemble, EnsembleMode, load_checkpoint, save_checkpoint
from .hierarchy import Hierarchy, build_hierarchy, node_frequencies
from .imbalance import imbalance_weights
from .synth import SynthSpec, synth
from .trainer import EnsembleTrainer, evaluate_ensemble, train

__all__ = [
    'RunConfig',
    'TrainConfig',
    'f_cm',
    'mcm_forward',
    'predict',
    'Dataset',
    'DatasetSplits',
    'load_dataset',
    'parse_arff',
    'Ensemble',
    'EnsembleMode',
    'load_checkpoint',
    'save_checkpoint',
    'Hierarchy',
    'build_hierarchy',
    'node_frequencies',
    'imbalance_weights',
    'SynthSpec',
    'synth',
    'EnsembleTrainer',
    'evaluate_ensemble',
    'train',
]
