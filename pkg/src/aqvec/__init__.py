"""Analog quantum variational embedding classifier.

Classical features are mapped linearly onto the control schedules of a
transverse-field Ising anneal; the final states are classified by the nearest
class-averaged density matrix.
"""

from aqvec.classifier import TrainConfig, evaluate, predict, train
from aqvec.data import Dataset, gen_circles, load_digits_csv, split
from aqvec.evolution import EvolutionGrid, embed_states, grad_loss_wrt_w
from aqvec.hamiltonian import AnnealSpec, EmbeddingMap
from aqvec.losses import LossKind

__version__ = "0.1.0"

__all__ = [
    "AnnealSpec",
    "Dataset",
    "EmbeddingMap",
    "EvolutionGrid",
    "LossKind",
    "TrainConfig",
    "embed_states",
    "evaluate",
    "gen_circles",
    "grad_loss_wrt_w",
    "load_digits_csv",
    "predict",
    "split",
    "train",
]
