"""Adversarial input detection from hidden-neuron activation fingerprints.

Modules
-------
nn           feed-forward networks: forward tracing, gradients, training, JSON I/O
datasets     IDX / CSV readers and the bundled synthetic datasets
attacks      FGSM, BIM, PGD, DeepFool, CW-L2, JSMA and a Gaussian-noise control
fingerprint  activation matrices, neuron filtering and monitor-set selection
detectors    DT / RF / AdaBoost / KNN detectors and randomised detector pools
metrics      confusion counts, TPR / FPR, Mann-Whitney AUC
evaluation   split protocol, experiment matrices and reports
cli          the ``raid`` command
"""
from .errors import (EmptyDataError, FormatError, InputShapeError, NoAdversarialsError, RaidError,
                     TrainingDivergedError)

__version__ = "0.1.0"

__all__ = ["RaidError", "InputShapeError", "FormatError", "EmptyDataError", "TrainingDivergedError",
           "NoAdversarialsError", "__version__"]
