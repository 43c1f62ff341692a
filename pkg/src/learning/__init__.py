# src/learning/__init__.py
"""
Point-set encoder and the training objectives compared by the workbench.

Includes:
- encoder: EncoderConfig, ModelState, forward/backward, checkpoints
- objectives: SVDD, soft-boundary SVDD, nnPU, hypersphere PU and regression losses
- trainer: train(), score(), TrainConfig
"""

from .encoder import EncoderConfig, ModelState, read_checkpoint, write_checkpoint
from .objectives import PuConfig, SvddState
from .trainer import EvalThreshold, Method, TrainConfig, score, score_batch, train

__all__ = [
    'EncoderConfig',
    'ModelState',
    'read_checkpoint',
    'write_checkpoint',
    'PuConfig',
    'SvddState',
    'EvalThreshold',
    'Method',
    'TrainConfig',
    'score',
    'score_batch',
    'train',
]
