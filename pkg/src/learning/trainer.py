# src/learning/trainer.py
"""One training loop for the four objectives plus the optional regression head.

Scores are "normal scores" in [0, 1]: higher means more likely traversable.
"""
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.special import expit

from src.core.datagen import AugmentSpec, DatasetSplit, LabelKind, TraversalSample, augment_batch
from src.learning.encoder import EncoderConfig, ForwardOutput, ModelState, backward, forward, init_state
from src.learning.objectives import (PuConfig, SvddState, hypersphere_discriminant, loss_nnpu, loss_ours_pu,
                                     loss_regression, loss_soft_svdd, loss_svdd, weight_decay_term)
from src.learning.optim import make_optimizer
from src.utils.errors import CannotTrainError, ConfigError, UsageError
from src.utils.logger import logger
from src.utils.textio import ensure_parent

SCORE_CHUNK = 4096
CENTER_EPS = 0.1


class Method(str, Enum):
    SVDD = 'svdd'
    SOFT_SVDD = 'soft_svdd'
    NNPU = 'nnpu'
    OURS = 'ours'

    @property
    def uses_unlabeled(self) -> bool:
        return self in (Method.NNPU, Method.OURS)

    @property
    def uses_hypersphere(self) -> bool:
        return self != Method.NNPU


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 300
    seed: int = 0
    weight_decay: float = 1e-5
    optimizer: str = 'adam'
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    nu: float = 0.1
    class_prior: float = 0.5
    non_negative_correction: bool = True
    learnable_center: bool = False
    compactness: float = 1.0
    warm_up_epochs: int = 10
    augment: Optional[AugmentSpec] = None
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if self.compactness < 0:
            raise ConfigError(f"compactness must be >= 0, got {self.compactness}")
        if self.warm_up_epochs < 0:
            raise ConfigError(f"warm_up_epochs must be >= 0, got {self.warm_up_epochs}")
        if self.optimizer not in ('adam', 'sgd'):
            raise ConfigError(f"Unknown optimizer {self.optimizer!r}; choose 'adam' or 'sgd'")

    @classmethod
    def from_settings(cls, settings: dict, seed: int, k: int, **overrides) -> 'TrainConfig':
        """Build from the per-method dict of ``training_settings``; ``overrides`` win."""
        values = dict(learning_rate=settings['learning_rate'], batch_size=settings['batch_size'],
                      epochs=settings['epochs'], seed=seed, weight_decay=settings['weight_decay'],
                      optimizer=settings['optimizer'], nu=settings['nu'], class_prior=settings['class_prior'],
                      compactness=settings['compactness'], warm_up_epochs=settings['warm_up_epochs'],
                      augment=AugmentSpec(seed=seed) if settings['augment'] else None,
                      encoder=EncoderConfig(k=k))
        values.update(overrides)
        return cls(**values)

    @property
    def pu(self) -> PuConfig:
        return PuConfig(self.class_prior, self.non_negative_correction)


@dataclass
class EvalThreshold:
    threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must be in (0, 1), got {self.threshold}")


@dataclass
class EpochLog:
    epoch: int
    method_loss: float
    regression_loss: float
    total: float


@dataclass
class TrainResult:
    state: ModelState
    log: List[EpochLog]
    negative_risks: List[float] = field(default_factory=list)
    raw_negative_risks: List[float] = field(default_factory=list)


def stack_patches(samples: Sequence[TraversalSample], k: int) -> np.ndarray:
    if not samples:
        return np.zeros((0, k, 3))
    return np.stack([np.asarray(s.patch, dtype=np.float64).reshape(k, 3) for s in samples])


def embed_all(state: ModelState, patches: np.ndarray) -> np.ndarray:
    chunks = [forward(state, patches[i:i + SCORE_CHUNK]).embeddings for i in range(0, len(patches), SCORE_CHUNK)]
    return np.concatenate(chunks) if chunks else np.zeros((0, state.config.embedding_dim))


def initial_center(embeddings: np.ndarray, eps: float = CENTER_EPS) -> np.ndarray:
    """Mean embedding with near-zero coordinates pushed out to +-eps."""
    c = embeddings.mean(axis=0)
    small = np.abs(c) < eps
    c[small & (c < 0)] = -eps
    c[small & (c >= 0)] = eps
    return c


def quantile_radius(state: ModelState, positives: np.ndarray, center: np.ndarray, nu: float) -> float:
    """Radius enclosing a (1 - nu) fraction of the positives' embeddings."""
    dist2 = np.sum((embed_all(state, positives) - center) ** 2, axis=1)
    return float(np.sqrt(np.quantile(dist2, 1.0 - nu)))


def _init_hypersphere(state: ModelState, method: Method, positives: np.ndarray, cfg: TrainConfig) -> SvddState:
    """Soft SVDD starts at R = 0 while it warms up; its radius is set when the warm-up ends."""
    center = initial_center(embed_all(state, positives))
    radius = 0.0
    if method == Method.OURS or (method == Method.SOFT_SVDD and cfg.warm_up_epochs == 0):
        radius = quantile_radius(state, positives, center, cfg.nu)
    learnable = cfg.learnable_center and method != Method.OURS
    return SvddState(center, radius, cfg.nu, learnable)


def train(dataset: DatasetSplit, method: Union[str, Method], with_regression: bool, cfg: TrainConfig) -> TrainResult:
    """Train an encoder with ``method`` on ``dataset.train``.

    Positives are shuffled each epoch; PU methods pair every positive batch
    with an equally sized unlabeled batch drawn from a cycling permutation.
    """
    method = Method(method)
    positives = [s for s in dataset.train if s.label_kind == LabelKind.POSITIVE]
    unlabeled = [s for s in dataset.train if s.label_kind == LabelKind.UNLABELED]
    if not positives:
        raise CannotTrainError("training split contains no positive samples")
    if method.uses_unlabeled and not unlabeled:
        raise CannotTrainError(f"{method.value} needs unlabeled samples in the training split")

    k = len(positives[0].patch)
    enc_cfg = cfg.encoder if cfg.encoder.k == k else replace(cfg.encoder, k=k)
    if method == Method.OURS and enc_cfg.final_layer_bias:
        logger.warning("training 'ours' with a final-layer bias; the hypersphere may collapse")

    P = stack_patches(positives, k)
    U = stack_patches(unlabeled, k)
    targets = np.array([np.nan if s.trav_value is None else s.trav_value for s in positives], dtype=np.float64)

    state = init_state(enc_cfg, cfg.seed, method.value)
    if method.uses_hypersphere:
        state.svdd = _init_hypersphere(state, method, P, cfg)
    pu = cfg.pu
    logger.info(f"Training {method.value} on {len(P)} positives / {len(U)} unlabeled "
                f"for {cfg.epochs} epochs (regression={with_regression})")

    optimizer = make_optimizer(cfg.optimizer, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    trainables = dict(state.params)
    train_radius = method in (Method.SOFT_SVDD, Method.OURS)
    if train_radius:
        trainables['svdd.radius'] = np.array(state.svdd.radius)
    if state.svdd is not None and state.svdd.learnable_center:
        trainables['svdd.center'] = state.svdd.center

    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    aug_rng = np.random.default_rng([cfg.seed, cfg.augment.seed]) if cfg.augment else None
    u_order, u_cursor = np.zeros(0, dtype=np.int64), 0
    log: List[EpochLog] = []
    negative_risks: List[float] = []
    raw_negative_risks: List[float] = []

    for epoch in range(1, cfg.epochs + 1):
        radius_frozen = method == Method.SOFT_SVDD and epoch <= cfg.warm_up_epochs
        method_sum, reg_sum, n_batches = 0.0, 0.0, 0
        order = shuffle_rng.permutation(len(P))
        for start in range(0, len(P), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            n_p = len(idx)
            batch = P[idx]
            if method.uses_unlabeled:
                take = []
                while len(take) < n_p:
                    if u_cursor >= len(u_order):
                        u_order, u_cursor = shuffle_rng.permutation(len(U)), 0
                    step = min(n_p - len(take), len(u_order) - u_cursor)
                    take.extend(u_order[u_cursor:u_cursor + step])
                    u_cursor += step
                batch = np.concatenate([batch, U[np.asarray(take)]])
            if aug_rng is not None:
                batch = augment_batch(batch, cfg.augment, aug_rng)

            out = forward(state, batch, record=True)
            d_emb = np.zeros_like(out.embeddings)
            d_logits = np.zeros(len(batch))
            d_trav = np.zeros(len(batch))
            extra = {}

            if method == Method.SVDD:
                res = loss_svdd(out.embeddings, state.svdd, cfg.weight_decay, state.params)
                d_emb[:] = res.d_embeddings
            elif method == Method.SOFT_SVDD:
                res = loss_soft_svdd(out.embeddings, state.svdd, cfg.weight_decay, state.params)
                d_emb[:] = res.d_embeddings
            elif method == Method.NNPU:
                res = loss_nnpu(out.class_logit[:n_p], out.class_logit[n_p:], pu)
                d_logits[:n_p], d_logits[n_p:] = res.d_embeddings, res.d_unlabeled
                decay, res.d_params = weight_decay_term(state.params, cfg.weight_decay)
                res.value += decay
            else:
                res = loss_ours_pu(out.embeddings[:n_p], out.embeddings[n_p:], state.svdd, pu,
                                   cfg.weight_decay, state.params, cfg.compactness)
                d_emb[:n_p], d_emb[n_p:] = res.d_embeddings, res.d_unlabeled
            if 'negative_risk' in res.terms:
                negative_risks.append(res.terms['negative_risk'])
                raw_negative_risks.append(res.terms['raw_negative_risk'])
            if train_radius and not radius_frozen:
                extra['svdd.radius'] = np.array(res.d_radius)
            if res.d_center is not None:
                extra['svdd.center'] = res.d_center

            reg_value = 0.0
            if with_regression:
                reg = loss_regression(out.trav_pred[:n_p], targets[idx])
                d_trav[:n_p] = reg.d_embeddings
                reg_value = reg.value

            grads = backward(state, out.tape, d_emb, d_logits, d_trav)
            for name, g in res.d_params.items():
                grads[name] = grads[name] + g
            grads.update(extra)
            optimizer.step(trainables, grads)
            if train_radius:
                trainables['svdd.radius'] = np.maximum(trainables['svdd.radius'], 0.0)
                state.svdd.radius = float(trainables['svdd.radius'])

            method_sum += res.value
            reg_sum += reg_value
            n_batches += 1
            logger.debug(f"epoch {epoch} batch {n_batches}: {method.value} loss {res.value:.6f}")

        if method == Method.SOFT_SVDD and epoch == cfg.warm_up_epochs:
            state.svdd.radius = quantile_radius(state, P, state.svdd.center, cfg.nu)
            trainables['svdd.radius'] = np.array(state.svdd.radius)
            logger.info(f"[soft_svdd] warm-up done after {epoch} epochs, radius set to {state.svdd.radius:.6f}")
        entry = EpochLog(epoch, method_sum / n_batches, reg_sum / n_batches,
                         (method_sum + reg_sum) / n_batches)
        log.append(entry)
        if epoch == 1 or epoch == cfg.epochs or epoch % 50 == 0:
            logger.info(f"[{method.value}] epoch {epoch}/{cfg.epochs} loss {entry.total:.6f}")

    return TrainResult(state, log, negative_risks, raw_negative_risks)


# ---------------------------------------------------------------- scoring

def scores_from_output(state: ModelState, out: ForwardOutput) -> np.ndarray:
    try:
        method = Method(state.method)
    except ValueError:
        raise UsageError(f"cannot score a model trained with method {state.method!r}")
    if method == Method.NNPU:
        return expit(out.class_logit)
    if method == Method.OURS:
        return expit(hypersphere_discriminant(out.embeddings, state.svdd))
    diff = out.embeddings - state.svdd.center
    return np.exp(-np.sum(diff * diff, axis=1))


def predict_batch(state: ModelState, patches: np.ndarray) -> dict:
    """Scores, embeddings and regression values for (B, k, 3) patches, chunked."""
    scores, embeddings, trav = [], [], []
    for i in range(0, len(patches), SCORE_CHUNK):
        out = forward(state, patches[i:i + SCORE_CHUNK])
        scores.append(scores_from_output(state, out))
        embeddings.append(out.embeddings)
        trav.append(out.trav_pred)
    if not scores:
        return {'scores': np.zeros(0), 'embeddings': np.zeros((0, state.config.embedding_dim)),
                'trav_pred': np.zeros(0)}
    return {'scores': np.concatenate(scores), 'embeddings': np.concatenate(embeddings),
            'trav_pred': np.concatenate(trav)}


def score_batch(state: ModelState, patches: np.ndarray) -> np.ndarray:
    return predict_batch(state, np.asarray(patches, dtype=np.float64))['scores']


def score(state: ModelState, sample: TraversalSample) -> float:
    return float(score_batch(state, sample.patch[None])[0])


def classify(scores: np.ndarray, threshold: EvalThreshold = EvalThreshold()) -> np.ndarray:
    """True (traversable) where score >= threshold."""
    return np.asarray(scores) >= threshold.threshold


def write_training_log(path: Union[str, Path], log: Sequence[EpochLog]) -> None:
    columns = ['epoch', 'method_loss', 'regression_loss', 'total']
    frame = pd.DataFrame([asdict(e) for e in log], columns=columns)
    frame.to_csv(ensure_parent(path), index=False, lineterminator='\n')
