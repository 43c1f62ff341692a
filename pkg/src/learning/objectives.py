# src/learning/objectives.py
"""Training objectives with hand-written gradients.

Every loss returns a :class:`LossResult` carrying the scalar value and the
gradients with respect to its array inputs (embeddings, logits, predictions)
and to the hypersphere radius/center where those are trainable.
"""
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy.special import expit

from src.utils.errors import ConfigError


@dataclass
class SvddState:
    """Hypersphere of the one-class objectives: center c, radius R, and nu."""
    center: np.ndarray
    radius: float = 0.0
    nu: float = 0.1
    learnable_center: bool = False

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64).reshape(-1)
        if not 0.0 < self.nu <= 1.0:
            raise ConfigError(f"nu must be in (0, 1], got {self.nu}")
        if self.radius < 0:
            raise ConfigError(f"radius must be >= 0, got {self.radius}")


@dataclass
class PuConfig:
    class_prior: float = 0.5
    non_negative_correction: bool = True
    surrogate: str = 'sigmoid'

    def __post_init__(self):
        if not 0.0 < self.class_prior < 1.0:
            raise ConfigError(f"class prior must be in (0, 1), got {self.class_prior}")
        if self.surrogate != 'sigmoid':
            raise ConfigError(f"unsupported PU surrogate loss {self.surrogate!r}")


@dataclass
class LossResult:
    value: float
    d_embeddings: Optional[np.ndarray] = None
    d_unlabeled: Optional[np.ndarray] = None
    d_radius: float = 0.0
    d_center: Optional[np.ndarray] = None
    d_params: Dict[str, np.ndarray] = field(default_factory=dict)
    terms: Dict[str, float] = field(default_factory=dict)


def weight_decay_term(params: Optional[Dict[str, np.ndarray]], weight_decay: float):
    """(weight_decay / 2) * sum of squared weight-matrix entries; biases are not decayed."""
    if not params or weight_decay == 0.0:
        return 0.0, {}
    value = 0.0
    grads = {}
    for name, w in params.items():
        if name.endswith('.W'):
            value += 0.5 * weight_decay * float(np.sum(w * w))
            grads[name] = weight_decay * w
    return value, grads


def loss_svdd(embeddings: np.ndarray, svdd: SvddState, weight_decay: float = 0.0,
              params: Optional[Dict[str, np.ndarray]] = None) -> LossResult:
    """Mean squared distance to the center plus weight decay."""
    diff = embeddings - svdd.center
    dist2 = np.sum(diff * diff, axis=1)
    n = len(embeddings)
    decay, d_params = weight_decay_term(params, weight_decay)
    d_emb = 2.0 * diff / n
    d_center = -d_emb.sum(axis=0) if svdd.learnable_center else None
    return LossResult(float(dist2.mean()) + decay, d_emb, d_center=d_center, d_params=d_params)


def loss_soft_svdd(embeddings: np.ndarray, svdd: SvddState, weight_decay: float = 0.0,
                   params: Optional[Dict[str, np.ndarray]] = None) -> LossResult:
    """R^2 + 1/(nu n) * sum(max(0, ||phi - c||^2 - R^2))."""
    diff = embeddings - svdd.center
    dist2 = np.sum(diff * diff, axis=1)
    n = len(embeddings)
    r2 = svdd.radius ** 2
    active = dist2 > r2
    scale = 1.0 / (svdd.nu * n)
    value = r2 + scale * float(np.sum(np.maximum(0.0, dist2 - r2)))
    decay, d_params = weight_decay_term(params, weight_decay)
    d_emb = scale * 2.0 * diff * active[:, None]
    d_radius = 2.0 * svdd.radius - scale * 2.0 * svdd.radius * float(active.sum())
    d_center = -d_emb.sum(axis=0) if svdd.learnable_center else None
    return LossResult(value + decay, d_emb, d_radius=d_radius, d_center=d_center, d_params=d_params,
                      terms={'inside_fraction': float(1.0 - active.mean())})


def sigmoid_loss(z: np.ndarray) -> np.ndarray:
    """l(z) = 1 / (1 + exp(z))."""
    return expit(-z)


def loss_nnpu(logits_p: np.ndarray, logits_u: np.ndarray, pu: PuConfig) -> LossResult:
    """Non-negative PU risk with the sigmoid surrogate.

    risk = pi * R_p+ + max(0, R_u- - pi * R_p-). When the bracket is negative and
    the correction is on, the reported risk is pi * R_p+ and the gradient is that
    of -(R_u- - pi * R_p-), pushing the negative-class risk back up.
    """
    prior = pu.class_prior
    logits_p = np.asarray(logits_p, dtype=np.float64)
    logits_u = np.asarray(logits_u, dtype=np.float64)
    n_p, n_u = len(logits_p), len(logits_u)

    loss_pp = sigmoid_loss(logits_p)
    loss_pn = sigmoid_loss(-logits_p)
    loss_un = sigmoid_loss(-logits_u)
    positive_risk = prior * float(loss_pp.mean())
    negative_risk = float(loss_un.mean()) - prior * float(loss_pn.mean())

    # dl(z)/dz = -l(z) * (1 - l(z)); d l(-z)/dz = l(-z) * (1 - l(-z))
    d_pos_p = -prior * loss_pp * (1.0 - loss_pp) / n_p
    d_neg_p = -prior * loss_pn * (1.0 - loss_pn) / n_p
    d_neg_u = loss_un * (1.0 - loss_un) / n_u

    clamped = pu.non_negative_correction and negative_risk < 0.0
    if clamped:
        value = positive_risk
        d_p, d_u = -d_neg_p, -d_neg_u
    else:
        value = positive_risk + negative_risk
        d_p, d_u = d_pos_p + d_neg_p, d_neg_u
    reported = max(0.0, negative_risk) if pu.non_negative_correction else negative_risk
    return LossResult(value, d_p, d_unlabeled=d_u,
                      terms={'positive_risk': positive_risk, 'negative_risk': reported,
                             'raw_negative_risk': negative_risk, 'clamped': float(clamped)})


def hypersphere_discriminant(embeddings: np.ndarray, svdd: SvddState) -> np.ndarray:
    """g(x) = R^2 - ||phi(x) - c||^2, positive inside the sphere."""
    diff = embeddings - svdd.center
    return svdd.radius ** 2 - np.sum(diff * diff, axis=1)


def loss_ours_pu(emb_p: np.ndarray, emb_u: np.ndarray, svdd: SvddState, pu: PuConfig,
                 weight_decay: float = 0.0, params: Optional[Dict[str, np.ndarray]] = None,
                 compactness: float = 0.0) -> LossResult:
    """nnPU risk with the hypersphere discriminant as the logit; R trained, c frozen.

    ``compactness`` weights an extra mean squared distance of the positives to c.
    """
    if compactness < 0:
        raise ConfigError(f"compactness must be >= 0, got {compactness}")
    g_p = hypersphere_discriminant(emb_p, svdd)
    g_u = hypersphere_discriminant(emb_u, svdd)
    pu_result = loss_nnpu(g_p, g_u, pu)
    diff_p = emb_p - svdd.center
    # dg/dphi = -2 (phi - c), dg/dR = 2R
    d_emb_p = pu_result.d_embeddings[:, None] * (-2.0 * diff_p) + compactness * 2.0 * diff_p / len(emb_p)
    d_emb_u = pu_result.d_unlabeled[:, None] * (-2.0 * (emb_u - svdd.center))
    d_radius = 2.0 * svdd.radius * float(pu_result.d_embeddings.sum() + pu_result.d_unlabeled.sum())
    compact = compactness * float(np.mean(np.sum(diff_p * diff_p, axis=1)))
    decay, d_params = weight_decay_term(params, weight_decay)
    terms = dict(pu_result.terms, compactness=compact)
    return LossResult(pu_result.value + compact + decay, d_emb_p, d_unlabeled=d_emb_u, d_radius=d_radius,
                      d_params=d_params, terms=terms)


def loss_regression(trav_pred: np.ndarray, targets: np.ndarray, mask: Optional[np.ndarray] = None) -> LossResult:
    """Mean squared error over rows where ``mask`` is set and the target is finite.

    The gradient is with respect to ``trav_pred``; other rows get exactly zero.
    """
    trav_pred = np.asarray(trav_pred, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    valid = np.isfinite(targets)
    if mask is not None:
        valid &= np.asarray(mask, dtype=bool)
    d_pred = np.zeros_like(trav_pred)
    n = int(valid.sum())
    if n == 0:
        return LossResult(0.0, d_pred)
    err = trav_pred[valid] - targets[valid]
    d_pred[valid] = 2.0 * err / n
    return LossResult(float(np.mean(err * err)), d_pred)
