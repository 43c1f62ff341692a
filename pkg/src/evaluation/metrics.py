# src/evaluation/metrics.py
"""Ranking and threshold metrics over normal scores."""
import numpy as np
from scipy.stats import rankdata

from src.utils.errors import UndefinedMetricError

COLLAPSE_VARIANCE = 1e-6


def _check_classes(pos_scores, neg_scores):
    pos = np.asarray(pos_scores, dtype=np.float64).ravel()
    neg = np.asarray(neg_scores, dtype=np.float64).ravel()
    if len(pos) == 0 or len(neg) == 0:
        raise UndefinedMetricError(f"metric needs both classes, got {len(pos)} positives and {len(neg)} negatives")
    return pos, neg


def auroc(pos_scores, neg_scores) -> float:
    """P(pos > neg) over all pairs with ties counted 0.5, from the rank sum of the positives."""
    pos, neg = _check_classes(pos_scores, neg_scores)
    ranks = rankdata(np.concatenate([pos, neg]), method='average')
    n_pos, n_neg = len(pos), len(neg)
    rank_sum = ranks[:n_pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def mean_tpr(pos_scores, neg_scores, threshold: float = 0.5) -> float:
    """Balanced accuracy: mean of positive recall (score >= t) and negative recall (score < t)."""
    pos, neg = _check_classes(pos_scores, neg_scores)
    threshold = getattr(threshold, 'threshold', threshold)
    return float(0.5 * (np.mean(pos >= threshold) + np.mean(neg < threshold)))


def embedding_variance(embeddings: np.ndarray) -> float:
    """Mean per-dimension sample variance; 0 for fewer than two embeddings."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if len(embeddings) < 2:
        return 0.0
    return float(np.var(embeddings, axis=0, ddof=1).mean())


def is_collapsed(embeddings: np.ndarray, tolerance: float = COLLAPSE_VARIANCE) -> bool:
    return embedding_variance(embeddings) < tolerance
