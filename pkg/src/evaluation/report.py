# src/evaluation/report.py
"""Comparison table over trained models on a labeled evaluation split."""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
import pandas as pd

from src.core.datagen import LabelKind, TraversalSample
from src.evaluation.metrics import auroc, embedding_variance, is_collapsed, mean_tpr
from src.learning.encoder import ModelState
from src.learning.trainer import EvalThreshold, predict_batch, stack_patches
from src.utils.errors import UndefinedMetricError
from src.utils.logger import logger
from src.utils.textio import ensure_parent

REPORT_COLUMNS = ['method', 'TPR', 'AUROC']


@dataclass
class ReportRow:
    method: str
    tpr_mean: float
    auroc: float
    embedding_variance: float = float('nan')
    collapsed: bool = False


@dataclass
class EvalReport:
    rows: List[ReportRow] = field(default_factory=list)
    dataset: str = 'synthetic'
    threshold: float = 0.5
    n_positive: int = 0
    n_negative: int = 0

    def row(self, method: str) -> ReportRow:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def to_frame(self, detailed: bool = False) -> pd.DataFrame:
        frame = pd.DataFrame({
            'method': [r.method for r in self.rows],
            'TPR': [r.tpr_mean for r in self.rows],
            'AUROC': [r.auroc for r in self.rows],
        }, columns=REPORT_COLUMNS)
        if detailed:
            frame['embedding_variance'] = [r.embedding_variance for r in self.rows]
            frame['collapsed'] = [r.collapsed for r in self.rows]
        return frame

    def to_text(self) -> str:
        title = (f"dataset={self.dataset} threshold={self.threshold} "
                 f"positives={self.n_positive} negatives={self.n_negative}")
        table = self.to_frame(detailed=True).to_string(index=False, float_format=lambda v: f"{v:.4f}")
        return f"{title}\n{table}\n"


def labeled_eval_samples(samples: Sequence[TraversalSample]):
    """Positives and eval-only negatives; unlabeled samples take no part in evaluation."""
    pos = [s for s in samples if s.label_kind == LabelKind.POSITIVE]
    neg = [s for s in samples if s.label_kind == LabelKind.NEGATIVE]
    return pos, neg


def build_report(models: Dict[str, ModelState], eval_samples: Sequence[TraversalSample],
                 threshold: EvalThreshold = EvalThreshold(), dataset: str = 'synthetic') -> EvalReport:
    """One row per model, in the order given."""
    pos, neg = labeled_eval_samples(eval_samples)
    if not pos or not neg:
        raise UndefinedMetricError(f"eval split needs positives and negatives, got {len(pos)} / {len(neg)}")
    report = EvalReport(dataset=dataset, threshold=threshold.threshold, n_positive=len(pos), n_negative=len(neg))
    for name, state in models.items():
        k = state.config.k
        pred_pos = predict_batch(state, stack_patches(pos, k))
        pred_neg = predict_batch(state, stack_patches(neg, k))
        embeddings = np.concatenate([pred_pos['embeddings'], pred_neg['embeddings']])
        row = ReportRow(name, mean_tpr(pred_pos['scores'], pred_neg['scores'], threshold.threshold),
                        auroc(pred_pos['scores'], pred_neg['scores']),
                        embedding_variance(embeddings), is_collapsed(embeddings))
        logger.info(f"{name}: TPR {row.tpr_mean:.4f} AUROC {row.auroc:.4f}"
                    f"{' (collapsed)' if row.collapsed else ''}")
        report.rows.append(row)
    return report


def write_report_csv(path: Union[str, Path], report: EvalReport) -> None:
    report.to_frame().to_csv(ensure_parent(path), index=False, lineterminator='\n')


def read_report_csv(path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(path)


def write_report_text(path: Union[str, Path], report: EvalReport) -> None:
    with open(ensure_parent(path), 'w', newline='\n') as f:
        f.write(report.to_text())
