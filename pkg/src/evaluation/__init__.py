# src/evaluation/__init__.py
"""
Evaluation of trained models.

Includes:
- metrics: auroc, mean_tpr, collapse detection
- report: EvalReport and its text/CSV emitters
"""

from .metrics import auroc, embedding_variance, is_collapsed, mean_tpr
from .report import EvalReport, build_report, write_report_csv

__all__ = ['auroc', 'embedding_variance', 'is_collapsed', 'mean_tpr', 'EvalReport', 'build_report',
           'write_report_csv']
