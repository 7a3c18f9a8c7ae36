"""
Metrics, curve aggregation and report emission
"""

from app.evalkit.curves import CurvePoint, aggregate_runs, data_savings
from app.evalkit.histograms import OBSERVABLES, HistogramComparison, compare_histograms, compare_observable
from app.evalkit.metrics import MetricError, ResolutionProfile, RocCurve, auc_score, resolution_profile, roc_auc
from app.evalkit.report import ReportWriteError, emit_report, read_table, report_from_directory

__all__ = [
    'CurvePoint', 'HistogramComparison', 'MetricError', 'OBSERVABLES', 'ReportWriteError', 'ResolutionProfile',
    'RocCurve', 'aggregate_runs', 'auc_score', 'compare_histograms', 'compare_observable', 'data_savings',
    'emit_report', 'read_table', 'report_from_directory', 'resolution_profile', 'roc_auc',
]
