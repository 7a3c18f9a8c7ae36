"""
Report emission: CSV tables for plotting plus a JSON summary
"""

import logging
import os

import numpy as np
import pandas as pd

from app.evalkit.curves import HIGHER_IS_BETTER, aggregate_runs, data_savings
from app.evalkit.metrics import resolution_profile, roc_auc
from app.storage import StorageError, read_json, read_jsonl, write_json, write_jsonl, write_text
from config.settings import settings

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'


class ReportWriteError(OSError):
    """A report file could not be written"""


def frame_to_csv(frame):
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator='\n')


def read_table(path):
    """Read an emitted CSV back without losing float bits"""
    return pd.read_csv(path, float_precision='round_trip')


def _write(path, writer, payload):
    try:
        writer(path, payload)
    except StorageError as e:
        raise ReportWriteError(f"Could not write report file {path}: {e}") from e
    return path


def curves_frame(points):
    return pd.DataFrame([p.to_dict() for p in points], columns=['strategy', 'train_size', 'mean', 'std', 'n'])


def emit_report(out_dir, records, points, rocs=None, profiles=None, histograms=None, summary_extra=None):
    """
    Write curves.csv, runs.jsonl, roc_<tag>.csv, resolution_<tag>.csv,
    histograms_<tag>.csv and summary.json into ``out_dir``; returns the written paths.
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise ReportWriteError(f"Cannot create report directory {out_dir}: {e}") from e
    written = [
        _write(os.path.join(out_dir, 'curves.csv'), write_text, frame_to_csv(curves_frame(points))),
        _write(os.path.join(out_dir, 'runs.jsonl'), write_jsonl, records),
    ]
    for tag, roc in sorted((rocs or {}).items()):
        written.append(_write(os.path.join(out_dir, f"roc_{tag}.csv"), write_text, frame_to_csv(roc.to_frame())))
    for tag, profile in sorted((profiles or {}).items()):
        written.append(_write(os.path.join(out_dir, f"resolution_{tag}.csv"), write_text,
                              frame_to_csv(profile.to_frame())))
        written.append(_write(os.path.join(out_dir, f"histograms_{tag}.csv"), write_text,
                              frame_to_csv(profile.shapes_frame())))
    for tag, comparison in sorted((histograms or {}).items()):
        written.append(_write(os.path.join(out_dir, f"histograms_{tag}.csv"), write_text,
                              frame_to_csv(comparison.to_frame())))

    strategies = {p.strategy for p in points}
    baseline = 'pure' if 'pure' in strategies else 'scratch'
    task = records[0]['task'] if records else None
    summary = {
        'task': task,
        'metric': 'met_loss' if task == 'met' else 'auc',
        'higher_is_better': HIGHER_IS_BETTER.get(task),
        'baseline': baseline,
        'curves': [p.to_dict() for p in points],
        'data_savings': data_savings(points, baseline),
        'failed_runs': sum(1 for r in records if r.get('status') != 'ok'),
        'profiles': {tag: profile.highlighted() for tag, profile in sorted((profiles or {}).items())},
        'auc': {tag: roc.auc for tag, roc in sorted((rocs or {}).items())},
        'code_version': settings.CODE_VERSION,
    }
    summary.update(summary_extra or {})
    written.append(_write(os.path.join(out_dir, 'summary.json'), write_json, summary))
    logger.info(f"Report written to {out_dir} ({len(written)} files)")
    return written


def _first_ok(records, strategy, size):
    runs = sorted((r for r in records if r['strategy'] == strategy and r['train_size'] == size
                   and r.get('status') == 'ok'), key=lambda r: r['seed_index'])
    return runs[0] if runs else None


def report_from_directory(in_dir, out_dir):
    """Rebuild a report from a sweep directory (runs.jsonl plus predictions/)"""
    records = list(read_jsonl(os.path.join(in_dir, 'runs.jsonl')))
    if not records:
        raise ValueError(f"No run records in {in_dir}")
    task = records[0]['task']
    points = aggregate_runs(records)

    rocs, profiles = {}, {}
    for strategy in dict.fromkeys(p.strategy for p in points):
        size = max(p.train_size for p in points if p.strategy == strategy)
        run = _first_ok(records, strategy, size)
        path = os.path.join(in_dir, 'predictions', f"{strategy}_{size}_{run['seed_index']}.npz")
        if not os.path.exists(path):
            logger.warning(f"No stored predictions for {strategy} at size {size}; skipping its curve")
            continue
        with np.load(path) as stored:
            scores, targets = stored['scores'], stored['targets']
        tag = f"{strategy}_{size}"
        if task == 'met':
            profiles[tag] = resolution_profile(scores, targets)
        else:
            rocs[tag] = roc_auc(scores, targets)

    manifest_path = os.path.join(in_dir, 'manifest.json')
    extra = {'manifest': read_json(manifest_path)} if os.path.exists(manifest_path) else {}
    return emit_report(out_dir, records, points, rocs=rocs, profiles=profiles, summary_extra=extra)
