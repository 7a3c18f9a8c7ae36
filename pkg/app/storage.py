"""
File helpers shared by every stage: atomic writes, JSON Lines (plain or gzip)
"""

import gzip
import hashlib
import json
import logging
import os
import tempfile

import numpy as np

logger = logging.getLogger(__name__)


class StorageError(OSError):
    """A result or data file could not be written"""


def convert_numpy_types(obj):
    """
    Convert numpy data types to Python native types for JSON serialization
    """
    if isinstance(obj, (np.floating,)):
        return float(obj)
    elif isinstance(obj, np.integer):
        return int(obj)
    elif isinstance(obj, np.bool_):
        return bool(obj)
    elif isinstance(obj, np.ndarray):
        return convert_numpy_types(obj.tolist())
    elif isinstance(obj, dict):
        return {key: convert_numpy_types(value) for key, value in obj.items()}
    elif isinstance(obj, (list, tuple)):
        return [convert_numpy_types(item) for item in obj]
    else:
        return obj


def dumps(record):
    return json.dumps(convert_numpy_types(record), sort_keys=False, separators=(',', ':'), allow_nan=False)


def _open_text(path, mode):
    if str(path).endswith('.gz'):
        return gzip.open(path, mode + 't', encoding='utf-8')
    return open(path, mode, encoding='utf-8', newline='\n')


def atomic_write(path, write_fn):
    """Run ``write_fn(fh)`` against a temp file in the target directory, then rename into place"""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    suffix = '.gz' if path.endswith('.gz') else '.tmp'
    fd, temp_path = tempfile.mkstemp(prefix='.partial-', suffix=suffix, dir=directory)
    os.close(fd)
    try:
        with _open_text(temp_path, 'w') as fh:
            write_fn(fh)
        os.replace(temp_path, path)
    except Exception as e:
        logger.error(f"Failed to write {path}: {e}")
        if os.path.exists(temp_path):
            try:
                os.unlink(temp_path)
            except OSError as cleanup_error:
                logger.warning(f"Could not delete temp file {temp_path}: {cleanup_error}")
        raise StorageError(f"Could not write {path}: {e}") from e


def write_text(path, text):
    atomic_write(path, lambda fh: fh.write(text))


def write_json(path, record):
    atomic_write(path, lambda fh: fh.write(json.dumps(convert_numpy_types(record), indent=2, sort_keys=True) + '\n'))


def read_json(path):
    with _open_text(path, 'r') as fh:
        return json.load(fh)


def write_jsonl(path, records):
    def _write(fh):
        count = 0
        for record in records:
            fh.write(dumps(record) + '\n')
            count += 1
        logger.info(f"Wrote {count} records to {path}")

    atomic_write(path, _write)


def read_jsonl(path):
    with _open_text(path, 'r') as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{line_no}: invalid JSON record ({e})") from e


def config_hash(record):
    """Short SHA-256 of the canonical JSON form of a configuration record"""
    canonical = json.dumps(convert_numpy_types(record), sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:16]
