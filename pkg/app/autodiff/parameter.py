"""
Named trainable tensors and the flat parameter snapshot format.

Snapshot layout::

    domainshift-params v1
    <name>\t<extent,extent,...>\t<value value ...>

Values are written with 17 significant digits so that reading them back
reproduces every float64 bit for bit.
"""

import logging
import os

import numpy as np

from app.autodiff.tensor import Tensor

logger = logging.getLogger(__name__)

SNAPSHOT_HEADER = 'domainshift-params v1'


class SnapshotError(ValueError):
    """Malformed or mismatching parameter snapshot"""


class Parameter:
    """A learned tensor with a unique hierarchical name such as ``qg.edgeconv0.mlp.dense0.weight``"""

    def __init__(self, name, data, trainable=True):
        self.name = name
        self.tensor = Tensor(data, requires_grad=trainable, name=name)
        self._trainable = bool(trainable)

    @property
    def trainable(self):
        return self._trainable

    @trainable.setter
    def trainable(self, value):
        # frozen parameters never receive a gradient
        self._trainable = bool(value)
        self.tensor.requires_grad = self._trainable
        if not self._trainable:
            self.tensor.grad = None

    @property
    def data(self):
        return self.tensor.data

    @property
    def shape(self):
        return self.tensor.shape

    def assign(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self.tensor.shape:
            raise SnapshotError(f"Parameter {self.name}: expected shape {self.tensor.shape}, got {values.shape}")
        self.tensor.data[...] = values

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape}, trainable={self.trainable})"


def check_unique_names(parameters):
    seen = set()
    for p in parameters:
        if p.name in seen:
            raise SnapshotError(f"Duplicate parameter name: {p.name}")
        seen.add(p.name)


def format_record(name, array):
    array = np.asarray(array, dtype=np.float64)
    if not np.all(np.isfinite(array)):
        raise SnapshotError(f"Cannot serialize non-finite values in {name}")
    if any(ch.isspace() for ch in name):
        raise SnapshotError(f"Record name must not contain whitespace: {name!r}")
    shape = ','.join(str(n) for n in array.shape)
    values = ' '.join(format(float(v), '.17g') for v in array.reshape(-1))
    return f"{name}\t{shape}\t{values}"


def parse_record(line):
    parts = line.rstrip('\n').split('\t')
    if len(parts) != 3:
        raise SnapshotError(f"Malformed snapshot record: {line[:80]!r}")
    name, shape_text, values_text = parts
    shape = tuple(int(n) for n in shape_text.split(',')) if shape_text else ()
    values = np.array([float(v) for v in values_text.split()], dtype=np.float64)
    expected = int(np.prod(shape)) if shape else 1
    if values.size != expected:
        raise SnapshotError(f"Record {name}: shape {shape} needs {expected} values, found {values.size}")
    return name, values.reshape(shape)


def save_snapshot(path, arrays):
    """Write {name: array} in insertion order; the file is replaced atomically"""
    tmp_path = f"{path}.tmp"
    with open(tmp_path, 'w', encoding='utf-8') as fh:
        fh.write(SNAPSHOT_HEADER + '\n')
        for name, array in arrays.items():
            fh.write(format_record(name, array) + '\n')
    os.replace(tmp_path, path)
    logger.info(f"Saved {len(arrays)} snapshot records to {path}")


def load_snapshot(path):
    arrays = {}
    with open(path, 'r', encoding='utf-8') as fh:
        header = fh.readline().rstrip('\n')
        if header != SNAPSHOT_HEADER:
            raise SnapshotError(f"{path}: unexpected header {header!r}")
        for line in fh:
            if not line.strip():
                continue
            name, array = parse_record(line)
            if name in arrays:
                raise SnapshotError(f"{path}: duplicate record {name}")
            arrays[name] = array
    return arrays
