"""
Trajectory files.

CSV: header ``t,f,penalty,residual,x_0_0,...,x_{n-1}_{p-1}`` (X flattened row
major), one row per sample, floats written with ``repr`` so they read back
bit-exactly. JSON: ``{"format", "metadata", "terminated_by", "n", "p",
"samples": [{"t", "f", "penalty", "residual", "X"}]}`` with sorted keys.
The full layout is documented in ``landingflow/docs/file_formats.md``.
"""
import csv
import json
import os
import re

import torch

from landingflow.config import numerics_config
from landingflow.exceptions import ConfigError
from landingflow.flow_manager import Termination, Trajectory, TrajectorySample

SCALAR_COLUMNS = ("t", "f", "penalty", "residual")
FORMATS = ("csv", "json")
JSON_FORMAT_TAG = "landingflow-trajectory/1"

_X_COLUMN = re.compile(r"^x_(\d+)_(\d+)$")


def x_columns(n, p):
    return [f"x_{i}_{j}" for i in range(n) for j in range(p)]


def format_for_path(path, fmt=None):
    if fmt is not None:
        if fmt not in FORMATS:
            raise ConfigError(f"Unknown trajectory format {fmt!r}; expected one of {FORMATS}")
        return fmt
    return "json" if str(path).endswith(".json") else "csv"


def _float(value):
    return repr(float(value))


def write_csv(path, trajectory):
    n, p = trajectory.shape
    with open(path, "w", newline="") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(list(SCALAR_COLUMNS) + x_columns(n, p))
        for sample in trajectory.samples:
            row = [_float(sample.t), _float(sample.f), _float(sample.penalty), _float(sample.residual)]
            row.extend(_float(value) for value in sample.X.reshape(-1).tolist())
            writer.writerow(row)


def trajectory_to_dict(trajectory):
    n, p = trajectory.shape
    return {
        "format": JSON_FORMAT_TAG,
        "metadata": dict(trajectory.metadata),
        "terminated_by": None if trajectory.terminated_by is None else trajectory.terminated_by.value,
        "n": n,
        "p": p,
        "samples": [
            {
                "t": sample.t,
                "f": sample.f,
                "penalty": sample.penalty,
                "residual": sample.residual,
                "X": sample.X.tolist(),
            }
            for sample in trajectory.samples
        ],
    }


def write_json(path, trajectory):
    with open(path, "w") as file:
        json.dump(trajectory_to_dict(trajectory), file, sort_keys=True, indent=2)
        file.write("\n")


def write_trajectory(path, trajectory, fmt=None):
    """Writes ``trajectory`` as CSV or JSON (chosen by ``fmt`` or the file extension); returns the format used."""
    fmt = format_for_path(path, fmt)
    directory = os.path.dirname(os.fspath(path))
    if directory:
        os.makedirs(directory, exist_ok=True)
    (write_json if fmt == "json" else write_csv)(path, trajectory)
    return fmt


def _shape_from_header(header):
    if tuple(header[: len(SCALAR_COLUMNS)]) != SCALAR_COLUMNS:
        raise ConfigError(f"Trajectory CSV header must start with {','.join(SCALAR_COLUMNS)}")
    indices = []
    for column in header[len(SCALAR_COLUMNS):]:
        match = _X_COLUMN.match(column)
        if match is None:
            raise ConfigError(f"Unexpected trajectory column {column!r}")
        indices.append((int(match.group(1)), int(match.group(2))))
    if not indices:
        raise ConfigError("Trajectory CSV has no state columns")
    n, p = indices[-1][0] + 1, indices[-1][1] + 1
    if header[len(SCALAR_COLUMNS):] != x_columns(n, p):
        raise ConfigError("Trajectory CSV state columns are not in row-major x_i_j order")
    return n, p


def read_csv(path, metadata=None):
    with open(path, "r", newline="") as file:
        rows = list(csv.reader(file))
    if not rows:
        raise ConfigError(f"Trajectory file {path} is empty")
    n, p = _shape_from_header(rows[0])
    samples = []
    for line, row in enumerate(rows[1:], start=2):
        if len(row) != len(rows[0]):
            raise ConfigError(f"Trajectory CSV line {line} has {len(row)} fields, expected {len(rows[0])}")
        values = [float(value) for value in row]
        t, f, penalty, residual = values[: len(SCALAR_COLUMNS)]
        X = torch.tensor(values[len(SCALAR_COLUMNS):], dtype=numerics_config.DTYPE).reshape(n, p)
        samples.append(TrajectorySample(t=t, X=X, f=f, penalty=penalty, residual=residual))
    return Trajectory(samples=samples, terminated_by=None, metadata=dict(metadata or {}))


def read_json(path, metadata=None):
    with open(path, "r") as file:
        data = json.load(file)
    if data.get("format") != JSON_FORMAT_TAG:
        raise ConfigError(f"{path} is not a landingflow trajectory file")
    samples = [
        TrajectorySample(
            t=sample["t"],
            X=torch.tensor(sample["X"], dtype=numerics_config.DTYPE).reshape(data["n"], data["p"]),
            f=sample["f"],
            penalty=sample["penalty"],
            residual=sample["residual"],
        )
        for sample in data["samples"]
    ]
    terminated_by = data.get("terminated_by")
    return Trajectory(
        samples=samples,
        terminated_by=None if terminated_by is None else Termination(terminated_by),
        metadata={**data.get("metadata", {}), **(metadata or {})},
    )


def read_trajectory(path, metadata=None):
    """
    Reads a trajectory file; ``metadata`` entries (field, lambda, ...) are
    merged over whatever the file carries. CSV files carry none.
    """
    if not os.path.isfile(path):
        raise ConfigError(f"Trajectory file {path} does not exist")
    try:
        if format_for_path(path) == "json":
            return read_json(path, metadata)
        return read_csv(path, metadata)
    except (ValueError, KeyError, TypeError, RuntimeError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"Malformed trajectory file {path}: {e}")
