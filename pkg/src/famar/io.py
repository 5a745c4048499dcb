"""CSV readers and writers.

Panels use a long format with header ``sample_id,row,col,value`` (all
indices 0-based); every cell of the implied ``(n, p1, p2)`` block must
appear exactly once.  Dense matrices are written headerless, one matrix row
per line.  Floats are written with 17 significant digits so that they
round-trip exactly.
"""

import json
import warnings

import numpy as np

from .errors import FamarError

FLOAT_FMT = "%.17g"
PANEL_HEADER = ("sample_id", "row", "col", "value")
SCHEMA_VERSION = 1


class InputError(FamarError, ValueError):
    """A data file is malformed."""


def _read_table(path, header):
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
        names = tuple(h.strip() for h in first.split(","))
        if names != header:
            raise InputError(f"{path}: header must be {','.join(header)}, got {first!r}")
        try:
            with warnings.catch_warnings():
                # an empty body is reported below as an empty panel
                warnings.simplefilter("ignore", UserWarning)
                data = np.loadtxt(fh, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise InputError(f"{path}: {exc}") from None
    if data.size == 0:
        data = np.zeros((0, len(header)))
    if data.shape[1] != len(header):
        raise InputError(f"{path}: expected {len(header)} columns, got {data.shape[1]}")
    if not np.all(np.isfinite(data)):
        raise InputError(f"{path}: non-finite value")
    return data


def _indices(col, path, name):
    idx = col.astype(np.int64)
    if np.any(idx != col) or np.any(idx < 0):
        raise InputError(f"{path}: {name} must hold nonnegative integers")
    return idx


def read_panel(path):
    """Read a long-format panel into an ``(n, p1, p2)`` array.

    Raises
    ------
    InputError
        On a bad header, non-integer indices, a duplicated
        ``(sample_id, row, col)`` triple or a missing one; the first
        offending triple in lexicographic order is named.
    """
    data = _read_table(path, PANEL_HEADER)
    if data.shape[0] == 0:
        raise InputError(f"{path}: panel is empty")
    s = _indices(data[:, 0], path, "sample_id")
    r = _indices(data[:, 1], path, "row")
    c = _indices(data[:, 2], path, "col")
    shape = (int(s.max()) + 1, int(r.max()) + 1, int(c.max()) + 1)
    flat = np.ravel_multi_index((s, r, c), shape)
    counts = np.bincount(flat, minlength=int(np.prod(shape)))
    dup = np.flatnonzero(counts > 1)
    if dup.size:
        triple = tuple(int(v) for v in np.unravel_index(dup[0], shape))
        raise InputError(f"{path}: duplicate cell (sample_id, row, col) = {triple}")
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        triple = tuple(int(v) for v in np.unravel_index(missing[0], shape))
        raise InputError(f"{path}: missing cell (sample_id, row, col) = {triple}")
    out = np.empty(int(np.prod(shape)))
    out[flat] = data[:, 3]
    return out.reshape(shape)


def write_panel(path, panel):
    panel = np.asarray(panel, dtype=float)
    n, p1, p2 = panel.shape
    s, r, c = np.meshgrid(np.arange(n), np.arange(p1), np.arange(p2), indexing="ij")
    table = np.column_stack([s.ravel(), r.ravel(), c.ravel(), panel.ravel()])
    np.savetxt(path, table, delimiter=",", fmt=["%d", "%d", "%d", FLOAT_FMT],
               header=",".join(PANEL_HEADER), comments="")


def read_vector(path, header=("sample_id", "y")):
    """Read a ``sample_id,<value>`` file ordered by ``sample_id`` (0..n-1)."""
    data = _read_table(path, tuple(header))
    if data.shape[0] == 0:
        raise InputError(f"{path}: file is empty")
    ids = _indices(data[:, 0], path, header[0])
    order = np.argsort(ids, kind="stable")
    if not np.array_equal(ids[order], np.arange(ids.size)):
        raise InputError(f"{path}: {header[0]} must be exactly 0..{ids.size - 1}")
    return data[order, 1]


def write_vector(path, values, header=("sample_id", "y")):
    values = np.asarray(values, dtype=float).ravel()
    table = np.column_stack([np.arange(values.size), values])
    np.savetxt(path, table, delimiter=",", fmt=["%d", FLOAT_FMT],
               header=",".join(header), comments="")


def write_matrix(path, matrix):
    np.savetxt(path, np.atleast_2d(np.asarray(matrix, dtype=float)), delimiter=",", fmt=FLOAT_FMT)


def read_matrix(path):
    try:
        out = np.loadtxt(path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from None
    if not np.all(np.isfinite(out)):
        raise InputError(f"{path}: non-finite value")
    return out


def write_long_matrix(path, matrix):
    """``row,col,value`` triples, the heat-map layout."""
    matrix = np.asarray(matrix, dtype=float)
    r, c = np.meshgrid(np.arange(matrix.shape[0]), np.arange(matrix.shape[1]), indexing="ij")
    table = np.column_stack([r.ravel(), c.ravel(), matrix.ravel()])
    np.savetxt(path, table, delimiter=",", fmt=["%d", "%d", FLOAT_FMT],
               header="row,col,value", comments="")


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None


SIM_COLUMNS = (
    "point", "replication", "method", "n", "p1", "p2", "k1", "k2", "lambda",
    "rel_err_f", "rel_err_u", "rel_err_u_noavg", "rel_err_a", "rel_err_b",
    "rel_err_y_new", "rank_b", "converged", "failed",
)
_INT_COLUMNS = {"point", "replication", "n", "p1", "p2", "k1", "k2", "rank_b", "converged", "failed"}


def _cell(name, value):
    if name == "method":
        return str(value)
    if name in _INT_COLUMNS:
        return str(int(value))
    return FLOAT_FMT % float(value)


def write_sim_rows(path, rows):
    """One CSV line per (point, replication, method) in :data:`SIM_COLUMNS` order."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(SIM_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_cell(k, row[k]) for k in SIM_COLUMNS) + "\n")
