"""
CSV / JSON persistence of grid functions, rate fields, exposed sets, entropy
tables and reports.

Floats are written with repr (shortest round trip) and infinities as the
literals inf / -inf. JSON documents have sorted keys and two-space indentation,
so identical inputs give byte-identical files.
"""
import csv
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel

from ldlab.error_handlers import FamilyError, GridError, UsageError2
from ldlab.models import EntropyRecord, to_jsonable
from ldlab.services.cvxint import RateField, RateProvenance
from ldlab.services.extgrid import GridFunction, GridSpace, Regularity
from ldlab.services.metrics import PerformanceTimer, metrics_collector

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def format_float(value: float) -> str:
    return repr(float(value))


def parse_float(text: str, path: PathLike, row: int) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise UsageError2(f"{path}: row {row} has a non-numeric value '{text}'")
    if math.isnan(value):
        raise UsageError2(f"{path}: row {row} contains NaN")
    return value


def _coordinate_header(dim: int) -> List[str]:
    return [f"x_{i+1}" for i in range(dim)]


def _read_rows(path: PathLike) -> Tuple[List[str], List[List[str]]]:
    try:
        with open(path, newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader, None)
            rows = [row for row in reader if row]
    except OSError as e:
        raise UsageError2(f"Cannot read '{path}': {e.strerror}")
    if not header:
        raise UsageError2(f"'{path}' is empty")
    return [h.strip() for h in header], rows


def infer_space(coords: np.ndarray) -> GridSpace:
    """Regular grid whose flat order reproduces the given coordinate rows"""
    if coords.ndim != 2 or coords.shape[0] < 2:
        raise GridError("At least two grid points are required")
    axes = [np.unique(coords[:, i]) for i in range(coords.shape[1])]
    space = GridSpace(lower=tuple(float(a[0]) for a in axes), upper=tuple(float(a[-1]) for a in axes),
                      points_per_axis=tuple(len(a) for a in axes))
    if space.size != coords.shape[0] or not np.allclose(space.points, coords, rtol=0, atol=1e-9):
        raise GridError("Rows do not form a regular grid in flat index order")
    return space


def _split_table(path: PathLike, value_columns: Sequence[str]) -> Tuple[GridSpace, Dict[str, List[str]]]:
    header, rows = _read_rows(path)
    dim = len(header) - len(value_columns)
    if dim < 1 or header[:dim] != _coordinate_header(dim) or header[dim:] != list(value_columns):
        raise UsageError2(f"'{path}' must have header x_1,...,x_d,{','.join(value_columns)}")
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise UsageError2(f"{path}: row {i+2} has {len(row)} fields, expected {len(header)}")
    coords = np.array([[parse_float(c, path, i + 2) for c in row[:dim]] for i, row in enumerate(rows)])
    space = infer_space(coords)
    columns = {name: [row[dim + k] for row in rows] for k, name in enumerate(value_columns)}
    return space, columns


def write_grid_table(path: PathLike, space: GridSpace, columns: Dict[str, Sequence[Any]]):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(_coordinate_header(space.dim) + list(columns))
        for index, point in enumerate(space.points):
            row = [format_float(c) for c in point]
            for values in columns.values():
                value = values[index]
                row.append(format_float(value) if isinstance(value, (float, np.floating)) else str(value))
            writer.writerow(row)


def write_grid_function(path: PathLike, f: GridFunction):
    write_grid_table(path, f.space, {"value": f.as_array()})


def read_grid_function(path: PathLike, regularity: Regularity = Regularity.CONTINUOUS) -> GridFunction:
    space, columns = _split_table(path, ["value"])
    values = [parse_float(v, path, i + 2) for i, v in enumerate(columns["value"])]
    return GridFunction.from_array(space, values, regularity)


def write_rate_field(path: PathLike, rate: RateField):
    write_grid_table(path, rate.space, {"value": rate.values})


def read_rate_field(path: PathLike, provenance: RateProvenance = RateProvenance.ANALYTIC) -> RateField:
    space, columns = _split_table(path, ["value"])
    values = [parse_float(v, path, i + 2) for i, v in enumerate(columns["value"])]
    return RateField.from_array(space, values, provenance)


def read_curve(path: PathLike) -> Tuple[np.ndarray, np.ndarray]:
    """1-d grid function or rate field as (x, value) arrays"""
    space, columns = _split_table(path, ["value"])
    if space.dim != 1:
        raise UsageError2(f"'{path}' is {space.dim}-dimensional; only 1-d curves can be plotted")
    return space.axes[0], np.array([parse_float(v, path, i + 2) for i, v in enumerate(columns["value"])])


def read_family_table(path: PathLike) -> Tuple[np.ndarray, GridSpace, np.ndarray]:
    """Custom family CSV: param_1..param_p, x_1..x_d, value -> (parameters, space, values matrix)"""
    header, rows = _read_rows(path)
    p = sum(1 for h in header if h.startswith("param_"))
    d = sum(1 for h in header if h.startswith("x_"))
    expected = [f"param_{i+1}" for i in range(p)] + _coordinate_header(d) + ["value"]
    if p < 1 or d < 1 or header != expected:
        raise FamilyError(f"'{path}' must have header param_1..param_p,x_1..x_d,value")
    table = np.array([[parse_float(c, path, i + 2) for c in row] for i, row in enumerate(rows)])
    if table.ndim != 2 or table.shape[1] != len(header):
        raise FamilyError(f"'{path}' has malformed rows")
    params, first_rows = np.unique(table[:, :p], axis=0, return_index=True)
    params = params[np.argsort(first_rows)]
    blocks = []
    space = None
    for param in params:
        block = table[np.all(table[:, :p] == param, axis=1)]
        block_space = infer_space(block[:, p:p + d])
        if space is None:
            space = block_space
        elif not space.same_as(block_space):
            raise FamilyError(f"'{path}': members are tabulated on different grids")
        blocks.append(block[:, -1])
    values = np.array(blocks)
    if not np.all(np.isfinite(values)):
        raise FamilyError(f"'{path}': family members must be finite everywhere")
    return params, space, values


def write_json(path: PathLike, document: Union[BaseModel, Dict[str, Any], List[Any]]):
    if isinstance(document, BaseModel):
        document = document.model_dump(mode="json", by_alias=True)
    with open(path, "w") as handle:
        json.dump(to_jsonable(document), handle, sort_keys=True, indent=2)
        handle.write("\n")


def read_json(path: PathLike) -> Any:
    try:
        with open(path) as handle:
            return json.load(handle)
    except OSError as e:
        raise UsageError2(f"Cannot read '{path}': {e.strerror}")
    except json.JSONDecodeError as e:
        raise UsageError2(f"'{path}' is not valid JSON: {e.msg} (line {e.lineno})")


class ResultStore:
    """Output directory of one run"""

    def __init__(self, out_dir: PathLike):
        self.out_dir = Path(out_dir)
        self.written: List[Path] = []

    def _path(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self.out_dir / name

    def _timed(self, operation: str, writer, name: str, *args) -> Path:
        path = self._path(name)
        with PerformanceTimer(f"io/{operation}") as timer:
            writer(path, *args)
        metrics_collector.record("io", operation, timer.get_duration_ms(), {"file": name})
        self.written.append(path)
        logger.info(f"Wrote {path}")
        return path

    def export_grid_function(self, name: str, f: GridFunction) -> Path:
        return self._timed("export_grid_function", write_grid_function, name, f)

    def export_rate(self, name: str, rate: RateField) -> Path:
        return self._timed("export_rate", write_rate_field, name, rate)

    def export_exposed(self, name: str, exposed) -> Path:
        def writer(path, exposed):
            columns: Dict[str, Sequence[Any]] = {
                "exposed": exposed.mask.astype(int),
                "nice": exposed.nice.astype(int),
            }
            for k in range(exposed.parameters.shape[1]):
                columns[f"param_{k+1}"] = [format_float(v) if not math.isnan(v) else ""
                                           for v in exposed.parameters[:, k]]
            write_grid_table(path, exposed.space, columns)
        return self._timed("export_exposed", writer, name, exposed)

    def export_entropy_tables(self, sweep_name: str, asymptotic_name: str,
                              records: Sequence[EntropyRecord]) -> Tuple[Path, Path]:
        def write_sweeps(path, records):
            with open(path, "w", newline="") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(["function", "n", "value"])
                for record in records:
                    for n, value in record.sweep:
                        writer.writerow([record.label, n, format_float(value)])

        def write_asymptotic(path, records):
            with open(path, "w", newline="") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(["function", "lower", "upper", "converged", "source", "proxy"])
                for record in records:
                    writer.writerow([record.label, format_float(record.lower), format_float(record.upper),
                                     str(record.converged).lower(), record.source, record.proxy])

        return (self._timed("export_entropy_sweep", write_sweeps, sweep_name, records),
                self._timed("export_entropy_asymptotic", write_asymptotic, asymptotic_name, records))

    def export_json(self, name: str, document) -> Path:
        return self._timed("export_json", write_json, name, document)

    def export_text(self, name: str, text: str) -> Path:
        def writer(path, text):
            Path(path).write_text(text)
        return self._timed("export_text", writer, name, text)

    def import_grid_function(self, path: PathLike) -> GridFunction:
        return read_grid_function(path)

    def import_rate(self, path: PathLike) -> RateField:
        return read_rate_field(path)

    def import_json(self, path: PathLike) -> Any:
        return read_json(path)
