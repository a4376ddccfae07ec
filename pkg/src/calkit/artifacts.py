"""Field dumps, result tables, DN map exports and run manifests.

A field dump is a text file with the header

    CALFIELD v1 m=<m> L=<L>

followed by one line "i j k re im" per node in row-major order. Floats are
written with repr(), so a dump and load round trip is bit exact.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from calkit.errors import CalkitError
from calkit.forward import SOLVABILITY_THRESHOLD, ScalarField
from calkit.geometry import grid_manifest

if TYPE_CHECKING:
    from collections.abc import Iterable, Sequence

    from calkit.forward import DnMap
    from calkit.geometry import Grid

FIELD_MAGIC = "CALFIELD"
FIELD_VERSION = "v1"


class ArtifactError(CalkitError):
    """Base exception for artifact files."""


class FieldFormatError(ArtifactError):
    """Error when a field dump cannot be parsed."""

    def __init__(self, path: Path, line: int, detail: str) -> None:
        """Initialize with the file position of the problem."""
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {detail}")


class FieldDimensionError(ArtifactError):
    """Error when a field dump was written for another grid."""

    def __init__(self, path: Path, detail: str) -> None:
        """Initialize with the mismatch."""
        self.path = path
        super().__init__(f"{path}: grid mismatch, {detail}")


def _float(value: float) -> str:
    return repr(float(value))


def dump_field(field: ScalarField, path: Path) -> None:
    """Write field in the CALFIELD v1 format."""
    grid = field.grid
    values = np.asarray(field.values, dtype=np.complex128)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as stream:
        stream.write(
            f"{FIELD_MAGIC} {FIELD_VERSION} m={grid.m} L={_float(grid.L)}\n"
        )
        for (i, j, k), value in np.ndenumerate(values):
            stream.write(
                f"{i} {j} {k} {_float(value.real)} {_float(value.imag)}\n"
            )


def _parse_header(path: Path, header: str) -> tuple[int, float]:
    parts = header.split()
    if len(parts) != 4 or parts[:2] != [FIELD_MAGIC, FIELD_VERSION]:
        raise FieldFormatError(path, 1, f"expected '{FIELD_MAGIC} v1' header")
    try:
        keys = dict(part.split("=", 1) for part in parts[2:])
        return int(keys["m"]), float(keys["L"])
    except (KeyError, ValueError) as exc:
        raise FieldFormatError(path, 1, "malformed m= or L=") from exc


def load_field(path: Path, grid: Grid) -> ScalarField:
    """Read a CALFIELD v1 dump written for grid.

    The values come back real when every imaginary part is zero.
    """
    with path.open(encoding="utf-8") as stream:
        lines = stream.read().splitlines()
    if not lines:
        raise FieldFormatError(path, 1, "empty file")
    m, L = _parse_header(path, lines[0])
    if m != grid.m or L != grid.L:
        raise FieldDimensionError(
            path, f"file has m={m} L={L:g}, grid has m={grid.m} L={grid.L:g}"
        )
    values = np.empty(grid.node_count, dtype=np.complex128)
    expected = np.ndindex(grid.shape)
    for number, index in enumerate(expected, start=2):
        if number > len(lines):
            raise FieldFormatError(path, number, "file ends before all nodes")
        fields = lines[number - 1].split()
        if len(fields) != 5:
            raise FieldFormatError(path, number, "expected 'i j k re im'")
        try:
            position = tuple(int(f) for f in fields[:3])
            value = complex(float(fields[3]), float(fields[4]))
        except ValueError as exc:
            raise FieldFormatError(path, number, str(exc)) from exc
        if position != index:
            raise FieldFormatError(
                path, number, f"node {position} out of order, expected {index}"
            )
        values[number - 2] = value
    if len(lines) > grid.node_count + 1:
        raise FieldFormatError(
            path, grid.node_count + 2, "trailing data after the last node"
        )
    if not np.any(values.imag):
        return ScalarField(values.real.reshape(grid.shape), grid)
    return ScalarField(values.reshape(grid.shape), grid)


def format_cell(cell: object) -> str:
    """Deterministic CSV text of one cell."""
    if isinstance(cell, (float, np.floating)):
        return _float(float(cell))
    if isinstance(cell, (complex, np.complexfloating)):
        return repr(complex(cell))
    if cell is None:
        return ""
    return str(cell)


def write_csv(
    path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]
) -> None:
    """Write a result table; identical rows give identical bytes."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(cell) for cell in row])


def write_dn_map(dn_map: DnMap, path: Path) -> Path:
    """Write the DN matrix as CSV (row, col, re, im) and a JSON sidecar.

    Returns the sidecar path.
    """
    matrix = np.asarray(dn_map.matrix, dtype=np.complex128)
    rows = dn_map.row_nodes

    def entries() -> Iterable[Sequence[object]]:
        for r, row in enumerate(matrix):
            for c, value in enumerate(row):
                yield (int(rows[r]), c, value.real, value.imag)

    write_csv(path, ["row", "col", "re", "im"], entries())
    sidecar = path.with_suffix(".json")
    write_json(
        sidecar,
        {
            "kind": dn_map.kind.value,
            "grid": grid_manifest(dn_map.grid),
            "coefficient_sha256": dn_map.coefficient_hash,
            "shape": list(matrix.shape),
            "partial": dn_map.rows is not None,
            "solvability_residual_max": SOLVABILITY_THRESHOLD,
        },
    )
    return sidecar


def write_json(path: Path, data: dict[str, Any]) -> None:
    """Write a JSON document with sorted keys."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as stream:
        json.dump(data, stream, indent=2, sort_keys=True, default=_jsonable)
        stream.write("\n")


def _jsonable(value: object) -> object:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.integer, np.floating)):
        return value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, Path):
        return str(value)
    msg = f"{type(value).__name__} is not JSON serializable"
    raise TypeError(msg)


def file_sha256(path: Path) -> str:
    """SHA-256 of a file's bytes."""
    return hashlib.sha256(path.read_bytes()).hexdigest()


def package_versions() -> dict[str, str]:
    """Versions of the interpreter and the numerical stack."""
    versions = {"python": platform.python_version()}
    for package in ("calkit", "numpy", "scipy"):
        try:
            versions[package] = version(package)
        except PackageNotFoundError:
            versions[package] = "unknown"
    return versions


def write_manifest(
    path: Path,
    *,
    command: str,
    config_sha256: str | None,
    parameters: dict[str, Any],
    outputs: Sequence[Path],
    wall_time: float,
    warnings: Sequence[str] = (),
    results: dict[str, Any] | None = None,
) -> None:
    """Write the JSON manifest that pairs a run's outputs with its inputs."""
    write_json(
        path,
        {
            "command": command,
            "config_sha256": config_sha256,
            "parameters": parameters,
            "outputs": sorted(p.name for p in outputs),
            "versions": package_versions(),
            "wall_time_seconds": wall_time,
            "warnings": list(warnings),
            "results": results or {},
        },
    )
