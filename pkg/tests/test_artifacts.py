"""Tests for field dumps, tables and manifests."""

import json
from pathlib import Path

import numpy as np
import pytest

from calkit.artifacts import (
    FieldDimensionError,
    FieldFormatError,
    dump_field,
    file_sha256,
    format_cell,
    load_field,
    write_csv,
    write_dn_map,
    write_manifest,
)
from calkit.forward import ScalarField, dn_map_schrodinger, partial_dn_map
from calkit.geometry import Grid


def _complex_field(grid: Grid) -> ScalarField:
    rng = np.random.default_rng(11)
    values = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(
        grid.shape
    )
    return ScalarField(values, grid)


def test_field_dump_layout(grid9: Grid, tmp_path: Path) -> None:
    """Header, then one row-major line per node."""
    path = tmp_path / "q.calfield"
    field = ScalarField.from_function(grid9, lambda x1, x2, x3: x1 + 0 * x2)
    dump_field(field, path)
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[0] == "CALFIELD v1 m=9 L=1.0"
    assert len(lines) == grid9.node_count + 1
    assert lines[1] == "0 0 0 -1.0 0.0"
    assert lines[2] == "0 0 1 -1.0 0.0"
    assert lines[-1] == "8 8 8 1.0 0.0"


def test_field_round_trip_is_exact(grid9: Grid, tmp_path: Path) -> None:
    """Complex values survive a dump bit for bit."""
    path = tmp_path / "v.calfield"
    field = _complex_field(grid9)
    dump_field(field, path)
    loaded = load_field(path, grid9)
    np.testing.assert_array_equal(loaded.values, field.values)


def test_real_field_loads_real(grid9: Grid, tmp_path: Path) -> None:
    """All-zero imaginary parts give back a real array."""
    path = tmp_path / "q.calfield"
    dump_field(ScalarField.constant(grid9, 2.5), path)
    loaded = load_field(path, grid9)
    assert not np.iscomplexobj(loaded.values)


def test_truncated_dump(grid9: Grid, tmp_path: Path) -> None:
    """A missing last node is reported at the line where it belongs."""
    path = tmp_path / "v.calfield"
    dump_field(_complex_field(grid9), path)
    lines = path.read_text(encoding="utf-8").splitlines()
    path.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
    with pytest.raises(FieldFormatError) as excinfo:
        load_field(path, grid9)
    assert excinfo.value.line == grid9.node_count + 1


def test_out_of_order_dump(grid9: Grid, tmp_path: Path) -> None:
    """Nodes must follow row-major order."""
    path = tmp_path / "v.calfield"
    dump_field(_complex_field(grid9), path)
    lines = path.read_text(encoding="utf-8").splitlines()
    lines[1], lines[2] = lines[2], lines[1]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    with pytest.raises(FieldFormatError) as excinfo:
        load_field(path, grid9)
    assert excinfo.value.line == 2


def test_trailing_data(grid9: Grid, tmp_path: Path) -> None:
    """Lines after the last node are refused."""
    path = tmp_path / "v.calfield"
    dump_field(_complex_field(grid9), path)
    with path.open("a", encoding="utf-8") as stream:
        stream.write("9 9 9 0.0 0.0\n")
    with pytest.raises(FieldFormatError):
        load_field(path, grid9)


def test_bad_header(grid9: Grid, tmp_path: Path) -> None:
    """A wrong magic word fails on line 1."""
    path = tmp_path / "v.calfield"
    path.write_text("FIELD v1 m=9 L=1.0\n", encoding="utf-8")
    with pytest.raises(FieldFormatError) as excinfo:
        load_field(path, grid9)
    assert excinfo.value.line == 1


def test_dump_for_other_grid(
    grid9: Grid, grid13: Grid, tmp_path: Path
) -> None:
    """Loading onto a grid of another size is refused."""
    path = tmp_path / "v.calfield"
    dump_field(ScalarField.constant(grid9, 1.0), path)
    with pytest.raises(FieldDimensionError):
        load_field(path, grid13)


@pytest.mark.parametrize(
    ("cell", "text"),
    [
        (0.1, "0.1"),
        (np.float64(2.0), "2.0"),
        (3, "3"),
        (1 - 2j, "(1-2j)"),
        (None, ""),
        ("type1", "type1"),
    ],
)
def test_format_cell(cell: object, text: str) -> None:
    """Cells are written with repr() precision."""
    assert format_cell(cell) == text


def test_write_csv_is_deterministic(tmp_path: Path) -> None:
    """The same rows give the same bytes."""
    rows = [(0.1, 2), (1 / 3, None)]
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    write_csv(first, ["x", "n"], rows)
    write_csv(second, ["x", "n"], rows)
    assert first.read_bytes() == second.read_bytes()
    assert first.read_text(encoding="utf-8") == (
        f"x,n\n0.1,2\n{1 / 3!r},\n"
    )
    assert file_sha256(first) == file_sha256(second)


def test_write_dn_map(grid9: Grid, tmp_path: Path) -> None:
    """The long-format table covers every entry; the sidecar describes it."""
    dn = dn_map_schrodinger(grid9, ScalarField.constant(grid9, 0.0))
    partial = partial_dn_map(dn, np.array([3, 7]))
    sidecar = write_dn_map(partial, tmp_path / "dn.csv")
    lines = (tmp_path / "dn.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "row,col,re,im"
    assert len(lines) == 1 + 2 * grid9.boundary_count
    assert lines[1].startswith("3,0,")
    meta = json.loads(sidecar.read_text(encoding="utf-8"))
    assert meta["kind"] == "schrodinger"
    assert meta["shape"] == [2, grid9.boundary_count]
    assert meta["partial"] is True
    assert meta["solvability_residual_max"] == 1e-6


def test_write_manifest(tmp_path: Path) -> None:
    """The manifest lists outputs, parameters and versions."""
    path = tmp_path / "run.manifest.json"
    write_manifest(
        path,
        command="poincare",
        config_sha256=None,
        parameters={"m": 9, "xi": (0.0, 1.0, 0.0)},
        outputs=[tmp_path / "b.csv", tmp_path / "a.csv"],
        wall_time=0.5,
        warnings=["careful"],
        results={"value": np.float64(1.5)},
    )
    manifest = json.loads(path.read_text(encoding="utf-8"))
    assert manifest["command"] == "poincare"
    assert manifest["outputs"] == ["a.csv", "b.csv"]
    assert manifest["parameters"]["xi"] == [0.0, 1.0, 0.0]
    assert manifest["results"] == {"value": 1.5}
    assert manifest["warnings"] == ["careful"]
    assert "numpy" in manifest["versions"]
