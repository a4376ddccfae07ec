"""Tests for configuration parsing."""

from pathlib import Path

import pytest

from calkit.config import (
    DEFAULT_OUTPUT,
    ConfigError,
    ExperimentConfig,
    InvalidValueError,
    UnknownKeyError,
    load_config,
    parse_config,
    resolve_output_dir,
)


def test_empty_config_gives_defaults() -> None:
    """No keys leaves every default in place."""
    assert parse_config("") == ExperimentConfig()


def test_config_without_header() -> None:
    """Keys may appear without the [calkit] header."""
    config = parse_config("m = 13\nrho = 4.5\npotential = shifted_bump\n")
    assert config.m == 13
    assert config.rho == 4.5
    assert config.potential == "shifted_bump"


def test_config_with_header_and_comments() -> None:
    """Leading comments before the header are allowed."""
    text = "# reconstruction\n\n[calkit]\nxi_max = 3  # coarse\n"
    assert parse_config(text).xi_max == 3


def test_list_and_bool_values() -> None:
    """Comma lists become tuples; booleans use INI spellings."""
    config = parse_config("rho_list = 2, 4,8\ncalibrate = yes\neta = 1,0,0\n")
    assert config.rho_list == (2.0, 4.0, 8.0)
    assert config.calibrate is True
    assert config.eta == (1.0, 0.0, 0.0)


def test_integer_value_for_float_key() -> None:
    """Float keys accept integer spellings."""
    assert parse_config("rho = 8").rho == 8.0


@pytest.mark.parametrize(
    ("text", "key"),
    [
        ("m = 13.5", "m"),
        ("rho = fast", "rho"),
        ("calibrate = maybe", "calibrate"),
    ],
)
def test_invalid_values(text: str, key: str) -> None:
    """Values of the wrong type name their key."""
    with pytest.raises(InvalidValueError) as excinfo:
        parse_config(text)
    assert excinfo.value.key == key


def test_unknown_key() -> None:
    """Misspelled keys are not ignored."""
    with pytest.raises(UnknownKeyError) as excinfo:
        parse_config("rhoo = 3")
    assert excinfo.value.key == "rhoo"


def test_unknown_section() -> None:
    """Only the [calkit] section is read."""
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[calkit]\nm = 9\n[other]\nx = 1\n")


def test_malformed_config() -> None:
    """Unparseable text is a configuration error."""
    with pytest.raises(ConfigError):
        parse_config("[calkit]\nm = 9\nm = 11\n")


def test_load_config_hashes_bytes(tmp_path: Path) -> None:
    """The file digest identifies the configuration."""
    path = tmp_path / "run.ini"
    path.write_text("m = 11\n", encoding="utf-8")
    config, digest = load_config(path)
    assert config.m == 11
    assert len(digest) == 64
    path.write_text("m = 13\n", encoding="utf-8")
    assert load_config(path)[1] != digest


def test_load_missing_config(tmp_path: Path) -> None:
    """A missing file is a configuration error."""
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


def test_output_dir_precedence(
    tmp_path: Path, monkeypatch: pytest.MonkeyPatch
) -> None:
    """--out beats CALKIT_OUT, which beats the default."""
    assert resolve_output_dir(None) == DEFAULT_OUTPUT
    monkeypatch.setenv("CALKIT_OUT", str(tmp_path / "env"))
    assert resolve_output_dir(None) == tmp_path / "env"
    assert resolve_output_dir(tmp_path / "opt") == tmp_path / "opt"
