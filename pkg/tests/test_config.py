import os

import pytest

from bivex.config import load_config_file, resolve_workers, substitute_env


def test_substitute_env(monkeypatch):
    monkeypatch.setenv("RHO_GRID", "0.5,0.8")
    assert substitute_env("rho = {{RHO_GRID}}") == "rho = 0.5,0.8"


def test_substitute_env_missing_variable(monkeypatch):
    monkeypatch.delenv("MISSING_VAR", raising=False)
    with pytest.raises(ValueError, match="MISSING_VAR"):
        substitute_env("seed = {{MISSING_VAR}}")


def test_load_config_file(tmp_path, monkeypatch):
    monkeypatch.setenv("BIVEX_SEED", "42")
    f = tmp_path / "sweep.cfg"
    f.write_text(
        "# sweep settings\n"
        "RHO = 0.5, 0.8\n"
        "\n"
        "log-n = 46   # right scale\n"
        "seed = {{BIVEX_SEED}}\n"
        "seed = 43\n",
        encoding="utf-8",
    )
    values = load_config_file(str(f))
    assert values == {"rho": "0.5, 0.8", "log_n": "46", "seed": "43"}


def test_load_config_file_errors(tmp_path):
    with pytest.raises(ValueError, match="not found"):
        load_config_file(str(tmp_path / "nope.cfg"))
    bad = tmp_path / "bad.cfg"
    bad.write_text("rho 0.5\n", encoding="utf-8")
    with pytest.raises(ValueError, match="bad.cfg:1"):
        load_config_file(str(bad))


def test_resolve_workers(monkeypatch):
    assert resolve_workers(3) == 3
    with pytest.raises(ValueError):
        resolve_workers(0)

    monkeypatch.setenv("BIVEX_THREADS", "5")
    assert resolve_workers() == 5
    monkeypatch.setenv("BIVEX_THREADS", "lots")
    with pytest.raises(ValueError, match="BIVEX_THREADS"):
        resolve_workers()

    monkeypatch.delenv("BIVEX_THREADS")
    assert resolve_workers() == (os.cpu_count() or 1)
