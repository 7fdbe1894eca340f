import pytest

import bivex.tracing as tracing


@pytest.fixture(autouse=True)
def _trace_log_in_tmp(tmp_path, monkeypatch):
    monkeypatch.setenv("BIVEX_LOG", str(tmp_path / "bivex_log.txt"))
    monkeypatch.delenv("BIVEX_THREADS", raising=False)
    yield
    tracing.set_silent(False)
