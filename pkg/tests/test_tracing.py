from dataclasses import dataclass

import bivex.tracing as tracing
from bivex.rate_functions import RateCase


def _log_text(tmp_path):
    return (tmp_path / "bivex_log.txt").read_text(encoding="utf-8")


def test_trace_print_writes_console_and_log(tmp_path, capsys):
    tracing.trace_print("hello", 3)
    assert capsys.readouterr().out == "hello 3\n"
    text = _log_text(tmp_path)
    assert text.startswith("[")
    assert "Z] hello 3\n" in text


def test_log_only_and_silent_mode(tmp_path, capsys):
    tracing.trace_print("quiet", log_only=True)
    tracing.set_silent(True)
    tracing.trace_print("also quiet")
    assert capsys.readouterr().out == ""
    text = _log_text(tmp_path)
    assert "quiet" in text and "also quiet" in text


def test_log_file_path_follows_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("BIVEX_LOG", str(tmp_path / "other.txt"))
    tracing.trace_print("x", log_only=True)
    assert (tmp_path / "other.txt").exists()


def test_log_result_dumps_dataclasses(tmp_path):
    @dataclass
    class Point:
        rate: float
        case: RateCase

    tracing.log_result(Point(-2.0, RateCase.INTERIOR_TWO_INDEX), label="rate")
    text = _log_text(tmp_path)
    assert "Result is Point with keys: ['rate', 'case']" in text
    assert "InteriorTwoIndex" in text
