"""
Settings resolution, logging setup and file helpers.
"""
import io
import logging

import pandas as pd
import pytest

from molseq.settings import Settings, load_settings, setup_logging
from molseq.storage import (
    dump_json,
    get_data_path,
    list_reports,
    read_frame_csv,
    read_json,
    read_lines,
    write_frame_csv,
    write_json,
    write_lines,
)


def test_defaults_without_file_or_environment(tmp_path):
    settings = load_settings(str(tmp_path / "absent.toml"), environ={})
    assert settings == Settings()
    assert settings.workers == 1 and settings.log_level == "INFO"


def test_toml_then_environment_precedence(tmp_path):
    path = tmp_path / "molseq.toml"
    path.write_text('[molseq]\nworkers = 3\nlog_dir = "custom-logs"\ncolour = "blue"\n')
    settings = load_settings(str(path), environ={})
    assert settings.workers == 3 and settings.log_dir == "custom-logs"

    settings = load_settings(str(path), environ={"MOLSEQ_WORKERS": "5", "MOLSEQ_LOG_LEVEL": "debug"})
    assert settings.workers == 5
    assert settings.log_level == "debug"
    assert settings.log_dir == "custom-logs"


def test_invalid_settings_raise(tmp_path):
    with pytest.raises(ValueError):
        load_settings(str(tmp_path / "absent.toml"), environ={"MOLSEQ_WORKERS": "0"})
    with pytest.raises(ValueError):
        Settings(log_level="LOUD")


def test_setup_logging_writes_file_and_stream(tmp_path):
    stream = io.StringIO()
    logger = setup_logging(Settings(log_dir=str(tmp_path / "logs")), filename="test.log", stream=stream)
    logger.info("hello from the test")
    for handler in logging.getLogger().handlers:
        handler.flush()
    assert "hello from the test" in stream.getvalue()
    assert "hello from the test" in (tmp_path / "logs" / "test.log").read_text()


def test_json_helpers_are_byte_stable(tmp_path):
    payload = {"b": [1, 2], "a": "±"}
    assert dump_json(payload) == '{\n  "a": "±",\n  "b": [\n    1,\n    2\n  ]\n}\n'
    path = write_json(str(tmp_path / "nested" / "x.json"), payload)
    assert read_json(path) == payload


def test_frame_and_line_helpers(tmp_path):
    frame = pd.DataFrame({"setup": ["LSTM SMILES"], "mean": [0.5]})
    path = write_frame_csv(str(tmp_path / "out" / "summary.csv"), frame)
    pd.testing.assert_frame_equal(read_frame_csv(path), frame)
    with pytest.raises(FileNotFoundError):
        read_frame_csv(str(tmp_path / "absent.csv"))

    lines_path = write_lines(str(tmp_path / "lines.txt"), ["CCO", "", "c1ccccc1"])
    assert read_lines(lines_path) == ["CCO", "c1ccccc1"]


def test_report_listing_and_paths(tmp_path):
    assert list_reports(str(tmp_path / "absent")) == []
    (tmp_path / "b.json").write_text("{}")
    (tmp_path / "a.json").write_text("{}")
    (tmp_path / "a.csv").write_text("")
    assert [p.rsplit("/", 1)[-1] for p in list_reports(str(tmp_path))] == ["a.json", "b.json"]
    assert get_data_path("reports", data_dir="/tmp/x") == "/tmp/x/reports"
    assert get_data_path("reports") == "data/reports"
