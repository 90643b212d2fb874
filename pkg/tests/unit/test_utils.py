"""Unit tests for logging setup and run manifests."""

import json
import logging
import os

import pytest

from structreward import __version__
from structreward.core.manifest import RunManifest, config_digest, manifest_path
from structreward.utils.format_converter import canonical_dumps, digest_bytes
from structreward.utils.logging import MANIFEST_LOGGER, JsonLinesFormatter, setup_logging


@pytest.fixture
def package_logger():
    """Restore the package logger after a test installs handlers on it."""
    logger = logging.getLogger("structreward")
    handlers, level, propagate = list(logger.handlers), logger.level, logger.propagate
    manifest_level = logging.getLogger(MANIFEST_LOGGER).level
    yield logger
    logger.handlers = handlers
    logger.setLevel(level)
    logger.propagate = propagate
    logging.getLogger(MANIFEST_LOGGER).setLevel(manifest_level)


@pytest.mark.unit
def test_json_lines_formatter():
    record = logging.LogRecord("structreward.core.score", logging.WARNING, __file__, 10, "scored %d pairs", (3,), None)
    record.failed = 1
    entry = json.loads(JsonLinesFormatter().format(record))
    assert entry["level"] == "warning"
    assert entry["logger"] == "structreward.core.score"
    assert entry["msg"] == "scored 3 pairs"
    assert entry["failed"] == 1
    assert "ts" in entry
    assert "args" not in entry


@pytest.mark.unit
def test_setup_logging_replaces_its_handler(package_logger):
    setup_logging("info")
    setup_logging("debug")
    json_handlers = [h for h in package_logger.handlers if isinstance(h.formatter, JsonLinesFormatter)]
    assert len(json_handlers) == 1
    assert package_logger.level == logging.DEBUG
    assert package_logger.propagate is False


@pytest.mark.unit
def test_manifest_logger_stays_at_info(package_logger):
    setup_logging("error")
    assert package_logger.level == logging.ERROR
    assert logging.getLogger(MANIFEST_LOGGER).level == logging.INFO


@pytest.mark.unit
def test_unknown_log_level(package_logger):
    with pytest.raises(ValueError):
        setup_logging("verbose")


@pytest.mark.unit
def test_manifest_path():
    assert manifest_path("out/report.json") == "out/report.json.manifest.json"
    assert manifest_path("runs/a", directory=True) == os.path.join("runs/a", "run.manifest.json")


@pytest.mark.unit
def test_manifest_records_inputs_and_finish(tmp_path):
    source = tmp_path / "caption.txt"
    source.write_text("A cup is present.")
    folder = tmp_path / "refs"
    folder.mkdir()
    (folder / "a.txt").write_text("A man sits.")

    config = {"seed": 1, "reward": {"rho": 2.0}}
    manifest = RunManifest.start("score", config, 7, [str(source), str(folder)])
    assert manifest.config_digest == digest_bytes(canonical_dumps(config).encode("utf-8"))
    assert manifest.config_digest == config_digest(config)
    assert manifest.input_digests[str(source)].startswith("sha256:")
    assert str(folder / "a.txt") in manifest.input_digests
    assert manifest.finished_at is None

    output = str(tmp_path / "report.json")
    path = manifest.finish(output)
    assert path == output + ".manifest.json"
    with open(path) as f:
        doc = json.load(f)
    assert doc["command"] == "score"
    assert doc["seed"] == 7
    assert doc["version"] == __version__
    assert doc["finished_at"] is not None


@pytest.mark.unit
def test_manifest_for_stdout_is_logged(mocker):
    info = mocker.patch("structreward.core.manifest.logger.info")
    manifest = RunManifest.start("parse", {}, None)
    assert manifest.write(None) is None
    info.assert_called_once()
    assert info.call_args.kwargs["extra"]["manifest"]["command"] == "parse"
