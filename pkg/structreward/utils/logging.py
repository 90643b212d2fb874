# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
# JSON-lines logging on stderr
import json
import logging
import sys
from datetime import datetime, timezone
from typing import Any, Dict

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
MANIFEST_LOGGER = "structreward.core.manifest"

# Attributes every LogRecord carries; anything else came in through `extra`
_RESERVED = frozenset(
    vars(logging.LogRecord("", 0, "", 0, "", (), None)).keys() | {"message", "asctime"}
)


class JsonLinesFormatter(logging.Formatter):
    """One JSON object per record: ts, level, logger, msg plus any extra fields"""

    def format(self, record: logging.LogRecord) -> str:
        entry: Dict[str, Any] = {
            "ts": datetime.fromtimestamp(record.created, tz=timezone.utc).isoformat(),
            "level": record.levelname.lower(),
            "logger": record.name,
            "msg": record.getMessage(),
        }
        for key, value in vars(record).items():
            if key not in _RESERVED and not key.startswith("_"):
                entry[key] = value
        if record.exc_info:
            entry["exc"] = self.formatException(record.exc_info)
        return json.dumps(entry, default=str, sort_keys=True)


def setup_logging(level: str = "error") -> logging.Handler:
    """Install the JSON-lines handler on the package logger"""
    if level not in LOG_LEVELS:
        raise ValueError(f"Unknown log level: {level}. Expected one of {list(LOG_LEVELS)}")
    logger = logging.getLogger("structreward")
    for handler in list(logger.handlers):
        if isinstance(handler.formatter, JsonLinesFormatter):
            logger.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(JsonLinesFormatter())
    logger.addHandler(handler)
    logger.setLevel(LOG_LEVELS[level])
    logger.propagate = False
    # Manifests for stdout outputs are always logged
    logging.getLogger(MANIFEST_LOGGER).setLevel(min(logging.INFO, LOG_LEVELS[level]))
    return handler
