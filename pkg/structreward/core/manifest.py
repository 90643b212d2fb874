# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
# Run manifests recorded alongside every command output
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Dict, Iterable, Optional

from structreward import __version__
from structreward.utils.format_converter import canonical_dumps, digest_bytes, digest_file, write_json

logger = logging.getLogger(__name__)

MANIFEST_SUFFIX = ".manifest.json"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def config_digest(config: Dict[str, Any]) -> str:
    return digest_bytes(canonical_dumps(config).encode("utf-8"))


def manifest_path(output_path: str, directory: bool = False) -> str:
    """<out>.manifest.json; for a directory output the manifest sits inside it"""
    if directory:
        return os.path.join(output_path, "run" + MANIFEST_SUFFIX)
    return output_path + MANIFEST_SUFFIX


@dataclass
class RunManifest:
    command: str
    config_digest: str
    seed: Optional[int]
    input_digests: Dict[str, str] = field(default_factory=dict)
    version: str = __version__
    started_at: str = field(default_factory=_now)
    finished_at: Optional[str] = None

    @classmethod
    def start(
        cls,
        command: str,
        config: Dict[str, Any],
        seed: Optional[int],
        inputs: Iterable[str] = (),
    ) -> "RunManifest":
        digests = {}
        for path in inputs:
            if os.path.isdir(path):
                for name in sorted(os.listdir(path)):
                    member = os.path.join(path, name)
                    if os.path.isfile(member):
                        digests[member] = digest_file(member)
            else:
                digests[path] = digest_file(path)
        return cls(command, config_digest(config), seed, digests)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "input_digests": dict(self.input_digests),
            "version": self.version,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }

    def write(self, output_path: Optional[str], directory: bool = False) -> Optional[str]:
        """Write next to output_path, or log it as one JSON line when output goes to stdout"""
        if output_path is None:
            logger.info("Run manifest", extra={"manifest": self.to_dict()})
            return None
        return write_json(self.to_dict(), manifest_path(output_path, directory))

    def finish(self, output_path: Optional[str], directory: bool = False) -> Optional[str]:
        self.finished_at = _now()
        return self.write(output_path, directory)
