# Copyright (c) Meta Platforms, Inc. and affiliates.
# All rights reserved.
#
# This source code is licensed under the terms described in the LICENSE file in
# the root directory of this source tree.
# Context Manager
from functools import cached_property
from typing import Any, Dict, Optional

from structreward.parsers.lexicon import Lexicon, load_lexicon
from structreward.utils.config import (
    get_lexicon_path,
    get_similarity_config,
    load_config,
    resolve_seed,
)
from structreward.utils.similarity import SimilarityProvider


class AppContext:
    """Context manager for global app state"""

    def __init__(self, config_path: Optional[str] = None, log_level: str = "error"):
        self.config_path = config_path
        self.log_level = log_level
        self._config: Optional[Dict[str, Any]] = None

    @property
    def config(self) -> Dict[str, Any]:
        """Merged config, loaded on first use so usage errors surface before config errors"""
        if self._config is None:
            self._config = load_config(self.config_path)
        return self._config

    def use_config(self, config_path: Optional[str]) -> None:
        """Switch to a per-command config file"""
        if config_path is not None and config_path != self.config_path:
            self.config_path = config_path
            self._config = None
            self.__dict__.pop("lexicon", None)
            self.__dict__.pop("provider", None)

    @cached_property
    def lexicon(self) -> Lexicon:
        return load_lexicon(get_lexicon_path(self.config))

    @cached_property
    def provider(self) -> SimilarityProvider:
        return SimilarityProvider.from_settings(**get_similarity_config(self.config).model_dump())

    def seed(self, flag: Optional[int] = None) -> int:
        return resolve_seed(flag, self.config)
