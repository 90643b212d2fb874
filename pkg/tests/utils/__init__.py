"""Test utilities package for structreward tests."""

from .test_helpers import (
    DANGLING_IR,
    REPEATED_EVENT_CAPTION,
    SAMPLE_WORLD,
    SAMPLE_WORLD_DICT,
    SAMPLE_WORLD_TEXT,
    SPATIAL_CAPTION,
    TempDirectoryManager,
    TestFileFactory,
)

__all__ = [
    "TestFileFactory",
    "TempDirectoryManager",
    "SPATIAL_CAPTION",
    "REPEATED_EVENT_CAPTION",
    "SAMPLE_WORLD",
    "SAMPLE_WORLD_DICT",
    "SAMPLE_WORLD_TEXT",
    "DANGLING_IR",
]
