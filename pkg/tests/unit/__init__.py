"""Unit tests for structreward."""
