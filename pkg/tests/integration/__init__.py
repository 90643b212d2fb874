"""Integration tests for structreward."""
