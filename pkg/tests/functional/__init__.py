"""Functional tests for structreward."""
