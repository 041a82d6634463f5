"""Tests for kgsearch."""
