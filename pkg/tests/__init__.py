"""Tests for cineplan package."""
