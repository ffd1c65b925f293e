"""Test package for panotrack."""
