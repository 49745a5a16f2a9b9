"""Test package for Tutoring Dashboard."""
