"""Minimal reverse-mode differentiation engine."""
