"""Noise-aware CTC keyword spotting."""
