"""Magnitude-corrected, time-aligned HRTF upsampling and evaluation."""
