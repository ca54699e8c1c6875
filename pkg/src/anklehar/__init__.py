"""Ankle-IMU activity recognition: numpy network engine, PAMAP2 pipeline, LOSO benchmark."""

__version__ = "0.1.0"
