"""Distillation workbench for compact binary ECG window classifiers."""

__version__ = "0.1.0"
