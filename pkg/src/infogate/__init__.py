"""
InfoGate - learned input and feature gating

A desk-scale toolkit for training gates that blend observations with noise
under a sparsity penalty, plus a synthetic distractor environment and probes
that measure what the gates keep.
"""

__version__ = "0.3.0"
__author__ = "Ivan Swiac"
__email__ = "iswiac@redhat.com"

from .cli import main

__all__ = ["main"]
