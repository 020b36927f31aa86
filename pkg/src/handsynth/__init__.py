"""Synthetic pose-annotated hand image generation and keypoint evaluation."""

__version__ = "0.1.0"
