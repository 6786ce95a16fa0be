"""Multimodal speech-screening lab: augmentation planning, feature extraction,
mixture-of-experts selection, fusion classification, and the experiment harness."""

__version__ = "0.1.0"
