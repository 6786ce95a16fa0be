"""Export embeddings and transcripts from pretrained models into the
bit-exact cache and manifest formats of the main experiment package."""

__version__ = "0.1.0"

from .jobs import ExportJob, export_embeddings, transcribe  # noqa: F401
