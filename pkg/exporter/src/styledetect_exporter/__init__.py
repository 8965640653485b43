"""Neural embedding exporter for the styledetect engine."""

from .exporter import Encoder, ExportError, ExportJob, export_embeddings, write_store

__version__ = "0.1.0"
