"""Offline feature extraction into promptfuse feature archives."""

from .backbones import (BackboneUnavailable, resolve_audio, resolve_text,
                        resolve_video)
from .export import ExportReport, export
from .manifest import ExportJob, ManifestError, SampleSpec, read_manifest

__version__ = "0.1.0"

__all__ = [
    "BackboneUnavailable",
    "ExportJob",
    "ExportReport",
    "ManifestError",
    "SampleSpec",
    "export",
    "read_manifest",
    "resolve_audio",
    "resolve_text",
    "resolve_video",
]
