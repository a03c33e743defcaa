from .extract import ExtractionJob, extract, list_images

__version__ = "0.1.0"

__all__ = ["ExtractionJob", "extract", "list_images"]
