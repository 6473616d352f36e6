"""HTTP embedding service wrapping CLIP-family image/text encoders."""

from .app import ServiceConfig, create_app
from .models import load_backend

__version__ = "0.1.0"

__all__ = ["ServiceConfig", "create_app", "load_backend", "__version__"]
