"""Reference hard-label model server for the attack toolkit's wire protocol."""

from .models import ChecksumModel, ConstModel, ModelSpecError, load_model
from .server import WIRE_VERSION, serve_connection, serve_stdio, serve_tcp

__version__ = "0.1.0"

__all__ = ["ChecksumModel", "ConstModel", "ModelSpecError", "load_model",
           "WIRE_VERSION", "serve_connection", "serve_stdio", "serve_tcp",
           "__version__"]
