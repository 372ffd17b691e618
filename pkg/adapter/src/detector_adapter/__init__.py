"""Reference detector adapter speaking the stdio and HTTP oracle protocols."""

from .detectors import EchoDetector, ModelDetector, build_detector
from .httpserver import serve_http
from .protocol import PROTOCOL_VERSION
from .stdio import handle_line, serve_stdio

__version__ = "0.1.0"
