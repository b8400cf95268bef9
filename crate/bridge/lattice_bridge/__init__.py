"""Model bridge for the lattice decoder.

One JSON request per line on stdin, one JSON response per line on stdout.
"""

from .protocol import PROTOCOL_VERSION, Backend, Session, serve
from .table import TableBackend

__all__ = ["PROTOCOL_VERSION", "Backend", "Session", "serve", "TableBackend"]
