"""Execution adapter: a wire-protocol runner executing snippets in child processes."""

from .protocol import PROTOCOL_VERSION
from .sandbox import SandboxConfig

__all__ = ["PROTOCOL_VERSION", "SandboxConfig"]
