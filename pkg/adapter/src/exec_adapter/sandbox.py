"""Per-case sandbox settings applied inside the forked child."""

from __future__ import annotations

import os
import resource
from dataclasses import dataclass

DEVICES = ("cpu", "accelerator")

# names a child keeps by default; everything else is scrubbed
DEFAULT_ENV_ALLOW = (
    "PATH",
    "HOME",
    "LANG",
    "LC_ALL",
    "TMPDIR",
    "PYTHONPATH",
    "PYTHONHASHSEED",
)

DEVICE_ENV_VAR = "EXEC_ADAPTER_DEVICE"


@dataclass(frozen=True)
class SandboxConfig:
    device: str = "cpu"
    memory_cap_mb: int = 4096
    env_allow: tuple[str, ...] = DEFAULT_ENV_ALLOW

    def __post_init__(self) -> None:
        if self.device not in DEVICES:
            raise ValueError(f"device must be one of {DEVICES}, got {self.device!r}")
        if self.memory_cap_mb <= 0:
            raise ValueError(f"memory cap must be positive, got {self.memory_cap_mb}")


def apply(config: SandboxConfig) -> None:
    """Scrub the environment and cap address space. Child-side only."""
    allowed = set(config.env_allow)
    for name in list(os.environ):
        if name not in allowed:
            del os.environ[name]
    os.environ[DEVICE_ENV_VAR] = config.device
    cap_bytes = config.memory_cap_mb * 1024 * 1024
    try:
        resource.setrlimit(resource.RLIMIT_AS, (cap_bytes, cap_bytes))
    except (OSError, ValueError):
        # some containers forbid lowering limits; execution proceeds uncapped
        pass
