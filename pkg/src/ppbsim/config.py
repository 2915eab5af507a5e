"""System configuration: defaults, validation and the key = value file format."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

MODES = ("baseline", "ppb")


class ConfigError(ValueError):
    pass


@dataclass
class SystemConfig:
    cores: int = 16
    mesh_x: int = 4
    mesh_y: int = 4
    l1_size: int = 32 * 1024
    l1_assoc: int = 4
    l1_latency: int = 2
    l2_total: int = 8 * 1024 * 1024
    l2_assoc: int = 8
    l2_latency: int = 12
    block_size: int = 64
    vcs: int = 5
    flit_bits: int = 128
    router_pipeline: int = 4
    link_latency: int = 2
    buffer_depth: int = 4
    mem_controllers: int = 4
    mem_latency: int = 160
    mem_interleave: int = 4096
    mode: str = "baseline"
    starvation_threshold: int = 64
    inner_buffer_entries: int = 32
    seed: int = 1
    issue_jitter: int = 0
    drain_bound: int = 1_000_000
    debug: bool = False
    e_link_per_flit_hop: float = 1.0
    e_buf_write: float = 1.0
    e_buf_read: float = 1.0
    e_xbar: float = 1.0
    e_arb: float = 1.0

    @property
    def ppb(self) -> bool:
        return self.mode == "ppb"

    @property
    def l1_sets(self) -> int:
        return self.l1_size // (self.block_size * self.l1_assoc)

    @property
    def l2_sets_per_bank(self) -> int:
        return self.l2_total // self.cores // (self.block_size * self.l2_assoc)

    def validate(self) -> "SystemConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        for name in ("cores", "mesh_x", "mesh_y", "l1_size", "l1_assoc", "l2_total", "l2_assoc",
                     "block_size", "flit_bits", "mem_controllers", "buffer_depth", "inner_buffer_entries",
                     "mem_interleave", "drain_bound"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("l1_latency", "l2_latency", "mem_latency", "link_latency", "starvation_threshold"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1 cycle")
        if self.issue_jitter < 0:
            raise ConfigError("issue_jitter must be >= 0")
        if self.cores != self.mesh_x * self.mesh_y:
            raise ConfigError(f"cores ({self.cores}) must equal mesh_x * mesh_y "
                              f"({self.mesh_x} x {self.mesh_y} = {self.mesh_x * self.mesh_y})")
        if self.cores > 32:
            # one transaction per core per block keeps in-flight inner phases
            # of a block within half of the 64-entry window
            raise ConfigError("at most 32 cores are supported by the 6-bit inner phase")
        if self.block_size & (self.block_size - 1):
            raise ConfigError("block_size must be a power of two")
        if self.l1_sets < 1 or self.l1_size % (self.block_size * self.l1_assoc):
            raise ConfigError("l1_size must be a multiple of block_size * l1_assoc")
        if self.l2_sets_per_bank < 1 or self.l2_total % (self.cores * self.block_size * self.l2_assoc):
            raise ConfigError("l2_total must be a multiple of cores * block_size * l2_assoc")
        if self.vcs < 3:
            raise ConfigError("need at least 3 virtual channels (request, forward, response)")
        if self.router_pipeline < 4:
            raise ConfigError("router_pipeline below 4 stages would need speculative allocation")
        if self.mem_controllers > len(edge_tiles(self.mesh_x, self.mesh_y)):
            raise ConfigError("more memory controllers than edge tiles")
        if self.mem_interleave % self.block_size:
            raise ConfigError("mem_interleave must be a multiple of block_size")
        return self

    def replace(self, **kw) -> "SystemConfig":
        return dataclasses.replace(self, **kw).validate()

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def edge_tiles(mesh_x: int, mesh_y: int) -> list:
    tiles = []
    for y in range(mesh_y):
        for x in range(mesh_x):
            if x in (0, mesh_x - 1) or y in (0, mesh_y - 1):
                tiles.append(y * mesh_x + x)
    return tiles


def memory_tiles(cfg: SystemConfig) -> list:
    """Corners first, then the remaining edge tiles spread evenly."""
    mx, my = cfg.mesh_x, cfg.mesh_y
    corners = []
    for t in (0, mx - 1, (my - 1) * mx, my * mx - 1):
        if t not in corners:
            corners.append(t)
    if cfg.mem_controllers <= len(corners):
        return sorted(corners[:cfg.mem_controllers])
    rest = [t for t in edge_tiles(mx, my) if t not in corners]
    need = cfg.mem_controllers - len(corners)
    step = len(rest) / need
    return sorted(corners + [rest[int(i * step)] for i in range(need)])


_FIELDS = {f.name: f for f in fields(SystemConfig)}


def coerce(name: str, text: str):
    if name not in _FIELDS:
        raise ConfigError(f"unknown configuration field {name!r}")
    default = getattr(SystemConfig(), name)
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text, 0)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None
    return text


def load_config(path, **overrides) -> SystemConfig:
    """Read ``key = value`` lines (an optional ``[system]`` header is allowed)."""
    text = Path(path).read_text()
    if not text.lstrip().startswith("["):
        text = "[system]\n" + text
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as e:
        raise ConfigError(f"{path}: {e}") from None
    values = {}
    for section in parser.sections():
        if section != "system":
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, val in parser.items(section):
            values[key] = coerce(key, val)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return SystemConfig(**values).validate()


def dump_config(cfg: SystemConfig) -> str:
    lines = ["[system]"]
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
    return "\n".join(lines) + "\n"


def default_config(mode: str = "baseline", seed: Optional[int] = None) -> SystemConfig:
    cfg = SystemConfig(mode=mode)
    if seed is not None:
        cfg.seed = seed
    return cfg.validate()
