"""Run configuration: one flat dataclass, readable from key=value text files.

File syntax: one `key = value` per line, '#' starts a comment. List-valued
keys use ';' between items and ',' inside an item, e.g.
patch_centers = 0.5,0.35;0.5,0.6
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

from .fitness import FITNESS_MODES, JOINT


class ConfigError(ValueError):
    pass


def default_patch_centers(patch_count: int) -> tuple[tuple[float, float], ...]:
    """Fractional (x, y) patch centers inside the detection box."""
    if patch_count == 1:
        return ((0.5, 0.475),)
    ys = [0.35 + i * (0.6 - 0.35) / (patch_count - 1) for i in range(patch_count)]
    return tuple((0.5, y) for y in ys)


@dataclass(frozen=True)
class RunConfig:
    population_size: int = 30
    max_generations: int = 200
    lambda_: float = 2.0
    threshold: float = 0.7
    patch_count: int = 2
    anchors_per_patch: int = 8
    de_f: float = 0.5
    de_cr: float = 0.7
    radius_fraction: float = 0.16
    inner_fraction: float = 0.3
    outer_shrink: float = 0.8
    patch_centers: tuple[tuple[float, float], ...] = ((0.5, 0.35), (0.5, 0.6))
    cover_visible: tuple[int, int, int] = (255, 255, 255)
    cover_infrared: int = 32
    samples_per_segment: int = 32
    fitness_mode: str = JOINT
    stop_on_success: bool = True
    seed: int = 0

    def validate(self) -> "RunConfig":
        if self.population_size < 4:
            raise ConfigError("population_size must be at least 4")
        if self.max_generations < 0:
            raise ConfigError("max_generations must be nonnegative")
        if self.lambda_ <= 0:
            raise ConfigError("lambda must be positive")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must be in (0, 1)")
        if self.patch_count < 1:
            raise ConfigError("patch_count must be at least 1")
        if self.anchors_per_patch < 4:
            raise ConfigError("anchors_per_patch must be at least 4")
        if not 0.0 < self.inner_fraction <= 0.5:
            raise ConfigError("inner_fraction must be in (0, 0.5]")
        if not 0.0 < self.outer_shrink <= 1.0:
            raise ConfigError("outer_shrink must be in (0, 1]")
        if self.radius_fraction <= 0:
            raise ConfigError("radius_fraction must be positive")
        if len(self.patch_centers) != self.patch_count:
            raise ConfigError("patch_centers length must equal patch_count")
        if self.fitness_mode not in FITNESS_MODES:
            raise ConfigError(f"fitness_mode must be one of {FITNESS_MODES}")
        if self.samples_per_segment < 2:
            raise ConfigError("samples_per_segment must be at least 2")
        if not (0.0 <= self.de_cr <= 1.0) or self.de_f < 0:
            raise ConfigError("de_f must be >= 0 and de_cr in [0, 1]")
        if len(self.cover_visible) != 3 or not all(0 <= v <= 255 for v in self.cover_visible):
            raise ConfigError("cover_visible must be an 8-bit RGB triple")
        if not 0 <= self.cover_infrared <= 255:
            raise ConfigError("cover_infrared must be an 8-bit gray level")
        return self

    def with_patch_count(self, patch_count: int) -> "RunConfig":
        return replace(self, patch_count=patch_count, patch_centers=default_patch_centers(patch_count))


_KEY_ALIASES = {"lambda": "lambda_"}


def _format_value(key: str, value) -> str:
    if key == "patch_centers":
        return ";".join(f"{x:g},{y:g}" for x, y in value)
    if key == "cover_visible":
        return ",".join(str(int(v)) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _parse_value(key: str, raw: str):
    try:
        if key == "patch_centers":
            return tuple(
                tuple(float(v) for v in item.split(","))
                for item in raw.split(";")
                if item.strip()
            )
        if key == "cover_visible":
            r, g, b = (int(v) for v in raw.split(","))
            return (r, g, b)
        if key in ("fitness_mode",):
            return raw.strip()
        if key == "stop_on_success":
            return raw.strip().lower() in ("1", "true", "yes")
        if key in ("population_size", "max_generations", "patch_count", "anchors_per_patch",
                   "cover_infrared", "samples_per_segment", "seed"):
            return int(raw)
        return float(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def format_config(config: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        key = "lambda" if f.name == "lambda_" else f.name
        lines.append(f"{key} = {_format_value(f.name, getattr(config, f.name))}")
    return "\n".join(lines) + "\n"


def parse_config_text(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    known = {f.name for f in fields(RunConfig)}
    updates = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        key = _KEY_ALIASES.get(key, key)
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        updates[key] = _parse_value(key, raw)
    return replace(cfg, **updates).validate()


def load_config(path, base: RunConfig | None = None) -> RunConfig:
    with open(path) as fh:
        return parse_config_text(fh.read(), base=base)


def config_snapshot(config: RunConfig) -> dict:
    """JSON-friendly dict of every field (recorded in reports)."""
    out = {}
    for f in fields(RunConfig):
        v = getattr(config, f.name)
        if isinstance(v, tuple):
            v = [list(item) if isinstance(item, tuple) else item for item in v]
        out["lambda" if f.name == "lambda_" else f.name] = v
    return out
