"""Bridge configuration."""

from __future__ import annotations

from dataclasses import dataclass

MODALITIES = ("visible", "infrared")


class BridgeConfigError(ValueError):
    pass


@dataclass(frozen=True)
class BridgeConfig:
    model: str = "torchvision:fasterrcnn_resnet50_fpn"
    modality: str = "visible"
    confidence_floor: float = 0.05
    device: str = "cpu"
    listen: str = "stdio"  # "stdio" or "http:<port>"

    def validate(self) -> "BridgeConfig":
        if self.modality not in MODALITIES:
            raise BridgeConfigError(f"modality must be one of {MODALITIES}, got {self.modality!r}")
        if not 0.0 <= self.confidence_floor <= 1.0:
            raise BridgeConfigError(f"confidence_floor must be in [0, 1], got {self.confidence_floor}")
        if self.listen != "stdio":
            if not self.listen.startswith("http:"):
                raise BridgeConfigError(f"listen must be 'stdio' or 'http:<port>', got {self.listen!r}")
            try:
                port = int(self.listen.split(":", 1)[1])
            except ValueError as exc:
                raise BridgeConfigError(f"bad http port in {self.listen!r}") from exc
            if not 0 <= port <= 65535:
                raise BridgeConfigError(f"port out of range in {self.listen!r}")
        return self

    @property
    def http_port(self) -> int | None:
        if self.listen.startswith("http:"):
            return int(self.listen.split(":", 1)[1])
        return None
