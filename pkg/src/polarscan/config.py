"""Run configuration: `key = value` text with dotted sections, flag overrides.

Every subcommand validates the slice of the config it needs before writing
any output, so a bad run never leaves partial files behind.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .cloud import Box
from .errors import ConfigError
from .projections import (
    BevExtent,
    PolarExtent,
    ProjectionConfig,
    ProjectionKind,
)
from .retrieval import GroundTruthConfig, Regime, RegimeConfig, TemporalUnit

JOBS_ENV = "POLARSCAN_JOBS"

DEFAULTS: dict[str, str] = {
    "preprocess.curvature_k": "10",
    "projection.kind": "polar",
    "projection.height": "224",  # backbone-ready size; override per run
    "projection.width": "224",
    "projection.channels": "height,intensity",
    "projection.max_range": "80",
    "encoder.type": "baseline",
    "encoder.patch": "16",
    "encoder.c_out": "64",
    "head.type": "meanstd",
    "head.k": "8",
    "head.alpha": "10",
    "head.seed": "0",
    "regime.type": "intra",
    "regime.offset": "200",
    "regime.window": "100",
    "regime.lag": "1",
    "gt.tau": "5.0",
    "gt.delta_t": "0",
    "gt.mode": "frames",
    "output.dir": "out",
}


def parse_kv_text(text: str) -> dict[str, str]:
    """Parse `key = value` lines; `#` starts a comment."""
    mapping: dict[str, str] = {}
    for i, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {i}: expected key = value")
        key, value = line.split("=", 1)
        mapping[key.strip()] = value.strip()
    return mapping


@dataclass
class RunConfig:
    """Typed view over the merged (defaults < file < flags) key mapping."""

    values: dict[str, str] = field(default_factory=dict)

    @classmethod
    def load(cls, config_path: str | None, overrides: dict[str, str]) -> "RunConfig":
        merged = dict(DEFAULTS)
        if config_path is not None:
            path = Path(config_path)
            if not path.is_file():
                raise ConfigError(f"config file not found: {path}")
            merged.update(parse_kv_text(path.read_text()))
        merged.update({k: v for k, v in overrides.items() if v is not None})
        return cls(values=merged)

    def get(self, key: str, default: str | None = None) -> str | None:
        return self.values.get(key, default)

    def _require(self, key: str) -> str:
        if key not in self.values:
            raise ConfigError(f"missing required config key {key}")
        return self.values[key]

    def _float(self, key: str) -> float:
        try:
            return float(self._require(key))
        except ValueError:
            raise ConfigError(f"{key} must be a number") from None

    def _int(self, key: str) -> int:
        try:
            return int(self._require(key))
        except ValueError:
            raise ConfigError(f"{key} must be an integer") from None

    # dataset paths -------------------------------------------------------
    def clouds_dir(self) -> Path:
        p = Path(self._require("dataset.clouds_dir"))
        if not p.is_dir():
            raise ConfigError(f"clouds dir not found: {p}")
        return p

    def poses_path(self) -> Path:
        p = Path(self._require("dataset.poses"))
        if not p.is_file():
            raise ConfigError(f"poses file not found: {p}")
        return p

    def profile_path(self) -> Path | None:
        raw = self.get("dataset.profile")
        if raw is None:
            return None
        p = Path(raw)
        if not p.is_file():
            raise ConfigError(f"sensor profile not found: {p}")
        return p

    def output_dir(self) -> Path:
        return Path(self._require("output.dir"))

    # preprocessing -------------------------------------------------------
    def ground_z(self) -> float | None:
        raw = self.get("preprocess.ground_z")
        return None if raw is None else float(raw)

    def roi(self) -> Box | None:
        raw = self.get("preprocess.roi")
        if raw is None:
            return None
        parts = [float(v) for v in raw.split(",")]
        if len(parts) != 6:
            raise ConfigError("preprocess.roi needs x0,x1,y0,y1,z0,z1")
        return Box((parts[0], parts[2], parts[4]), (parts[1], parts[3], parts[5]))

    def curvature_k(self) -> int:
        return self._int("preprocess.curvature_k")

    # projection ----------------------------------------------------------
    def projection(self) -> ProjectionConfig:
        kind_name = self._require("projection.kind").upper()
        try:
            kind = ProjectionKind[kind_name]
        except KeyError:
            raise ConfigError(f"unknown projection kind {kind_name!r}") from None
        channels = tuple(
            c.strip() for c in self._require("projection.channels").split(",") if c.strip()
        )
        fov = None
        if self.get("projection.fov") is not None:
            parts = [float(v) for v in self.values["projection.fov"].split(",")]
            if len(parts) != 2:
                raise ConfigError("projection.fov needs a_min,a_max radians")
            fov = (parts[0], parts[1])
        extent = self._extent(kind)
        output_size = None
        if self.get("projection.output_height") is not None or self.get("projection.output_width") is not None:
            output_size = (
                self._int("projection.output_height"),
                self._int("projection.output_width"),
            )
        try:
            return ProjectionConfig(
                kind=kind,
                height=self._int("projection.height"),
                width=self._int("projection.width"),
                channels=channels,
                max_range=self._float("projection.max_range"),
                fov=fov,
                extent=extent,
                output_size=output_size,
            )
        except Exception as exc:
            raise ConfigError(f"bad projection config: {exc}") from None

    def _extent(self, kind: ProjectionKind):
        raw = self.get("projection.extent")
        if raw is None or raw == "per_frame":
            return None
        if not raw.startswith("fixed:"):
            raise ConfigError("projection.extent must be per_frame or fixed:<params>")
        parts = [float(v) for v in raw[len("fixed:") :].split(",")]
        if kind is ProjectionKind.BEV:
            if len(parts) != 4:
                raise ConfigError("BEV fixed extent needs x0,x1,y0,y1")
            return BevExtent(*parts)
        if kind is ProjectionKind.POLAR:
            if len(parts) != 3:
                raise ConfigError("POLAR fixed extent needs r_max,theta_min,theta_max")
            return PolarExtent(*parts)
        raise ConfigError(f"{kind.name} takes no fixed extent")

    # encoder / head ------------------------------------------------------
    def encoder_type(self) -> str:
        val = self._require("encoder.type")
        if val not in ("baseline", "external"):
            raise ConfigError(f"encoder.type must be baseline or external, got {val!r}")
        return val

    def features_dir(self) -> Path:
        p = Path(self._require("encoder.features_dir"))
        if not p.is_dir():
            raise ConfigError(f"features dir not found: {p}")
        return p

    def head_type(self) -> str:
        val = self._require("head.type")
        if val not in ("meanstd", "vlad"):
            raise ConfigError(f"head.type must be meanstd or vlad, got {val!r}")
        return val

    def codebook_path(self) -> Path:
        raw = self.get("head.codebook")
        return Path(raw) if raw is not None else self.output_dir() / "codebook.pvld"

    # evaluation ----------------------------------------------------------
    def regime(self, n_frames: int | None = None) -> RegimeConfig:
        name = self._require("regime.type").lower()
        try:
            regime = Regime(name)
        except ValueError:
            raise ConfigError(f"unknown regime {name!r}") from None
        split = None
        if regime is Regime.INTRA:
            raw = self.get("regime.split")
            if raw is not None:
                split = int(raw)
            elif n_frames is not None:
                split = n_frames // 2  # default: half database, half queries
            else:
                raise ConfigError("regime.split required for INTRA")
        try:
            return RegimeConfig(
                regime=regime,
                split_index=split,
                offset=self._int("regime.offset"),
                window=self._int("regime.window"),
                lag=self._int("regime.lag"),
            )
        except Exception as exc:
            raise ConfigError(f"bad regime config: {exc}") from None

    def ground_truth(self) -> GroundTruthConfig:
        mode_name = self._require("gt.mode").lower()
        try:
            mode = TemporalUnit(mode_name)
        except ValueError:
            raise ConfigError(f"gt.mode must be frames or seconds, got {mode_name!r}") from None
        try:
            return GroundTruthConfig(
                tau=self._float("gt.tau"),
                delta_t=self._float("gt.delta_t"),
                mode=mode,
            )
        except Exception as exc:
            raise ConfigError(f"bad ground-truth config: {exc}") from None

    def jobs(self) -> int:
        raw = self.get("jobs") or os.environ.get(JOBS_ENV) or "1"
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"jobs must be an integer, got {raw!r}") from None
        return max(1, n)
