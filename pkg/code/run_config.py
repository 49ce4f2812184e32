"""Run configuration: defaults, presets, KEY=VALUE config files and manifests."""

import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional, Tuple

from dotenv import dotenv_values

from config import (BREAKDOWN_TOL, DEFAULT_MASTER_SEED, DEFAULT_SAMPLES, ENSEMBLES,
                    PREMATURE_BREAKDOWN_LIMIT, PRESETS, REORTH_MODES, RESULTS_DIR, SINAI_PLACEMENTS)
from krylov_engine import LanczosConfig
from localization_stats import WindowSpec

logger = logging.getLogger(__name__)

BILLIARD_KINDS = ("sinai", "stadium")

DEFAULTS: Dict[str, Any] = {
    "kind": "sinai",
    "a": 1.0,
    "placement": "vertex",
    "cut_scale": None,
    "n_max": 50,
    "h": None,
    "spectrum_file": None,
    "ensembles": ENSEMBLES,
    "n_samples": DEFAULT_SAMPLES,
    "window_multiples": (5, 10),
    "max_steps_multiple": 10,
    "window_phase": 0,
    "reorth": "full",
    "breakdown_tol": BREAKDOWN_TOL,
    "master_seed": DEFAULT_MASTER_SEED,
    "output_dir": os.path.join(RESULTS_DIR, "run"),
    "workers": 1,
    "unit_norm": False,
    "premature_limit": PREMATURE_BREAKDOWN_LIMIT,
    "dump_bn": False,
    "ck_t_max": 0.0,
    "ck_points": 200
}

# type of every key accepted in a config file
FIELD_TYPES = {
    "kind": str, "a": float, "placement": str, "cut_scale": float, "n_max": int, "h": float,
    "spectrum_file": str, "ensembles": tuple, "n_samples": int, "window": "pair",
    "window_start": int, "window_end": int, "window_multiples": "pair", "window_phase": int,
    "max_steps": int, "max_steps_multiple": int, "reorth": str, "breakdown_tol": float,
    "master_seed": int, "output_dir": str, "workers": int, "unit_norm": bool,
    "premature_limit": float, "dump_bn": bool, "ck_t_max": float, "ck_points": int, "preset": str
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class RunConfig:
    """Everything needed to reproduce one run bit-identically."""
    kind: str = "sinai"
    a: float = 1.0
    n_max: int = 50
    ensembles: Tuple[str, ...] = ENSEMBLES
    n_samples: int = DEFAULT_SAMPLES
    window: WindowSpec = field(default_factory=lambda: WindowSpec(250, 500))
    max_steps: int = 500
    placement: str = "vertex"
    cut_scale: Optional[float] = None
    h: Optional[float] = None
    spectrum_file: Optional[str] = None
    reorth: str = "full"
    breakdown_tol: float = BREAKDOWN_TOL
    master_seed: int = DEFAULT_MASTER_SEED
    output_dir: str = os.path.join(RESULTS_DIR, "run")
    workers: int = 1
    unit_norm: bool = False
    premature_limit: float = PREMATURE_BREAKDOWN_LIMIT
    dump_bn: bool = False
    ck_t_max: float = 0.0
    ck_points: int = 200
    preset: Optional[str] = None

    def __post_init__(self):
        self.ensembles = tuple(e.upper() for e in self.ensembles)
        self.validate()

    def validate(self):
        """Check all fields; raises ValueError naming the offending values."""
        if self.n_samples < 1:
            raise ValueError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.n_max < 2:
            raise ValueError(f"n_max must be >= 2, got {self.n_max}")
        if self.spectrum_file is None:
            if self.kind not in BILLIARD_KINDS:
                raise ValueError(f"Unknown billiard kind {self.kind!r} (expected one of {BILLIARD_KINDS})")
            if not 0.0 <= self.a <= 1.0:
                raise ValueError(f"a must lie in [0, 1], got {self.a}")
            if self.kind == "sinai" and self.placement not in SINAI_PLACEMENTS:
                raise ValueError(f"Unknown placement {self.placement!r} (expected one of {SINAI_PLACEMENTS})")
        if self.h is not None and not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")
        if not self.ensembles:
            raise ValueError("At least one ensemble is required")
        unknown = [e for e in self.ensembles if e not in ENSEMBLES]
        if unknown:
            raise ValueError(f"Unknown ensembles {unknown} (expected any of {ENSEMBLES})")
        if len(set(self.ensembles)) != len(self.ensembles):
            raise ValueError(f"Duplicate ensembles in {self.ensembles}")
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.window.last_index > self.max_steps:
            raise ValueError(
                f"Window ({self.window.start}, {self.window.end}) phase {self.window.phase} "
                f"reaches past max_steps={self.max_steps}"
            )
        if self.window.last_index > self.n_max * (self.n_max - 1):
            raise ValueError(
                f"Window reaches b_{self.window.last_index} but an operator on {self.n_max} levels "
                f"has at most {self.n_max * (self.n_max - 1)} Lanczos coefficients"
            )
        if self.window.n_pairs < 2:
            raise ValueError(f"Window ({self.window.start}, {self.window.end}) gives fewer than 2 log-ratios")
        if self.reorth not in REORTH_MODES:
            raise ValueError(f"Unknown reorthogonalization mode {self.reorth!r}")
        if not self.breakdown_tol > 0:
            raise ValueError(f"breakdown_tol must be positive, got {self.breakdown_tol}")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ValueError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        if not 0.0 <= self.premature_limit < 1.0:
            raise ValueError(f"premature_limit must lie in [0, 1), got {self.premature_limit}")
        if self.ck_t_max < 0 or self.ck_points < 2:
            raise ValueError(f"Invalid K-complexity grid: t_max={self.ck_t_max}, points={self.ck_points}")

    def lanczos_config(self) -> LanczosConfig:
        return LanczosConfig(max_steps=self.max_steps, reorth=self.reorth, breakdown_tol=self.breakdown_tol)

    def to_dict(self) -> Dict[str, Any]:
        """Manifest form: JSON types only, window and max_steps absolute."""
        data = asdict(self)
        data["ensembles"] = list(self.ensembles)
        data["window"] = {"start": self.window.start, "end": self.window.end, "phase": self.window.phase}
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        """Inverse of to_dict."""
        data = dict(data)
        window = data.pop("window")
        data["window"] = WindowSpec(int(window["start"]), int(window["end"]), int(window.get("phase", 0)))
        data["ensembles"] = tuple(data["ensembles"])
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ValueError(f"Unknown manifest fields: {sorted(extra)}")
        return cls(**data)

    def with_changes(self, **changes) -> "RunConfig":
        data = self.to_dict()
        data.update(changes)
        if isinstance(data.get("window"), WindowSpec):
            w = data["window"]
            data["window"] = {"start": w.start, "end": w.end, "phase": w.phase}
        return RunConfig.from_dict(data)


def _parse_value(key: str, raw: str):
    kind = FIELD_TYPES[key]
    text = raw.strip()
    if text.lower() in ("", "none", "null", "auto"):
        return None
    if kind == "pair":
        parts = [p.strip() for p in text.strip("()").split(",") if p.strip()]
        if len(parts) != 2:
            raise ValueError(f"{key} must be two comma-separated integers, got {raw!r}")
        return int(parts[0]), int(parts[1])
    if kind is tuple:
        return tuple(p.strip() for p in text.split(",") if p.strip())
    if kind is bool:
        if text.lower() in _TRUE:
            return True
        if text.lower() in _FALSE:
            return False
        raise ValueError(f"{key} must be a boolean, got {raw!r}")
    return kind(text)


def load_config_file(path: str) -> Dict[str, Any]:
    """Parse a KEY=VALUE run config (one field per line, `#` comments).

    Keys are case-insensitive and must name RunConfig fields (see run_config.md).
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Config file not found: {path}")
    values = {}
    for key, raw in dotenv_values(path).items():
        name = key.lower()
        if name not in FIELD_TYPES:
            raise ValueError(f"{path}: unknown config key {key!r}")
        if raw is None:
            raise ValueError(f"{path}: key {key!r} has no value")
        try:
            values[name] = _parse_value(name, raw)
        except ValueError as e:
            raise ValueError(f"{path}: bad value for {key!r}: {e}") from e
    return values


def preset_values(name: str) -> Dict[str, Any]:
    if name not in PRESETS:
        raise ValueError(f"Unknown preset {name!r} (expected one of {sorted(PRESETS)})")
    values = dict(PRESETS[name])
    values["preset"] = name
    return values


def resolve_config(preset: Optional[str] = None, config_file: Optional[str] = None,
                   overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Merge defaults < preset < config file < overrides into a validated RunConfig.

    Window and max_steps given as multiples of N_max are expanded after merging, so an
    N_max override rescales a multiples-based preset; absolute values are used as given.
    """
    values = dict(DEFAULTS)
    layers = []
    file_values = load_config_file(config_file) if config_file else {}
    preset = (overrides or {}).get("preset") or file_values.get("preset") or preset
    if preset:
        layers.append(preset_values(preset))
    layers.append(file_values)
    layers.append({k: v for k, v in (overrides or {}).items() if v is not None})

    for layer in layers:
        layer = dict(layer)
        # an explicit setting in a higher layer replaces the other form from lower layers
        if "window" in layer:
            for key in ("window_multiples", "window_start", "window_end"):
                values.pop(key, None)
        if "window_start" in layer or "window_end" in layer:
            for key in ("window_multiples", "window"):
                values.pop(key, None)
        if "window_multiples" in layer:
            for key in ("window", "window_start", "window_end"):
                values.pop(key, None)
        if "max_steps" in layer:
            values.pop("max_steps_multiple", None)
        if "max_steps_multiple" in layer:
            values.pop("max_steps", None)
        values.update(layer)

    n_max = int(values["n_max"])
    phase = int(values.pop("window_phase") or 0)
    if "window_start" in values or "window_end" in values:
        if "window_start" not in values or "window_end" not in values:
            raise ValueError("window_start and window_end must be given together")
        window = WindowSpec(int(values.pop("window_start")), int(values.pop("window_end")), phase)
        values.pop("window", None)
    elif values.get("window") is not None:
        start, end = values.pop("window")
        window = WindowSpec(int(start), int(end), phase)
    else:
        values.pop("window", None)
        if values.get("window_multiples") is None:
            raise ValueError("No window given")
        lo, hi = values["window_multiples"]
        window = WindowSpec.from_multiples(n_max, int(lo), int(hi), phase)
    values.pop("window_multiples", None)

    multiple = values.pop("max_steps_multiple", None)
    if values.get("max_steps") is None:
        if multiple is None:
            raise ValueError("No max_steps given")
        values["max_steps"] = int(multiple) * n_max

    values["window"] = window
    config = RunConfig(**values)
    logger.debug(f"Resolved run config: {config.to_dict()}")
    return config
