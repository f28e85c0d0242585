"""Plain-text key-value configuration for the command-line pipeline.

Format: one ``key = value`` pair per line; ``#`` starts a comment; blank
lines are ignored.  Keys are dotted (section.name).  Values are parsed as
int, float, bool (true/false), comma-separated float lists, or left as
strings.  Sampling times appear in milliseconds in config files (keys end in
``_ms``) and are converted to seconds on load.

Recognized keys (defaults in parentheses):

  seed                  RNG seed for initial-condition jitter (0)
  sim.m .. sim.K_emf    physical constants (identified rig values)
  sim.K_P sim.K_D sim.K_phiD sim.K_I   controller gains (15.5, 5.45, 1.5, 0)
  sim.r_delay           feedback delay in sampling intervals (1)
  sim.h_quant           quantization step; omit or 0 to disable
  sim.nodes_ms          list of training sampling times, ms
  sim.dt_ms             single-run sampling time, ms
  sim.t_end             single-run duration, s
  sim.substeps          RK4 substeps per sampling interval (256)
  sim.records_per_interval  output samples per interval (4)
  train.*               TrainingOptions fields (see pipeline module)
  analysis.mu_ms        portrait parameter, ms
  analysis.scan_lo_ms / scan_hi_ms / scan_steps / mu_tol_ms / with_orbit
  chaos.h_quant chaos.dt_ms chaos.t_train chaos.t_settle chaos.t_stats
  chaos.d chaos.stride chaos.max_pairs
  validate.mu_ms validate.trajectory validate.t_horizon
"""

from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .furuta import ControllerConfig, PendulumParams
from .pipeline import TrainingOptions

__all__ = ["parse_config_text", "PipelineConfig", "config_hash"]


def _parse_value(raw: str):
    raw = raw.strip()
    if "," in raw:
        return [float(v) for v in raw.split(",") if v.strip()]
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config_text(text: str) -> dict:
    out = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ValueError(f"line {ln}: expected 'key = value'")
        key, _, value = body.partition("=")
        out[key.strip()] = _parse_value(value)
    return out


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class PipelineConfig:
    """Typed view of a parsed configuration file."""

    params: PendulumParams = field(default_factory=PendulumParams)
    gains: dict = field(default_factory=lambda: {"K_P": 15.5, "K_D": 5.45, "K_phiD": 1.5, "K_I": 0.0})
    r_delay: int = 1
    h_quant: float = 0.0
    nodes: list = field(default_factory=lambda: [30.5e-3, 31e-3, 32e-3, 32.5e-3])
    dt_single: float = 0.0
    t_end: float = 0.0
    substeps: int = 256
    records_per_interval: int = 4
    training: TrainingOptions = field(default_factory=TrainingOptions)
    analysis_mu: float = 30.8e-3
    scan_lo: float = 30.5e-3
    scan_hi: float = 32.5e-3
    scan_steps: int = 40
    mu_tol: float = 1e-6
    with_orbit: bool = True
    chaos: dict = field(default_factory=lambda: {
        "h_quant": 0.002, "dt": 25e-3, "t_train": 60.0, "t_settle": 25.0,
        "t_stats": 600.0, "d": 6, "stride": 1, "max_pairs": 1600,
    })
    validate_mu: float = 31.2e-3
    validate_trajectory: str = ""
    validate_horizon: float = 0.0
    seed: int = 0
    raw_text: str = ""

    @property
    def hash(self) -> str:
        return config_hash(self.raw_text)

    def controller(self, dt_sample: float, quantized: bool = False) -> ControllerConfig:
        h = None
        if quantized:
            h = self.chaos["h_quant"] or None
        elif self.h_quant:
            h = self.h_quant
        return ControllerConfig(
            dt_sample=dt_sample, r_delay=self.r_delay, h_quant=h, **self.gains
        )

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        text = Path(path).read_text()
        kv = parse_config_text(text)
        cfg = cls(raw_text=text)
        param_kw = {}
        for f in fields(PendulumParams):
            key = f"sim.{f.name}"
            if key in kv:
                param_kw[f.name] = float(kv.pop(key))
        if param_kw:
            cfg.params = replace(PendulumParams(), **param_kw)
        for gain in ("K_P", "K_D", "K_phiD", "K_I"):
            key = f"sim.{gain}"
            if key in kv:
                cfg.gains[gain] = float(kv.pop(key))
        if "sim.r_delay" in kv:
            cfg.r_delay = int(kv.pop("sim.r_delay"))
        if "sim.h_quant" in kv:
            cfg.h_quant = float(kv.pop("sim.h_quant"))
        if "sim.nodes_ms" in kv:
            nodes = kv.pop("sim.nodes_ms")
            nodes = nodes if isinstance(nodes, list) else [float(nodes)]
            cfg.nodes = [v * 1e-3 for v in nodes]
        if "sim.dt_ms" in kv:
            cfg.dt_single = float(kv.pop("sim.dt_ms")) * 1e-3
        if "sim.t_end" in kv:
            cfg.t_end = float(kv.pop("sim.t_end"))
        if "sim.substeps" in kv:
            cfg.substeps = int(kv.pop("sim.substeps"))
        if "sim.records_per_interval" in kv:
            cfg.records_per_interval = int(kv.pop("sim.records_per_interval"))
        train_kw = {}
        for f in fields(TrainingOptions):
            key = f"train.{f.name}"
            if key in kv:
                val = kv.pop(key)
                if f.name == "boundary_offsets":
                    val = tuple(float(v) for v in (val if isinstance(val, list) else [val]))
                elif f.type in ("int", int):
                    val = int(val)
                elif f.type in ("float", float):
                    val = float(val)
                train_kw[f.name] = val
        if "seed" in kv:
            cfg.seed = int(kv.pop("seed"))
            train_kw.setdefault("seed", cfg.seed)
        cfg.training = replace(
            TrainingOptions(
                substeps=cfg.substeps, records_per_interval=cfg.records_per_interval
            ),
            **train_kw,
        )
        if "analysis.mu_ms" in kv:
            cfg.analysis_mu = float(kv.pop("analysis.mu_ms")) * 1e-3
        if "analysis.scan_lo_ms" in kv:
            cfg.scan_lo = float(kv.pop("analysis.scan_lo_ms")) * 1e-3
        if "analysis.scan_hi_ms" in kv:
            cfg.scan_hi = float(kv.pop("analysis.scan_hi_ms")) * 1e-3
        if "analysis.scan_steps" in kv:
            cfg.scan_steps = int(kv.pop("analysis.scan_steps"))
        if "analysis.mu_tol_ms" in kv:
            cfg.mu_tol = float(kv.pop("analysis.mu_tol_ms")) * 1e-3
        if "analysis.with_orbit" in kv:
            cfg.with_orbit = bool(kv.pop("analysis.with_orbit"))
        for name, key in (
            ("h_quant", "chaos.h_quant"), ("t_train", "chaos.t_train"),
            ("t_settle", "chaos.t_settle"), ("t_stats", "chaos.t_stats"),
        ):
            if key in kv:
                cfg.chaos[name] = float(kv.pop(key))
        if "chaos.dt_ms" in kv:
            cfg.chaos["dt"] = float(kv.pop("chaos.dt_ms")) * 1e-3
        for name, key in (("d", "chaos.d"), ("stride", "chaos.stride"), ("max_pairs", "chaos.max_pairs")):
            if key in kv:
                cfg.chaos[name] = int(kv.pop(key))
        if "validate.mu_ms" in kv:
            cfg.validate_mu = float(kv.pop("validate.mu_ms")) * 1e-3
        if "validate.trajectory" in kv:
            cfg.validate_trajectory = str(kv.pop("validate.trajectory"))
        if "validate.t_horizon" in kv:
            cfg.validate_horizon = float(kv.pop("validate.t_horizon"))
        if kv:
            raise ValueError(f"unknown config keys: {sorted(kv)}")
        return cfg
