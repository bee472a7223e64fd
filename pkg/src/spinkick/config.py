"""Experiment configuration: a sectioned key = value file with strict parsing.

Boundary units follow lab conventions -- angles in degrees, kick rates in
kicks/ms, times in ms -- and are converted once, here, to radians and seconds.
Unknown sections or keys are rejected with the offending line number, and
serialization is canonical: parse -> serialize -> parse is the identity.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import re
from dataclasses import dataclass

import numpy as np

from .core import RelaxationParams, SpinSystem
from .kicks import KickParams
from .sequences import DDParams

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "serialize_config",
    "config_hash",
    "DECAY_SEQUENCES",
    "QPT_SPECS",
]

#: canonical decay-command sequence set, in output order
DECAY_SEQUENCES = ("baseline", "kicks", "cpmg", "udd", "cpmg+kicks", "udd+kicks")

#: canonical tomography spec labels, in output order
QPT_SPECS = ("noop", "k", "c", "u", "c+k", "u+k")

_PHASE_MODES = ("fixed_y", "uniform_phase")
_DD_KINDS = ("", "cpmg", "udd")


class ConfigError(ValueError):
    """Invalid configuration; message carries section/key/line context."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Full experiment description in boundary units (degrees, kicks/ms, ms)."""

    # [spin]
    j_hz: float = 215.0
    nu_s_hz: float = 0.0
    nu_e_hz: float = 0.0
    # [kicks]
    kicks_enabled: bool = True
    theta_deg: float = 2.0
    rate_kicks_per_ms: float = 25.0
    phase_mode: str = "fixed_y"
    # [dd]
    dd_kind: str = ""            # "" = no decoupling configured
    n_pulses: int = 7
    tau_ms: float | None = None
    cycle_time_ms: float | None = None
    angle_error: float = 0.0     # fractional pi-pulse miscalibration
    # [relax]
    t1_ms: float | None = None
    t2_ms: float | None = None
    # [sweep]
    tau_grid_ms: tuple = ()
    rate_grid_kicks_per_ms: tuple = ()
    theta_grid_deg: tuple = ()
    # [run]
    seed: int = 7
    n_traj: int = 500
    n_cycles: int = 16
    sequences: tuple = DECAY_SEQUENCES
    qpt_specs: tuple = ("noop", "k", "c+k", "u+k")
    fit_components: int = 0      # Gaussian components per spectrum; 0 = skip
    out_dir: str | None = None
    backend: str | None = None

    # ------------------------------------------------------------------
    # conversion to domain objects (SI / radians)

    def spin_system(self) -> SpinSystem:
        return SpinSystem(j=self.j_hz, nu_s=self.nu_s_hz, nu_e=self.nu_e_hz)

    def kick_params(self, seed: int, theta_deg=None, rate_kicks_per_ms=None):
        """KickParams in SI, or None when kicks are disabled."""
        if not self.kicks_enabled:
            return None
        theta = self.theta_deg if theta_deg is None else theta_deg
        rate = self.rate_kicks_per_ms if rate_kicks_per_ms is None else rate_kicks_per_ms
        return KickParams(
            theta=float(np.deg2rad(theta)),
            gamma_rate=rate * 1e3,
            phase_mode=self.phase_mode,
            seed=seed,
        )

    def dd_params(self, kind: str | None = None) -> DDParams | None:
        """DDParams in SI; kind overrides the configured one (decay command
        runs cpmg and udd rows off one [dd] timing)."""
        kind = self.dd_kind if kind is None else kind
        if not kind:
            return None
        return DDParams(
            kind=kind,
            n_pulses=self.n_pulses,
            tau=None if self.tau_ms is None else self.tau_ms * 1e-3,
            cycle_time=None if self.cycle_time_ms is None else self.cycle_time_ms * 1e-3,
            angle_error=self.angle_error,
        )

    def relaxation(self) -> RelaxationParams | None:
        if self.t1_ms is None and self.t2_ms is None:
            return None
        return RelaxationParams(
            t1=None if self.t1_ms is None else self.t1_ms * 1e-3,
            t2_intrinsic=None if self.t2_ms is None else self.t2_ms * 1e-3,
        )

    def tau_grid(self) -> np.ndarray:
        return np.array([t * 1e-3 for t in self.tau_grid_ms])

    def rate_grid(self) -> np.ndarray:
        return np.array([r * 1e3 for r in self.rate_grid_kicks_per_ms])

    def resolved_cycle_time(self) -> float | None:
        if self.tau_ms is None and self.cycle_time_ms is None:
            return None
        return self.dd_params(self.dd_kind or "cpmg").resolved_cycle_time()


# ----------------------------------------------------------------------
# schema: section -> key -> (attribute, parser, serializer)

def _f(s):
    return float(s)


def _i(s):
    return int(s)


def _b(s):
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _opt_f(s):
    return None if s.strip() == "" else float(s)


def _str(s):
    return s.strip()


def _opt_str(s):
    return s.strip() or None


def _f_list(s):
    parts = [p for p in re.split(r"[,\s]+", s.strip()) if p]
    return tuple(float(p) for p in parts)


def _s_list(s):
    parts = [p for p in re.split(r"[,\s]+", s.strip()) if p]
    return tuple(parts)


def _ser_float(v):
    return repr(float(v))


def _ser_opt_float(v):
    return "" if v is None else repr(float(v))


def _ser_bool(v):
    return "true" if v else "false"


def _ser_f_list(v):
    return ", ".join(repr(float(x)) for x in v)


def _ser_s_list(v):
    return ", ".join(v)


def _ser_str(v):
    return "" if v is None else str(v)


_SCHEMA = {
    "spin": {
        "j_hz": ("j_hz", _f, _ser_float),
        "nu_s_hz": ("nu_s_hz", _f, _ser_float),
        "nu_e_hz": ("nu_e_hz", _f, _ser_float),
    },
    "kicks": {
        "enabled": ("kicks_enabled", _b, _ser_bool),
        "theta_deg": ("theta_deg", _f, _ser_float),
        "rate_kicks_per_ms": ("rate_kicks_per_ms", _f, _ser_float),
        "phase_mode": ("phase_mode", _str, _ser_str),
    },
    "dd": {
        "kind": ("dd_kind", _str, _ser_str),
        "n_pulses": ("n_pulses", _i, str),
        "tau_ms": ("tau_ms", _opt_f, _ser_opt_float),
        "cycle_time_ms": ("cycle_time_ms", _opt_f, _ser_opt_float),
        "angle_error": ("angle_error", _f, _ser_float),
    },
    "relax": {
        "t1_ms": ("t1_ms", _opt_f, _ser_opt_float),
        "t2_ms": ("t2_ms", _opt_f, _ser_opt_float),
    },
    "sweep": {
        "tau_grid_ms": ("tau_grid_ms", _f_list, _ser_f_list),
        "rate_grid_kicks_per_ms": ("rate_grid_kicks_per_ms", _f_list, _ser_f_list),
        "theta_grid_deg": ("theta_grid_deg", _f_list, _ser_f_list),
    },
    "run": {
        "seed": ("seed", _i, str),
        "n_traj": ("n_traj", _i, str),
        "n_cycles": ("n_cycles", _i, str),
        "sequences": ("sequences", _s_list, _ser_s_list),
        "qpt_specs": ("qpt_specs", _s_list, _ser_s_list),
        "fit_components": ("fit_components", _i, str),
        "out_dir": ("out_dir", _opt_str, _ser_str),
        "backend": ("backend", _opt_str, _ser_str),
    },
}


def _line_of(text: str, pattern: str) -> int | None:
    rx = re.compile(pattern)
    for n, line in enumerate(text.splitlines(), 1):
        if rx.match(line):
            return n
    return None


def parse_config(text: str) -> ExperimentConfig:
    """Parse and fully validate; raises ConfigError with line context."""
    cp = configparser.ConfigParser(interpolation=None, default_section="\x00defaults")
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"config syntax error: {err}") from err
    values = {}
    for section in cp.sections():
        if section not in _SCHEMA:
            ln = _line_of(text, rf"\s*\[{re.escape(section)}\]")
            raise ConfigError(f"line {ln}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                ln = _line_of(text, rf"\s*{re.escape(key)}\s*[=:]")
                raise ConfigError(f"line {ln}: unknown key {key!r} in [{section}]")
            attr, parse, _ = _SCHEMA[section][key]
            try:
                values[attr] = parse(raw)
            except ValueError as err:
                ln = _line_of(text, rf"\s*{re.escape(key)}\s*[=:]")
                raise ConfigError(
                    f"line {ln}: bad value for [{section}] {key}: {err}"
                ) from err
    cfg = ExperimentConfig(**values)
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    """Re-validate every module invariant reachable from the config."""

    def err(msg):
        raise ConfigError(msg)

    if not cfg.j_hz > 0:
        err(f"[spin] j_hz must be positive, got {cfg.j_hz}")
    if not np.isfinite([cfg.j_hz, cfg.nu_s_hz, cfg.nu_e_hz]).all():
        err("[spin] values must be finite")
    if not 0.0 < cfg.theta_deg <= 180.0:
        err(f"[kicks] theta_deg must lie in (0, 180], got {cfg.theta_deg}")
    if not cfg.rate_kicks_per_ms > 0:
        err(f"[kicks] rate_kicks_per_ms must be positive, got {cfg.rate_kicks_per_ms}")
    if cfg.phase_mode not in _PHASE_MODES:
        err(f"[kicks] phase_mode must be one of {_PHASE_MODES}, got {cfg.phase_mode!r}")
    if cfg.dd_kind not in _DD_KINDS:
        err(f"[dd] kind must be one of {_DD_KINDS}, got {cfg.dd_kind!r}")
    if cfg.n_pulses < 1:
        err(f"[dd] n_pulses must be >= 1, got {cfg.n_pulses}")
    if cfg.dd_kind:
        if (cfg.tau_ms is None) == (cfg.cycle_time_ms is None):
            err("[dd] exactly one of tau_ms / cycle_time_ms must be set")
        span = cfg.tau_ms if cfg.tau_ms is not None else cfg.cycle_time_ms
        if not span > 0:
            err(f"[dd] timing must be positive, got {span}")
    if not np.isfinite(cfg.angle_error):
        err("[dd] angle_error must be finite")
    for name, v in (("t1_ms", cfg.t1_ms), ("t2_ms", cfg.t2_ms)):
        if v is not None and not v > 0:
            err(f"[relax] {name} must be positive, got {v}")
    if cfg.t1_ms is not None and cfg.t2_ms is not None:
        if cfg.t2_ms > 2.0 * cfg.t1_ms * (1 + 1e-12):
            err(f"[relax] t2_ms={cfg.t2_ms} exceeds 2*t1_ms={2 * cfg.t1_ms}")
    for name, grid in (
        ("tau_grid_ms", cfg.tau_grid_ms),
        ("rate_grid_kicks_per_ms", cfg.rate_grid_kicks_per_ms),
        ("theta_grid_deg", cfg.theta_grid_deg),
    ):
        if any(not g > 0 for g in grid):
            err(f"[sweep] {name} entries must be positive")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            err(f"[sweep] {name} must be strictly increasing")
    if cfg.seed < 0:
        err(f"[run] seed must be >= 0, got {cfg.seed}")
    if cfg.n_traj < 1:
        err(f"[run] n_traj must be >= 1, got {cfg.n_traj}")
    if cfg.n_cycles < 1:
        err(f"[run] n_cycles must be >= 1, got {cfg.n_cycles}")
    for s in cfg.sequences:
        if s not in DECAY_SEQUENCES:
            err(f"[run] unknown sequence {s!r}; choose from {DECAY_SEQUENCES}")
    for s in cfg.qpt_specs:
        if s not in QPT_SPECS:
            err(f"[run] unknown qpt spec {s!r}; choose from {QPT_SPECS}")
    if cfg.fit_components not in (0, 1, 2):
        err(f"[run] fit_components must be 0, 1 or 2, got {cfg.fit_components}")
    if cfg.backend is not None and cfg.backend not in ("numpy", "numba"):
        err(f"[run] backend must be numpy or numba, got {cfg.backend!r}")


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical full-form serialization (every section, every key)."""
    out = io.StringIO()
    for section, keys in _SCHEMA.items():
        out.write(f"[{section}]\n")
        for key, (attr, _, ser) in keys.items():
            out.write(f"{key} = {ser(getattr(cfg, attr))}\n")
        out.write("\n")
    return out.getvalue()


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical serialization: equal configs hash equal."""
    return hashlib.sha256(serialize_config(cfg).encode("utf-8")).hexdigest()
