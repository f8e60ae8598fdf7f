"""Plain-text run configuration.

INI-style files with up to four sections::

    [plant]
    n = 4
    cart_mass = 0.1
    masses = [0.1, 0.1, 0.1, 0.1]
    lengths = [0.03, 0.04, 0.07, 0.10]
    gravity = 9.81
    damping = zero            ; or a path to a CSV matrix

    [lqr]
    position_weight = 10.0
    velocity_weight = 1.0
    r = 1.0
    q_diag = [...]            ; optional, overrides the two weights

    [pole_placement]
    percent_overshoot = 1.0
    settling_time = 6.0
    spread = 10.0
    far_spacing = 0.2

    [simulation]
    dt = 0.001
    duration = 20.0
    rho = 1.0
    step_time = 0.0
    sigma_force = 0.0
    sigma_torque = 0.0
    seed = 0
    angle_limit = 3.141592653589793   ; or 'none'

Parse errors carry the section and field name so the CLI can point at
the offending line.
"""

from __future__ import annotations

import configparser
import json
from pathlib import Path

import numpy as np

from .dynamics import PlantParams
from .linalg import load_matrix
from .simulate import SimConfig
from .synthesis import LqrWeights, PoleDesign

__all__ = [
    "ConfigError",
    "read_config",
    "load_plant",
    "load_lqr_weights",
    "load_pole_design",
    "load_sim_config",
]


class ConfigError(ValueError):
    """Malformed or inconsistent configuration value."""

    def __init__(self, section: str, option: str, message: str):
        self.section = section
        self.option = option
        super().__init__(f"[{section}] {option}: {message}")


def read_config(path) -> configparser.ConfigParser:
    path = Path(path)
    if not path.exists():
        raise ConfigError("-", str(path), "config file not found")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError("-", str(path), f"parse error: {exc}") from exc
    return parser


def _get(parser, section, option, conv, default=None, required=False):
    if not parser.has_option(section, option):
        if required:
            raise ConfigError(section, option, "missing required value")
        return default
    raw = parser.get(section, option).strip()
    try:
        return conv(raw)
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(section, option, f"cannot parse {raw!r}: {exc}") from exc


def _float_list(raw: str) -> list[float]:
    if raw.startswith("["):
        values = json.loads(raw)
    else:
        values = [v for v in raw.replace(",", " ").split() if v]
    return [float(v) for v in values]


def load_plant(path) -> PlantParams:
    """PlantParams from the [plant] section."""
    parser = read_config(path)
    if not parser.has_section("plant"):
        raise ConfigError("plant", "-", "missing [plant] section")
    n = _get(parser, "plant", "n", int, required=True)
    cart_mass = _get(parser, "plant", "cart_mass", float, required=True)
    masses = _get(parser, "plant", "masses", _float_list, required=True)
    lengths = _get(parser, "plant", "lengths", _float_list, required=True)
    gravity = _get(parser, "plant", "gravity", float, default=9.81)
    damping_raw = _get(parser, "plant", "damping", str, default="zero")
    damping = None
    if damping_raw not in (None, "zero", "none"):
        damping_path = Path(path).parent / damping_raw
        if not damping_path.exists():
            raise ConfigError("plant", "damping", f"matrix file {damping_raw!r} not found")
        damping = load_matrix(damping_path)
    try:
        return PlantParams(
            n=n,
            cart_mass=cart_mass,
            masses=tuple(masses),
            lengths=tuple(lengths),
            gravity=gravity,
            damping=damping,
        )
    except ValueError as exc:
        raise ConfigError("plant", "-", str(exc)) from exc


def load_lqr_weights(path, n_states: int) -> LqrWeights:
    """LqrWeights from the [lqr] section (defaults if absent)."""
    parser = read_config(path)
    pos = _get(parser, "lqr", "position_weight", float, default=10.0) if parser.has_section("lqr") else 10.0
    vel = _get(parser, "lqr", "velocity_weight", float, default=1.0) if parser.has_section("lqr") else 1.0
    r = _get(parser, "lqr", "r", float, default=1.0) if parser.has_section("lqr") else 1.0
    q_diag = _get(parser, "lqr", "q_diag", _float_list) if parser.has_section("lqr") else None
    try:
        if q_diag is not None:
            if len(q_diag) != n_states:
                raise ConfigError(
                    "lqr", "q_diag", f"expected {n_states} entries, got {len(q_diag)}"
                )
            return LqrWeights(q=np.diag(q_diag), r=np.array([[r]]))
        weights = LqrWeights.position_weighted(n_states, pos, vel)
        return LqrWeights(q=weights.q, r=np.array([[r]]))
    except ValueError as exc:
        raise ConfigError("lqr", "-", str(exc)) from exc


def load_pole_design(path) -> PoleDesign:
    """PoleDesign from the [pole_placement] section (defaults if absent)."""
    parser = read_config(path)
    has = parser.has_section("pole_placement")
    po = _get(parser, "pole_placement", "percent_overshoot", float, default=1.0) if has else 1.0
    ts = _get(parser, "pole_placement", "settling_time", float, default=6.0) if has else 6.0
    spread = _get(parser, "pole_placement", "spread", float, default=10.0) if has else 10.0
    spacing = _get(parser, "pole_placement", "far_spacing", float, default=0.2) if has else 0.2
    return PoleDesign(
        percent_overshoot=po, settling_time=ts, spread=spread, far_spacing=spacing
    )


def _angle_limit(raw: str):
    if raw.lower() in ("none", "off"):
        return None
    return float(raw)


def load_sim_config(path, n_states: int | None = None) -> SimConfig:
    """SimConfig from the [simulation] section."""
    parser = read_config(path)
    has = parser.has_section("simulation")
    duration = _get(parser, "simulation", "duration", float, default=20.0) if has else 20.0
    dt = _get(parser, "simulation", "dt", float, default=1e-3) if has else 1e-3
    rho = _get(parser, "simulation", "rho", float, default=1.0) if has else 1.0
    step_time = _get(parser, "simulation", "step_time", float, default=0.0) if has else 0.0
    sigma_force = _get(parser, "simulation", "sigma_force", float, default=0.0) if has else 0.0
    sigma_torque = _get(parser, "simulation", "sigma_torque", float, default=0.0) if has else 0.0
    seed = _get(parser, "simulation", "seed", int, default=0) if has else 0
    limit = _get(parser, "simulation", "angle_limit", _angle_limit, default=float(np.pi)) if has else float(np.pi)
    x0 = _get(parser, "simulation", "initial_state", _float_list) if has else None
    if x0 is not None and n_states is not None and len(x0) != n_states:
        raise ConfigError(
            "simulation", "initial_state", f"expected {n_states} entries, got {len(x0)}"
        )
    try:
        return SimConfig(
            duration=duration,
            dt=dt,
            reference_amplitude=rho,
            step_time=step_time,
            sigma_force=sigma_force,
            sigma_torque=sigma_torque,
            seed=seed,
            initial_state=None if x0 is None else np.asarray(x0, dtype=float),
            angle_limit=limit,
        )
    except ValueError as exc:
        raise ConfigError("simulation", "-", str(exc)) from exc
