"""YAML configuration loading with field-path error messages."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .assignment import UeRequirements
from .channel import ChannelConfig, LinkBudget, McsTable, McsTableError, RisGeometry
from .mathx import RandomStream
from .sim import (
    GlossSweepSettings,
    MobilityConfig,
    POLICIES,
    Scenario,
    Timing,
    UeSpec,
    ValidationPoint,
    ValidationSetup,
    default_validation_grid,
    random_scenario,
)
from .snc import SearchConfig
from .traffic import DEFAULT_PACKET_SIZES_BYTES, TrafficModel

CONFIG_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class _Section:
    """Typed access to one mapping that remembers where it came from."""

    def __init__(self, data: Any, path: str):
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(path, "expected a mapping")
        self.data = data
        self.path = path
        self.used: set[str] = set()

    def _p(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def get(self, key: str, kind, default=None):
        self.used.add(key)
        if key not in self.data or self.data[key] is None:
            return default
        v = self.data[key]
        if kind is float and isinstance(v, (int, float)) and not isinstance(v, bool):
            return float(v)
        if kind is int and isinstance(v, int) and not isinstance(v, bool):
            return v
        if kind is bool and isinstance(v, bool):
            return v
        if kind is str and isinstance(v, str):
            return v
        if kind is list and isinstance(v, list):
            return v
        if kind is dict and isinstance(v, dict):
            return v
        raise ConfigError(self._p(key), f"expected {kind.__name__}, got {type(v).__name__}")

    def floats(self, key: str, default=None, length: int | None = None):
        v = self.get(key, list, None)
        if v is None:
            return default
        if not all(isinstance(e, (int, float)) and not isinstance(e, bool) for e in v):
            raise ConfigError(self._p(key), "expected a list of numbers")
        if length is not None and len(v) != length:
            raise ConfigError(self._p(key), f"expected {length} numbers, got {len(v)}")
        return tuple(float(e) for e in v)

    def sub(self, key: str) -> "_Section":
        self.used.add(key)
        return _Section(self.data.get(key), self._p(key))

    def finish(self) -> None:
        extra = sorted(set(self.data) - self.used)
        if extra:
            raise ConfigError(self._p(extra[0]), "unknown key")


def _wrap(path: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (ValueError, OSError, McsTableError) as exc:
        raise ConfigError(path, str(exc)) from exc


@dataclass
class ExperimentSettings:
    n_periods: int = 10
    policies: tuple[str, ...] = ("dario", "delay_aware_static", "snr_static", "no_ris")
    emulate: bool = False


@dataclass
class Config:
    scenario_doc: dict = field(default_factory=dict)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)
    validation_setup: ValidationSetup = field(default_factory=ValidationSetup)
    validation_grid: list[ValidationPoint] = field(default_factory=default_validation_grid)
    gloss: GlossSweepSettings = field(default_factory=GlossSweepSettings)
    brute_force_guard: int = 5_000_000
    source: str | None = None
    raw: dict = field(default_factory=dict)

    def scenario(self, rng: RandomStream) -> Scenario:
        return build_scenario(self.scenario_doc, rng)

    def channel(self) -> ChannelConfig:
        return _channel(_Section(self.scenario_doc, "scenario"))


def _budget(s: _Section) -> LinkBudget:
    b = LinkBudget()
    return _wrap(s.path, LinkBudget,
                 s.get("tx_power_dbm", float, b.tx_power_dbm),
                 s.get("noise_psd_dbm_hz", float, b.noise_psd_dbm_hz),
                 s.get("carrier_freq_hz", float, b.carrier_freq_hz),
                 s.get("n_ant", int, b.n_ant))


def _channel(s: _Section) -> ChannelConfig:
    bs = s.sub("bs")
    bs.get("position", list)
    budget = _budget(bs)
    bs.finish()
    ch = s.sub("channel")
    mcs_path = ch.get("mcs_table_csv", str)
    mcs = _wrap(ch._p("mcs_table_csv"), McsTable.from_csv, mcs_path) if mcs_path else McsTable.default()
    cfg = _wrap(ch.path, ChannelConfig, budget, mcs,
                ch.get("n_sc", int, 12),
                ch.get("subcarrier_spacing_hz", float, 60e3),
                ch.get("noise_bandwidth_mode", str, "per_rb"),
                ch.get("s1_los", bool, False))
    ch.finish()
    return cfg


def _ris(s: _Section, defaults: dict, path: str) -> RisGeometry:
    merged = dict(defaults)
    merged.update(s.data)
    m = _Section(merged, path)
    base = RisGeometry()
    angle = m.get("reflection_angle_deg", float, math.degrees(base.reflection_angle_rad))
    r = _wrap(path, RisGeometry,
              m.get("n_elements", int, base.n_elements),
              m.get("element_spacing_m", float, base.element_spacing_m),
              m.get("phase_bits", int, base.phase_bits),
              math.radians(angle),
              m.get("rician_k_ue_ris_db", float, base.rician_k_ue_ris_db),
              m.get("rician_k_ris_bs_db", float, base.rician_k_ris_bs_db),
              m.floats("position", base.position, 3))
    m.finish()
    return r


def build_scenario(doc: dict, rng: RandomStream) -> Scenario:
    """Scenario from the ``scenario`` mapping; ``random`` blocks draw from ``rng``."""
    s = _Section(doc, "scenario")
    channel = _channel(s)
    bs_pos = s.sub("bs").floats("position", (125.0, 125.0, 25.0), 3)
    area = s.floats("area_m", (250.0, 250.0), 2)
    n_cell_rb = s.get("n_cell_rb", int, 135)

    t = s.sub("timing")
    timing = _wrap(t.path, Timing,
                   t.get("assignment_period_s", float, 2.0),
                   t.get("scheduling_period_s", float, 0.1),
                   t.get("n_sched_periods", int, 20),
                   t.get("t_slot_s", float, 0.25e-3))
    t.finish()

    mo = s.sub("mobility")
    mobility = _wrap(mo.path, MobilityConfig,
                     mo.get("block_m", float, 25.0),
                     mo.get("p_left", float, 0.25),
                     mo.get("p_right", float, 0.25),
                     mo.get("p_straight", float, 0.5),
                     mo.floats("speed_range_mps", (1.0, 2.0), 2))
    mo.finish()

    se = s.sub("search")
    search = _wrap(se.path, SearchConfig,
                   n_theta=se.get("n_theta", int, 200),
                   delta_exponent=se.get("delta_exponent", str, "per_slot"))
    se.finish()

    common = dict(
        bs_position=bs_pos,
        channel=channel,
        los_distance_m=s.get("los_distance_m", float, 50.0),
        t_obs_tti=s.get("t_obs_tti", int, 4000),
        search=search,
        snr_draw_mode=s.get("snr_draw_mode", str, "per_tti"),
    )
    ris_defaults = s.get("ris_defaults", dict, {})

    rnd = s.sub("random")
    if rnd.data:
        n_ue = rnd.get("n_ue", int)
        n_ris = rnd.get("n_ris", int)
        if n_ue is None or n_ris is None:
            raise ConfigError(rnd.path, "n_ue and n_ris are required")
        rate = rnd.floats("rate_range_pps", (450.0, 550.0), 2)
        rnd.finish()
        for key in ("ues", "ris"):
            s.used.add(key)
            if s.data.get(key):
                raise ConfigError(s._p(key), "cannot be combined with scenario.random")
        s.finish()
        sc = _wrap(s.path, random_scenario, n_ue, n_ris, rng.child("scenario"), timing.n_sched_periods,
                   n_cell_rb, rate, area_m=area, mobility=mobility, timing=timing, **common)
        if ris_defaults:
            sc.ris = [_ris(_Section({"position": list(r.position)}, ""), ris_defaults, f"scenario.ris[{i}]")
                      for i, r in enumerate(sc.ris)]
        return sc

    ris_items = s.get("ris", list, [])
    ris = [_ris(_Section(item, f"scenario.ris[{i}]"), ris_defaults, f"scenario.ris[{i}]")
           for i, item in enumerate(ris_items)]
    ue_items = s.get("ues", list, [])
    if not ue_items:
        raise ConfigError("scenario.ues", "at least one UE (or a scenario.random block) is required")
    ues = []
    for i, item in enumerate(ue_items):
        u = _Section(item, f"scenario.ues[{i}]")
        sizes = u.get("packet_sizes_bytes", list, list(DEFAULT_PACKET_SIZES_BYTES))
        traffic = _wrap(u.path, TrafficModel, u.get("rate_pps", float, 500.0), tuple(sizes))
        req = _wrap(u.path, UeRequirements, u.get("w_th_s", float, 0.01), u.get("epsilon", float, 1e-3))
        pos = u.floats("position", None, 2)
        if pos is None:
            raise ConfigError(u._p("position"), "required")
        ues.append(UeSpec(pos, traffic, req, u.get("speed_mps", float), u.get("height_m", float, 1.8)))
        u.finish()
    s.finish()
    return _wrap(s.path, Scenario, ues, ris, area_m=area, n_cell_rb=n_cell_rb, timing=timing,
                 mobility=mobility, **common)


def _validation(doc: Any) -> tuple[ValidationSetup, list[ValidationPoint]]:
    v = _Section(doc, "validate_bound")
    d = ValidationSetup()
    setup = _wrap(v.path, ValidationSetup,
                  v.get("rate_pps", float, d.rate_pps),
                  v.get("n_tti", int, d.n_tti),
                  v.floats("bs_position", d.bs_position, 3),
                  v.get("ue_height_m", float, d.ue_height_m),
                  v.floats("ris_offset_m", d.ris_offset_m, 2),
                  v.get("ris_height_m", float, d.ris_height_m),
                  v.get("t_obs_tti", int, d.t_obs_tti),
                  v.get("tti_per_period", int, d.tti_per_period))
    items = v.get("points", list)
    if items is None:
        grid = default_validation_grid()
    else:
        grid = []
        for i, item in enumerate(items):
            p = _Section(item, f"validate_bound.points[{i}]")
            try:
                grid.append(ValidationPoint(p.get("sweep", str, "custom"), p.get("distance_m", float),
                                            p.get("n_rb", int), p.get("epsilon", float), p.get("omega", float)))
            except TypeError as exc:
                raise ConfigError(p.path, "distance_m, n_rb, epsilon and omega are required") from exc
            if None in (grid[-1].distance_m, grid[-1].n_rb, grid[-1].epsilon, grid[-1].omega):
                raise ConfigError(p.path, "distance_m, n_rb, epsilon and omega are required")
            p.finish()
    v.finish()
    return setup, grid


def _gloss(doc: Any) -> GlossSweepSettings:
    g = _Section(doc, "gloss_sweep")
    d = GlossSweepSettings()
    out = GlossSweepSettings(
        tuple(int(b) for b in g.get("phase_bits", list, list(d.phase_bits))),
        tuple(int(n) for n in g.get("n_elements", list, list(d.n_elements))),
        g.floats("distances_m", d.distances_m),
        g.floats("bs_position", d.bs_position, 3),
        g.floats("ris_position", d.ris_position, 3),
        g.get("ue_height_m", float, d.ue_height_m),
        g.get("n_rb", int, d.n_rb),
        g.get("epsilon", float, d.epsilon),
        g.get("rate_pps", float, d.rate_pps),
        g.get("noise_bandwidth_mode", str, d.noise_bandwidth_mode),
    )
    g.finish()
    return out


def parse_config(doc: Any, source: str | None = None) -> Config:
    top = _Section(doc, "")
    version = top.get("schema_version", int, CONFIG_SCHEMA_VERSION)
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {version}")
    scenario_doc = top.get("scenario", dict, {})
    e = top.sub("experiment")
    exp = ExperimentSettings(e.get("n_periods", int, 10),
                             tuple(e.get("policies", list, list(ExperimentSettings().policies))),
                             e.get("emulate", bool, False))
    for i, name in enumerate(exp.policies):
        if name not in POLICIES:
            raise ConfigError(f"experiment.policies[{i}]", f"unknown policy {name!r}")
    e.finish()
    setup, grid = _validation(top.get("validate_bound", dict, {}))
    gloss = _gloss(top.get("gloss_sweep", dict, {}))
    bf = top.sub("brute_force")
    guard = bf.get("guard", int, 5_000_000)
    bf.finish()
    top.finish()
    cfg = Config(scenario_doc, exp, setup, grid, gloss, guard, source, doc or {})
    # fail early on scenario errors that do not depend on randomness
    _channel(_Section(scenario_doc, "scenario"))
    return cfg


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return parse_config({})
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError("", f"cannot read {p}: {exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("", f"{p} is not valid YAML: {exc}") from exc
    return parse_config(doc, str(p))
