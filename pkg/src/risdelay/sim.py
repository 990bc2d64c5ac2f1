"""Scenario geometry, mobility, LOS sets, the TTI-level queue emulator and
the per-assignment-period experiment loop."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np

from . import assignment as asg
from .channel import (ChannelConfig, McsTable, RisGeometry, SnrModel, g_loss, linear_to_db, mcs_probs,
                      sample_snr)
from .mathx import RandomStream
from .snc import ArrivalEnvelope, SearchConfig, ServiceMix, ServiceSpec, delay_bound
from .traffic import DEFAULT_T_OBS, ArrivalTrace, ObservationWindow, TrafficModel, generate_poisson_trace

POLICIES = ("dario", "no_ris", "snr_static", "delay_aware_static", "brute_force")


# ---- delay statistics ------------------------------------------------------

@dataclass
class DelayStats:
    """Per-UE packet delays in seconds, sorted ascending.

    Packets still queued at the end of the horizon are kept as ``inf`` so
    quantiles never understate the tail.
    """

    delays: dict[int, np.ndarray] = field(default_factory=dict)
    backlog: dict[int, np.ndarray] = field(default_factory=dict)
    mcs_counts: dict[int, np.ndarray] = field(default_factory=dict)

    def samples(self, ue: int) -> np.ndarray:
        return self.delays.get(ue, np.empty(0))

    def n_packets(self, ue: int) -> int:
        return int(self.samples(ue).size)

    def censored(self, ue: int) -> int:
        return int(np.isinf(self.samples(ue)).sum())

    def quantile(self, ue: int, epsilon: float) -> float:
        """Smallest sample d with (fraction of samples > d) <= epsilon."""
        s = self.samples(ue)
        if s.size == 0:
            raise ValueError(f"no delay samples for UE {ue}")
        if not 0 <= epsilon < 1:
            raise ValueError("epsilon must lie in [0, 1)")
        k = max(math.ceil((1.0 - epsilon) * s.size) - 1, 0)
        return float(s[k])

    def violations(self, ue: int, w: float) -> int:
        s = self.samples(ue)
        return int(s.size - np.searchsorted(s, w, side="right"))

    def mean(self, ue: int) -> float:
        return float(self.samples(ue).mean())


# ---- queue emulator --------------------------------------------------------

def lindley_backlog(arrivals: np.ndarray, service: np.ndarray) -> np.ndarray:
    """Backlog after service in each TTI; arrivals of TTI j are servable from j+1.

    q[j] = max(0, q[j-1] + a[j-1] - c[j]) with q[-1] = a[-1] = 0, evaluated as
    a reflected random walk.
    """
    a = np.asarray(arrivals, dtype=np.int64)
    c = np.asarray(service, dtype=np.int64)
    inc = -c.copy()
    inc[1:] += a[:-1]
    s = np.cumsum(inc)
    floor = np.minimum(np.minimum.accumulate(s), 0)
    return s - floor


def packet_departures(arrivals: np.ndarray, backlog: np.ndarray,
                      packet_tti: np.ndarray, packet_bits: np.ndarray) -> np.ndarray:
    """Departure TTI of each packet under FIFO, -1 if still queued at the end."""
    a = np.asarray(arrivals, dtype=np.int64)
    cum_a = np.cumsum(a)
    offered = np.concatenate(([0], cum_a[:-1]))  # servable bits by TTI j
    departed = offered - backlog
    ends = np.cumsum(np.asarray(packet_bits, dtype=np.int64))
    dep = np.searchsorted(departed, ends, side="left")
    dep = np.where(dep >= departed.size, -1, dep)
    return dep


def service_bits(eta: np.ndarray, n_rb: int, n_sc: int, subcarrier_spacing_hz: float,
                 t_slot: float) -> np.ndarray:
    """Whole bits served per TTI; ``eta`` is per TTI or (TTI, RB)."""
    per_rb = n_sc * subcarrier_spacing_hz * t_slot
    e = np.asarray(eta, dtype=float)
    total = e.sum(axis=1) if e.ndim == 2 else n_rb * e
    return np.floor(per_rb * total + 1e-9).astype(np.int64)


@dataclass(frozen=True)
class EmulatorConfig:
    n_sc: int = 12
    subcarrier_spacing_hz: float = 60e3
    t_slot_s: float = 0.25e-3
    tti_per_period: int = 400
    snr_draw_mode: str = "per_tti"

    def __post_init__(self):
        if self.snr_draw_mode not in ("per_tti", "per_rb"):
            raise ValueError(f"unknown snr_draw_mode {self.snr_draw_mode!r}")
        if self.tti_per_period < 1:
            raise ValueError("tti_per_period must be >= 1")


def active_ris_per_tti(x_ue: np.ndarray, horizon: int, tti_per_period: int) -> np.ndarray:
    """RIS index serving the UE in every TTI (-1 for none).

    ``x_ue`` has shape (n_ris, n_periods); the period pattern repeats.
    """
    n_ris, n_per = x_ue.shape
    per_period = np.full(n_per, -1, dtype=np.int64)
    if n_ris:
        has = x_ue.any(axis=0)
        per_period[has] = np.argmax(x_ue[:, has], axis=0)
    period_of_tti = (np.arange(horizon) // tti_per_period) % n_per
    return per_period[period_of_tti]


def emulate_ue(trace: ArrivalTrace, models: Mapping[int, SnrModel], active: np.ndarray,
               n_rb: int, mcs: McsTable, cfg: EmulatorConfig, rng: RandomStream):
    """Emulate one UE's FIFO queue.

    ``models`` maps -1 to the S1 model and each RIS index to its S2 model.
    Returns (delays in s, backlog per TTI, MCS bucket counts).
    """
    horizon = active.size
    if len(trace) != horizon:
        raise ValueError(f"trace covers {len(trace)} TTIs, horizon is {horizon}")
    eff = mcs.efficiencies
    n_draw = n_rb if cfg.snr_draw_mode == "per_rb" else 1
    buckets = np.zeros((horizon, n_draw), dtype=np.int64)
    for key in np.unique(active):
        idx = np.flatnonzero(active == key)
        # one child stream per state keeps draws independent of the visiting order
        sub = rng.child(int(key) + 1)
        snr = sample_snr(models[int(key)], sub, (idx.size, n_draw))
        buckets[idx] = mcs.bucket_of(snr)
    counts = np.bincount(buckets.ravel(), minlength=mcs.n_c + 1)
    eta = eff[buckets]
    c = service_bits(eta if n_draw > 1 else eta[:, 0], n_rb, cfg.n_sc,
                     cfg.subcarrier_spacing_hz, cfg.t_slot_s)
    a = trace.bits_per_tti
    q = lindley_backlog(a, c)
    p_tti, p_bits = trace.packets()
    dep = packet_departures(a, q, p_tti, p_bits)
    delays = np.where(dep < 0, np.inf, (dep - p_tti) * cfg.t_slot_s)
    return np.sort(delays), q, counts


def run_emulation(models: Mapping[int, Mapping[int, SnrModel]], alloc: Mapping[int, int],
                  x: np.ndarray, traces: Mapping[int, ArrivalTrace], horizon_tti: int,
                  mcs: McsTable, rng: RandomStream, cfg: EmulatorConfig | None = None) -> DelayStats:
    """Emulate every UE over ``horizon_tti`` TTIs.

    ``x`` has shape (n_ue, n_ris, n_periods); ``models[u]`` maps -1 and each
    LOS RIS to the UE's SNR models.
    """
    cfg = cfg or EmulatorConfig()
    if horizon_tti < 1:
        raise ValueError("horizon must be >= 1 TTI")
    stats = DelayStats()
    for u, trace in sorted(traces.items()):
        if len(trace) < horizon_tti:
            raise ValueError(f"trace for UE {u} shorter than the horizon")
        tr = trace.slice(0, horizon_tti) if len(trace) > horizon_tti else trace
        active = active_ris_per_tti(np.asarray(x[u]), horizon_tti, cfg.tti_per_period)
        d, q, cnt = emulate_ue(tr, models[u], active, int(alloc[u]), mcs, cfg, rng.child(u))
        stats.delays[u], stats.backlog[u], stats.mcs_counts[u] = d, q, cnt
    return stats


# ---- mobility ----------------------------------------------------------------

# +x, +y, -x, -y; a left turn adds one
HEADINGS = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])


@dataclass(frozen=True)
class MobilityConfig:
    block_m: float = 25.0
    p_left: float = 0.25
    p_right: float = 0.25
    p_straight: float = 0.5
    speed_range_mps: tuple[float, float] = (1.0, 2.0)

    def __post_init__(self):
        if self.block_m <= 0:
            raise ValueError("block_m must be positive")
        probs = (self.p_left, self.p_right, self.p_straight)
        if min(probs) < 0 or abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError("turn probabilities must be nonnegative and sum to 1")
        lo, hi = self.speed_range_mps
        if not 0 <= lo <= hi:
            raise ValueError("invalid speed range")


@dataclass
class MobilityState:
    positions: np.ndarray  # (n, 2)
    headings: np.ndarray   # (n,) index into HEADINGS
    speeds: np.ndarray     # (n,) m/s
    area_m: tuple[float, float]
    block_m: float

    def copy(self) -> "MobilityState":
        return MobilityState(self.positions.copy(), self.headings.copy(), self.speeds.copy(),
                             self.area_m, self.block_m)


def _on_grid(v: float, block: float) -> bool:
    k = round(v / block)
    return abs(v - k * block) <= 1e-9 * max(block, 1.0)


def _exits(pos, heading: int, area) -> bool:
    axis = heading % 2
    step = HEADINGS[heading][axis]
    return (step > 0 and pos[axis] >= area[axis] - 1e-9) or (step < 0 and pos[axis] <= 1e-9)


def snap_to_street(xy, block: float, area) -> np.ndarray:
    """Move a point onto the nearest street line, inside the area."""
    p = np.clip(np.asarray(xy, dtype=float), 0.0, area)
    off = [abs(p[a] - round(p[a] / block) * block) for a in (0, 1)]
    a = 0 if off[0] <= off[1] else 1
    p[a] = min(round(p[a] / block) * block, area[a] // block * block)
    return p


def street_headings(pos, block: float, area) -> list[int]:
    """Headings that keep a UE on a street and inside the area."""
    out = []
    for h in range(4):
        # moving along x needs a horizontal street (y on the grid) and vice versa
        other = 1 - h % 2
        if _on_grid(pos[other], block) and not _exits(pos, h, area):
            out.append(h)
    return out


def initial_mobility(xy: np.ndarray, speeds, area, cfg: MobilityConfig, rng: RandomStream) -> MobilityState:
    area = tuple(float(a) for a in area)
    for a in area:
        if not _on_grid(a, cfg.block_m):
            raise ValueError(f"area side {a} is not a multiple of the block size {cfg.block_m}")
    pos = np.array([snap_to_street(p, cfg.block_m, area) for p in np.atleast_2d(xy)]).reshape(-1, 2)
    n = pos.shape[0]
    heads = np.empty(n, dtype=np.int64)
    for i in range(n):
        opts = street_headings(pos[i], cfg.block_m, area)
        heads[i] = opts[int(rng.integers(len(opts)))]
    lo, hi = cfg.speed_range_mps
    sp = np.array([rng.uniform(lo, hi) if s is None else float(s) for s in speeds], dtype=float)
    return MobilityState(pos, heads, sp, area, cfg.block_m)


def manhattan_step(state: MobilityState, dt: float, rng: RandomStream,
                   cfg: MobilityConfig | None = None) -> MobilityState:
    """Advance every UE by speed*dt along the street grid."""
    cfg = cfg or MobilityConfig(block_m=state.block_m)
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    out = state.copy()
    block, area = state.block_m, state.area_m
    for i in range(out.positions.shape[0]):
        pos = out.positions[i]
        h = int(out.headings[i])
        remaining = float(out.speeds[i]) * dt
        while remaining > 1e-12:
            axis = h % 2
            sign = HEADINGS[h][axis]
            k = pos[axis] / block
            nxt = (math.floor(k + 1e-9) + 1) * block if sign > 0 else (math.ceil(k - 1e-9) - 1) * block
            dist = abs(nxt - pos[axis])
            if remaining < dist:
                pos[axis] += sign * remaining
                break
            pos[axis] = nxt
            remaining -= dist
            u = rng.random()
            if u < cfg.p_left:
                h = (h + 1) % 4
            elif u < cfg.p_left + cfg.p_right:
                h = (h + 3) % 4
            if _exits(pos, h, area):
                h = (h + 2) % 4
        out.headings[i] = h
    return out


# ---- LOS -----------------------------------------------------------------------

def distance_los(d_los_m: float) -> Callable[[np.ndarray, RisGeometry], bool]:
    def predicate(ue_pos, ris: RisGeometry) -> bool:
        return math.dist(ue_pos, ris.position) <= d_los_m
    return predicate


def los_sets(ue_positions, ris_list: Sequence[RisGeometry], d_los_m: float = 50.0,
             predicate: Callable | None = None) -> list[frozenset[int]]:
    """LOS RIS set per UE; ``predicate(ue_pos, ris)`` replaces the distance rule."""
    pred = predicate or distance_los(d_los_m)
    return [frozenset(r for r, ris in enumerate(ris_list) if pred(tuple(p), ris)) for p in ue_positions]


def los_classes(los: Sequence[frozenset[int]]) -> tuple[list[int], list[int]]:
    """(UEs with LOS to some RIS, UEs without)."""
    with_los = [u for u, s in enumerate(los) if s]
    return with_los, [u for u, s in enumerate(los) if not s]


# ---- scenario ------------------------------------------------------------------

@dataclass(frozen=True)
class Timing:
    assignment_period_s: float = 2.0
    scheduling_period_s: float = 0.1
    n_sched_periods: int = 20
    t_slot_s: float = 0.25e-3

    def __post_init__(self):
        if abs(self.n_sched_periods * self.scheduling_period_s - self.assignment_period_s) > 1e-9:
            raise ValueError("n_sched_periods * scheduling_period_s must equal assignment_period_s")
        ratio = self.scheduling_period_s / self.t_slot_s
        if abs(ratio - round(ratio)) > 1e-6 or round(ratio) < 1:
            raise ValueError("scheduling_period_s must be a whole number of slots")

    @property
    def tti_per_sched_period(self) -> int:
        return int(round(self.scheduling_period_s / self.t_slot_s))

    @property
    def tti_per_assignment_period(self) -> int:
        return self.tti_per_sched_period * self.n_sched_periods


@dataclass
class UeSpec:
    position: tuple[float, float]
    traffic: TrafficModel
    requirements: asg.UeRequirements
    speed_mps: float | None = None
    height_m: float = 1.8


@dataclass
class Scenario:
    ues: list[UeSpec]
    ris: list[RisGeometry]
    bs_position: tuple[float, float, float] = (125.0, 125.0, 25.0)
    area_m: tuple[float, float] = (250.0, 250.0)
    n_cell_rb: int = 135
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    timing: Timing = field(default_factory=Timing)
    los_distance_m: float = 50.0
    mobility: MobilityConfig = field(default_factory=MobilityConfig)
    t_obs_tti: int = DEFAULT_T_OBS
    search: SearchConfig = field(default_factory=SearchConfig)
    snr_draw_mode: str = "per_tti"
    brute_force_guard: int = 5_000_000

    def __post_init__(self):
        if self.n_cell_rb < len(self.ues):
            raise ValueError(f"n_cell_rb={self.n_cell_rb} is below the UE count {len(self.ues)}")

    def emulator_config(self) -> EmulatorConfig:
        return EmulatorConfig(self.channel.n_sc, self.channel.subcarrier_spacing_hz, self.timing.t_slot_s,
                              self.timing.tti_per_sched_period, self.snr_draw_mode)

    def positions_3d(self, xy: np.ndarray) -> list[tuple[float, float, float]]:
        return [(float(p[0]), float(p[1]), ue.height_m) for p, ue in zip(xy, self.ues)]

    def build_problem(self, xy: np.ndarray, windows: Sequence[ObservationWindow]) -> asg.AssignmentProblem:
        pos = self.positions_3d(xy)
        los = los_sets(pos, self.ris, self.los_distance_m)
        ues = [asg.UeContext(p, ue.requirements, ArrivalEnvelope(w, self.timing.t_slot_s))
               for p, ue, w in zip(pos, self.ues, windows)]
        return asg.AssignmentProblem(ues, self.ris, self.bs_position, self.channel, self.n_cell_rb,
                                     self.timing.n_sched_periods, los=los, search=self.search,
                                     t_slot_s=self.timing.t_slot_s)


W_TH_CHOICES_S = (0.005, 0.010, 0.015, 0.020, 0.025, 0.050, 0.100)
EPSILON_CHOICES = (1e-3, 1e-4, 1e-5)


def random_scenario(n_ue: int, n_ris: int, rng: RandomStream, n_sched_periods: int = 20,
                    n_cell_rb: int = 135, rate_range: tuple[float, float] = (450.0, 550.0),
                    **overrides) -> Scenario:
    """Seeded scenario with UEs on the street grid and RIS anywhere in the area."""
    area = overrides.pop("area_m", (250.0, 250.0))
    mob = overrides.pop("mobility", MobilityConfig())
    ues = []
    for _ in range(n_ue):
        xy = snap_to_street(rng.uniform(0.0, 1.0, 2) * np.asarray(area), mob.block_m, area)
        req = asg.UeRequirements(float(rng.choice(W_TH_CHOICES_S)), float(rng.choice(EPSILON_CHOICES)))
        ues.append(UeSpec((float(xy[0]), float(xy[1])), TrafficModel(float(rng.uniform(*rate_range))), req,
                          speed_mps=float(rng.uniform(*mob.speed_range_mps))))
    ris = [RisGeometry(position=(float(rng.uniform(0, area[0])), float(rng.uniform(0, area[1])), 3.0))
           for _ in range(n_ris)]
    period = 2.0 / n_sched_periods
    timing = overrides.pop("timing", Timing(2.0, period, n_sched_periods))
    return Scenario(ues, ris, area_m=area, n_cell_rb=n_cell_rb, timing=timing, mobility=mob, **overrides)


# ---- experiment loop -------------------------------------------------------------

@dataclass
class ExperimentRecord:
    policy: str
    rows: list[dict] = field(default_factory=list)

    def values(self, key: str = "f_obj") -> np.ndarray:
        return np.array([r[key] for r in self.rows], dtype=float)

    def percentile(self, q: float, key: str = "f_obj") -> float:
        return float(np.percentile(self.values(key), q))

    def cdf(self, key: str = "f_obj") -> list[tuple[float, float]]:
        v = np.sort(self.values(key))
        return [(float(x), (i + 1) / v.size) for i, x in enumerate(v)]

    def summary(self) -> dict:
        if not self.rows:
            return {"policy": self.policy, "n_periods": 0}
        return {
            "policy": self.policy,
            "n_periods": len(self.rows),
            "f_obj_p50": self.percentile(50),
            "f_obj_p90": self.percentile(90),
            "f_obj_mean": float(self.values().mean()),
            "elapsed_s_p50": self.percentile(50, "elapsed_s"),
            "elapsed_s_max": float(self.values("elapsed_s").max()),
        }


def run_policy(policy: str, problem: asg.AssignmentProblem, rng: RandomStream,
               alloc=None, guard: int = 5_000_000) -> asg.PolicyResult:
    if policy == "dario":
        return asg.dario_optimize(problem, rng)
    if policy == "no_ris":
        return asg.baseline_no_ris(problem, alloc)
    if policy == "snr_static":
        return asg.baseline_snr_static(problem, alloc)
    if policy == "delay_aware_static":
        return asg.baseline_delay_aware_static(problem, rng, alloc)
    if policy == "brute_force":
        return asg.brute_force(problem, guard)
    raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")


def period_traffic(scenario: Scenario, stream: RandomStream, period: int, emulate: bool):
    """Observation windows (and emulation traces) for one assignment period."""
    windows, traces = [], {}
    t_slot = scenario.timing.t_slot_s
    for u, ue in enumerate(scenario.ues):
        s = stream.child(period).child(u)
        w = generate_poisson_trace(ue.traffic, scenario.t_obs_tti, t_slot, s.child("window"))
        windows.append(ObservationWindow.from_trace(w, scenario.t_obs_tti))
        if emulate:
            traces[u] = generate_poisson_trace(ue.traffic, scenario.timing.tti_per_assignment_period,
                                               t_slot, s.child("horizon"))
    return windows, traces


def emulate_period(scenario: Scenario, problem: asg.AssignmentProblem, result: asg.PolicyResult,
                   traces: Mapping[int, ArrivalTrace], rng: RandomStream) -> DelayStats:
    models = {}
    for u in range(problem.n_ue):
        n = int(result.alloc[u])
        m = {-1: problem.s1_model(u, n)}
        m.update({r: problem.s2_model(u, r, n) for r in problem.los[u]})
        models[u] = m
    return run_emulation(models, result.alloc, result.x, traces, scenario.timing.tti_per_assignment_period,
                         scenario.channel.mcs, rng, scenario.emulator_config())


def run_comparison(scenario: Scenario, policies: Sequence[str], n_periods: int, rng: RandomStream,
                   emulate: bool = False) -> dict[str, ExperimentRecord]:
    """Run several policies on identical mobility, traffic and channel draws.

    Baselines reuse the RB allocation from the first stage of the heuristic.
    """
    for p in policies:
        if p not in POLICIES:
            raise ValueError(f"unknown policy {p!r}; expected one of {POLICIES}")
    mob_rng = rng.child("mobility")
    traffic_rng = rng.child("traffic")
    channel_rng = rng.child("channel")
    alg_rng = rng.child("alg2-init")
    xy = np.array([u.position for u in scenario.ues], dtype=float).reshape(-1, 2)
    state = initial_mobility(xy, [u.speed_mps for u in scenario.ues], scenario.area_m,
                             scenario.mobility, mob_rng.child("init"))
    records = {p: ExperimentRecord(p) for p in policies}
    for i in range(n_periods):
        if i > 0:
            state = manhattan_step(state, scenario.timing.assignment_period_s, mob_rng.child(i),
                                   scenario.mobility)
        windows, traces = period_traffic(scenario, traffic_rng, i, emulate)
        problem = scenario.build_problem(state.positions, windows)
        alloc = None
        if any(p in ("no_ris", "snr_static", "delay_aware_static") for p in policies):
            alloc = asg.alg1_rb_allocation(problem).alloc
        for p in policies:
            t0 = time.perf_counter()
            res = run_policy(p, problem, alg_rng.child(i), alloc, scenario.brute_force_guard)
            elapsed = time.perf_counter() - t0
            asg.validate_assignment(problem, res.x, res.alloc)
            row = {
                "period": i,
                "policy": p,
                "f_obj": res.objective.f_obj,
                "max_ratio_no_los": res.objective.max_ratio_no_los,
                "max_ratio_los": res.objective.max_ratio_los,
                "n_los_ues": len(problem.los_ues),
                "ris_slots_used": int(res.x.sum()),
                "steps": res.steps,
                "hit_cap": res.hit_cap,
                "elapsed_s": elapsed,
            }
            if emulate:
                # same channel draws in every arm
                stats = emulate_period(scenario, problem, res, traces, channel_rng.child(i))
                row["empirical_max_ratio"] = max(
                    (stats.quantile(u, ue.requirements.epsilon) / ue.requirements.w_th_s
                     for u, ue in enumerate(scenario.ues) if stats.n_packets(u)), default=0.0)
            records[p].rows.append(row)
    return records


def run_experiment(scenario: Scenario, policy: str, n_periods: int, rng: RandomStream,
                   emulate: bool = False) -> ExperimentRecord:
    return run_comparison(scenario, [policy], n_periods, rng, emulate)[policy]


# ---- bound validation ------------------------------------------------------------

@dataclass(frozen=True)
class ValidationPoint:
    sweep: str
    distance_m: float
    n_rb: int
    epsilon: float
    omega: float


@dataclass(frozen=True)
class ValidationSetup:
    rate_pps: float = 2000.0
    n_tti: int = 1_000_000
    bs_position: tuple[float, float, float] = (0.0, 0.0, 25.0)
    ue_height_m: float = 1.5
    ris_offset_m: tuple[float, float] = (0.0, 20.0)
    ris_height_m: float = 3.0
    t_obs_tti: int = DEFAULT_T_OBS
    tti_per_period: int = 400


def default_validation_grid() -> list[ValidationPoint]:
    pairs = ((40.0, 0.0), (90.0, 1.0))
    grid = [ValidationPoint("VS1", d, n, 1e-3, w) for n in (3, 5, 8, 10) for d, w in pairs]
    grid += [ValidationPoint("VS2", d, 5, e, w) for e in (1e-3, 1e-4, 1e-5) for d, w in pairs]
    grid += [ValidationPoint("VS3", d, 5, 1e-3, w) for d in (60.0, 100.0, 140.0) for w in (0.0, 1.0)]
    grid += [ValidationPoint("VS4", d, 5, 1e-3, w) for d in (90.0, 150.0) for w in (0.25, 0.5, 0.75)]
    return grid


def omega_pattern(omega: float, max_periods: int = 100) -> np.ndarray:
    """Shortest on/off period pattern whose on-fraction equals ``omega``."""
    f = Fraction(omega).limit_denominator(max_periods)
    if abs(float(f) - omega) > 1e-9:
        raise ValueError(f"omega={omega} needs more than {max_periods} periods")
    pat = np.zeros(f.denominator, dtype=bool)
    pat[: f.numerator] = True
    return pat


def validate_point(point: ValidationPoint, setup: ValidationSetup, channel: ChannelConfig,
                   rng: RandomStream, search: SearchConfig | None = None) -> dict:
    """Analytic bound against the emulated quantile for one single-UE configuration.

    The arrival envelope comes from a window observed just before the
    emulated horizon.
    """
    bx, by, _ = setup.bs_position
    ue = (bx + point.distance_m, by, setup.ue_height_m)
    ris = RisGeometry(position=(ue[0] + setup.ris_offset_m[0], ue[1] + setup.ris_offset_m[1],
                                setup.ris_height_m))
    m1 = channel.s1_model(ue, setup.bs_position, point.n_rb)
    m2 = channel.s2_model(ue, ris, setup.bs_position, point.n_rb)
    mcs = channel.mcs
    mix = ServiceMix(1.0 - point.omega, {0: point.omega} if point.omega > 0 else {})
    spec = ServiceSpec(mix, mcs_probs(m1, mcs), {0: mcs_probs(m2, mcs)}, mcs.efficiencies, point.n_rb,
                       channel.n_sc, channel.subcarrier_spacing_hz)
    t_slot = spec.t_slot_s
    trace = generate_poisson_trace(TrafficModel(setup.rate_pps), setup.t_obs_tti + setup.n_tti, t_slot,
                                   rng.child("traffic"))
    window = ObservationWindow.from_trace(trace.slice(0, setup.t_obs_tti), setup.t_obs_tti)
    res = delay_bound(window, spec, point.epsilon, search=search)
    horizon = trace.slice(setup.t_obs_tti, setup.t_obs_tti + setup.n_tti)
    x = omega_pattern(point.omega)[None, None, :]
    cfg = EmulatorConfig(channel.n_sc, channel.subcarrier_spacing_hz, t_slot, setup.tti_per_period)
    stats = run_emulation({0: {-1: m1, 0: m2}}, {0: point.n_rb}, x, {0: horizon}, setup.n_tti, mcs,
                          rng.child("channel"), cfg)
    q = stats.quantile(0, point.epsilon) if stats.n_packets(0) else 0.0
    w = res.w_seconds
    if math.isinf(w) and math.isinf(q):
        ratio = math.nan
    elif q == 0:
        ratio = math.inf
    else:
        ratio = w / q
    return {
        "sweep": point.sweep,
        "distance_m": point.distance_m,
        "n_rb": point.n_rb,
        "epsilon": point.epsilon,
        "omega": point.omega,
        "w_bound_s": w,
        "empirical_quantile_s": q,
        "ratio": ratio,
        "n_packets": stats.n_packets(0),
        "censored": stats.censored(0),
        "feasible": res.feasible,
    }


# ---- phase-quantization sensitivity ----------------------------------------------

@dataclass
class GlossSweepSettings:
    phase_bits: tuple[int, ...] = (1, 2, 3, 4, 5)
    n_elements: tuple[int, ...] = (8, 16, 32, 64)
    distances_m: tuple[float, ...] = tuple(float(d) for d in range(50, 1000, 50))
    bs_position: tuple[float, float, float] = (0.0, 0.0, 25.0)
    ris_position: tuple[float, float, float] = (0.0, 500.0, 3.0)
    ue_height_m: float = 1.5
    n_rb: int = 5
    epsilon: float = 1e-3
    rate_pps: float = 500.0
    noise_bandwidth_mode: str = "per_hz"


def gloss_sweep(settings: GlossSweepSettings, channel: ChannelConfig, rng: RandomStream,
                t_obs_tti: int = DEFAULT_T_OBS) -> list[dict]:
    """Delay bound of a RIS-only link over (B, L, UE distance along x).

    Every point shares one observation window so the curves differ only
    through the channel.
    """
    ch = replace(channel, noise_bandwidth_mode=settings.noise_bandwidth_mode)
    trace = generate_poisson_trace(TrafficModel(settings.rate_pps), t_obs_tti, 0.25e-3, rng.child("traffic"))
    env = ArrivalEnvelope(ObservationWindow.from_trace(trace, t_obs_tti))
    p_unused = np.zeros(ch.mcs.n_c + 1)
    p_unused[0] = 1.0
    rows = []
    for b in settings.phase_bits:
        for n_el in settings.n_elements:
            ris = RisGeometry(n_elements=n_el, phase_bits=b, position=settings.ris_position)
            gl = g_loss(ris, settings.n_rb, ch.subcarrier_spacing_hz, ch.budget.carrier_freq_hz, ch.n_sc)
            for d in settings.distances_m:
                ue = (settings.bs_position[0] + d, settings.bs_position[1], settings.ue_height_m)
                m = ch.s2_model(ue, ris, settings.bs_position, settings.n_rb)
                spec = ServiceSpec(ServiceMix(0.0, {0: 1.0}), p_unused, {0: mcs_probs(m, ch.mcs)},
                                   ch.mcs.efficiencies, settings.n_rb, ch.n_sc, ch.subcarrier_spacing_hz)
                res = delay_bound(env, spec, settings.epsilon)
                rows.append({
                    "phase_bits": b,
                    "n_elements": n_el,
                    "distance_m": d,
                    "g_loss": gl,
                    "noncentrality": m.noncentrality,
                    "mean_snr_db": float(linear_to_db(m.mean_snr)),
                    "w_bound_s": res.w_seconds,
                    "feasible": res.feasible,
                })
    return rows
