"""Assignment objective, RB allocation, RIS scheduling, brute force and baselines.

The assignment tensor ``x`` has shape (n_ue, n_ris, n_periods) and dtype
bool. RB allocations are integer arrays of length n_ue.
"""

from __future__ import annotations

import copy
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import ChannelConfig, RisGeometry, SnrModel, mcs_probs
from .mathx import RandomStream
from .snc import ArrivalEnvelope, SearchConfig, ServiceMix, ServiceSpec, delay_bound

INFEASIBLE_W_S = 1e9


class InfeasibleStartError(ValueError):
    """Fewer RBs in the cell than UEs."""


class GuardExceededError(RuntimeError):
    def __init__(self, count: int, guard: int):
        super().__init__(f"brute force needs {count} combinations, guard is {guard}")
        self.count = count
        self.guard = guard


class ConstraintViolation(AssertionError):
    pass


@dataclass(frozen=True)
class UeRequirements:
    w_th_s: float
    epsilon: float

    def __post_init__(self):
        if not self.w_th_s > 0:
            raise ValueError("w_th_s must be positive")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")


@dataclass
class UeContext:
    position: tuple[float, float, float]
    requirements: UeRequirements
    envelope: ArrivalEnvelope


@dataclass
class ObjectiveBreakdown:
    f_obj: float
    max_ratio_no_los: float
    max_ratio_los: float
    per_ue_w: dict[int, float]

    def ratio(self, ue: int, problem: "AssignmentProblem") -> float:
        return self.per_ue_w[ue] / problem.ues[ue].requirements.w_th_s


@dataclass
class PolicyResult:
    alloc: np.ndarray
    x: np.ndarray
    objective: ObjectiveBreakdown
    history: list[float] = field(default_factory=list)
    steps: int = 0
    hit_cap: bool = False
    elapsed_s: float = 0.0
    alg1_history: list[float] = field(default_factory=list)


class AssignmentProblem:
    """Everything one assignment period needs, plus memoized delay bounds.

    ``los`` overrides the geometric LOS sets when given (one set of RIS
    indices per UE).
    """

    def __init__(self, ues: Sequence[UeContext], ris: Sequence[RisGeometry], bs_pos,
                 channel: ChannelConfig, n_cell_rb: int, n_periods: int,
                 los: Sequence[set[int]] | None = None, search: SearchConfig | None = None,
                 t_slot_s: float = 0.25e-3, los_distance_m: float = 50.0):
        if n_periods < 1:
            raise ValueError("need at least one scheduling period")
        self.ues = list(ues)
        self.ris = list(ris)
        self.bs_pos = tuple(bs_pos)
        self.channel = channel
        self.n_cell_rb = int(n_cell_rb)
        self.n_periods = int(n_periods)
        self.search = search or SearchConfig()
        self.t_slot_s = t_slot_s
        self.dist = np.array([[math.dist(u.position, r.position) for r in self.ris] for u in self.ues]
                             ).reshape(len(self.ues), len(self.ris))
        if los is None:
            los = [set(np.flatnonzero(row <= los_distance_m).tolist()) for row in self.dist]
        if len(los) != len(self.ues):
            raise ValueError("one LOS set per UE is required")
        self.los = [frozenset(s) for s in los]
        self._p1: dict = {}
        self._p2: dict = {}
        self._w: dict = {}
        self.bound_evaluations = 0

    @property
    def n_ue(self) -> int:
        return len(self.ues)

    @property
    def n_ris(self) -> int:
        return len(self.ris)

    @property
    def los_ues(self) -> list[int]:
        return [u for u in range(self.n_ue) if self.los[u]]

    def ues_of_ris(self, r: int) -> list[int]:
        return [u for u in range(self.n_ue) if r in self.los[u]]

    # ---- channel statistics ------------------------------------------------

    def s1_model(self, u: int, n_rb: int) -> SnrModel:
        return self.channel.s1_model(self.ues[u].position, self.bs_pos, n_rb)

    def s2_model(self, u: int, r: int, n_rb: int) -> SnrModel:
        return self.channel.s2_model(self.ues[u].position, self.ris[r], self.bs_pos, n_rb)

    def probs_s1(self, u: int, n_rb: int) -> np.ndarray:
        key = (u, n_rb)
        if key not in self._p1:
            self._p1[key] = mcs_probs(self.s1_model(u, n_rb), self.channel.mcs)
        return self._p1[key]

    def probs_s2(self, u: int, r: int, n_rb: int) -> np.ndarray:
        key = (u, r, n_rb)
        if key not in self._p2:
            self._p2[key] = mcs_probs(self.s2_model(u, r, n_rb), self.channel.mcs)
        return self._p2[key]

    # ---- delay bounds ------------------------------------------------------

    def service_spec(self, u: int, n_rb: int, mix: ServiceMix) -> ServiceSpec:
        p2 = {r: self.probs_s2(u, r, n_rb) for r, w in mix.omega_s2.items() if w > 0}
        return ServiceSpec(mix, self.probs_s1(u, n_rb), p2, self.channel.mcs.efficiencies, n_rb,
                           self.channel.n_sc, self.channel.subcarrier_spacing_hz, self.t_slot_s)

    def w_for_mix(self, u: int, n_rb: int, mix_key: tuple) -> float:
        """Delay bound for a mix given as sorted ((ris, weight), ...) pairs."""
        key = (u, n_rb, mix_key)
        hit = self._w.get(key)
        if hit is not None:
            return hit
        s2 = dict(mix_key)
        mix = ServiceMix(max(0.0, 1.0 - math.fsum(s2.values())), s2)
        res = delay_bound(self.ues[u].envelope, self.service_spec(u, n_rb, mix),
                          self.ues[u].requirements.epsilon, search=self.search)
        self.bound_evaluations += 1
        w = res.w_seconds if res.feasible else INFEASIBLE_W_S
        self._w[key] = w
        return w

    def mix_key_from_x(self, x: np.ndarray, u: int) -> tuple:
        counts = x[u].sum(axis=1)
        return tuple((int(r), counts[r] / self.n_periods) for r in np.flatnonzero(counts))

    def w_ue(self, x: np.ndarray, alloc, u: int) -> float:
        return self.w_for_mix(u, int(alloc[u]), self.mix_key_from_x(x, u))

    def ratio(self, w: float, u: int) -> float:
        return w / self.ues[u].requirements.w_th_s

    # ---- objective ---------------------------------------------------------

    def breakdown(self, per_ue_w: dict[int, float]) -> ObjectiveBreakdown:
        no_los = [self.ratio(w, u) for u, w in per_ue_w.items() if not self.los[u]]
        with_los = [self.ratio(w, u) for u, w in per_ue_w.items() if self.los[u]]
        a = max(no_los, default=0.0)
        b = max(with_los, default=0.0)
        return ObjectiveBreakdown(a + b, a, b, dict(per_ue_w))

    def objective(self, x: np.ndarray, alloc) -> ObjectiveBreakdown:
        return self.breakdown({u: self.w_ue(x, alloc, u) for u in range(self.n_ue)})

    def with_periods(self, n_periods: int) -> "AssignmentProblem":
        """Shallow copy with another period count; caches stay shared."""
        other = copy.copy(self)
        other.n_periods = int(n_periods)
        return other

    def zero_x(self) -> np.ndarray:
        return np.zeros((self.n_ue, self.n_ris, self.n_periods), dtype=bool)


def weights_from_assignment(x: np.ndarray, ue: int) -> ServiceMix:
    n_periods = x.shape[2]
    counts = x[ue].sum(axis=1)
    return ServiceMix.from_counts({int(r): int(c) for r, c in enumerate(counts) if c}, n_periods)


def validate_assignment(problem: AssignmentProblem, x: np.ndarray, alloc=None) -> None:
    """Raise :class:`ConstraintViolation` unless every constraint holds."""
    if x.shape != (problem.n_ue, problem.n_ris, problem.n_periods):
        raise ConstraintViolation(f"x has shape {x.shape}")
    if np.any(x.sum(axis=1) > 1):
        raise ConstraintViolation("a UE holds more than one RIS in some period")
    if np.any(x.sum(axis=0) > 1):
        raise ConstraintViolation("a RIS serves more than one UE in some period")
    for u in range(problem.n_ue):
        used = set(np.flatnonzero(x[u].any(axis=1)).tolist())
        if not used <= problem.los[u]:
            raise ConstraintViolation(f"UE {u} uses RIS {sorted(used - problem.los[u])} without LOS")
    if alloc is not None:
        a = np.asarray(alloc)
        if a.sum() != problem.n_cell_rb:
            raise ConstraintViolation(f"allocation sums to {a.sum()}, cell has {problem.n_cell_rb}")
        if np.any(a < 0):
            raise ConstraintViolation("negative RB count")


# ---- Algorithm 1: RB allocation ---------------------------------------------

def equiprobable_mix_key(problem: AssignmentProblem, u: int) -> tuple:
    """Each RIS shared evenly among the UEs that see it, capped at a full mix."""
    shares = {r: 1.0 / len(problem.ues_of_ris(r)) for r in sorted(problem.los[u])}
    total = math.fsum(shares.values())
    if total > 1.0:
        shares = {r: s / total for r, s in shares.items()}
    return tuple(shares.items())


def initial_allocation(n_cell_rb: int, n_ue: int) -> np.ndarray:
    if n_cell_rb < n_ue:
        raise InfeasibleStartError(f"{n_cell_rb} RBs cannot cover {n_ue} UEs")
    alloc = np.full(n_ue, n_cell_rb // n_ue, dtype=np.int64)
    alloc[: n_cell_rb % n_ue] += 1
    return alloc


def alg1_rb_allocation(problem: AssignmentProblem) -> PolicyResult:
    t0 = time.perf_counter()
    alloc = initial_allocation(problem.n_cell_rb, problem.n_ue)
    mixes = [equiprobable_mix_key(problem, u) for u in range(problem.n_ue)]

    def ratios_for(a):
        return np.array([problem.ratio(problem.w_for_mix(u, int(a[u]), mixes[u]), u)
                         for u in range(problem.n_ue)])

    def f_of(a):
        return problem.breakdown({u: problem.w_for_mix(u, int(a[u]), mixes[u])
                                  for u in range(problem.n_ue)})

    f_old = f_of(alloc).f_obj
    history = [f_old]
    steps = 0
    hit_cap = False
    while True:
        if steps >= problem.n_cell_rb:
            hit_cap = True
            break
        ratios = ratios_for(alloc)
        u_max = int(np.argmax(ratios))
        donors = [u for u in range(problem.n_ue) if alloc[u] > 1 and u != u_max]
        if not donors:
            break
        u_min = min(donors, key=lambda u: (ratios[u], u))
        alloc[u_max] += 1
        alloc[u_min] -= 1
        f_new = f_of(alloc).f_obj
        if f_new < f_old:
            f_old = f_new
            history.append(f_new)
            steps += 1
        else:
            alloc[u_max] -= 1
            alloc[u_min] += 1
            break
    obj = problem.objective(problem.zero_x(), alloc)
    return PolicyResult(alloc, problem.zero_x(), obj, history, steps, hit_cap,
                        time.perf_counter() - t0)


# ---- Algorithm 2: RIS scheduling --------------------------------------------

def random_initial_assignment(problem: AssignmentProblem, rng: RandomStream) -> np.ndarray:
    """Per period, each RIS (random order) picks a random unserved LOS UE."""
    x = problem.zero_x()
    for t in range(problem.n_periods):
        served: set[int] = set()
        for r in rng.permutation(problem.n_ris):
            cands = [u for u in problem.ues_of_ris(int(r)) if u not in served]
            if cands:
                u = int(cands[int(rng.integers(len(cands)))])
                x[u, r, t] = True
                served.add(u)
    return x


def alg2_ris_scheduling(problem: AssignmentProblem, alloc, rng: RandomStream,
                        x0: np.ndarray | None = None, max_steps: int | None = None) -> PolicyResult:
    t0 = time.perf_counter()
    alloc = np.asarray(alloc)
    x = random_initial_assignment(problem, rng) if x0 is None else x0.copy()
    w = {u: problem.w_ue(x, alloc, u) for u in range(problem.n_ue)}
    f_old = problem.breakdown(w).f_obj
    history = [f_old]
    u_r = problem.los_ues
    evaluated: set[int] = set()
    donors: set[int] = set()
    if max_steps is None:
        max_steps = 20 * max(len(u_r), 1) * problem.n_periods + 100
    steps = 0
    hit_cap = False

    while u_r and len(evaluated) < len(u_r):
        if steps >= max_steps:
            hit_cap = True
            break
        steps += 1
        pool = [u for u in u_r if u not in evaluated]
        u1 = max(pool, key=lambda u: (problem.ratio(w[u], u), -u))
        sharing = [u for u in u_r if u != u1 and u not in evaluated and u not in donors
                   and problem.los[u] & problem.los[u1]]
        if not sharing:
            evaluated.add(u1)
            continue
        u2 = min(sharing, key=lambda u: (problem.ratio(w[u], u), u))

        candidates = sorted(problem.los[u1] | problem.los[u2], key=lambda r: (problem.dist[u1, r], r))
        stop = False
        for r in candidates:
            if r not in problem.los[u1]:
                continue
            periods = [t for t in range(problem.n_periods) if x[u2, r, t] and not x[u1, :, t].any()]
            if not periods:
                continue
            t = periods[int(rng.integers(len(periods)))]
            x_new = x.copy()
            x_new[u1, r, t] = True
            x_new[u2, r, t] = False
            w_new = dict(w)
            w_new[u1] = problem.w_ue(x_new, alloc, u1)
            w_new[u2] = problem.w_ue(x_new, alloc, u2)
            f_new = problem.breakdown(w_new).f_obj
            if f_new <= f_old:
                x, w, f_old = x_new, w_new, f_new
                history.append(f_new)
            else:
                donors.add(u2)
            stop = True
            break
        if not stop:
            # no period to take over from u2 on any shared RIS
            donors.add(u2)

    obj = problem.breakdown(w)
    return PolicyResult(alloc.copy(), x, obj, history, steps, hit_cap, time.perf_counter() - t0)


def dario_optimize(problem: AssignmentProblem, rng: RandomStream) -> PolicyResult:
    t0 = time.perf_counter()
    stage1 = alg1_rb_allocation(problem)
    stage2 = alg2_ris_scheduling(problem, stage1.alloc, rng.child("alg2-init"))
    stage2.alg1_history = stage1.history
    stage2.steps += stage1.steps
    stage2.hit_cap = stage1.hit_cap or stage2.hit_cap
    stage2.elapsed_s = time.perf_counter() - t0
    return stage2


# ---- baselines --------------------------------------------------------------

def baseline_no_ris(problem: AssignmentProblem, alloc=None) -> PolicyResult:
    t0 = time.perf_counter()
    alloc = alg1_rb_allocation(problem).alloc if alloc is None else np.asarray(alloc)
    x = problem.zero_x()
    return PolicyResult(alloc, x, problem.objective(x, alloc), elapsed_s=time.perf_counter() - t0)


def baseline_snr_static(problem: AssignmentProblem, alloc=None) -> PolicyResult:
    """Greedy one-to-one matching on descending average cascaded SNR."""
    t0 = time.perf_counter()
    alloc = alg1_rb_allocation(problem).alloc if alloc is None else np.asarray(alloc)
    pairs = []
    for u in range(problem.n_ue):
        for r in problem.los[u]:
            pairs.append((-problem.s2_model(u, r, int(alloc[u])).mean_snr, u, r))
    pairs.sort()
    x = problem.zero_x()
    used_u: set[int] = set()
    used_r: set[int] = set()
    for _, u, r in pairs:
        if u in used_u or r in used_r:
            continue
        x[u, r, :] = True
        used_u.add(u)
        used_r.add(r)
    return PolicyResult(alloc, x, problem.objective(x, alloc), elapsed_s=time.perf_counter() - t0)


def baseline_delay_aware_static(problem: AssignmentProblem, rng: RandomStream,
                                alloc=None) -> PolicyResult:
    """RIS scheduling with one assignment held over every period."""
    t0 = time.perf_counter()
    alloc = alg1_rb_allocation(problem).alloc if alloc is None else np.asarray(alloc)
    # one period with weight 1 is the same mix as one RIS held in every period
    res = alg2_ris_scheduling(problem.with_periods(1), alloc, rng.child("alg2-init"))
    x = np.repeat(res.x, problem.n_periods, axis=2)
    return PolicyResult(alloc, x, problem.objective(x, alloc), res.history, res.steps,
                        res.hit_cap, time.perf_counter() - t0)


# ---- brute force ------------------------------------------------------------

def period_matchings(problem: AssignmentProblem) -> list[tuple[int, ...]]:
    """All valid single-period assignments as a UE index (or -1) per RIS."""
    options = [[-1] + problem.ues_of_ris(r) for r in range(problem.n_ris)]
    out = []
    for combo in itertools.product(*options):
        chosen = [u for u in combo if u >= 0]
        if len(chosen) == len(set(chosen)):
            out.append(tuple(combo))
    return out


def compositions(total: int, parts: int):
    """Integer compositions of ``total`` into ``parts`` positive parts, lexicographic."""
    for cuts in itertools.combinations(range(1, total), parts - 1):
        bounds = (0,) + cuts + (total,)
        yield tuple(bounds[i + 1] - bounds[i] for i in range(parts))


def brute_force_count(problem: AssignmentProblem) -> int:
    n_c = len(period_matchings(problem))
    return n_c ** problem.n_periods * math.comb(problem.n_cell_rb - 1, problem.n_ue - 1)


def brute_force(problem: AssignmentProblem, max_combinations: int = 5_000_000) -> PolicyResult:
    """Exhaustive search over RB compositions and per-period assignments.

    The objective depends on the periods only through how often each RIS
    serves each UE, so period tuples are enumerated as sorted multisets. The
    first optimum in lexicographic (allocation, period tuple) order wins.
    """
    t0 = time.perf_counter()
    if problem.n_cell_rb < problem.n_ue:
        raise InfeasibleStartError(f"{problem.n_cell_rb} RBs cannot cover {problem.n_ue} UEs")
    count = brute_force_count(problem)
    if count > max_combinations:
        raise GuardExceededError(count, max_combinations)

    matchings = period_matchings(problem)
    multisets = list(itertools.combinations_with_replacement(range(len(matchings)), problem.n_periods))
    n_ue, T = problem.n_ue, problem.n_periods

    # per UE: mix id for every multiset
    mix_ids = np.empty((n_ue, len(multisets)), dtype=np.int64)
    mix_keys: list[list[tuple]] = [[] for _ in range(n_ue)]
    for u in range(n_ue):
        index: dict[tuple, int] = {}
        for k, ms in enumerate(multisets):
            counts: dict[int, int] = {}
            for m in ms:
                for r, holder in enumerate(matchings[m]):
                    if holder == u:
                        counts[r] = counts.get(r, 0) + 1
            key = tuple((r, c / T) for r, c in sorted(counts.items()))
            if key not in index:
                index[key] = len(mix_keys[u])
                mix_keys[u].append(key)
            mix_ids[u, k] = index[key]

    max_rb = problem.n_cell_rb - n_ue + 1
    los_class = np.array([bool(problem.los[u]) for u in range(n_ue)])
    # ratio tables [u][mix, n_rb]
    tables = []
    for u in range(n_ue):
        tab = np.empty((len(mix_keys[u]), max_rb + 1))
        tab[:, 0] = np.inf
        for j, key in enumerate(mix_keys[u]):
            for n in range(1, max_rb + 1):
                tab[j, n] = problem.ratio(problem.w_for_mix(u, n, key), u)
        tables.append(tab)

    best = (math.inf, None, None)
    for alloc in compositions(problem.n_cell_rb, n_ue):
        r = np.stack([tables[u][mix_ids[u], alloc[u]] for u in range(n_ue)])
        a = r[~los_class].max(axis=0) if (~los_class).any() else np.zeros(len(multisets))
        b = r[los_class].max(axis=0) if los_class.any() else np.zeros(len(multisets))
        f = a + b
        k = int(np.argmin(f))
        if f[k] < best[0]:
            best = (float(f[k]), alloc, k)

    _, alloc, k = best
    x = problem.zero_x()
    for t, m in enumerate(multisets[k]):
        for rr, holder in enumerate(matchings[m]):
            if holder >= 0:
                x[holder, rr, t] = True
    alloc = np.array(alloc, dtype=np.int64)
    return PolicyResult(alloc, x, problem.objective(x, alloc), elapsed_s=time.perf_counter() - t0)
