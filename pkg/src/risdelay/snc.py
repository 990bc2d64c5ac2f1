"""Service-envelope construction and the (θ, δ) delay-bound solver.

Rates are in bit/s, θ in 1/bit and delays in seconds. All MGF work is
done in the log domain so large allocations never underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.special import logsumexp

from .mathx import minimize_1d_batch
from .traffic import ObservationWindow

# exp() underflows to zero below this
MIN_EXPONENT = -745.0


class ServiceUnderflowError(ArithmeticError):
    """M_C(-θ) is below the smallest positive double."""


@dataclass(frozen=True)
class ServiceMix:
    omega_s1: float
    omega_s2: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        vals = [self.omega_s1, *self.omega_s2.values()]
        if any(v < 0 or v > 1 for v in vals):
            raise ValueError("mixture weights must lie in [0, 1]")
        if abs(sum(vals) - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {sum(vals)!r}, not 1")

    @classmethod
    def from_counts(cls, counts: Mapping[int, int], n_periods: int) -> "ServiceMix":
        """Weights from the number of sub-periods each RIS serves the UE."""
        if n_periods < 1:
            raise ValueError("n_periods must be >= 1")
        s2 = {r: c / n_periods for r, c in sorted(counts.items()) if c}
        return cls(1.0 - math.fsum(s2.values()), s2)


@dataclass(frozen=True)
class ServiceSpec:
    mix: ServiceMix
    probs_s1: np.ndarray
    probs_s2: Mapping[int, np.ndarray]
    efficiencies: np.ndarray
    n_rb: int
    n_sc: int = 12
    subcarrier_spacing_hz: float = 60e3
    t_slot_s: float = 0.25e-3

    def __post_init__(self):
        missing = [r for r, w in self.mix.omega_s2.items() if w > 0 and r not in self.probs_s2]
        if missing:
            raise ValueError(f"no MCS probabilities for RIS {missing}")
        if self.n_rb < 0:
            raise ValueError("n_rb must be nonnegative")
        if len(self.probs_s1) != len(self.efficiencies):
            raise ValueError("probability vector and efficiency table differ in length")

    def mixed_probs(self) -> np.ndarray:
        p = self.mix.omega_s1 * np.asarray(self.probs_s1, dtype=float)
        for r, w in self.mix.omega_s2.items():
            if w > 0:
                p = p + w * np.asarray(self.probs_s2[r], dtype=float)
        return p

    @property
    def bits_per_eta(self) -> float:
        """Bits carried per TTI per RB for unit spectral efficiency."""
        return self.n_sc * self.subcarrier_spacing_hz * self.t_slot_s

    def mean_rate_bps(self) -> float:
        return self.n_rb * self.n_sc * self.subcarrier_spacing_hz * float(
            self.mixed_probs() @ self.efficiencies)


def _log_mgf_eta(p: np.ndarray, eta: np.ndarray, theta) -> np.ndarray:
    th = np.atleast_1d(np.asarray(theta, dtype=float))
    return logsumexp(-th[:, None] * eta[None, :], axis=1, b=p[None, :])


def service_mgf_eta(spec: ServiceSpec, theta: float) -> float:
    """M_η(-θ), the mixture MGF of the per-RB spectral efficiency."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    return float(np.exp(_log_mgf_eta(spec.mixed_probs(), spec.efficiencies, theta))[0])


def log_mgf_c(spec: ServiceSpec, theta):
    """ln M_C(-θ) = N_RB · ln M_η(-θ N_sc Δf t_slot)."""
    th = np.asarray(theta, dtype=float)
    if np.any(th <= 0):
        raise ValueError("theta must be positive")
    if spec.n_rb == 0:
        return np.zeros_like(th) if th.ndim else 0.0
    out = spec.n_rb * _log_mgf_eta(spec.mixed_probs(), spec.efficiencies, th * spec.bits_per_eta)
    return float(out[0]) if th.ndim == 0 else out.reshape(th.shape)


def mgf_c(spec: ServiceSpec, theta: float) -> float:
    lm = log_mgf_c(spec, theta)
    if lm < MIN_EXPONENT:
        raise ServiceUnderflowError(f"ln M_C = {lm:.1f} underflows")
    return math.exp(lm)


def service_rate_rho_s(spec: ServiceSpec, theta):
    """ρ_S(θ) = -ln M_C(-θ) / (θ t_slot) in bit/s."""
    th = np.asarray(theta, dtype=float)
    return -log_mgf_c(spec, th) / (th * spec.t_slot_s)


@dataclass(frozen=True)
class SearchConfig:
    n_theta: int = 200
    theta_min: float = 1e-8
    theta_max: float | None = None
    refine: bool = True
    refine_factor: int = 10
    delta_lo: float = 1e-12
    margin_rel: float = 1e-9
    delta_max: float = 1e3
    golden_iters: int = 60
    # "per_slot" scales θδ by t_slot in the ln(1 - e^{-θδ}) term; "literal" does not
    delta_exponent: str = "per_slot"

    def __post_init__(self):
        if self.delta_exponent not in ("per_slot", "literal"):
            raise ValueError(f"unknown delta_exponent {self.delta_exponent!r}")
        if self.n_theta < 1:
            raise ValueError("theta grid is empty")
        if not 0 < self.theta_min:
            raise ValueError("theta_min must be positive")
        if self.theta_max is not None and self.theta_max < self.theta_min:
            raise ValueError("theta_max below theta_min")


@dataclass(frozen=True)
class DelayBoundResult:
    w_seconds: float
    theta_star: float
    delta_star: float
    feasible: bool
    rho_a_at_star: float
    rho_s_at_star: float

    @classmethod
    def infeasible(cls) -> "DelayBoundResult":
        return cls(math.inf, math.nan, math.nan, False, math.nan, math.nan)


def bound_objective(theta, delta, rho_s, epsilon: float, delta_scale: float = 1.0):
    """W(θ, δ) in seconds with zero burst terms and ε split evenly.

    ``delta_scale`` converts δ (bit/s) into the per-slot drift that the
    union bound over slots sums, i.e. t_slot; pass 1 for the unscaled form.
    """
    theta = np.asarray(theta, dtype=float)
    delta = np.asarray(delta, dtype=float)
    # ln(1 - e^{-x}) via expm1 keeps precision for tiny x
    num = math.log(epsilon / 2.0) + np.log(-np.expm1(-theta * delta * delta_scale))
    return -2.0 * num / (theta * (np.asarray(rho_s) - delta))


def bound_objective_general(theta, delta, rho_s, epsilon, sigma_a=0.0, sigma_s=0.0,
                            delta_scale: float = 1.0):
    """Delay bound with explicit burst terms σ_A, σ_S (in bits).

    Reduces to :func:`bound_objective` at σ_A = σ_S = 0. Kept for testing
    the special case; the solver never sets nonzero σ.
    """
    b = sigma_a + sigma_s - (2.0 / theta) * (math.log(epsilon / 2.0)
                                             + math.log(-math.expm1(-theta * delta * delta_scale)))
    return b / (rho_s - delta)


class ArrivalEnvelope:
    """ρ_A(θ) for one observation window, with cached grid evaluations."""

    def __init__(self, window: ObservationWindow, t_slot: float | None = None):
        self.window = window
        self.t_slot = window.tti_duration_s if t_slot is None else t_slot
        self._cache: dict = {}

    @property
    def theta_max(self) -> float:
        return self.window.theta_max()

    def __call__(self, theta):
        th = np.asarray(theta, dtype=float)
        return self.window.log_mgf(th) / (th * self.t_slot)

    def on_grid(self, grid: np.ndarray) -> np.ndarray:
        key = (grid.size, float(grid[0]), float(grid[-1]))
        hit = self._cache.get(key)
        if hit is None:
            hit = self._cache[key] = self(grid)
        return hit


def theta_grid(search: SearchConfig, theta_cap: float) -> np.ndarray:
    hi = theta_cap if search.theta_max is None else min(search.theta_max, theta_cap)
    if not math.isfinite(hi):
        hi = 1.0
    hi = max(hi, search.theta_min)
    if search.n_theta == 1 or hi == search.theta_min:
        return np.array([search.theta_min])
    return np.geomspace(search.theta_min, hi, search.n_theta)


def _best_on_grid(thetas, rho_a, rho_s, epsilon, search: SearchConfig, scale: float):
    """Inner δ search for every feasible θ; returns (index, W, δ) or None."""
    gap = rho_s - rho_a
    ok = np.isfinite(rho_a) & (gap > 0) & (rho_s > 0)
    if not np.any(ok):
        return None
    th = thetas[ok]
    rs = rho_s[ok]
    g = gap[ok]
    finite_rs = np.isfinite(rs)
    hi = np.where(finite_rs, g / 2.0 - search.margin_rel * g, search.delta_max)
    lo = np.full_like(hi, search.delta_lo)
    usable = hi > lo
    if not np.any(usable):
        return None
    th, rs, lo, hi = th[usable], rs[usable], lo[usable], hi[usable]

    def f(log_delta):
        with np.errstate(divide="ignore", invalid="ignore"):
            w = bound_objective(th, np.exp(log_delta), rs, epsilon, scale)
        return np.where(np.isnan(w) | (w < 0), np.inf, w)

    x, fx = minimize_1d_batch(f, np.log(lo), np.log(hi), search.golden_iters)
    # the golden bracket never probes the upper end; it is often the optimum
    f_hi = f(np.log(hi))
    use_hi = f_hi < fx
    x = np.where(use_hi, np.log(hi), x)
    fx = np.where(use_hi, f_hi, fx)
    k = int(np.argmin(fx))  # first minimum = lowest θ on ties
    idx = np.flatnonzero(ok)[np.flatnonzero(usable)[k]]
    return idx, float(fx[k]), float(np.exp(x[k]))


def delay_bound(rho_a, spec: ServiceSpec, epsilon: float, t_slot: float | None = None,
                search: SearchConfig | None = None) -> DelayBoundResult:
    """Minimize the delay bound over (θ, δ).

    ``rho_a`` is an :class:`ArrivalEnvelope`, an :class:`ObservationWindow`
    or any vectorized callable θ -> bit/s. For plain callables the grid top
    comes from ``search.theta_max`` (default 1).
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    search = search or SearchConfig()
    if isinstance(rho_a, ObservationWindow):
        rho_a = ArrivalEnvelope(rho_a, t_slot)
    if t_slot is not None and abs(t_slot - spec.t_slot_s) > 1e-15:
        raise ValueError("t_slot disagrees with the service spec")
    cap = getattr(rho_a, "theta_max", math.inf)

    scale = spec.t_slot_s if search.delta_exponent == "per_slot" else 1.0
    grid = theta_grid(search, cap)
    ra = rho_a.on_grid(grid) if isinstance(rho_a, ArrivalEnvelope) else np.asarray(rho_a(grid), float)
    rs = service_rate_rho_s(spec, grid)
    best = _best_on_grid(grid, ra, rs, epsilon, search, scale)
    if best is None:
        return DelayBoundResult.infeasible()
    k, w, d = best
    theta_star = grid[k]

    if search.refine and grid.size > 1:
        lo = grid[max(k - 1, 0)]
        hi = grid[min(k + 1, grid.size - 1)]
        fine = np.geomspace(lo, hi, 2 * search.refine_factor + 1)
        ra_f = np.asarray(rho_a(fine), float)
        rs_f = service_rate_rho_s(spec, fine)
        best_f = _best_on_grid(fine, ra_f, rs_f, epsilon, search, scale)
        if best_f is not None and best_f[1] < w:
            k_f, w, d = best_f
            theta_star = fine[k_f]

    rho_a_star = float(np.asarray(rho_a(np.array([theta_star])), float)[0])
    rho_s_star = float(service_rate_rho_s(spec, np.array([theta_star]))[0])
    w_exact = float(bound_objective(theta_star, d, rho_s_star, epsilon, scale))
    return DelayBoundResult(w_exact, float(theta_star), d, True, rho_a_star, rho_s_star)
