"""Arrival traces, observation windows and the empirical arrival envelope."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .mathx import RandomStream

log = logging.getLogger(__name__)

DEFAULT_T_OBS = 4000
DEFAULT_PACKET_SIZES_BYTES = (64, 128, 256, 512, 1024)
# exp() overflows a double just above this
MAX_EXPONENT = 709.0


class TraceFormatError(ValueError):
    pass


class MgfOverflowError(OverflowError):
    pass


@dataclass(frozen=True)
class ArrivalTrace:
    """Bits arriving in each TTI, optionally with the packets behind them.

    ``packet_tti`` and ``packet_bits`` list every packet in arrival order.
    When absent, each nonzero TTI batch is treated as one packet.
    """

    bits_per_tti: np.ndarray
    tti_duration_s: float
    packet_tti: np.ndarray | None = None
    packet_bits: np.ndarray | None = None

    def __post_init__(self):
        b = np.asarray(self.bits_per_tti, dtype=np.int64)
        object.__setattr__(self, "bits_per_tti", b)
        if b.ndim != 1 or b.size < 1:
            raise ValueError("trace needs at least one TTI")
        if np.any(b < 0):
            raise ValueError("bits must be nonnegative")
        if not self.tti_duration_s > 0:
            raise ValueError("tti_duration_s must be positive")
        if (self.packet_tti is None) != (self.packet_bits is None):
            raise ValueError("packet_tti and packet_bits go together")

    def __len__(self):
        return self.bits_per_tti.size

    def packets(self) -> tuple[np.ndarray, np.ndarray]:
        if self.packet_tti is not None:
            return np.asarray(self.packet_tti), np.asarray(self.packet_bits)
        idx = np.flatnonzero(self.bits_per_tti)
        return idx, self.bits_per_tti[idx]

    def mean_rate_bps(self) -> float:
        return float(self.bits_per_tti.mean()) / self.tti_duration_s

    def slice(self, start: int, stop: int) -> "ArrivalTrace":
        if self.packet_tti is None:
            return ArrivalTrace(self.bits_per_tti[start:stop], self.tti_duration_s)
        keep = (self.packet_tti >= start) & (self.packet_tti < stop)
        return ArrivalTrace(self.bits_per_tti[start:stop], self.tti_duration_s,
                            self.packet_tti[keep] - start, self.packet_bits[keep])


@dataclass(frozen=True)
class TrafficModel:
    mean_packet_rate: float
    packet_sizes_bytes: tuple[int, ...] = DEFAULT_PACKET_SIZES_BYTES
    packet_size_probs: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.mean_packet_rate < 0:
            raise ValueError("packet rate must be nonnegative")
        if not self.packet_sizes_bytes or min(self.packet_sizes_bytes) <= 0:
            raise ValueError("packet sizes must be positive")
        if self.packet_size_probs is not None:
            p = self.packet_size_probs
            if len(p) != len(self.packet_sizes_bytes) or min(p) < 0 or abs(sum(p) - 1) > 1e-9:
                raise ValueError("packet size probabilities must match sizes and sum to 1")

    @property
    def probs(self) -> np.ndarray:
        if self.packet_size_probs is None:
            n = len(self.packet_sizes_bytes)
            return np.full(n, 1.0 / n)
        return np.asarray(self.packet_size_probs, dtype=float)

    @property
    def mean_packet_bits(self) -> float:
        return 8.0 * float(np.dot(self.probs, self.packet_sizes_bytes))

    @property
    def mean_rate_bps(self) -> float:
        return self.mean_packet_rate * self.mean_packet_bits


def generate_poisson_trace(model: TrafficModel, n_tti: int, t_slot: float,
                           rng: RandomStream) -> ArrivalTrace:
    if n_tti < 1:
        raise ValueError("n_tti must be >= 1")
    counts = rng.poisson(model.mean_packet_rate * t_slot, n_tti)
    total = int(counts.sum())
    sizes = np.asarray(model.packet_sizes_bytes, dtype=np.int64)
    pkt_bits = 8 * rng.choice(sizes, size=total, p=model.probs)
    pkt_tti = np.repeat(np.arange(n_tti), counts)
    bits = np.bincount(pkt_tti, weights=pkt_bits, minlength=n_tti).astype(np.int64)
    return ArrivalTrace(bits, t_slot, pkt_tti, pkt_bits.astype(np.int64))


def load_trace(path, t_slot: float = 0.25e-3, lenient: bool = True) -> dict[int, ArrivalTrace]:
    """Read ``tti_index,ue_id,bits`` rows into one trace per UE.

    Missing TTIs are filled with zero bits when ``lenient``; otherwise they
    raise :class:`TraceFormatError`.
    """
    per_ue: dict[int, dict[int, int]] = {}
    with open(Path(path), newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or not "".join(row).strip():
                continue
            if lineno == 1 and row[0].strip() == "tti_index":
                continue
            try:
                tti, ue, bits = (int(c) for c in row)
            except ValueError as exc:
                raise TraceFormatError(f"{path}:{lineno}: cannot parse {row!r}") from exc
            if tti < 0 or bits < 0:
                raise TraceFormatError(f"{path}:{lineno}: negative value")
            slot = per_ue.setdefault(ue, {})
            slot[tti] = slot.get(tti, 0) + bits

    out = {}
    for ue, entries in sorted(per_ue.items()):
        n = max(entries) + 1
        if len(entries) != n and not lenient:
            missing = sorted(set(range(n)) - set(entries))
            raise TraceFormatError(f"UE {ue}: missing TTIs starting at {missing[0]}")
        bits = np.zeros(n, dtype=np.int64)
        for tti, b in entries.items():
            bits[tti] = b
        out[ue] = ArrivalTrace(bits, t_slot)
    return out


def write_trace(path, traces: dict[int, ArrivalTrace]) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tti_index", "ue_id", "bits"])
        for ue, tr in sorted(traces.items()):
            for i, b in enumerate(tr.bits_per_tti):
                w.writerow([i, ue, int(b)])


@dataclass
class ObservationWindow:
    """The most recent ``t_obs`` per-TTI arrival samples of one UE."""

    window: np.ndarray
    t_obs: int = DEFAULT_T_OBS
    tti_duration_s: float = 0.25e-3
    low_confidence: bool = field(default=False, init=False)
    _values: np.ndarray = field(init=False, repr=False)
    _counts: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.t_obs < 1:
            raise ValueError("t_obs must be >= 1")
        w = np.asarray(self.window, dtype=np.int64)[-self.t_obs:]
        if w.size == 0:
            raise ValueError("window is empty")
        if w.size < self.t_obs:
            self.low_confidence = True
            log.warning("observation window has %d of %d samples", w.size, self.t_obs)
        self.window = w
        # a window has few distinct values at low load; sum over those
        self._values, self._counts = np.unique(w, return_counts=True)

    @classmethod
    def from_trace(cls, trace: ArrivalTrace, t_obs: int = DEFAULT_T_OBS) -> "ObservationWindow":
        return cls(trace.bits_per_tti[-t_obs:], t_obs, trace.tti_duration_s)

    @property
    def max_bits(self) -> int:
        return int(self._values[-1])

    @property
    def mean_bits(self) -> float:
        return float(self.window.mean())

    def theta_max(self) -> float:
        """Largest θ for which the empirical MGF is finite."""
        return math.inf if self.max_bits == 0 else MAX_EXPONENT / self.max_bits

    def log_mgf(self, theta):
        """ln M_B(θ) via log-sum-exp; accepts scalar or array θ."""
        th = np.asarray(theta, dtype=float)
        if np.any(th <= 0):
            raise ValueError("theta must be positive")
        x = th.reshape(-1, 1) * self._values[None, :]
        n = self.window.size
        out = logsumexp(x, axis=1, b=self._counts[None, :]) - math.log(n)
        # log-sum-exp cancels badly when ln M is tiny; expm1/log1p keeps full precision
        small = x[:, -1] < 1.0
        if np.any(small):
            out[small] = np.log1p(np.expm1(x[small]) @ self._counts / n)
        out = np.maximum(out, 0.0)
        return float(out[0]) if th.ndim == 0 else out.reshape(th.shape)


def empirical_mgf(window: ObservationWindow, theta: float) -> float:
    if theta <= 0:
        raise ValueError("theta must be positive")
    if theta * window.max_bits > MAX_EXPONENT:
        raise MgfOverflowError(f"theta={theta:g} overflows the MGF (max bits {window.max_bits})")
    vals = np.exp(theta * window._values.astype(float))
    return max(1.0, float(np.dot(vals, window._counts)) / window.window.size)


def arrival_rate_rho_a(window: ObservationWindow, theta, t_slot: float | None = None):
    """ρ_A(θ) = ln M_B(θ) / (θ t_slot) in bit/s."""
    t = window.tti_duration_s if t_slot is None else t_slot
    th = np.asarray(theta, dtype=float)
    if np.any(th * window.max_bits > MAX_EXPONENT):
        raise MgfOverflowError("theta beyond the finite-MGF range")
    return window.log_mgf(theta) / (th * t)
