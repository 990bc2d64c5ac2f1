"""Link budgets, fading statistics and MCS selection probabilities.

Two uplink situations are modelled per UE:

* S1, direct UE-BS link with Rayleigh fading and MRC over ``n_ant``
  antennas. The instantaneous SNR is Gamma(n_ant, avg_snr).
* S2, UE-RIS-BS cascade with Rician hops. The instantaneous SNR is
  ``avg_snr * |z|^2`` where ``2|z|^2`` is noncentral chi-square with
  ``2 n_ant`` degrees of freedom and noncentrality ``2 * lam`` (unit
  scattered power per antenna, total LOS power ``lam``).

Probability vectors have length ``N_c + 1``; index 0 is the outage bucket
below the lowest MCS threshold.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .mathx import RandomStream, bessel_i, marcum_q, regularized_lower_gamma, sinc

SPEED_OF_LIGHT = 299_792_458.0
UMA_MIN_DISTANCE_M = 10.0
UMA_MAX_DISTANCE_M = 5000.0

# 3GPP TS 38.214 Table 5.2.2.1-3 (4-bit CQI, up to 256QAM), bit/s/Hz
CQI_TABLE_3_EFFICIENCY = (
    0.1523, 0.3770, 0.8770, 1.4766, 1.9141, 2.4063, 2.7305, 3.3223,
    3.9023, 4.5234, 5.1152, 5.5547, 6.2266, 6.9141, 7.4063,
)


class McsTableError(ValueError):
    pass


class PathLossRangeWarning(UserWarning):
    """Distance below the UMa validity range; clamped to the minimum."""


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def linear_to_db(lin):
    return 10.0 * np.log10(lin)


@dataclass(frozen=True)
class McsEntry:
    index: int
    efficiency: float
    snr_min: float
    snr_max: float


@dataclass(frozen=True)
class McsTable:
    """Ordered MCS entries partitioning the linear SNR axis."""

    entries: tuple[McsEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise McsTableError("MCS table is empty")
        eta = [e.efficiency for e in self.entries]
        if any(b <= a for a, b in zip(eta, eta[1:])):
            raise McsTableError("spectral efficiency must be strictly increasing")
        for cur, nxt in zip(self.entries, self.entries[1:]):
            if cur.snr_max != nxt.snr_min:
                raise McsTableError(f"SNR gap between MCS {cur.index} and {nxt.index}")
        if not math.isinf(self.entries[-1].snr_max):
            raise McsTableError("last MCS must extend to +inf")
        if any(e.snr_min >= e.snr_max for e in self.entries):
            raise McsTableError("empty SNR interval")

    @classmethod
    def from_thresholds(cls, efficiency: Sequence[float], snr_min: Sequence[float]) -> "McsTable":
        snr_max = list(snr_min[1:]) + [math.inf]
        return cls(tuple(
            McsEntry(i + 1, float(e), float(lo), float(hi))
            for i, (e, lo, hi) in enumerate(zip(efficiency, snr_min, snr_max))
        ))

    @classmethod
    def default(cls) -> "McsTable":
        eta = CQI_TABLE_3_EFFICIENCY
        return cls.from_thresholds(eta, [2.0 ** (e / 0.6) - 1.0 for e in eta])

    @classmethod
    def from_csv(cls, path) -> "McsTable":
        """Load ``index,eta,snr_min_db`` rows; ``snr_max`` follows from the next row."""
        rows = []
        with open(Path(path), newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh), start=1):
                if not row or row[0].strip().startswith("#"):
                    continue
                if row[0].strip() == "index":
                    continue
                try:
                    rows.append((int(row[0]), float(row[1]), float(row[2])))
                except (ValueError, IndexError) as exc:
                    raise McsTableError(f"{path}:{lineno}: {exc}") from exc
        if not rows:
            raise McsTableError(f"{path}: no MCS rows")
        rows.sort()
        first = rows[0][0]
        if [r[0] for r in rows] != list(range(first, first + len(rows))):
            raise McsTableError(f"{path}: indices must be contiguous")
        table = cls.from_thresholds([r[1] for r in rows], [10 ** (r[2] / 10) for r in rows])
        return cls(tuple(McsEntry(r[0], e.efficiency, e.snr_min, e.snr_max)
                         for r, e in zip(rows, table.entries)))

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "eta", "snr_min_db"])
            for e in self.entries:
                w.writerow([e.index, repr(e.efficiency), repr(float(linear_to_db(e.snr_min)))])

    @property
    def n_c(self) -> int:
        return len(self.entries)

    @property
    def efficiencies(self) -> np.ndarray:
        """Spectral efficiency per bucket, outage (0.0) first."""
        return np.concatenate(([0.0], [e.efficiency for e in self.entries]))

    @property
    def edges(self) -> np.ndarray:
        """Bucket edges [0, g_1min, g_2min, ..., inf] in linear SNR."""
        return np.concatenate(([0.0], [e.snr_min for e in self.entries], [math.inf]))

    def bucket_of(self, snr) -> np.ndarray:
        """Bucket index (0 = outage) for each linear SNR sample."""
        thresholds = np.array([e.snr_min for e in self.entries])
        return np.searchsorted(thresholds, snr, side="right")


@dataclass(frozen=True)
class LinkBudget:
    tx_power_dbm: float = 24.0
    noise_psd_dbm_hz: float = -174.0
    carrier_freq_hz: float = 4.7e9
    n_ant: int = 8

    def __post_init__(self):
        if self.n_ant < 1:
            raise ValueError("n_ant must be >= 1")
        if self.carrier_freq_hz <= 0:
            raise ValueError("carrier frequency must be positive")

    @property
    def tx_power_mw(self) -> float:
        return float(db_to_linear(self.tx_power_dbm))

    @property
    def noise_psd_mw_hz(self) -> float:
        return float(db_to_linear(self.noise_psd_dbm_hz))

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq_hz


@dataclass(frozen=True)
class RisGeometry:
    n_elements: int = 100
    element_spacing_m: float = SPEED_OF_LIGHT / 4.7e9 / 2
    phase_bits: int = 3
    reflection_angle_rad: float = math.radians(30.0)
    rician_k_ue_ris_db: float = 3.0
    rician_k_ris_bs_db: float = 6.0
    position: tuple[float, float, float] = (0.0, 0.0, 3.0)

    def __post_init__(self):
        if self.phase_bits < 1 or self.n_elements < 1 or self.element_spacing_m <= 0:
            raise ValueError("invalid RIS geometry")


@dataclass(frozen=True)
class SnrModel:
    scenario: str
    avg_snr: float
    noncentrality: float = 0.0
    dof_pairs: int = 8

    def __post_init__(self):
        if self.scenario not in ("S1", "S2"):
            raise ValueError(f"unknown scenario {self.scenario!r}")
        if not self.avg_snr > 0:
            raise ValueError("avg_snr must be positive")
        if self.scenario == "S1" and self.noncentrality != 0:
            raise ValueError("S1 has no LOS component")

    @property
    def mean_snr(self) -> float:
        return self.avg_snr * (self.dof_pairs + self.noncentrality)


def uma_path_loss_db(distance_2d_m: float, h_bs_m: float, h_ue_m: float,
                     carrier_freq_hz: float, los: bool, strict: bool = False) -> float:
    """3GPP TR 38.901 UMa path loss in dB (no shadow fading).

    Distances under 10 m are clamped with a :class:`PathLossRangeWarning`
    unless ``strict`` is set, in which case a ``ValueError`` is raised.
    """
    if h_bs_m <= 0 or h_ue_m <= 0:
        raise ValueError("antenna heights must be positive")
    if not distance_2d_m > 0:
        if strict:
            raise ValueError("distance must be positive")
    if distance_2d_m < UMA_MIN_DISTANCE_M:
        if strict:
            raise ValueError(f"UMa model invalid below {UMA_MIN_DISTANCE_M} m")
        warnings.warn(f"UMa distance {distance_2d_m:.2f} m clamped to {UMA_MIN_DISTANCE_M} m",
                      PathLossRangeWarning, stacklevel=2)
        distance_2d_m = UMA_MIN_DISTANCE_M

    fc_ghz = carrier_freq_hz / 1e9
    d3 = math.hypot(distance_2d_m, h_bs_m - h_ue_m)
    # effective environment height of 1 m (h_UT < 13 m)
    d_bp = 4.0 * (h_bs_m - 1.0) * (h_ue_m - 1.0) * carrier_freq_hz / SPEED_OF_LIGHT
    if distance_2d_m <= d_bp or d_bp <= 0:
        pl_los = 28.0 + 22.0 * math.log10(d3) + 20.0 * math.log10(fc_ghz)
    else:
        pl_los = (28.0 + 40.0 * math.log10(d3) + 20.0 * math.log10(fc_ghz)
                  - 9.0 * math.log10(d_bp ** 2 + (h_bs_m - h_ue_m) ** 2))
    if los:
        return pl_los
    pl_nlos = (13.54 + 39.08 * math.log10(d3) + 20.0 * math.log10(fc_ghz)
               - 0.6 * (h_ue_m - 1.5))
    return max(pl_los, pl_nlos)


def uma_path_loss(distance_2d_m: float, h_bs_m: float, h_ue_m: float,
                  carrier_freq_hz: float, los: bool, strict: bool = False) -> float:
    """UMa path loss as a linear power gain in (0, 1]."""
    pl = uma_path_loss_db(distance_2d_m, h_bs_m, h_ue_m, carrier_freq_hz, los, strict)
    return min(1.0, 10.0 ** (-pl / 10.0))


def _dist_2d(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def direct_path_loss(ue_pos, bs_pos, budget: LinkBudget, los: bool = False) -> float:
    return uma_path_loss(_dist_2d(ue_pos, bs_pos), bs_pos[2], ue_pos[2],
                         budget.carrier_freq_hz, los)


def cascaded_path_loss(ue_pos, ris: RisGeometry, bs_pos, budget: LinkBudget) -> float:
    """UE-RIS-BS gain as the product of two UMa-LOS segment gains."""
    rp = ris.position
    g1 = uma_path_loss(_dist_2d(ue_pos, rp), rp[2], ue_pos[2], budget.carrier_freq_hz, True)
    g2 = uma_path_loss(_dist_2d(rp, bs_pos), bs_pos[2], rp[2], budget.carrier_freq_hz, True)
    return g1 * g2


def avg_snr_s1(budget: LinkBudget, path_gain: float, noise_bandwidth_hz: float,
               tx_power_mw: float | None = None) -> float:
    """Average SNR P_tx * gain / (N_0 * bandwidth), linear units.

    ``tx_power_mw`` overrides the budget's full power (used for per-RB
    power splitting).
    """
    if not 0 < path_gain <= 1:
        raise ValueError("path_gain must lie in (0, 1]")
    if noise_bandwidth_hz <= 0:
        raise ValueError("noise bandwidth must be positive")
    p = budget.tx_power_mw if tx_power_mw is None else tx_power_mw
    return p * path_gain / (budget.noise_psd_mw_hz * noise_bandwidth_hz)


def rb_avg_snr(budget: LinkBudget, path_gain: float, n_rb: int, n_sc: int = 12,
               subcarrier_spacing_hz: float = 60e3, noise_bandwidth_mode: str = "per_rb") -> float:
    """Average per-RB SNR with the UE power split equally over ``n_rb`` RBs."""
    if n_rb < 1:
        raise ValueError("n_rb must be >= 1")
    if noise_bandwidth_mode == "per_rb":
        bw = n_sc * subcarrier_spacing_hz
    elif noise_bandwidth_mode == "per_hz":
        bw = 1.0
    else:
        raise ValueError(f"unknown noise_bandwidth_mode {noise_bandwidth_mode!r}")
    return avg_snr_s1(budget, path_gain, bw, tx_power_mw=budget.tx_power_mw / n_rb)


def _bucketize(cdf: np.ndarray) -> np.ndarray:
    p = np.diff(cdf)
    return np.clip(p, 0.0, None)


def mcs_probs_s1(model: SnrModel, mcs: McsTable) -> np.ndarray:
    if model.scenario != "S1":
        raise ValueError("mcs_probs_s1 needs an S1 model")
    edges = mcs.edges
    cdf = np.empty_like(edges)
    cdf[-1] = 1.0
    cdf[:-1] = regularized_lower_gamma(model.dof_pairs, edges[:-1] / model.avg_snr)
    return _bucketize(cdf)


def mcs_probs_s2(model: SnrModel, mcs: McsTable) -> np.ndarray:
    if model.scenario != "S2":
        raise ValueError("mcs_probs_s2 needs an S2 model")
    edges = mcs.edges
    a = math.sqrt(2.0 * model.noncentrality)
    tail = marcum_q(model.dof_pairs, a, np.sqrt(2.0 * edges / model.avg_snr))
    tail = np.asarray(tail)
    tail[0], tail[-1] = 1.0, 0.0
    return _bucketize(1.0 - tail)


def mcs_probs(model: SnrModel, mcs: McsTable) -> np.ndarray:
    return mcs_probs_s1(model, mcs) if model.scenario == "S1" else mcs_probs_s2(model, mcs)


def quantization_gain(phase_bits: int) -> float:
    """Mean amplitude of exp(j*e) for e uniform over one quantization step."""
    return float(sinc(math.pi / 2.0 ** phase_bits))


def subcarrier_offsets(n_rb: int, subcarrier_spacing_hz: float, n_sc: int = 12) -> np.ndarray:
    m = np.arange(1, n_sc * n_rb + 1)
    return (m - (n_sc * n_rb + 1) / 2.0) * subcarrier_spacing_hz


def frequency_gain(ris: RisGeometry, n_rb: int, subcarrier_spacing_hz: float,
                   carrier_freq_hz: float, n_sc: int = 12) -> float:
    """Average Dirichlet-kernel magnitude over the UE's subcarriers."""
    del carrier_freq_hz  # the deviation depends only on f_m - f_c
    offsets = subcarrier_offsets(n_rb, subcarrier_spacing_hz, n_sc)
    vs = (2.0 * math.pi * offsets * ris.element_spacing_m
          * math.sin(ris.reflection_angle_rad) / SPEED_OF_LIGHT)
    L = ris.n_elements
    den = L * np.sin(vs / 2.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(np.abs(den) < 1e-300, 1.0, np.sin(L * vs / 2.0) / den)
    return float(np.mean(np.abs(ratio)))


def g_loss(ris: RisGeometry, n_rb: int, subcarrier_spacing_hz: float,
           carrier_freq_hz: float, n_sc: int = 12) -> float:
    if n_rb < 1:
        raise ValueError("n_rb must be >= 1")
    return quantization_gain(ris.phase_bits) * frequency_gain(
        ris, n_rb, subcarrier_spacing_hz, carrier_freq_hz, n_sc)


def noncentrality(ris: RisGeometry, g_loss: float) -> float:
    if not 0 < g_loss <= 1:
        raise ValueError("g_loss must lie in (0, 1]")
    k1 = float(db_to_linear(ris.rician_k_ue_ris_db))
    k2 = float(db_to_linear(ris.rician_k_ris_bs_db))
    return noncentrality_linear(ris.n_elements, k1, k2, g_loss)


def noncentrality_linear(n_elements: int, k_ue_ris: float, k_ris_bs: float, g_loss: float) -> float:
    return n_elements ** 2 * k_ue_ris / (k_ue_ris + 1) * k_ris_bs / (k_ris_bs + 1) * g_loss ** 2


def sample_snr(model: SnrModel, rng: RandomStream, size=None):
    """Draw instantaneous linear SNR samples for ``model``."""
    if model.scenario == "S1":
        return model.avg_snr * rng.gamma(model.dof_pairs, 1.0, size)
    if model.noncentrality == 0:
        return model.avg_snr * rng.gamma(model.dof_pairs, 1.0, size)
    x = rng.noncentral_chisquare(2 * model.dof_pairs, 2.0 * model.noncentrality, size)
    return model.avg_snr * 0.5 * x


def snr_pdf_s2(gamma, model: SnrModel):
    """Density of the S2 SNR, written through the Bessel-I form."""
    g = float(gamma)
    if g <= 0:
        return 0.0
    lam, gbar, n = model.noncentrality, model.avg_snr, model.dof_pairs
    y = g / gbar
    # density of y = |z|^2 with 2y ~ ncx2(2n, 2 lam)
    arg = 2.0 * math.sqrt(lam * y)
    log_pref = -(y + lam) + 0.5 * (n - 1) * math.log(y / lam)
    return math.exp(log_pref) * bessel_i(n - 1, arg) / gbar


@dataclass
class ChannelConfig:
    """Knobs shared by every per-UE link computation."""

    budget: LinkBudget = field(default_factory=LinkBudget)
    mcs: McsTable = field(default_factory=McsTable.default)
    n_sc: int = 12
    subcarrier_spacing_hz: float = 60e3
    noise_bandwidth_mode: str = "per_rb"
    s1_los: bool = False

    def __post_init__(self):
        if self.noise_bandwidth_mode not in ("per_rb", "per_hz"):
            raise ValueError(f"unknown noise_bandwidth_mode {self.noise_bandwidth_mode!r}")
        if self.n_sc < 1 or not self.subcarrier_spacing_hz > 0:
            raise ValueError("n_sc and subcarrier_spacing_hz must be positive")

    def s1_model(self, ue_pos, bs_pos, n_rb: int) -> SnrModel:
        gain = direct_path_loss(ue_pos, bs_pos, self.budget, los=self.s1_los)
        snr = rb_avg_snr(self.budget, gain, n_rb, self.n_sc, self.subcarrier_spacing_hz,
                         self.noise_bandwidth_mode)
        return SnrModel("S1", snr, 0.0, self.budget.n_ant)

    def s2_model(self, ue_pos, ris: RisGeometry, bs_pos, n_rb: int) -> SnrModel:
        gain = cascaded_path_loss(ue_pos, ris, bs_pos, self.budget)
        snr = rb_avg_snr(self.budget, gain, n_rb, self.n_sc, self.subcarrier_spacing_hz,
                         self.noise_bandwidth_mode)
        gl = g_loss(ris, n_rb, self.subcarrier_spacing_hz, self.budget.carrier_freq_hz, self.n_sc)
        return SnrModel("S2", snr, noncentrality(ris, gl), self.budget.n_ant)
