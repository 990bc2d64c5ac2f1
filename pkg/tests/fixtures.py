"""Shared problem builders for assignment and acceptance tests."""

import warnings

import numpy as np

from risdelay.assignment import AssignmentProblem, UeContext, UeRequirements
from risdelay.channel import ChannelConfig, PathLossRangeWarning, RisGeometry, SnrModel, db_to_linear
from risdelay.mathx import RandomStream
from risdelay.snc import ArrivalEnvelope
from risdelay.traffic import ObservationWindow, TrafficModel, generate_poisson_trace

T_SLOT = 0.25e-3
BS = (125.0, 125.0, 25.0)
SIX_UE_LOS = [{0}, {0}, {1}, {1}, {0, 1}, {0, 1}]


def envelope(rate, rng, n=4000):
    tr = generate_poisson_trace(TrafficModel(float(rate)), n, T_SLOT, rng)
    return ArrivalEnvelope(ObservationWindow(tr.bits_per_tti, t_obs=n))


class SyntheticProblem(AssignmentProblem):
    """Problem whose SNR statistics are given directly in dB (totals over the UE's RBs)."""

    def __init__(self, *args, s1_db, s2_db, noncentrality=500.0, **kwargs):
        super().__init__(*args, **kwargs)
        self.s1_db = np.asarray(s1_db, dtype=float)
        self.s2_db = np.asarray(s2_db, dtype=float)
        self.lam = noncentrality

    def s1_model(self, u, n_rb):
        return SnrModel("S1", db_to_linear(self.s1_db[u]) / n_rb)

    def s2_model(self, u, r, n_rb):
        return SnrModel("S2", db_to_linear(self.s2_db[u, r]) / n_rb, self.lam)


def six_ue_positions(rng):
    """Positions consistent with the 2/2/2 LOS topology around two RIS."""
    pts = []
    for _ in range(2):
        pts.append((60.0 - rng.uniform(10, 35), 50.0 + rng.uniform(-20, 20), 1.8))
    for _ in range(2):
        pts.append((140.0 + rng.uniform(10, 35), 50.0 + rng.uniform(-20, 20), 1.8))
    for _ in range(2):
        pts.append((100.0 + rng.uniform(-5, 5), 50.0 + rng.uniform(-20, 20), 1.8))
    return pts


def six_ue_problem(seed, n_periods, n_rb, rate_range=(450.0, 550.0)):
    """Physical 6-UE/2-RIS fixture with the channel model as configured."""
    rng = RandomStream(seed).child("fixture")
    ris = [RisGeometry(position=(60.0, 50.0, 3.0)), RisGeometry(position=(140.0, 50.0, 3.0))]
    ues = []
    for u, pos in enumerate(six_ue_positions(rng)):
        req = UeRequirements(float(rng.choice([0.005, 0.01, 0.015, 0.02, 0.025, 0.05, 0.1])),
                             float(rng.choice([1e-3, 1e-4, 1e-5])))
        ues.append(UeContext(pos, req, envelope(rng.uniform(*rate_range), rng.child(u))))
    return AssignmentProblem(ues, ris, BS, ChannelConfig(), n_rb, n_periods, los=SIX_UE_LOS)


def six_ue_synthetic(seed, n_periods, n_rb):
    """6-UE/2-RIS fixture where each cascaded link beats the UE's direct link by 3-12 dB."""
    rng = RandomStream(seed).child("synthetic")
    ris = [RisGeometry(position=(60.0, 50.0, 3.0)), RisGeometry(position=(140.0, 50.0, 3.0))]
    ues = []
    for u, pos in enumerate(six_ue_positions(rng)):
        ues.append(UeContext(pos, UeRequirements(0.01, 1e-3), envelope(rng.uniform(100, 300), rng.child(u))))
    s1 = rng.uniform(0, 10, 6)
    # S1 mean carries the 8-antenna factor, S2 mean carries (8 + lambda)
    s2 = s1[:, None] + 10 * np.log10(8 / 508) + rng.uniform(3, 12, (6, 2))
    return SyntheticProblem(ues, ris, BS, ChannelConfig(), n_rb, n_periods, los=SIX_UE_LOS,
                            s1_db=s1, s2_db=s2)


def replay_backlog(a, c):
    """Per-TTI Lindley recursion written as a plain loop."""
    q = np.zeros(len(a), dtype=np.int64)
    prev_q, prev_a = 0, 0
    for j in range(len(a)):
        q[j] = max(0, prev_q + prev_a - int(c[j]))
        prev_q, prev_a = q[j], int(a[j])
    return q


def replay_departures(pkt_tti, pkt_bits, c, horizon):
    """Bit-level FIFO: a packet leaves in the TTI that serves its last bit."""
    dep = np.full(len(pkt_tti), -1)
    head, left = 0, int(pkt_bits[0]) if len(pkt_bits) else 0
    for j in range(horizon):
        budget = int(c[j])
        while head < len(pkt_tti) and pkt_tti[head] < j and budget > 0:
            used = min(budget, left)
            budget -= used
            left -= used
            if left == 0:
                dep[head] = j
                head += 1
                left = int(pkt_bits[head]) if head < len(pkt_bits) else 0
            else:
                break
    return dep


def quiet():
    warnings.simplefilter("ignore", PathLossRangeWarning)
