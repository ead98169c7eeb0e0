"""Processing architectures: distributed, centralized sequential, and target
handover with or without measurement exchange.

Handover protocol per step, for every ordered sensor pair (Tx, Rx):

1. every tracker predicts;
2. Tx selects candidate PTs (confident existence, enough predicted belief
   mass inside Rx's FoV, still inside Tx's own FoV) and sends each prior at
   most once while its label sits in the Tx ledger;
3. Rx appends unseen priors as fresh legacy PTs, recording the label mapping;
4. every tracker runs its local association/update pass;
5. (with-measurements variant) Tx forwards each candidate's most likely
   associated measurement, deduplicated per destination;
6. Rx runs a second update pass over the received measurements using the
   source sensor's models, with birth disabled;
7. prune, detect, and clean the ledgers.

All message exchange is in-process; :class:`CommStats` tallies what a real
deployment would have to put on the wire.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from numpy.random import SeedSequence, default_rng

from .model import FILTER, MotionModel, Sensor, detection_probs
from .tracker import (
    ParticleBelief,
    PotentialTarget,
    Tracker,
    TrackerParams,
)

ARCH_DISTRIBUTED = "distributed"
ARCH_CENTRALIZED = "centralized"
ARCH_HANDOVER_MEAS = "handover_meas"
ARCH_HANDOVER_NO_MEAS = "handover_no_meas"
ARCHITECTURES = (ARCH_DISTRIBUTED, ARCH_CENTRALIZED,
                 ARCH_HANDOVER_MEAS, ARCH_HANDOVER_NO_MEAS)

# Hysteresis margin (m) between handover eligibility (inside the FoV) and
# ledger cleanup (outside FoV + margin), so boundary jitter cannot retrigger
# a prior handover within a couple of steps.
LEDGER_FOV_MARGIN = 2.0

# Scalars on the wire: a prior is the particle set (state + weight each) plus
# the existence probability; a measurement is its (range, azimuth) pair.
MEAS_SCALARS = 2


def prior_scalars(n_particles: int) -> int:
    return 5 * n_particles + 1


@dataclass
class HandoverPriorMsg:
    src: int
    dst: int
    src_label: tuple
    existence: float
    belief: ParticleBelief
    time_index: int


@dataclass
class HandoverMeasMsg:
    src: int
    dst: int
    measurement: object


class TxLedger:
    """Per (source, dest) pair: labels whose prior has been handed over."""

    def __init__(self):
        self._sent: dict[tuple[int, int], set] = defaultdict(set)

    def contains(self, src: int, dst: int, label) -> bool:
        return label in self._sent[(src, dst)]

    def add(self, src: int, dst: int, label):
        self._sent[(src, dst)].add(label)

    def discard(self, src: int, dst: int, label):
        self._sent[(src, dst)].discard(label)

    def labels(self, src: int, dst: int) -> set:
        return set(self._sent[(src, dst)])


class RxLedger:
    """Per (dest, source) pair: injective map from source labels to the local
    labels assigned at ingestion."""

    def __init__(self):
        self._map: dict[tuple[int, int], dict] = defaultdict(dict)

    def contains(self, dst: int, src: int, src_label) -> bool:
        return src_label in self._map[(dst, src)]

    def add(self, dst: int, src: int, src_label, local_label):
        self._map[(dst, src)][src_label] = local_label

    def local_labels(self, dst: int, src: int) -> set:
        return set(self._map[(dst, src)].values())

    def items(self, dst: int, src: int):
        return list(self._map[(dst, src)].items())

    def remove_src(self, dst: int, src: int, src_label):
        self._map[(dst, src)].pop(src_label, None)


@dataclass
class CommStats:
    """Per-step message and payload accounting for one architecture run."""

    priors_sent: np.ndarray
    measurements_sent: np.ndarray
    payload_scalars: np.ndarray

    @classmethod
    def zeros(cls, horizon: int) -> "CommStats":
        return cls(np.zeros(horizon), np.zeros(horizon), np.zeros(horizon))


@dataclass
class RunResult:
    """Per-BS estimates per step plus communication accounting.

    ``per_bs`` maps sensor id to a horizon-length list of estimate lists; for
    the centralized architecture every sensor id maps to the same global list
    (also exposed as ``global_estimates``). Optional fields support protocol
    audits: post-prediction state digests and the prior/ledger event log.
    """

    per_bs: dict
    comm: CommStats
    global_estimates: list | None = None
    digests: dict = field(default_factory=dict)
    prior_log: list = field(default_factory=list)
    ledger_log: list = field(default_factory=list)


def _spawn_trackers(sensors, motion, params, seed):
    seq = seed if isinstance(seed, SeedSequence) else SeedSequence(seed)
    children = seq.spawn(len(sensors))
    return {s.id: Tracker(s.id, motion, params, default_rng(c))
            for s, c in zip(sensors, children)}


def run_distributed(scans, sensors, motion: MotionModel, params: TrackerParams,
                    seed, horizon: int, collect_digests: bool = False) -> RunResult:
    """Each BS runs its own filter on its own scans; nothing is exchanged."""
    sensors = sorted(sensors, key=lambda s: s.id)
    trackers = _spawn_trackers(sensors, motion, params, seed)
    per_bs = {s.id: [] for s in sensors}
    digests = {s.id: [] for s in sensors} if collect_digests else {}
    for k in range(horizon):
        for s in sensors:
            tr = trackers[s.id]
            tr.predict()
            if collect_digests:
                digests[s.id].append(tr.state_digest())
            tr.update(scans.get(k, s.id), s)
            per_bs[s.id].append(tr.prune_and_detect())
    return RunResult(per_bs, CommStats.zeros(horizon), digests=digests)


def run_centralized(scans, sensors, motion: MotionModel, params: TrackerParams,
                    seed, horizon: int) -> RunResult:
    """One fusion-center filter; per step, each sensor's scan is applied as a
    sequential update pass in ascending sensor-id order. PTs born from one
    sensor's measurements are eligible for association at later sensors in the
    same step."""
    sensors = sorted(sensors, key=lambda s: s.id)
    seq = seed if isinstance(seed, SeedSequence) else SeedSequence(seed)
    tracker = Tracker(sensors[0].id, motion, params, default_rng(seq.spawn(1)[0]))
    comm = CommStats.zeros(horizon)
    estimates = []
    for k in range(horizon):
        tracker.predict()
        for s in sensors:
            z = scans.get(k, s.id)
            tracker.update(z, s)
            comm.measurements_sent[k] += len(z)
            comm.payload_scalars[k] += MEAS_SCALARS * len(z)
        estimates.append(tracker.prune_and_detect())
    per_bs = {s.id: estimates for s in sensors}
    return RunResult(per_bs, comm, global_estimates=estimates)


def tx_select(tracker: Tracker, tx_sensor: Sensor, rx_sensor: Sensor,
              tx_ledger: TxLedger, rx_ledger: RxLedger, time_index: int):
    """Evaluate the handover criterion on predicted priors and emit first-time
    prior messages.

    The criterion is: predicted existence above the detection threshold AND
    predicted belief mass, weighted by Rx's detection probability, above the
    handover threshold. Two protocol guards keep the exchange loop-free: a PT
    whose predicted mean already left Tx's own FoV is not eligible, and a PT
    that was itself received from Rx is never offered back (its measurements
    still are, in the with-measurements variant).

    Returns (messages, labels meeting the criterion); the Tx ledger is updated
    in place and the Tx tracker is never mutated.
    """
    p = tracker.params
    msgs, hc_labels = [], []
    received_from_rx = rx_ledger.local_labels(tx_sensor.id, rx_sensor.id)
    for pt in tracker.pts:
        if not pt.existence > p.p_th:
            continue
        mean = pt.belief.position_mean()
        if math.hypot(*(mean - tx_sensor.pos)) > tx_sensor.fov_radius:
            continue
        mass = float(pt.belief.weights @ detection_probs(
            pt.belief.particles, rx_sensor, FILTER))
        if not mass > p.gamma:
            continue
        hc_labels.append(pt.label)
        if pt.label in received_from_rx:
            continue
        if tx_ledger.contains(tx_sensor.id, rx_sensor.id, pt.label):
            continue
        msgs.append(HandoverPriorMsg(tx_sensor.id, rx_sensor.id, pt.label,
                                     pt.existence, pt.belief.copy(), time_index))
        tx_ledger.add(tx_sensor.id, rx_sensor.id, pt.label)
    return msgs, hc_labels


def tx_measurements(tracker: Tracker, assoc, Z, tx_sensor: Sensor,
                    rx_sensor: Sensor, hc_labels) -> list:
    """For every handover candidate, forward its most likely associated
    measurement (none if a missed detection is most likely), deduplicated so
    one physical measurement is sent to a destination at most once."""
    if not Z or assoc is None:
        return []
    row_of = {lab: j for j, lab in enumerate(tracker.last_legacy_labels)}
    chosen = set()
    for label in hc_labels:
        j = row_of.get(label)
        if j is None:
            continue
        m = int(np.argmax(assoc.p_a[j]))
        if m != 0:
            chosen.add(m - 1)
    return [HandoverMeasMsg(tx_sensor.id, rx_sensor.id, Z[i])
            for i in sorted(chosen)]


def rx_ingest_priors(tracker: Tracker, msgs, rx_ledger: RxLedger):
    """Append unseen received priors as fresh legacy PTs; replayed source
    labels are dropped while their mapping is alive."""
    for msg in msgs:
        if rx_ledger.contains(msg.dst, msg.src, msg.src_label):
            continue
        local = tracker.new_label()
        rx_ledger.add(msg.dst, msg.src, msg.src_label, local)
        tracker.pts.append(PotentialTarget(local, msg.existence,
                                           msg.belief.copy(), "legacy"))


def rx_process(tracker: Tracker, Z, meas_msgs, sensor: Sensor, sensors_by_id):
    """Local update pass, then one pass per source sensor over its received
    handover measurements (source models, birth disabled)."""
    assoc = tracker.update(Z, sensor)
    by_src = defaultdict(list)
    for msg in meas_msgs:
        by_src[msg.src].append(msg.measurement)
    for src in sorted(by_src):
        tracker.update(by_src[src], sensors_by_id[src], allow_births=False)
    return assoc


def ledger_maintenance(trackers, sensors_by_id, tx_ledger: TxLedger,
                       rx_ledger: RxLedger, time_index: int, log=None):
    """Drop ledger entries whose PT was pruned or whose posterior mean left
    the owning sensor's FoV (with a small hysteresis margin)."""
    state = {}
    for sid, tr in trackers.items():
        radius = sensors_by_id[sid].fov_radius + LEDGER_FOV_MARGIN
        pos = sensors_by_id[sid].pos
        state[sid] = {
            pt.label: math.hypot(*(pt.belief.position_mean() - pos)) <= radius
            for pt in tr.pts
        }
    for src_id in trackers:
        for dst_id in trackers:
            if dst_id == src_id:
                continue
            for label in tx_ledger.labels(src_id, dst_id):
                if not state[src_id].get(label, False):
                    tx_ledger.discard(src_id, dst_id, label)
                    if log is not None:
                        log.append(("tx_remove", time_index, src_id, dst_id, label))
            for src_label, local in rx_ledger.items(dst_id, src_id):
                if not state[dst_id].get(local, False):
                    rx_ledger.remove_src(dst_id, src_id, src_label)
                    if log is not None:
                        log.append(("rx_remove", time_index, src_id, dst_id, src_label))


def run_handover(scans, sensors, motion: MotionModel, params: TrackerParams,
                 with_measurements: bool, seed, horizon: int,
                 collect_digests: bool = False) -> RunResult:
    """Per-BS filters coupled by the pairwise handover protocol."""
    sensors = sorted(sensors, key=lambda s: s.id)
    sensors_by_id = {s.id: s for s in sensors}
    trackers = _spawn_trackers(sensors, motion, params, seed)
    tx_ledger, rx_ledger = TxLedger(), RxLedger()
    comm = CommStats.zeros(horizon)
    per_bs = {s.id: [] for s in sensors}
    digests = {s.id: [] for s in sensors} if collect_digests else {}
    prior_log, ledger_log = [], []

    for k in range(horizon):
        for s in sensors:
            trackers[s.id].predict()
            if collect_digests:
                digests[s.id].append(trackers[s.id].state_digest())

        # Tx phase: all selections complete before any ingestion.
        inbound = defaultdict(list)
        hc_cache = {}
        for st in sensors:
            for sr in sensors:
                if sr.id == st.id:
                    continue
                msgs, hc = tx_select(trackers[st.id], st, sr,
                                     tx_ledger, rx_ledger, k)
                hc_cache[(st.id, sr.id)] = hc
                inbound[sr.id].extend(msgs)
                comm.priors_sent[k] += len(msgs)
                comm.payload_scalars[k] += len(msgs) * prior_scalars(params.n_particles)
                for msg in msgs:
                    prior_log.append((k, st.id, sr.id, msg.src_label,
                                      msg.belief.position_mean()))

        for s in sensors:
            rx_ingest_priors(trackers[s.id], inbound[s.id], rx_ledger)

        # Local BP update at every BS.
        assoc_map, z_map = {}, {}
        for s in sensors:
            z_map[s.id] = scans.get(k, s.id)
            assoc_map[s.id] = trackers[s.id].update(z_map[s.id], s)

        # Measurement exchange and second sequential pass.
        if with_measurements:
            meas_inbound = defaultdict(list)
            for st in sensors:
                for sr in sensors:
                    if sr.id == st.id:
                        continue
                    msgs = tx_measurements(trackers[st.id], assoc_map[st.id],
                                           z_map[st.id], st, sr,
                                           hc_cache[(st.id, sr.id)])
                    meas_inbound[sr.id].extend(msgs)
                    comm.measurements_sent[k] += len(msgs)
                    comm.payload_scalars[k] += MEAS_SCALARS * len(msgs)
            for s in sensors:
                by_src = defaultdict(list)
                for msg in meas_inbound[s.id]:
                    by_src[msg.src].append(msg.measurement)
                for src in sorted(by_src):
                    trackers[s.id].update(by_src[src], sensors_by_id[src],
                                          allow_births=False)

        for s in sensors:
            per_bs[s.id].append(trackers[s.id].prune_and_detect())
        ledger_maintenance(trackers, sensors_by_id, tx_ledger, rx_ledger, k,
                           log=ledger_log)

    return RunResult(per_bs, comm, digests=digests,
                     prior_log=prior_log, ledger_log=ledger_log)


def run_architecture(arch: str, scans, sensors, motion, params, seed,
                     horizon: int, collect_digests: bool = False) -> RunResult:
    if arch == ARCH_DISTRIBUTED:
        return run_distributed(scans, sensors, motion, params, seed, horizon,
                               collect_digests)
    if arch == ARCH_CENTRALIZED:
        return run_centralized(scans, sensors, motion, params, seed, horizon)
    if arch == ARCH_HANDOVER_MEAS:
        return run_handover(scans, sensors, motion, params, True, seed, horizon,
                            collect_digests)
    if arch == ARCH_HANDOVER_NO_MEAS:
        return run_handover(scans, sensors, motion, params, False, seed, horizon,
                            collect_digests)
    raise ValueError(f"unknown architecture {arch!r}")
