"""Multi-station estimate fusion and track maintenance.

Per-station detections become Cartesian estimates with first-order covariance
propagation; simultaneous estimates of one target are combined by
inverse-covariance (information-form) fusion; tracks run a constant-velocity
Kalman filter at the fusion-center cadence with greedy Mahalanobis
association and M/N lifecycle logic (1 fix spawns, 2 confirm, 3 consecutive
misses drop).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import Vec3
from .sensing import BsConfig, Detection, resolution_limits

FUSION_REFRESH = 1.5          # s, fusion-center cadence
ASSOC_GATE = 9.21             # chi-square, 3 dof, 99%
CLUSTER_GATE = 25.0           # looser mutual gate for same-target estimate grouping
CONFIRM_HITS = 2
DROP_MISSES = 3
DEFAULT_PROCESS_NOISE = 3.0   # m^2/s^3 white-acceleration PSD


class FusionError(ValueError):
    pass


@dataclass
class StationEstimate:
    station_id: str
    t: float
    position: Vec3
    covariance: np.ndarray  # 3x3 SPD, m^2

    def validate(self) -> None:
        cov = self.covariance
        if cov.shape != (3, 3):
            raise FusionError(f"estimate from {self.station_id}: covariance must be 3x3")
        if not np.allclose(cov, cov.T, atol=1e-9):
            raise FusionError(f"estimate from {self.station_id}: covariance not symmetric")
        eig = np.linalg.eigvalsh(cov)
        if eig.min() <= 0:
            raise FusionError(f"estimate from {self.station_id}: covariance not positive definite")


def detection_to_estimate(d: Detection, bs: BsConfig) -> StationEstimate:
    """Polar measurement -> Cartesian estimate with Jacobian-propagated covariance.

    sigma_r is the bin quantization std range_res/sqrt(12); angle stds are the
    per-band constants from the sensing module.
    """
    range_res, _, _, _ = resolution_limits(bs)
    sig_r = range_res / math.sqrt(12.0)
    sig_a = bs.angle_std
    r, az, el = d.range, d.azimuth, d.elevation
    ca, sa = math.cos(az), math.sin(az)
    ce, se = math.cos(el), math.sin(el)
    pos = Vec3(bs.position.x + r * ce * ca,
               bs.position.y + r * ce * sa,
               bs.position.z + r * se)
    jac = np.array([
        [ce * ca, -r * ce * sa, -r * se * ca],
        [ce * sa, r * ce * ca, -r * se * sa],
        [se, 0.0, r * ce],
    ])
    cov = jac @ np.diag([sig_r ** 2, sig_a ** 2, sig_a ** 2]) @ jac.T
    cov = 0.5 * (cov + cov.T)
    est = StationEstimate(station_id=bs.id, t=d.t, position=pos, covariance=cov)
    est.validate()
    return est


def fuse_estimates(estimates: Sequence[StationEstimate]) -> Tuple[Vec3, np.ndarray]:
    """Information-form fusion: Sigma_f = (sum Sigma_i^-1)^-1, order-independent.

    Inputs are summed in sorted station-id order so permutations produce
    bit-identical output.
    """
    if not estimates:
        raise FusionError("fuse_estimates needs at least one estimate")
    ts = [e.t for e in estimates]
    if max(ts) - min(ts) > FUSION_REFRESH / 2.0 + 1e-9:
        raise FusionError("estimates span more than half a refresh interval")
    info = np.zeros((3, 3))
    info_vec = np.zeros(3)
    for e in sorted(estimates, key=lambda e: e.station_id):
        e.validate()
        try:
            inv = np.linalg.inv(e.covariance)
        except np.linalg.LinAlgError as exc:
            raise FusionError(f"singular covariance from station {e.station_id}") from exc
        info += inv
        info_vec += inv @ e.position.as_array()
    cov = np.linalg.inv(info)
    cov = 0.5 * (cov + cov.T)
    x = cov @ info_vec
    return Vec3(*x), cov


@dataclass
class FusedTrack:
    track_id: str
    uav_id: Optional[str]
    t: float
    state: np.ndarray        # [x y z vx vy vz]
    covariance: np.ndarray   # 6x6 SPD
    contributing_stations: List[str] = field(default_factory=list)
    history: List[dict] = field(default_factory=list)
    hits: int = 1
    misses: int = 0
    confirmed: bool = False

    @property
    def position(self) -> Vec3:
        return Vec3(*self.state[:3])

    @property
    def velocity(self) -> Vec3:
        return Vec3(*self.state[3:])

    def record_fix(self, error: Optional[float] = None) -> None:
        entry = {
            "t": self.t,
            "pos": [float(v) for v in self.state[:3]],
            "cov_diag": [float(self.covariance[i, i]) for i in range(3)],
            "stations": list(self.contributing_stations),
        }
        if error is not None:
            entry["error"] = float(error)
        self.history.append(entry)


def _cv_matrices(dt: float, q: float) -> Tuple[np.ndarray, np.ndarray]:
    f = np.eye(6)
    f[0, 3] = f[1, 4] = f[2, 5] = dt
    dt2 = dt * dt / 2.0
    g = np.zeros((6, 3))
    g[0, 0] = g[1, 1] = g[2, 2] = dt2
    g[3, 0] = g[4, 1] = g[5, 2] = dt
    return f, g @ (q * np.eye(3)) @ g.T


def _assert_spd(cov: np.ndarray, what: str) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    if np.linalg.eigvalsh(cov).min() <= 0:
        raise FusionError(f"{what} covariance lost positive definiteness")
    return cov


def track_predict(track: FusedTrack, t: float, q: float = DEFAULT_PROCESS_NOISE) -> Tuple[np.ndarray, np.ndarray]:
    dt = t - track.t
    if dt < 0:
        raise FusionError("cannot predict a track backwards in time")
    f, qm = _cv_matrices(dt, q)
    return f @ track.state, _assert_spd(f @ track.covariance @ f.T + qm, "predicted")


def track_update(track: FusedTrack, fix: Tuple[Vec3, np.ndarray], t: float,
                 q: float = DEFAULT_PROCESS_NOISE) -> FusedTrack:
    """Constant-velocity Kalman predict to t, then update with the fused fix."""
    pos, r = fix
    r = _assert_spd(np.asarray(r, dtype=float), "measurement")
    x, p = track_predict(track, t, q)
    h = np.zeros((3, 6))
    h[0, 0] = h[1, 1] = h[2, 2] = 1.0
    innov = pos.as_array() - h @ x
    s = h @ p @ h.T + r
    k = p @ h.T @ np.linalg.inv(s)
    x_new = x + k @ innov
    ikh = np.eye(6) - k @ h
    # Joseph form keeps the covariance symmetric positive definite.
    p_new = ikh @ p @ ikh.T + k @ r @ k.T
    p_new = _assert_spd(p_new, "updated")
    track.state = x_new
    track.covariance = p_new
    track.t = t
    return track


def new_track(track_id: str, fix: Tuple[Vec3, np.ndarray], t: float,
              stations: Sequence[str] = ()) -> FusedTrack:
    pos, r = fix
    cov = np.zeros((6, 6))
    cov[:3, :3] = r
    cov[3, 3] = cov[4, 4] = cov[5, 5] = 100.0  # weak velocity prior, (10 m/s)^2
    state = np.zeros(6)
    state[:3] = pos.as_array()
    return FusedTrack(track_id=track_id, uav_id=None, t=t, state=state,
                      covariance=cov, contributing_stations=list(stations))


def mahalanobis_sq(track: FusedTrack, fix: Tuple[Vec3, np.ndarray], t: float,
                   q: float = DEFAULT_PROCESS_NOISE) -> float:
    pos, r = fix
    x, p = track_predict(track, t, q)
    innov = pos.as_array() - x[:3]
    s = p[:3, :3] + r
    return float(innov @ np.linalg.solve(s, innov))


def associate(tracks: Sequence[FusedTrack],
              fixes: Sequence[Tuple[Vec3, np.ndarray]],
              t: float,
              gate: float = ASSOC_GATE,
              q: float = DEFAULT_PROCESS_NOISE) -> Tuple[Dict[int, int], List[int]]:
    """Greedy nearest-neighbor assignment in Mahalanobis distance.

    Returns (track_index -> fix_index, unassigned fix indices). Pairs outside
    the gate stay unassigned; callers spawn tentative tracks from leftovers.
    """
    pairs = []
    for ti, track in enumerate(tracks):
        for fi, fix in enumerate(fixes):
            d2 = mahalanobis_sq(track, fix, t, q)
            if d2 <= gate:
                pairs.append((d2, ti, fi))
    pairs.sort(key=lambda p: (p[0], p[1], p[2]))
    assigned: Dict[int, int] = {}
    used_fixes = set()
    for d2, ti, fi in pairs:
        if ti in assigned or fi in used_fixes:
            continue
        assigned[ti] = fi
        used_fixes.add(fi)
    leftovers = [fi for fi in range(len(fixes)) if fi not in used_fixes]
    return assigned, leftovers


class TrackManager:
    """Owns fused-track state; updates in timestamp order at the refresh rate."""

    def __init__(self, prefix: str = "trk", q: float = DEFAULT_PROCESS_NOISE,
                 gate: float = ASSOC_GATE):
        self.tracks: List[FusedTrack] = []
        self.dropped: List[FusedTrack] = []
        self._counter = 0
        self._prefix = prefix
        self.q = q
        self.gate = gate

    def _next_id(self) -> str:
        self._counter += 1
        return f"{self._prefix}-{self._counter:04d}"

    def step(self, fixes: Sequence[Tuple[Vec3, np.ndarray, List[str]]], t: float
             ) -> Tuple[List[FusedTrack], List[str]]:
        """One refresh: associate, update, spawn, and drop.

        fixes are (position, covariance, contributing station ids). Returns
        (updated tracks, ids of tracks dropped this step).
        """
        plain = [(pos, cov) for pos, cov, _ in fixes]
        assigned, leftovers = associate(self.tracks, plain, t, self.gate, self.q)
        updated: List[FusedTrack] = []
        dropped_ids: List[str] = []
        for ti, track in enumerate(self.tracks):
            if ti in assigned:
                fi = assigned[ti]
                pos, cov, stations = fixes[fi]
                track_update(track, (pos, cov), t, self.q)
                track.contributing_stations = list(stations)
                track.hits += 1
                track.misses = 0
                if track.hits >= CONFIRM_HITS:
                    track.confirmed = True
                track.record_fix()
                updated.append(track)
            else:
                track.misses += 1
                track.contributing_stations = []
                if track.misses >= DROP_MISSES:
                    if track.confirmed:
                        dropped_ids.append(track.track_id)
                    self.dropped.append(track)
                    continue
                updated.append(track)
        for fi in leftovers:
            pos, cov, stations = fixes[fi]
            # A leftover that still gates to an existing track is a duplicate
            # measurement of a known target (cluster split), not a new one.
            duplicate = any(
                mahalanobis_sq(tr, (pos, cov), t, self.q) <= max(self.gate, CLUSTER_GATE)
                for tr in self.tracks)
            if duplicate:
                continue
            track = new_track(self._next_id(), (pos, cov), t, stations)
            track.record_fix()
            updated.append(track)
        self.tracks = updated
        return self.tracks, dropped_ids


def cluster_estimates(estimates: Sequence[StationEstimate],
                      gate: float = CLUSTER_GATE) -> List[List[StationEstimate]]:
    """Greedy mutual-gating clustering of same-cadence estimates.

    Two estimates join when their Mahalanobis distance under the summed
    covariances is inside the gate. Deterministic: seeded in station-id order.
    """
    remaining = sorted(estimates, key=lambda e: e.station_id)
    clusters: List[List[StationEstimate]] = []
    while remaining:
        seed = remaining.pop(0)
        cluster = [seed]
        rest = []
        for cand in remaining:
            diff = cand.position.as_array() - seed.position.as_array()
            s = cand.covariance + seed.covariance
            d2 = float(diff @ np.linalg.solve(s, diff))
            if d2 <= gate and all(c.station_id != cand.station_id for c in cluster):
                cluster.append(cand)
            else:
                rest.append(cand)
        remaining = rest
        clusters.append(cluster)
    return clusters


def export_history(tracks: Sequence[FusedTrack]) -> str:
    """Track history as JSON lines, one fix per line."""
    lines = []
    for track in tracks:
        for entry in track.history:
            rec = {"track_id": track.track_id, "t": entry["t"], "pos": entry["pos"],
                   "cov_diag": entry["cov_diag"], "stations": entry["stations"]}
            lines.append(json.dumps(rec, separators=(",", ":")))
    return "\n".join(lines) + ("\n" if lines else "")
