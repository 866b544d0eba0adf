"""OFDM ISAC base stations: echo synthesis, range-Doppler maps, detection.

The signal model works on frequency-domain channel estimates H[k, m]
(subcarrier k, symbol m). A point scatterer at range R with radial velocity v
(range rate, receding positive) contributes

    a * exp(-j*2*pi*k*delta_f*tau) * exp(+j*2*pi*f_D*m*pri)

with tau = 2R/c and f_D = 2*v*fc/c. The 2D periodogram (IDFT over
subcarriers, DFT over symbols, both orthonormal) concentrates each scatterer
into one delay/Doppler bin. Range migration within a coherent processing
interval is neglected (sub-bin at UAV speeds).

Amplitudes come from the monostatic radar equation so that the map-domain
peak-to-noise ratio equals snr_model's output when the noise floor is at its
default unit variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .geometry import Vec3

C = 299_792_458.0          # m/s
BOLTZMANN = 1.380649e-23   # J/K
T0_KELVIN = 290.0
DBM_REF_OFFSET = 30.0      # dBW -> dBm

DEFAULT_THRESHOLD_DB = 13.0          # over noise median, ~Pd 0.9 / Pfa 1e-6
ANGLE_STD_RAD = {"sub6": math.radians(2.0), "mmwave": math.radians(0.5)}
DEFAULT_N_SYMBOLS = {"sub6": 64, "mmwave": 128}
BANDS = ("sub6", "mmwave")

SNR_NO_DETECT = float("-inf")   # sentinel for occluded targets


@dataclass(frozen=True)
class BsConfig:
    """One ISAC base station's RF and geometric parameters."""

    id: str
    position: Vec3
    band: str
    fc: float            # carrier, Hz
    bandwidth: float     # system bandwidth B, Hz
    delta_f: float       # subcarrier spacing, Hz
    pri: float           # symbol repetition interval, s
    eirp: float          # dBm
    rx_gain: float       # dBi
    noise_figure: float  # dB
    n_symbols: int       # symbols per coherent processing interval
    max_range_gate: float  # m

    def __post_init__(self):
        if self.band not in BANDS:
            raise ValueError(f"station {self.id}: band must be one of {BANDS}")
        if self.delta_f <= 0 or self.bandwidth <= 0:
            raise ValueError(f"station {self.id}: bandwidth and delta_f must be > 0")
        n = round(self.bandwidth / self.delta_f)
        if n < 8:
            raise ValueError(f"station {self.id}: needs >= 8 subcarriers, got {n}")
        if abs(self.bandwidth - n * self.delta_f) > self.delta_f / 2:
            raise ValueError(f"station {self.id}: B inconsistent with subcarrier grid")
        if self.pri <= 1.0 / self.delta_f:
            raise ValueError(f"station {self.id}: pri must exceed the symbol span 1/delta_f")
        if self.fc <= self.bandwidth:
            raise ValueError(f"station {self.id}: fc must exceed B")
        if self.n_symbols < 2:
            raise ValueError(f"station {self.id}: n_symbols must be >= 2")
        if self.max_range_gate <= 0:
            raise ValueError(f"station {self.id}: max_range_gate must be > 0")

    @property
    def n_subcarriers(self) -> int:
        return round(self.bandwidth / self.delta_f)

    @property
    def wavelength(self) -> float:
        return C / self.fc

    @property
    def range_bin(self) -> float:
        """Delay-bin spacing of the actual DFT grid, c / (2 * n * delta_f)."""
        return C / (2.0 * self.n_subcarriers * self.delta_f)

    @property
    def velocity_bin(self) -> float:
        return C / (2.0 * self.fc * self.n_symbols * self.pri)

    @property
    def angle_std(self) -> float:
        return ANGLE_STD_RAD[self.band]


def resolution_limits(bs: BsConfig) -> Tuple[float, float, float, float]:
    """(range_res, vel_res, range_max, vel_max) from the nominal parameters.

    range_res = c/(2B), vel_res = c/(2*fc*n_symbols*pri),
    range_max = c/(2*delta_f), vel_max = c/(4*fc*pri).
    """
    range_res = C / (2.0 * bs.bandwidth)
    vel_res = C / (2.0 * bs.fc * bs.n_symbols * bs.pri)
    range_max = C / (2.0 * bs.delta_f)
    vel_max = C / (4.0 * bs.fc * bs.pri)
    return range_res, vel_res, range_max, vel_max


def snr_model(bs: BsConfig, target_pos: Vec3, rcs: float, buildings: Sequence = ()) -> float:
    """Post-integration SNR (dB) of a point target, or -inf when occluded.

    Monostatic radar equation in dBm terms:
        eirp + rx_gain + 10log10(lambda^2 * rcs / ((4pi)^3 R^4))
        - (10log10(k*T0*B) + 30) - noise_figure + 10log10(n_sc * n_sym)
    """
    if rcs <= 0:
        raise ValueError("rcs must be > 0")
    r = bs.position.dist(target_pos)
    if r <= 0:
        raise ValueError("target is at the station position")
    if r > bs.max_range_gate:
        raise ValueError(f"target at {r:.1f} m is beyond the range gate {bs.max_range_gate:.1f} m")
    if buildings:
        from .scenario import line_of_sight
        if not line_of_sight(bs.position, target_pos, buildings):
            return SNR_NO_DETECT
    lam = bs.wavelength
    path = 10.0 * math.log10(lam * lam * rcs / ((4.0 * math.pi) ** 3 * r ** 4))
    noise_floor_dbm = 10.0 * math.log10(BOLTZMANN * T0_KELVIN * bs.bandwidth) + DBM_REF_OFFSET
    gain = 10.0 * math.log10(bs.n_subcarriers * bs.n_symbols)
    return bs.eirp + bs.rx_gain + path - noise_floor_dbm - bs.noise_figure + gain


@dataclass
class EchoFrame:
    """Frequency-domain channel estimates for one coherent processing interval."""

    station_id: str
    t0: float
    H: np.ndarray  # complex128 [n_subcarriers x n_symbols]

    def validate(self, bs: BsConfig) -> None:
        if self.H.shape != (bs.n_subcarriers, bs.n_symbols):
            raise ValueError(
                f"frame shape {self.H.shape} does not match station "
                f"({bs.n_subcarriers}, {bs.n_symbols})")
        if not np.all(np.isfinite(self.H.view(float))):
            raise ValueError("frame contains non-finite entries")


@dataclass(frozen=True)
class Detection:
    station_id: str
    t: float
    range: float
    radial_velocity: float   # range rate, m/s, receding positive
    azimuth: float           # rad, station-relative, 0 = +x (east)
    elevation: float         # rad
    snr: float               # dB estimate from the map

    def position_from(self, station: Vec3) -> Vec3:
        ce = math.cos(self.elevation)
        return Vec3(
            station.x + self.range * ce * math.cos(self.azimuth),
            station.y + self.range * ce * math.sin(self.azimuth),
            station.z + self.range * math.sin(self.elevation),
        )


def radial_velocity_of(bs: BsConfig, position: Vec3, velocity: Vec3) -> float:
    d = position - bs.position
    r = d.norm()
    if r == 0:
        return 0.0
    return (velocity.x * d.x + velocity.y * d.y + velocity.z * d.z) / r


def synth_echo(bs: BsConfig,
               targets: Sequence[Tuple[Vec3, Vec3, float]],
               rng: np.random.Generator,
               buildings: Sequence = (),
               noise_std: float = 1.0) -> EchoFrame:
    """Synthesize one frame from (position, velocity, rcs) point targets.

    Targets without line of sight contribute nothing. noise_std scales the
    per-element circular complex Gaussian floor; 0 gives a noiseless frame.
    Deterministic given the rng state.
    """
    n, m = bs.n_subcarriers, bs.n_symbols
    _, _, range_max, vel_max = resolution_limits(bs)
    amps, dks, dms = [], [], []
    for pos, vel, rcs in targets:
        r = bs.position.dist(pos)
        if r > range_max:
            raise ValueError(
                f"target range {r:.1f} m exceeds unambiguous range {range_max:.1f} m")
        v_r = radial_velocity_of(bs, pos, vel)
        if abs(v_r) > vel_max:
            raise ValueError(
                f"radial velocity {v_r:.2f} m/s exceeds unambiguous velocity {vel_max:.2f} m/s")
        snr_db = snr_model(bs, pos, rcs, buildings) if r <= bs.max_range_gate else SNR_NO_DETECT
        phase0 = rng.uniform(0.0, 2.0 * math.pi)
        if snr_db == SNR_NO_DETECT:
            continue
        # per-element amplitude: map peak power = |a|^2 * n * m over unit noise
        elem_snr_db = snr_db - 10.0 * math.log10(n * m)
        a = 10.0 ** (elem_snr_db / 20.0) * complex(math.cos(phase0), math.sin(phase0))
        tau = 2.0 * r / C
        f_d = 2.0 * v_r * bs.fc / C
        amps.append(a)
        dks.append(-2.0 * math.pi * bs.delta_f * tau)
        dms.append(2.0 * math.pi * f_d * bs.pri)
    H = np.zeros((n, m), dtype=np.complex128)
    if amps:
        _kernels.echo_accumulate(H, np.array(amps, dtype=np.complex128),
                                 np.array(dks), np.array(dms))
    if noise_std > 0:
        w = rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))
        H += (noise_std / math.sqrt(2.0)) * w
    return EchoFrame(station_id=bs.id, t0=0.0, H=H)


_WINDOWS = ("rect", "hann", "blackmanharris")


def _window_vec(kind: str, n: int) -> np.ndarray:
    if kind == "rect":
        return np.ones(n)
    from scipy.signal.windows import blackmanharris, hann
    return blackmanharris(n) if kind == "blackmanharris" else hann(n)


def range_doppler_map(frame: EchoFrame, bs: BsConfig, window: str = "rect") -> np.ndarray:
    """Power of the 2D periodogram; Doppler axis fftshift-centered.

    Bin (p, q) maps to range p * c/(2*n*delta_f) and velocity
    (q - n_symbols/2) * c/(2*fc*n_symbols*pri). Orthonormal transforms keep
    total energy equal to the frame's (Parseval) for the rect window.
    """
    frame.validate(bs)
    if window not in _WINDOWS:
        raise ValueError(f"window must be one of {_WINDOWS}")
    H = frame.H
    if window != "rect":
        wk = _window_vec(window, H.shape[0])
        wm = _window_vec(window, H.shape[1])
        H = H * wk[:, None] * wm[None, :]
    import scipy.fft as _fft
    y = _fft.ifft(H, axis=0, norm="ortho", workers=2)
    y = _fft.fft(y, axis=1, norm="ortho", workers=2)
    y = np.fft.fftshift(y, axes=1)
    return (y.real ** 2 + y.imag ** 2)


@dataclass(frozen=True)
class TargetTruth:
    """Ground-truth geometry handed to detect() for bearing lookup."""

    position: Vec3
    velocity: Vec3


def _parabolic_offset(left: float, center: float, right: float) -> float:
    if left <= 0 or right <= 0 or center <= 0:
        return 0.0
    l, c, r = math.log(left), math.log(center), math.log(right)
    denom = l - 2.0 * c + r
    if denom >= -1e-300:
        return 0.0
    off = 0.5 * (l - r) / denom
    return max(-0.5, min(0.5, off))


WINDOW_SEPARATION_BINS = {"rect": 1, "hann": 2, "blackmanharris": 4}


def detect(power: np.ndarray,
           bs: BsConfig,
           truth: Sequence[TargetTruth],
           rng: np.random.Generator,
           threshold_db: Optional[float] = None,
           min_separation_bins: int = 1) -> List[Detection]:
    """Extract detections from a range-Doppler power map.

    A bin is a candidate when it is a 3x3 local maximum above the map's
    noise-median threshold (default 13 dB over the median). Candidates are
    accepted strongest-first with a minimum bin separation. Range/velocity
    use parabolic peak interpolation; the bearing is the matched truth
    target's bearing plus zero-mean Gaussian error with the per-band std
    (angle estimation is not signal-modeled). Unmatched peaks (false alarms)
    get a uniform random bearing.
    """
    if power.shape != (bs.n_subcarriers, bs.n_symbols):
        raise ValueError("map dimensions do not match the station config")
    th_db = DEFAULT_THRESHOLD_DB if threshold_db is None else threshold_db
    n, m = power.shape
    gate_bins = min(n - 1, int(bs.max_range_gate / bs.range_bin))
    sliced = power[1:gate_bins + 1, :]
    med = float(np.median(sliced))
    # Noiseless maps have a ~0 median; floor it 120 dB under the peak so the
    # FFT's numerical dust (~-260 dB) never crosses the threshold.
    med = max(med, float(sliced.max(initial=0.0)) * 1e-12)
    thresh = med * 10.0 ** (th_db / 10.0)

    rows, cols = _kernels.local_peaks(sliced, thresh)
    if len(rows) == 0:
        return []
    vals = sliced[rows, cols]
    order = np.lexsort((cols, rows, -vals))
    accepted: List[Tuple[int, int]] = []
    for idx in order:
        r, c = int(rows[idx]), int(cols[idx])
        if any(abs(r - ar) <= min_separation_bins and abs(c - ac) <= min_separation_bins
               for ar, ac in accepted):
            continue
        accepted.append((r, c))

    # Truth table for bearing lookup, in (range, radial velocity) space.
    truth_rv = []
    for tgt in truth:
        rr = bs.position.dist(tgt.position)
        vv = radial_velocity_of(bs, tgt.position, tgt.velocity)
        truth_rv.append((rr, vv, tgt))

    range_res, vel_res, _, _ = resolution_limits(bs)
    noise_ref = med / math.log(2.0) if med > 0 else 0.0
    out: List[Detection] = []
    for r, c in accepted:
        pr = r + 1  # undo the bin-0 skip
        row_l = power[pr - 1, c] if pr >= 1 else 0.0
        row_r = power[pr + 1, c] if pr + 1 < n else 0.0
        col_l = power[pr, (c - 1) % m]
        col_r = power[pr, (c + 1) % m]
        center = power[pr, c]
        dp = _parabolic_offset(row_l, center, row_r)
        dq = _parabolic_offset(col_l, center, col_r)
        rng_est = (pr + dp) * bs.range_bin
        vel_est = ((c + dq) - m / 2.0) * bs.velocity_bin
        if not (0.0 < rng_est <= bs.max_range_gate):
            continue
        snr_est = 10.0 * math.log10(center / noise_ref) if noise_ref > 0 else 300.0
        matched = None
        best_d = 3.0  # gate in resolution cells
        for rr, vv, tgt in truth_rv:
            d = abs(rr - rng_est) / range_res + abs(vv - vel_est) / vel_res
            if d < best_d:
                best_d = d
                matched = tgt
        if matched is not None:
            dpos = matched.position - bs.position
            az_true = math.atan2(dpos.y, dpos.x)
            el_true = math.asin(max(-1.0, min(1.0, dpos.z / max(dpos.norm(), 1e-12))))
            az = az_true + rng.normal(0.0, bs.angle_std)
            el = el_true + rng.normal(0.0, bs.angle_std)
        else:
            az = rng.uniform(-math.pi, math.pi)
            el = rng.uniform(0.0, math.pi / 4.0)
        out.append(Detection(station_id=bs.id, t=0.0, range=rng_est,
                             radial_velocity=vel_est, azimuth=az, elevation=el,
                             snr=min(snr_est, 300.0)))
    return out


def dump_frame(frame: EchoFrame, bs: BsConfig, path_prefix) -> None:
    """Debug dump: little-endian float64 pairs plus a JSON sidecar header."""
    import json
    from pathlib import Path
    prefix = Path(path_prefix)
    raw = np.ascontiguousarray(frame.H.astype(np.complex128)).view(np.float64)
    raw.astype("<f8").tofile(str(prefix) + ".bin")
    sidecar = {
        "station_id": frame.station_id,
        "t0": frame.t0,
        "dims": [bs.n_subcarriers, bs.n_symbols],
        "layout": "row-major complex128 (re, im) little-endian",
    }
    Path(str(prefix) + ".json").write_text(json.dumps(sidecar, indent=2), encoding="utf-8")
