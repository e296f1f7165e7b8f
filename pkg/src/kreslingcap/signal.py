"""Capacitance-to-digital acquisition chain and dynamic calibration.

The sensor sits in parallel with a fixed tank capacitor; the converter
reports the LC resonance as ``round(f / f_ref * 2**bits)``.  Counts fall as
capacitance rises, so the calibrator is fed the mirrored count
``2**bits - 1 - counts`` and its normalised output rises with twist.
"""
from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import CountOverflowError, ParameterError


@dataclass(frozen=True)
class TankConfig:
    """LC tank and converter settings.

    Default component values are convenient plumbing (a typical evaluation
    board tank), not measured values.
    """

    inductance: float = 18e-6  # H
    c_fixed: float = 33.0  # pF
    c_parasitic: float = 0.0  # pF
    f_ref: float = 40e6  # Hz
    bits: int = 28
    noise_sigma: float = 20.0  # counts
    drift_amplitude: float = 0.0  # counts
    drift_period: float = 600.0  # s
    drift_slope: float = 0.0  # counts/s
    spike_rate: float = 0.0  # probability per sample
    spike_amplitude: float = 0.0  # counts

    def validate(self, c_sensor_min: float = 0.0):
        if not self.inductance > 0:
            raise ParameterError("inductance must be positive")
        if not self.c_fixed + self.c_parasitic > 0:
            raise ParameterError("fixed plus parasitic capacitance must be positive")
        if int(self.bits) != self.bits or not 8 <= self.bits <= 32:
            raise ParameterError("bits must be an integer in [8, 32]")
        if not self.drift_period > 0:
            raise ParameterError("drift period must be positive")
        if not 0.0 <= self.spike_rate <= 1.0:
            raise ParameterError("spike rate must be a probability")
        if self.noise_sigma < 0:
            raise ParameterError("noise sigma must be non-negative")
        f_max = _freq(self.inductance, c_sensor_min + self.c_fixed + self.c_parasitic)
        if not self.f_ref > 2.0 * f_max:
            raise ParameterError(f"f_ref must exceed twice the highest tank frequency ({2 * f_max:.4g} Hz)")
        return self

    @property
    def full_scale(self) -> int:
        return 2 ** int(self.bits)


def _freq(L, c_pf):
    return 1.0 / (2.0 * np.pi * np.sqrt(L * np.asarray(c_pf, float) * 1e-12))


def resonant_frequency(c_sensor, cfg: TankConfig):
    """Tank resonance in Hz for sensor capacitance in pF (scalar or array)."""
    c = np.asarray(c_sensor, float)
    if np.any(c < 0):
        raise ParameterError("sensor capacitance must be non-negative")
    total = c + cfg.c_fixed + cfg.c_parasitic
    if np.any(total <= 0):
        raise ParameterError("total tank capacitance must be positive")
    if not cfg.inductance > 0:
        raise ParameterError("inductance must be positive")
    f = _freq(cfg.inductance, total)
    return float(f) if f.ndim == 0 else f


def counts_from_frequency(f, cfg: TankConfig):
    f = np.asarray(f, float)
    if np.any(f >= cfg.f_ref):
        raise CountOverflowError("frequency at or above the reference clock")
    if np.any(f < 0):
        raise ParameterError("negative frequency")
    counts = np.rint(f / cfg.f_ref * float(cfg.full_scale)).astype(np.int64)
    return int(counts) if counts.ndim == 0 else counts


def frequency_from_counts(counts, cfg: TankConfig):
    return np.asarray(counts, float) * cfg.f_ref / float(cfg.full_scale)


def capacitance_from_counts(counts, cfg: TankConfig):
    """Sensor capacitance (pF) recovered by inverting the tank law."""
    f = frequency_from_counts(counts, cfg)
    if np.any(f <= 0):
        raise ParameterError("counts must be positive to invert")
    c_total = 1e12 / (cfg.inductance * (2.0 * np.pi * f) ** 2)
    c = c_total - cfg.c_fixed - cfg.c_parasitic
    return float(c) if np.ndim(c) == 0 else c


def lsb_capacitance(c_sensor, cfg: TankConfig) -> float:
    """Capacitance change equivalent to one count at ``c_sensor`` pF."""
    total = c_sensor + cfg.c_fixed + cfg.c_parasitic
    f = resonant_frequency(c_sensor, cfg)
    return float(2.0 * total / f * cfg.f_ref / cfg.full_scale)


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CalibratorState:
    running_min: float = 0.0
    running_max: float = 0.0
    initialized: bool = False


def calibrate_update(state: CalibratorState, raw):
    """One step of the unbounded running min/max normaliser."""
    if not state.initialized:
        state = CalibratorState(raw, raw, True)
    else:
        state = CalibratorState(min(state.running_min, raw), max(state.running_max, raw), True)
    return state, _scale(raw, state.running_min, state.running_max)


def _scale(raw, lo, hi) -> float:
    span = hi - lo
    if span == 0:
        return 0.0
    # clamp the last-bit rounding of huge spans
    return float(min(100.0, max(0.0, 100.0 * (raw - lo) / span)))


class Calibrator:
    """Streaming normaliser; ``window`` samples of memory, or unbounded when None.

    The windowed variant keeps monotonic deques so each update is amortised O(1).
    """

    def __init__(self, window: int | None = None):
        if window is not None and window < 1:
            raise ParameterError("calibration window must be >= 1 sample")
        self.window = window
        self.state = CalibratorState()
        self._i = 0
        self._mins = deque()
        self._maxs = deque()

    def update(self, raw) -> float:
        if self.window is None:
            self.state, norm = calibrate_update(self.state, raw)
            return norm
        i = self._i
        self._i += 1
        while self._mins and self._mins[-1][1] >= raw:
            self._mins.pop()
        self._mins.append((i, raw))
        while self._maxs and self._maxs[-1][1] <= raw:
            self._maxs.pop()
        self._maxs.append((i, raw))
        while self._mins[0][0] <= i - self.window:
            self._mins.popleft()
        while self._maxs[0][0] <= i - self.window:
            self._maxs.popleft()
        lo, hi = self._mins[0][1], self._maxs[0][1]
        self.state = CalibratorState(lo, hi, True)
        return _scale(raw, lo, hi)

    def run(self, stream) -> np.ndarray:
        return np.array([self.update(x) for x in stream], float)


def derivative(series, dt: float) -> np.ndarray:
    """Central differences inside, one-sided differences at both ends."""
    y = np.asarray(series, float)
    if y.ndim != 1 or len(y) < 3:
        raise ParameterError("derivative needs at least three samples")
    if not dt > 0:
        raise ParameterError("sample spacing must be positive")
    return np.gradient(y, dt, edge_order=1)


# ---------------------------------------------------------------------------
# synthetic acquisition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SignalSample:
    t: float
    counts: int
    normalized: float
    derivative: float


@dataclass
class Acquisition:
    t: np.ndarray
    counts: np.ndarray
    normalized: np.ndarray
    derivative: np.ndarray

    CSV_HEADER = ("t_s", "counts", "normalized", "derivative")

    def samples(self):
        for i in range(len(self.t)):
            yield SignalSample(float(self.t[i]), int(self.counts[i]), float(self.normalized[i]),
                               float(self.derivative[i]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_HEADER)
        for i in range(len(self.t)):
            w.writerow(["%.10g" % self.t[i], int(self.counts[i]), "%.10g" % self.normalized[i],
                        "%.10g" % self.derivative[i]])
        return buf.getvalue()


def synthesize_acquisition(t, c_pf, cfg: TankConfig, seed: int = 0, window: int | None = None) -> Acquisition:
    """Counts, normalised signal and its derivative for a capacitance timeline.

    Noise and spikes are drawn from ``numpy.random.default_rng(seed)``;
    drift is ``A sin(2 pi t / period) + slope * t`` added in counts.
    """
    t = np.asarray(t, float)
    c = np.asarray(c_pf, float)
    if t.shape != c.shape or t.ndim != 1:
        raise ParameterError("time and capacitance arrays must be 1-D and equal length")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(c))):
        raise ParameterError("timeline contains non-finite values")
    if len(t) >= 2 and not np.allclose(np.diff(t), t[1] - t[0], rtol=1e-9, atol=0):
        raise ParameterError("timeline must be uniformly sampled")
    cfg.validate(float(c.min()) if len(c) else 0.0)
    rng = np.random.default_rng(seed)
    ideal = counts_from_frequency(resonant_frequency(c, cfg), cfg).astype(float)
    drift = cfg.drift_amplitude * np.sin(2.0 * np.pi * t / cfg.drift_period) + cfg.drift_slope * t
    noise = rng.normal(0.0, cfg.noise_sigma, len(t)) if cfg.noise_sigma > 0 else 0.0
    spikes = 0.0
    if cfg.spike_rate > 0:
        hit = rng.random(len(t)) < cfg.spike_rate
        spikes = hit * cfg.spike_amplitude * rng.choice([-1.0, 1.0], len(t))
    counts = np.rint(ideal + drift + noise + spikes)
    counts = np.clip(counts, 0, cfg.full_scale - 1).astype(np.int64)
    mirrored = (cfg.full_scale - 1) - counts
    norm = Calibrator(window).run(mirrored)
    dt = t[1] - t[0] if len(t) >= 2 else 1.0
    deriv = derivative(norm, dt) if len(t) >= 3 else np.zeros(len(t))
    return Acquisition(t, counts, norm, deriv)


def read_timeline(text: str):
    """Parse a ``t_s, C_pF`` CSV into two arrays."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ParameterError("empty timeline")
    header = [h.strip() for h in rows[0]]
    if header[:2] != ["t_s", "C_pF"]:
        raise ParameterError(f"timeline header must start with t_s, C_pF, got {header}")
    try:
        data = np.array([[float(r[0]), float(r[1])] for r in rows[1:] if r], float).reshape(-1, 2)
    except (ValueError, IndexError) as exc:
        raise ParameterError(f"malformed timeline row: {exc}") from exc
    return data[:, 0], data[:, 1]
