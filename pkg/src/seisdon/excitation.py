"""Synthetic ground-motion records and CSV ingestion.

Records are nonstationary wide-band accelerograms built in three steps:
white noise is shaped in the frequency domain by a Kanai-Tajimi spectrum
(soil-filtered white noise, dominant frequency omega_g and bandwidth
zeta_g), modulated by a rise / plateau / exponential-decay amplitude
envelope, and demeaned with envelope weighting so the record keeps zero
mean without lifting its end points off zero.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .timeseries import TimeSeries


@dataclass
class GenerationConfig:
    duration: float = 40.0
    dt: float = 0.005
    rise_time: float = 4.0
    plateau_time: float = 10.0
    decay_rate: float = 0.3
    dominant_frequency: float = 2.0 * np.pi * 2.5   # omega_g, rad/s
    bandwidth: float = 0.6                          # zeta_g
    intensity: float = 1.0                          # RMS scale of the strong phase, m/s^2
    seed: int = 0

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError("duration must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not (0.0 < self.bandwidth <= 1.0):
            raise ValueError("bandwidth (zeta_g) must lie in (0, 1]")
        if not self.intensity > 0:
            raise ValueError("intensity must be positive")
        if self.dominant_frequency <= 0:
            raise ValueError("dominant_frequency must be positive")
        if self.rise_time < 0 or self.plateau_time < 0 or self.decay_rate < 0:
            raise ValueError("envelope parameters must be non-negative")

    @property
    def n_samples(self) -> int:
        # records cover [0, duration) so decimation factors divide evenly
        return int(round(self.duration / self.dt))


@dataclass
class SeismicRecord:
    series: TimeSeries
    id: str
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.series)


def envelope(config: GenerationConfig, t: np.ndarray) -> np.ndarray:
    """Quadratic rise to 1, flat plateau, then exponential decay."""
    t = np.asarray(t, dtype=np.float64)
    rise, plateau, decay = config.rise_time, config.plateau_time, config.decay_rate
    env = np.zeros_like(t)
    if math.isinf(rise):
        return env
    if rise > 0:
        ramp = t < rise
        env[ramp] = (t[ramp] / rise) ** 2
    hold = (t >= rise) & (t <= rise + plateau)
    env[hold] = 1.0
    tail = t > rise + plateau
    env[tail] = np.exp(-decay * (t[tail] - rise - plateau))
    return env


def kanai_tajimi_shape(omega: np.ndarray, omega_g: float, zeta_g: float) -> np.ndarray:
    """Amplitude response sqrt(S_KT) of the soil filter, unit high-frequency floor."""
    r2 = (omega / omega_g) ** 2
    num = 1.0 + 4.0 * zeta_g ** 2 * r2
    den = (1.0 - r2) ** 2 + 4.0 * zeta_g ** 2 * r2
    return np.sqrt(num / den)


def generate_record(config: GenerationConfig, record_id: str | None = None) -> SeismicRecord:
    """One synthetic accelerogram, fully determined by the config (incl. seed)."""
    n = config.n_samples
    t = np.arange(n) * config.dt
    rng = np.random.default_rng(config.seed)
    white = rng.standard_normal(n)

    spectrum = np.fft.fft(white)
    omega = np.abs(np.fft.fftfreq(n, config.dt)) * 2.0 * np.pi
    spectrum *= kanai_tajimi_shape(omega, config.dominant_frequency, config.bandwidth)
    shaped = np.fft.ifft(spectrum).real
    sigma = np.std(shaped)
    if sigma > 0:
        shaped /= sigma

    env = envelope(config, t)
    values = config.intensity * env * shaped
    # envelope-weighted demean: exact zero mean, end points stay pinned by the envelope
    env_sum = np.sum(env)
    if env_sum > 0:
        values -= env * (np.sum(values) / env_sum)

    rid = record_id if record_id is not None else f"kt-{config.seed:06d}"
    meta = {
        "duration": config.duration,
        "dt": config.dt,
        "dominant_frequency": config.dominant_frequency,
        "bandwidth": config.bandwidth,
        "intensity": config.intensity,
    }
    return SeismicRecord(series=TimeSeries(values, config.dt), id=rid, seed=config.seed, meta=meta)


def generate_ensemble(config: GenerationConfig, count: int = 50) -> list:
    """`count` records with consecutive seeds starting at config.seed."""
    if count < 1:
        raise ValueError("count must be >= 1")
    records = []
    for k in range(count):
        cfg = GenerationConfig(
            duration=config.duration, dt=config.dt,
            rise_time=config.rise_time, plateau_time=config.plateau_time,
            decay_rate=config.decay_rate,
            dominant_frequency=config.dominant_frequency,
            bandwidth=config.bandwidth, intensity=config.intensity,
            seed=config.seed + k,
        )
        records.append(generate_record(cfg))
    return records


def import_record_csv(path) -> SeismicRecord:
    """Read a two-column (time, acceleration) CSV on a uniform time grid.

    A single non-numeric header row is skipped.  Grids with relative
    spacing jitter above 1e-6 are rejected.
    """
    path = Path(path)
    times = []
    accels = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for row_no, row in enumerate(reader):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise ValueError(f"{path}: row {row_no + 1} has {len(row)} columns, expected 2")
            try:
                times.append(float(row[0]))
                accels.append(float(row[1]))
            except ValueError:
                if row_no == 0:
                    continue  # header
                raise ValueError(f"{path}: non-numeric data at row {row_no + 1}")
    if len(times) < 2:
        raise ValueError(f"{path}: need at least two samples")
    times = np.asarray(times)
    diffs = np.diff(times)
    if np.any(diffs <= 0):
        raise ValueError(f"{path}: time column must be strictly increasing")
    dt = float(np.mean(diffs))
    if np.max(np.abs(diffs - dt)) > 1e-6 * dt:
        raise ValueError(f"{path}: non-uniform time grid (jitter above 1e-6 relative)")
    return SeismicRecord(series=TimeSeries(np.asarray(accels), dt), id=path.stem, seed=0,
                         meta={"source": str(path)})


def export_record_csv(record: SeismicRecord, path) -> None:
    """Write the two-column (time, acceleration) format read by import_record_csv."""
    path = Path(path)
    t = record.series.times
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "acceleration"])
        for ti, vi in zip(t, record.series.values):
            writer.writerow([repr(float(ti)), repr(float(vi))])
