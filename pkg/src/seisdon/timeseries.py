"""Uniformly sampled real-valued signals."""

from dataclasses import dataclass

import numpy as np


@dataclass
class TimeSeries:
    """A real signal sampled on the uniform grid t_j = j * dt.

    Carries both excitations (ground acceleration, floor loads) and
    responses (displacements) throughout the pipeline.
    """

    values: np.ndarray
    dt: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError(f"TimeSeries values must be 1-D, got shape {self.values.shape}")
        if self.values.size == 0:
            raise ValueError("TimeSeries must contain at least one sample")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("TimeSeries contains non-finite values")

    def __len__(self) -> int:
        return self.values.size

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.values.size) * self.dt

    @property
    def duration(self) -> float:
        """Length of the sampled window, (n - 1) * dt."""
        return (self.values.size - 1) * self.dt

    def scaled(self, factor: float) -> "TimeSeries":
        return TimeSeries(self.values * factor, self.dt)
