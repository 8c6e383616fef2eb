"""Discrete Fourier analysis, decimation and anti-aliasing filters.

The decimation contract is the textbook one: DOWNSAMPLE keeps every L-th
sample, ALIAS folds a length-N spectrum into length N/L by summing bins
that land on the same output frequency, and the two are linked by

    dft(downsample(x, L)) == (1/L) * alias(dft(x), L)

which is why a record must be low-passed below the *new* Nyquist rate
before it may be decimated.  The low-pass used here is a Butterworth
cascade of second-order sections, applied forward-backward for zero
phase.
"""

from dataclasses import dataclass

import numpy as np

from .timeseries import TimeSeries


@dataclass
class Spectrum:
    """DFT bins of a finite signal plus the rate it was sampled at."""

    bins: np.ndarray
    sample_rate: float = 1.0

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.complex128)
        if self.bins.ndim != 1 or self.bins.size == 0:
            raise ValueError("spectrum must be a nonempty 1-D array")

    def __len__(self) -> int:
        return self.bins.size

    @property
    def frequencies(self) -> np.ndarray:
        """Bin center frequencies in Hz (0 .. sample_rate, unshifted)."""
        return np.arange(self.bins.size) * self.sample_rate / self.bins.size

    def amplitudes(self) -> np.ndarray:
        return np.abs(self.bins)


def _as_values(x):
    if isinstance(x, TimeSeries):
        return x.values, 1.0 / x.dt
    arr = np.asarray(x)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("expected a nonempty 1-D signal")
    return arr, None


def dft(x, sample_rate: float | None = None) -> Spectrum:
    """X(k) = sum_n x(n) exp(-2 pi i k n / N).

    Accepts a TimeSeries (rate inferred) or a plain array.  Computed via
    the FFT, which matches the plain summation to rounding error.
    """
    values, inferred = _as_values(x)
    rate = sample_rate if sample_rate is not None else (inferred if inferred is not None else 1.0)
    return Spectrum(np.fft.fft(values), rate)


def idft(spectrum: Spectrum) -> np.ndarray:
    """Inverse transform; returns a complex array (take .real for real signals)."""
    return np.fft.ifft(spectrum.bins)


def downsample(x, factor: int) -> np.ndarray:
    """Keep every factor-th sample: out[m] = x[m * factor].  factor must divide len(x)."""
    values, _ = _as_values(x)
    factor = int(factor)
    if factor < 1:
        raise ValueError("downsample factor must be >= 1")
    if values.size % factor != 0:
        raise ValueError(f"factor {factor} does not divide signal length {values.size}")
    return values[::factor].copy()


def alias(spectrum: Spectrum, factor: int) -> Spectrum:
    """Fold bins: out[m] = sum_l X[m + l * M] with M = N / factor."""
    factor = int(factor)
    if factor < 1:
        raise ValueError("alias factor must be >= 1")
    n = len(spectrum)
    if n % factor != 0:
        raise ValueError(f"factor {factor} does not divide spectrum length {n}")
    m = n // factor
    folded = spectrum.bins.reshape(factor, m).sum(axis=0)
    return Spectrum(folded, spectrum.sample_rate / factor)


def verify_downsampling_theorem(x, factor: int) -> float:
    """Max abs deviation between dft(downsample(x)) and (1/L) alias(dft(x))."""
    values, _ = _as_values(x)
    lhs = dft(downsample(values, factor)).bins
    rhs = alias(dft(values), factor).bins / factor
    return float(np.max(np.abs(lhs - rhs)))


@dataclass
class ButterworthFilter:
    """Low-pass with maximally flat magnitude 1 / sqrt(1 + (w/wc)^2N).

    kind "analog": cutoff in rad/s, sections are s-domain (b, a) triples.
    kind "digital": cutoff is the normalized frequency in (0, pi); sections
    are biquads (first-order tail for odd orders) obtained by the bilinear
    transform with the cutoff pre-warped through tan(w/2), so the realized
    magnitude is 1 / sqrt(1 + (tan(w/2)/tan(wc/2))^2N) exactly.
    """

    order: int
    cutoff: float
    kind: str
    sections: list  # [(b, a)] with a[0] == 1

    def magnitude(self, w) -> np.ndarray:
        """|B| at angular frequencies w (rad/s analog, rad/sample digital)."""
        w = np.atleast_1d(np.asarray(w, dtype=np.float64))
        result = np.ones_like(w, dtype=np.complex128)
        if self.kind == "analog":
            s = 1j * w
            for b, a in self.sections:
                result *= np.polyval(b, s) / np.polyval(a, s)
        else:
            z = np.exp(-1j * w)
            for b, a in self.sections:
                num = sum(bi * z ** i for i, bi in enumerate(b))
                den = sum(ai * z ** i for i, ai in enumerate(a))
                result *= num / den
        return np.abs(result)

    def poles(self) -> np.ndarray:
        return np.concatenate([np.roots(a) for _, a in self.sections])


def _analog_pole_angles(order: int) -> np.ndarray:
    # equally spaced on the cutoff circle, left half-plane only
    k = np.arange(order)
    return np.pi / 2.0 + np.pi * (2 * k + 1) / (2 * order)


def butterworth_design(order: int, cutoff: float, kind: str = "digital",
                       sample_rate: float | None = None) -> ButterworthFilter:
    """Design a low-pass Butterworth filter of the given order.

    analog: `cutoff` is the -3 dB angular frequency in rad/s.
    digital: `cutoff` is normalized to (0, pi) rad/sample, or given in Hz
    when `sample_rate` is passed.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if kind not in ("analog", "digital"):
        raise ValueError(f"kind must be 'analog' or 'digital', got {kind!r}")
    if kind == "digital" and sample_rate is not None:
        cutoff = 2.0 * np.pi * cutoff / sample_rate
    if kind == "digital" and not (0.0 < cutoff < np.pi):
        raise ValueError(f"digital cutoff must lie in (0, pi), got {cutoff}")
    if kind == "analog" and cutoff <= 0:
        raise ValueError("analog cutoff must be positive")

    angles = _analog_pole_angles(order)
    # damping ratios of the conjugate pairs; odd order leaves one real pole
    zetas = [-np.cos(angles[k]) for k in range(order // 2)]

    sections = []
    if kind == "analog":
        wc = cutoff
        for zeta in zetas:
            sections.append((np.array([wc * wc]),
                             np.array([1.0, 2.0 * zeta * wc, wc * wc])))
        if order % 2:
            sections.append((np.array([wc]), np.array([1.0, wc])))
    else:
        warped = np.tan(cutoff / 2.0)
        for zeta in zetas:
            a0 = 1.0 + 2.0 * zeta * warped + warped * warped
            b = warped * warped * np.array([1.0, 2.0, 1.0]) / a0
            a = np.array([a0,
                          2.0 * (warped * warped - 1.0),
                          1.0 - 2.0 * zeta * warped + warped * warped]) / a0
            sections.append((b, a))
        if order % 2:
            a0 = 1.0 + warped
            sections.append((warped * np.array([1.0, 1.0]) / a0,
                             np.array([a0, warped - 1.0]) / a0))
    return ButterworthFilter(order=order, cutoff=cutoff, kind=kind, sections=sections)


def _biquad(b, a, x: np.ndarray) -> np.ndarray:
    """Direct form II transposed recursion for one section."""
    b0 = float(b[0])
    b1 = float(b[1]) if len(b) > 1 else 0.0
    b2 = float(b[2]) if len(b) > 2 else 0.0
    a1 = float(a[1]) if len(a) > 1 else 0.0
    a2 = float(a[2]) if len(a) > 2 else 0.0
    z1 = z2 = 0.0
    out = []
    append = out.append
    for xn in x.tolist():
        yn = b0 * xn + z1
        z1 = b1 * xn - a1 * yn + z2
        z2 = b2 * xn - a2 * yn
        append(yn)
    return np.asarray(out)


def filter_apply(filt: ButterworthFilter, x, zero_phase: bool = False) -> np.ndarray:
    """Run the section cascade over x from zero initial state.

    zero_phase filters forward then backward, squaring the magnitude
    response and cancelling the phase.
    """
    if filt.kind != "digital":
        raise ValueError("only digital filters can be applied to sampled data")
    values, _ = _as_values(x)
    y = values.astype(np.float64, copy=True)
    for b, a in filt.sections:
        y = _biquad(b, a, y)
    if zero_phase:
        y = y[::-1].copy()
        for b, a in filt.sections:
            y = _biquad(b, a, y)
        y = y[::-1].copy()
    return y


def antialias_downsample(x, factor: int, order: int = 8) -> np.ndarray:
    """Zero-phase Butterworth low-pass, then decimate by `factor`.

    The cutoff sits at half the post-decimation Nyquist frequency,
    i.e. pi / (2 * factor) in normalized terms, so the retained band is
    comfortably clear of the fold-over point.  factor 1 applies the
    low-pass only.
    """
    values, _ = _as_values(x)
    factor = int(factor)
    if factor < 1:
        raise ValueError("factor must be >= 1")
    if values.size % factor != 0:
        raise ValueError(f"factor {factor} does not divide signal length {values.size}")
    filt = butterworth_design(order, np.pi / (2.0 * factor), kind="digital")
    filtered = filter_apply(filt, values, zero_phase=True)
    if factor == 1:
        return filtered
    return downsample(filtered, factor)
