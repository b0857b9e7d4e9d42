"""Sampled P(t), its one-sided cosine transform and peak detection.

F(w) = 2 int_0^T dt cos(w t) P(t), evaluated with trapezoidal weights.
Undamped signals get an exponential window exp(-eta t), which turns every
line into a Lorentzian of half-width eta; eta is recorded in the output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .core_model import SystemParams
from .errors import WindowTooShort

DEFAULT_ETA = 0.005  # artificial width in units of Omega
WINDOW_PERIODS = 20
CHUNK = 256

PROVENANCES = ("numeric", "SEA", "PSA", "LTA", "non-dissipative", "analytic")


@dataclass(frozen=True)
class TimeSeries:
    t0: float
    dt: float
    values: np.ndarray
    params: SystemParams | None = None
    provenance: str = "numeric"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise ValueError("time series contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.values))

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * (len(self.values) - 1)

    def sup_distance(self, other: "TimeSeries") -> float:
        if len(other.values) != len(self.values) or not math.isclose(other.dt, self.dt, rel_tol=1e-12):
            raise ValueError("series are sampled differently")
        return float(np.max(np.abs(self.values - other.values)))


@dataclass(frozen=True)
class SpectrumSeries:
    omega: np.ndarray
    values: np.ndarray
    delta_weight: float | None = None
    provenance: str = "numeric"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if om.shape != v.shape:
            raise ValueError("omega and values differ in shape")
        if np.any(np.diff(om) <= 0):
            raise ValueError("omega grid must be ascending")
        if not np.all(np.isfinite(v)):
            raise ValueError("spectrum contains non-finite values")
        for a in (om, v):
            a.setflags(write=False)
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "values", v)

    def at(self, w: float) -> float:
        return float(np.interp(w, self.omega, self.values))


def cosine_transform(t: np.ndarray, values: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """2 * trapezoid(cos(w t) f(t)) for every w, chunked over the grid."""
    wts = np.full(len(t), t[1] - t[0])
    wts[0] = wts[-1] = 0.5 * (t[1] - t[0])
    fw = wts * values
    out = np.empty(len(omega))
    for i in range(0, len(omega), CHUNK):
        w = omega[i : i + CHUNK]
        out[i : i + CHUNK] = 2 * np.cos(np.outer(w, t)) @ fw
    return out


def fourier_numeric(
    series: TimeSeries,
    omega_grid,
    window_T: float | None = None,
    *,
    eta: float | None = None,
    min_spacing: float | None = None,
) -> SpectrumSeries:
    """One-sided cosine transform of `series` over [t0, t0 + window_T].

    eta defaults to 0.005 Omega for non-dissipative series and 0 otherwise.
    With `min_spacing` (smallest expected separation of neighbouring peaks)
    the window must cover 20 periods 2 pi / min_spacing.
    """
    omega = np.asarray(omega_grid, dtype=float)
    window_T = series.t_end - series.t0 if window_T is None else window_T
    if window_T > series.t_end - series.t0 + 1e-9 * series.dt:
        raise WindowTooShort(f"series covers {series.t_end - series.t0:g} < window {window_T:g}")
    if min_spacing is not None and window_T < WINDOW_PERIODS * 2 * math.pi / min_spacing:
        raise WindowTooShort(
            f"window {window_T:g} is shorter than {WINDOW_PERIODS} periods of the peak spacing {min_spacing:g}"
        )
    om_unit = series.params.omega if series.params is not None else 1.0
    if eta is None:
        eta = DEFAULT_ETA * om_unit if series.provenance == "non-dissipative" else 0.0
    n = int(round(window_T / series.dt)) + 1
    t = series.times[:n] - series.t0
    vals = series.values[:n] * np.exp(-eta * t)
    f = cosine_transform(t, vals, omega)
    meta = {"eta": eta, "window_T": window_T, "dt": series.dt}
    return SpectrumSeries(omega, f, None, series.provenance, meta)


@dataclass(frozen=True)
class Peak:
    omega: float
    height: float
    width: float
    prominence: float


def find_peaks(spec: SpectrumSeries, min_prominence: float) -> list[Peak]:
    """Local maxima with at least `min_prominence`, refined by a parabola.

    Sorted by decreasing height; width is the full width at half prominence.
    """
    v = spec.values
    om = spec.omega
    idx, props = signal.find_peaks(v, prominence=min_prominence)
    if len(idx) == 0:
        return []
    widths = signal.peak_widths(v, idx, rel_height=0.5)[0]
    step = np.gradient(om)
    peaks = []
    for k, i in enumerate(idx):
        w0, h0 = om[i], v[i]
        if 0 < i < len(v) - 1:
            a, b, c = v[i - 1], v[i], v[i + 1]
            denom = a - 2 * b + c
            if denom < 0:
                shift = 0.5 * (a - c) / denom
                w0 = om[i] + shift * step[i]
                h0 = b - 0.25 * (a - c) * shift
        peaks.append(Peak(float(w0), float(h0), float(widths[k] * step[i]), float(props["prominences"][k])))
    peaks.sort(key=lambda pk: -pk.height)
    return peaks


def nearest_peak(peaks: list[Peak], w: float) -> Peak | None:
    if not peaks:
        return None
    return min(peaks, key=lambda pk: abs(pk.omega - w))
