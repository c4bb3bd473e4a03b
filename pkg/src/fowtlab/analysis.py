"""Statistical post-processing of trajectories and ensembles.

Everything here is read-only over recorded (reporting-frame) channels and
returns small dataclasses with a ``to_text`` method producing a delimited
table for external plotting.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy import signal, stats
from scipy.ndimage import gaussian_filter1d

__all__ = [
    "Histogram",
    "pdf",
    "is_unimodal",
    "Extremes",
    "trajectory_extremes",
    "Bands",
    "percentile_bands",
    "SpectrumReport",
    "fft_spectrum",
    "TrendFit",
    "BinnedScatter",
    "binned_scatter",
    "Baseline",
    "baseline_from_samples",
    "ThresholdSpec",
    "QuietBand",
    "AnomalyEvent",
    "detect_events",
    "classify_event",
    "classify_events",
    "events_to_text",
    "CollocationReport",
    "extreme_collocation",
    "AttributionReport",
    "attribution_report",
]


def _table(header: Sequence[str], columns: Sequence[np.ndarray]) -> str:
    out = io.StringIO()
    out.write(",".join(header) + "\n")
    for row in zip(*columns):
        out.write(",".join(str(int(v)) if isinstance(v, np.integer) else repr(float(v))
                           for v in row) + "\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# distributions


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    density: np.ndarray
    count: int
    degenerate: bool = False

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    def to_text(self) -> str:
        return _table(["left", "right", "density"], [self.edges[:-1], self.edges[1:], self.density])


def pdf(samples, n_bins: int = 50) -> Histogram:
    """Normalized histogram over [min, max].

    Identical samples give a single unit-width bin centred on the value,
    flagged ``degenerate``.
    """
    x = np.asarray(samples, dtype=float).ravel()
    x = x[np.isfinite(x)]
    if x.size == 0:
        raise ValueError("no finite samples")
    if n_bins < 1:
        raise ValueError("n_bins must be positive")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        return Histogram(np.array([lo - 0.5, lo + 0.5]), np.array([1.0]), x.size, True)
    density, edges = np.histogram(x, bins=n_bins, range=(lo, hi), density=True)
    return Histogram(edges, density, x.size)


def is_unimodal(samples, n_bins: int = 40, smooth: float = 1.0,
                prominence: float = 0.1) -> bool:
    """One dominant mode in the smoothed histogram.

    Peaks are counted on the density smoothed with a Gaussian of ``smooth``
    bins; peaks less prominent than ``prominence`` times the maximum are
    treated as sampling noise.
    """
    h = pdf(samples, n_bins)
    if h.degenerate:
        return True
    d = gaussian_filter1d(h.density, smooth, mode="constant") if smooth > 0 else h.density
    # zero padding lets a mode sitting in an edge bin count as a peak
    peaks, _ = signal.find_peaks(np.r_[0.0, d, 0.0], prominence=prominence * d.max())
    return peaks.size == 1


@dataclass(frozen=True)
class Extremes:
    min: float
    max: float
    t_min: float
    t_max: float


def _series(traj, variable):
    t = np.asarray(traj["time"], dtype=float)
    x = np.asarray(traj[variable], dtype=float)
    return t, x


def trajectory_extremes(traj, variable: str) -> Extremes:
    """Exact extrema of a recorded series and their (first) times."""
    t, x = _series(traj, variable)
    if x.size == 0:
        raise ValueError("empty series")
    i, j = int(np.argmin(x)), int(np.argmax(x))
    return Extremes(float(x[i]), float(x[j]), float(t[i]), float(t[j]))


@dataclass(frozen=True)
class Bands:
    t: np.ndarray
    levels: tuple[float, ...]
    values: np.ndarray        # (len(levels), len(t))
    lower: np.ndarray         # pointwise minimum envelope
    upper: np.ndarray         # pointwise maximum envelope

    def band(self, level: float) -> np.ndarray:
        return self.values[self.levels.index(level)]

    def to_text(self) -> str:
        header = ["time", "min"] + [f"p{lv:g}" for lv in self.levels] + ["max"]
        return _table(header, [self.t, self.lower, *self.values, self.upper])


def percentile_bands(trajectories: Iterable, variable: str,
                     levels: Sequence[float] = (5, 25, 50, 75, 95)) -> Bands:
    """Per-time-step percentiles and min/max envelopes across trajectories."""
    trajs = list(trajectories)
    if not trajs:
        raise ValueError("no trajectories")
    t0 = np.asarray(trajs[0]["time"], dtype=float)
    rows = []
    for tr in trajs:
        t, x = _series(tr, variable)
        if not np.array_equal(t, t0):
            raise ValueError("trajectories do not share a time axis")
        rows.append(x)
    data = np.vstack(rows)
    levels = tuple(float(v) for v in levels)
    if any(not 0 <= v <= 100 for v in levels):
        raise ValueError("percentile levels must lie in [0, 100]")
    values = np.percentile(data, levels, axis=0)
    return Bands(t0, levels, np.atleast_2d(values), data.min(axis=0), data.max(axis=0))


# ---------------------------------------------------------------------------
# spectra


@dataclass(frozen=True)
class SpectrumReport:
    frequency: np.ndarray
    magnitude: np.ndarray
    unit: str
    window: str
    n_segments: int
    normalization: str = "unit_peak"

    @property
    def peak_frequency(self) -> float:
        return float(self.frequency[int(np.argmax(self.magnitude))])

    @property
    def resolution(self) -> float:
        return float(self.frequency[1] - self.frequency[0])

    def to_text(self) -> str:
        return _table([f"frequency_{self.unit.replace('/', '_per_')}", "magnitude"],
                      [self.frequency, self.magnitude])


def fft_spectrum(series, dt: float, window: str = "hann", unit: str = "Hz",
                 n_segments: int = 1) -> SpectrumReport:
    """Windowed magnitude spectrum scaled to unit peak.

    With ``n_segments > 1`` the series is split into equal non-overlapping
    segments whose power spectra are averaged before taking the root, which
    steadies the peak estimate of random signals.
    """
    x = np.asarray(series, dtype=float)
    if not dt > 0:
        raise ValueError("dt must be positive")
    if unit not in ("Hz", "rad/s"):
        raise ValueError("unit must be 'Hz' or 'rad/s'")
    if n_segments < 1:
        raise ValueError("n_segments must be positive")
    seg = x.size // n_segments
    if seg < 16:
        raise ValueError("need at least 16 samples per segment")
    win = np.ones(seg) if window in ("none", "boxcar") else signal.get_window(window, seg)
    power = np.zeros(seg // 2 + 1)
    for k in range(n_segments):
        power += np.abs(np.fft.rfft(x[k * seg:(k + 1) * seg] * win)) ** 2
    mag = np.sqrt(power / n_segments)
    peak = mag.max()
    if peak > 0:
        mag = mag / peak
    f = np.fft.rfftfreq(seg, dt)
    if unit == "rad/s":
        f = 2 * math.pi * f
    return SpectrumReport(f, mag, unit, window, n_segments)


# ---------------------------------------------------------------------------
# binned scatter


@dataclass(frozen=True)
class TrendFit:
    slope: float
    intercept: float
    ci_low: float
    ci_high: float
    confidence: float

    @property
    def includes_zero(self) -> bool:
        return self.ci_low <= 0.0 <= self.ci_high


@dataclass(frozen=True)
class BinnedScatter:
    edges: np.ndarray
    centers: np.ndarray       # occupied bins only
    means: np.ndarray
    counts: np.ndarray
    empty_bins: tuple[int, ...]

    def trend(self, confidence: float = 0.95) -> TrendFit:
        """Least-squares line through the bin means with a t-based slope CI."""
        if self.centers.size < 3:
            raise ValueError("need at least three occupied bins for a trend")
        fit = stats.linregress(self.centers, self.means)
        q = stats.t.ppf(0.5 + confidence / 2, self.centers.size - 2)
        return TrendFit(float(fit.slope), float(fit.intercept),
                        float(fit.slope - q * fit.stderr), float(fit.slope + q * fit.stderr),
                        confidence)

    def to_text(self) -> str:
        return _table(["x_center", "y_mean", "count"], [self.centers, self.means, self.counts])


def binned_scatter(x, y, n_bins: int = 100) -> BinnedScatter:
    """Split the x range into equal bins and average y within each."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError("x and y must have the same length")
    if x.size == 0:
        raise ValueError("no samples")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    sums = np.bincount(idx, weights=y, minlength=n_bins)
    occupied = counts > 0
    centers = 0.5 * (edges[:-1] + edges[1:])
    return BinnedScatter(edges, centers[occupied], sums[occupied] / counts[occupied],
                         counts[occupied], tuple(int(i) for i in np.flatnonzero(~occupied)))


# ---------------------------------------------------------------------------
# anomaly events


@dataclass(frozen=True)
class Baseline:
    median: float
    sigma: float


def baseline_from_samples(samples) -> Baseline:
    """Campaign baseline: median level and standard deviation about it."""
    x = np.asarray(samples, dtype=float).ravel()
    x = x[np.isfinite(x)]
    if x.size == 0:
        raise ValueError("no finite samples")
    med = float(np.median(x))
    return Baseline(med, float(np.sqrt(np.mean((x - med) ** 2))))


@dataclass(frozen=True)
class ThresholdSpec:
    """Excursion threshold: an absolute deviation ``level`` or ``k_sigma``
    baseline standard deviations."""

    level: float | None = None
    k_sigma: float | None = None

    def __post_init__(self):
        if (self.level is None) == (self.k_sigma is None):
            raise ValueError("give exactly one of level and k_sigma")
        v = self.level if self.level is not None else self.k_sigma
        if not v > 0:
            raise ValueError("threshold must be positive")

    def value(self, baseline: Baseline) -> float:
        return self.level if self.level is not None else self.k_sigma * baseline.sigma


@dataclass(frozen=True)
class QuietBand:
    """Recovery rule: back within ``k_sigma`` baseline deviations (or an
    absolute ``half_width``) for ``dwell`` seconds; ``cut`` separates
    short from long recoveries."""

    k_sigma: float = 2.0
    half_width: float | None = None
    dwell: float = 60.0
    cut: float = 200.0

    def width(self, baseline: Baseline) -> float:
        return self.half_width if self.half_width is not None else self.k_sigma * baseline.sigma


@dataclass(frozen=True)
class AnomalyEvent:
    variable: str
    start: float
    end: float
    peak_value: float
    peak_time: float
    threshold: float
    recovery_time: float | None = None
    classification: str | None = None     # short | long | unrecovered

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError("event must end after it starts")
        if self.recovery_time is not None and self.recovery_time < 0:
            raise ValueError("recovery time must be nonnegative")


def detect_events(traj, variable: str, threshold: ThresholdSpec, baseline: Baseline,
                  merge_window: float = 20.0) -> list[AnomalyEvent]:
    """Maximal intervals where |x - median| exceeds the threshold.

    An event covers its exceeding samples plus one sample period, so it
    ends where the series first drops back.  Events separated by a gap
    shorter than ``merge_window`` are merged.
    """
    t, x = _series(traj, variable)
    if t.size == 0:
        return []
    thr = threshold.value(baseline)
    dev = np.abs(x - baseline.median)
    over = dev > thr
    if not over.any():
        return []
    step = float(t[1] - t[0]) if t.size > 1 else 1.0
    edges = np.diff(np.r_[0, over.astype(np.int8), 0])
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)          # exclusive
    runs = [[int(a), int(b)] for a, b in zip(starts, stops)]
    merged = [runs[0]]
    for a, b in runs[1:]:
        gap = t[a] - (t[merged[-1][1] - 1] + step)
        if gap < merge_window:
            merged[-1][1] = b
        else:
            merged.append([a, b])
    events = []
    for a, b in merged:
        k = a + int(np.argmax(dev[a:b]))
        events.append(AnomalyEvent(variable, float(t[a]), float(t[b - 1] + step),
                                   float(x[k]), float(t[k]), float(thr)))
    return events


def classify_event(traj, event: AnomalyEvent, baseline: Baseline,
                   quiet: QuietBand = QuietBand()) -> AnomalyEvent:
    """Measure recovery after ``event`` and label it short, long or unrecovered.

    Recovery time runs from the event end to the first instant after which
    the series stays inside the quiet band for ``quiet.dwell`` seconds.
    Returns a copy of the event with ``recovery_time`` and
    ``classification`` filled in.
    """
    t, x = _series(traj, event.variable)
    band = quiet.width(baseline)
    sel = t >= event.end
    ts, inside = t[sel], np.abs(x[sel] - baseline.median) <= band
    recovery = None
    if ts.size:
        # walk maximal runs of in-band samples
        edges = np.diff(np.r_[0, inside.astype(np.int8), 0])
        for a, b in zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)):
            if ts[b - 1] - ts[a] >= quiet.dwell:
                recovery = float(ts[a] - event.end)
                break
    if recovery is None:
        return replace(event, recovery_time=None, classification="unrecovered")
    label = "short" if recovery <= quiet.cut else "long"
    return replace(event, recovery_time=max(recovery, 0.0), classification=label)


def classify_events(traj, events: Iterable[AnomalyEvent], baseline: Baseline,
                    quiet: QuietBand = QuietBand()) -> list[AnomalyEvent]:
    return [classify_event(traj, e, baseline, quiet) for e in events]


def events_to_text(events: Iterable[AnomalyEvent]) -> str:
    out = io.StringIO()
    out.write("variable,start,end,peak_value,peak_time,threshold,recovery_time,classification\n")
    for e in events:
        rec = "" if e.recovery_time is None else repr(e.recovery_time)
        out.write(f"{e.variable},{e.start!r},{e.end!r},{e.peak_value!r},{e.peak_time!r},"
                  f"{e.threshold!r},{rec},{e.classification or ''}\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# collocation of extremes


@dataclass(frozen=True)
class CollocationReport:
    """Values of one channel at the per-run extreme instants of another.

    ``conditional[(a, b, "max")]`` holds channel ``b`` at each run's
    maximum of ``a``.  ``ks_marginal`` compares each conditional sample with
    the pooled marginal of ``b``; ``ks_max_min`` compares the max- and
    min-conditioned samples with each other.
    """

    conditional: dict
    percentiles: dict
    ks_marginal: dict
    ks_max_min: dict
    levels: tuple[float, ...]

    @property
    def max_ks(self) -> float:
        return max(self.ks_marginal.values())

    def to_text(self) -> str:
        out = io.StringIO()
        out.write("extreme_of,value_of,which,ks_vs_marginal," +
                  ",".join(f"p{lv:g}" for lv in self.levels) + "\n")
        for key, ks in self.ks_marginal.items():
            a, b, which = key
            out.write(f"{a},{b},{which},{ks!r}," +
                      ",".join(repr(float(v)) for v in self.percentiles[key]) + "\n")
        return out.getvalue()


def extreme_collocation(trajectories: Iterable, a: str = "heave", b: str = "pitch",
                        levels: Sequence[float] = (5, 50, 95)) -> CollocationReport:
    """Cross-conditional distributions at per-run extremes of ``a`` and ``b``."""
    trajs = [tr for tr in trajectories if len(np.asarray(tr["time"])) > 0]
    if not trajs:
        raise ValueError("no trajectories")
    levels = tuple(float(v) for v in levels)
    cond, pct, ks_m, ks_mm = {}, {}, {}, {}
    for first, second in ((a, b), (b, a)):
        marginal = np.concatenate([np.asarray(tr[second], dtype=float) for tr in trajs])
        for which, pick in (("max", np.argmax), ("min", np.argmin)):
            vals = np.array([np.asarray(tr[second], dtype=float)[int(pick(np.asarray(tr[first])))]
                             for tr in trajs])
            key = (first, second, which)
            cond[key] = vals
            pct[key] = np.percentile(vals, levels)
            ks_m[key] = float(stats.ks_2samp(vals, marginal).statistic)
        ks_mm[(first, second)] = float(stats.ks_2samp(cond[(first, second, "max")],
                                                      cond[(first, second, "min")]).statistic)
    return CollocationReport(cond, pct, ks_m, ks_mm, levels)


# ---------------------------------------------------------------------------
# wind/wave attribution over counterfactual runs


@dataclass(frozen=True)
class AttributionReport:
    variable: str
    same_wind: tuple[float, ...]     # correlation with the source per run
    same_wave: tuple[float, ...]
    threshold: float

    @property
    def wind_consistent(self) -> bool:
        return (bool(self.same_wind) and min(self.same_wind) > self.threshold
                and not (self.same_wave and min(self.same_wave) > self.threshold))

    @property
    def wave_consistent(self) -> bool:
        return (bool(self.same_wave) and min(self.same_wave) > self.threshold
                and not (self.same_wind and min(self.same_wind) > self.threshold))


def _correlation(x, y) -> float:
    x = x - x.mean()
    y = y - y.mean()
    den = math.sqrt(float(x @ x) * float(y @ y))
    return float(x @ y / den) if den > 0 else 0.0


def attribution_report(source, same_wind: Iterable, same_wave: Iterable,
                       variable: str = "pitch", window: tuple[float, float] | None = None,
                       threshold: float = 0.5) -> AttributionReport:
    """Does an event signature survive when only the wind (or wave) is kept?

    Scores are zero-lag correlation coefficients of ``variable`` between the
    source and each counterfactual, optionally restricted to ``window``.
    """
    t, xs = _series(source, variable)
    sel = np.ones(t.size, bool) if window is None else (t >= window[0]) & (t <= window[1])

    def scores(runs):
        out = []
        for tr in runs:
            tt, x = _series(tr, variable)
            n = min(tt.size, t.size)
            s = sel[:n]
            out.append(_correlation(xs[:n][s], x[:n][s]))
        return tuple(out)

    return AttributionReport(variable, scores(same_wind), scores(same_wave), threshold)
