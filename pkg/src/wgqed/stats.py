"""Photon-counting statistics from detection events.

All estimators work on the step lattice of the engine: a waiting time is an
integer number of steps ``k >= 1`` and a histogram bin of ``m`` steps holds
``k in {j*m + 1, ..., (j+1)*m}``, i.e. the time interval ``(j*m*dt, (j+1)*m*dt]``.
Counts are integers, so merging partial histograms is exact and
order-independent.

Normalization: densities divide by *all* samples, including those beyond the
last bin (kept as ``overflow``).  The in-range density therefore integrates to
the in-range fraction, and ``W(0)`` is not inflated by truncating the tail.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.ndimage import correlate1d

from . import master
from .errors import ConfigurationError, DarkChannelError, StatisticsError
from .events import EventTable, channel_code
from .hilbert import LindbladGenerator, Operator
from .master import CorrelationCurve

NORMALIZATIONS = ("density", "per-mean-tau")


@dataclass(frozen=True)
class WaitingTimeSeries:
    """Same-channel waiting times, in steps, with the trajectory each came from."""

    channel: str
    steps: np.ndarray
    trajectory: np.ndarray
    dt: float

    def __post_init__(self):
        steps = np.asarray(self.steps, dtype=np.int64)
        traj = np.asarray(self.trajectory, dtype=np.int64)
        if steps.shape != traj.shape:
            raise ConfigurationError("waits and trajectory ids differ in length")
        if steps.size and steps.min() < 1:
            raise StatisticsError("waiting times must be positive")
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "trajectory", traj)

    def __len__(self) -> int:
        return self.steps.size

    @property
    def taus(self) -> np.ndarray:
        return self.steps * self.dt

    @property
    def mean(self) -> float:
        if not self.steps.size:
            raise StatisticsError("no waiting times")
        return float(self.steps.mean()) * self.dt

    def adjacent_pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """``(τᵢ, τᵢ₊₁)`` in steps for consecutive waits of the same trajectory."""
        same = self.trajectory[1:] == self.trajectory[:-1]
        return self.steps[:-1][same], self.steps[1:][same]


def waiting_times(events: EventTable, channel: str, burn_in: float = 0.0) -> WaitingTimeSeries:
    """Intervals between consecutive ``channel`` events at or after ``burn_in``.

    ``channel="both"`` merges the two channels into one detection stream.
    """
    sel = events.select(channel)
    keep = sel.steps * events.dt >= burn_in - 1e-12
    steps, traj = sel.steps[keep], sel.trajectory[keep]
    same = traj[1:] == traj[:-1]
    waits = (steps[1:] - steps[:-1])[same]
    return WaitingTimeSeries(channel, waits, traj[1:][same], events.dt)


def _check_geometry(dt: float, width_steps: int, n_bins: int) -> None:
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    if width_steps < 1:
        raise ConfigurationError("bin width below the engine time step")
    if n_bins < 1:
        raise ConfigurationError("need at least one bin")


def bin_geometry(dt: float, bins: int, tau_max: float) -> int:
    """Bin width in steps for ``bins`` bins over ``(0, tau_max]``, snapped to the lattice."""
    if bins < 1 or not tau_max > 0:
        raise ConfigurationError("bins and tau_max must be positive")
    width = tau_max / bins
    if width < dt * (1 - 1e-9):
        raise ConfigurationError(f"bin width {width:.4g} is below dt = {dt:.4g}")
    return max(1, int(round(width / dt)))


@dataclass(frozen=True, eq=False)
class Histogram1D:
    """Mergeable histogram of positive lattice times.

    Attributes:
        dt: Lattice spacing.
        width_steps: Bin width in steps.
        counts: Integer counts per bin.
        overflow: Samples beyond the last bin.
        sample_sum: Sum of all samples in steps, for the mean.
        normalization: ``"density"`` or ``"per-mean-tau"``; selects :meth:`values`.
    """

    dt: float
    width_steps: int
    counts: np.ndarray
    overflow: int = 0
    sample_sum: int = 0
    normalization: str = "per-mean-tau"

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1:
            raise ConfigurationError("1-d histogram needs 1-d counts")
        _check_geometry(self.dt, self.width_steps, counts.size)
        if counts.min(initial=0) < 0 or self.overflow < 0:
            raise ConfigurationError("counts must be nonnegative")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigurationError(f"unknown normalization {self.normalization!r}")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def empty(cls, dt: float, width_steps: int, n_bins: int, normalization: str = "per-mean-tau"):
        return cls(dt, width_steps, np.zeros(n_bins, dtype=np.int64), 0, 0, normalization)

    @classmethod
    def from_steps(cls, steps: np.ndarray, dt: float, width_steps: int, n_bins: int,
                   normalization: str = "per-mean-tau") -> Histogram1D:
        steps = np.asarray(steps, dtype=np.int64)
        idx = (steps - 1) // width_steps
        inside = idx < n_bins
        counts = np.bincount(idx[inside], minlength=n_bins)
        return cls(dt, width_steps, counts, int(np.sum(~inside)), int(steps.sum()), normalization)

    @property
    def n_bins(self) -> int:
        return self.counts.size

    @property
    def total_samples(self) -> int:
        return int(self.counts.sum()) + self.overflow

    @property
    def width(self) -> float:
        return self.width_steps * self.dt

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.n_bins + 1) * self.width

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_bins) + 0.5) * self.width

    @property
    def mean(self) -> float:
        """Sample mean τ̄ of all samples, overflow included."""
        if not self.total_samples:
            raise StatisticsError("empty histogram has no mean")
        return self.sample_sum * self.dt / self.total_samples

    def density(self) -> tuple[np.ndarray, np.ndarray]:
        """Probability density per unit time and its Poisson standard error."""
        n = self.total_samples
        if not n:
            raise StatisticsError("empty histogram")
        scale = 1.0 / (n * self.width)
        return self.counts * scale, np.sqrt(np.maximum(self.counts, 1)) * scale

    def values(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(x, W, stderr)`` in the selected normalization.

        ``per-mean-tau`` reports ``x = τ/τ̄`` and ``W = τ̄ × density``, so a
        Poisson stream gives ``W(0) = 1``.
        """
        d, e = self.density()
        if self.normalization == "density":
            return self.centers, d, e
        tb = self.mean
        return self.centers / tb, d * tb, e * tb

    def integral(self) -> float:
        d, _ = self.density()
        return float(d.sum() * self.width)

    def geometry(self) -> tuple:
        return (self.dt, self.width_steps, self.n_bins, self.normalization)

    def __eq__(self, other: object) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return (self.geometry() == other.geometry() and np.array_equal(self.counts, other.counts)
                and self.overflow == other.overflow and self.sample_sum == other.sample_sum
                and getattr(self, "marginal_samples", 0) == getattr(other, "marginal_samples", 0))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Histogram2D:
    """Mergeable joint histogram of adjacent lattice-time pairs (same bins on both axes)."""

    dt: float
    width_steps: int
    counts: np.ndarray
    overflow: int = 0
    normalization: str = "per-mean-tau"
    sample_sum: int = 0
    marginal_samples: int = 0

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ConfigurationError("2-d histogram needs a square count grid")
        _check_geometry(self.dt, self.width_steps, counts.shape[0])
        if counts.min(initial=0) < 0 or self.overflow < 0:
            raise ConfigurationError("counts must be nonnegative")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigurationError(f"unknown normalization {self.normalization!r}")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_pairs(cls, a: np.ndarray, b: np.ndarray, dt: float, width_steps: int, n_bins: int,
                   normalization: str = "per-mean-tau", sample_sum: int = 0,
                   marginal_samples: int = 0) -> Histogram2D:
        ia = (np.asarray(a, dtype=np.int64) - 1) // width_steps
        ib = (np.asarray(b, dtype=np.int64) - 1) // width_steps
        inside = (ia < n_bins) & (ib < n_bins)
        flat = np.bincount(ia[inside] * n_bins + ib[inside], minlength=n_bins * n_bins)
        return cls(dt, width_steps, flat.reshape(n_bins, n_bins), int(np.sum(~inside)),
                   normalization, sample_sum, marginal_samples)

    @property
    def n_bins(self) -> int:
        return self.counts.shape[0]

    @property
    def total_samples(self) -> int:
        return int(self.counts.sum()) + self.overflow

    @property
    def width(self) -> float:
        return self.width_steps * self.dt

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_bins) + 0.5) * self.width

    @property
    def mean(self) -> float:
        """τ̄ of the underlying single waits."""
        if not self.marginal_samples:
            raise StatisticsError("no waiting-time mean recorded")
        return self.sample_sum * self.dt / self.marginal_samples

    def density(self) -> tuple[np.ndarray, np.ndarray]:
        n = self.total_samples
        if not n:
            raise StatisticsError("empty histogram")
        scale = 1.0 / (n * self.width ** 2)
        return self.counts * scale, np.sqrt(np.maximum(self.counts, 1)) * scale

    def values(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        d, e = self.density()
        if self.normalization == "density":
            return self.centers, d, e
        tb = self.mean
        return self.centers / tb, d * tb ** 2, e * tb ** 2

    def integral(self) -> float:
        d, _ = self.density()
        return float(d.sum() * self.width ** 2)

    def geometry(self) -> tuple:
        return (self.dt, self.width_steps, self.n_bins, self.normalization)

    def __eq__(self, other: object) -> bool:
        if type(other) is not type(self):
            return NotImplemented
        return (self.geometry() == other.geometry() and np.array_equal(self.counts, other.counts)
                and self.overflow == other.overflow and self.sample_sum == other.sample_sum
                and getattr(self, "marginal_samples", 0) == getattr(other, "marginal_samples", 0))

    __hash__ = None


def merge(h1, h2):
    """Add two histograms of identical geometry (exact, associative, commutative)."""
    if type(h1) is not type(h2):
        raise ConfigurationError("cannot merge histograms of different kinds")
    if h1.geometry() != h2.geometry():
        raise ConfigurationError("histogram geometries differ")
    if isinstance(h1, Histogram1D):
        return Histogram1D(h1.dt, h1.width_steps, h1.counts + h2.counts, h1.overflow + h2.overflow,
                           h1.sample_sum + h2.sample_sum, h1.normalization)
    return Histogram2D(h1.dt, h1.width_steps, h1.counts + h2.counts, h1.overflow + h2.overflow,
                       h1.normalization, h1.sample_sum + h2.sample_sum,
                       h1.marginal_samples + h2.marginal_samples)


def _absolute_tau_max(series: WaitingTimeSeries, tau_max: float, tau_bar: float | None,
                      scaled: bool) -> float:
    if not scaled:
        return tau_max
    tb = series.mean if tau_bar is None else tau_bar
    return tau_max * tb


def wtd(series: WaitingTimeSeries, bins: int = 100, tau_max: float = 4.0, *,
        tau_bar: float | None = None, scaled: bool = True) -> Histogram1D:
    """Waiting-time distribution.

    Args:
        series: Waiting times of one channel.
        bins: Number of bins.
        tau_max: Upper edge, in units of τ̄ when ``scaled`` else absolute.
        tau_bar: Fixes τ̄ for the bin geometry (needed to merge shards);
            defaults to the sample mean.
        scaled: Report ``τ/τ̄`` and ``τ̄ W`` rather than absolute units.
    """
    if not len(series):
        raise StatisticsError(f"no waiting times in channel {series.channel}")
    width = bin_geometry(series.dt, bins, _absolute_tau_max(series, tau_max, tau_bar, scaled))
    return Histogram1D.from_steps(series.steps, series.dt, width, bins,
                                  "per-mean-tau" if scaled else "density")


def awtd(series: WaitingTimeSeries, bins: int = 60, tau_max: float = 3.0, *,
         tau_bar: float | None = None, scaled: bool = True) -> Histogram2D:
    """Joint distribution of adjacent waiting times ``(τᵢ, τᵢ₊₁)``."""
    a, b = series.adjacent_pairs()
    if not a.size:
        raise StatisticsError(f"no adjacent waiting-time pairs in channel {series.channel}")
    width = bin_geometry(series.dt, bins, _absolute_tau_max(series, tau_max, tau_bar, scaled))
    return Histogram2D.from_pairs(a, b, series.dt, width, bins,
                                  "per-mean-tau" if scaled else "density",
                                  int(series.steps.sum()), len(series))


@dataclass(frozen=True)
class G2Counts:
    """Mergeable pair counts behind a histogram ``g²(τ)``.

    ``counts[j]`` counts (anchor, later event) pairs whose lag falls in bin
    ``j``; ``events`` and ``span`` give the channel flux ``events / span``.
    """

    dt: float
    width_steps: int
    counts: np.ndarray
    anchors: int
    events: int
    span: float
    channel: str = "?"

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        _check_geometry(self.dt, self.width_steps, counts.size)
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def n_bins(self) -> int:
        return self.counts.size

    @property
    def width(self) -> float:
        return self.width_steps * self.dt

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_bins) + 0.5) * self.width

    @property
    def flux(self) -> float:
        return self.events / self.span

    def curve(self) -> CorrelationCurve:
        if not self.anchors or not self.events:
            raise DarkChannelError(f"channel {self.channel} has no detections")
        scale = 1.0 / (self.anchors * self.width * self.flux)
        return CorrelationCurve(self.channel, self.centers, self.counts * scale,
                                "trajectory-histogram",
                                np.sqrt(np.maximum(self.counts, 1)) * scale)

    def merge(self, other: G2Counts) -> G2Counts:
        if (self.dt, self.width_steps, self.n_bins, self.channel) != \
                (other.dt, other.width_steps, other.n_bins, other.channel):
            raise ConfigurationError("g2 histogram geometries differ")
        return G2Counts(self.dt, self.width_steps, self.counts + other.counts,
                        self.anchors + other.anchors, self.events + other.events,
                        self.span + other.span, self.channel)


def g2_counts(events: EventTable, channel: str, bins: int, tau_max: float,
              burn_in: float = 0.0) -> G2Counts:
    """Pair counts for ``g²(τ)`` on ``(0, tau_max]`` (absolute time).

    Every event in ``[burn_in, t_end - tau_max]`` anchors, and every later
    same-channel event of the same trajectory within ``tau_max`` is counted,
    not just the next one.
    """
    dt = events.dt
    width = bin_geometry(dt, bins, tau_max)
    max_lag = width * bins
    t_end = events.t_end
    if t_end - burn_in <= max_lag * dt:
        raise ConfigurationError("trajectories are too short for the requested tau_max")
    sel = events.select(channel)
    keep = sel.steps * dt >= burn_in - 1e-12
    steps, traj = sel.steps[keep], sel.trajectory[keep]
    anchor = steps <= events.n_steps - max_lag
    counts = np.zeros(bins, dtype=np.int64)
    lag = 1
    while lag < steps.size:
        diff = steps[lag:] - steps[:-lag]
        ok = anchor[:-lag] & (traj[lag:] == traj[:-lag]) & (diff <= max_lag)
        if not ok.any():
            break
        counts += np.bincount((diff[ok] - 1) // width, minlength=bins)
        lag += 1
    span = events.n_traj * (t_end - burn_in)
    return G2Counts(dt, width, counts, int(anchor.sum()), int(steps.size), span, channel)


def g2_histogram(events: EventTable, channel: str, bins: int = 50, tau_max: float = 5.0,
                 burn_in: float = 0.0) -> CorrelationCurve:
    """Histogram estimate of the steady-state ``g²(τ)`` of one channel."""
    return g2_counts(events, channel, bins, tau_max, burn_in).curve()


def bin_average(lattice_values: np.ndarray, width_steps: int, n_bins: int) -> np.ndarray:
    """Average of values sampled at lags ``k = 1 .. n_bins*width_steps`` over each bin."""
    v = np.asarray(lattice_values, dtype=float)
    if v.size != width_steps * n_bins:
        raise ConfigurationError("lattice values do not cover the bins")
    return v.reshape(n_bins, width_steps).mean(axis=1)


def _lattice(dt: float, width_steps: int, n_bins: int) -> np.ndarray:
    return np.arange(1, width_steps * n_bins + 1) * dt


def reference_g2(gen: LindbladGenerator, j: Operator, dt: float, width_steps: int, n_bins: int,
                 channel: str = "?") -> CorrelationCurve:
    """Master-equation ``g²`` averaged over the lattice lags of each histogram bin."""
    lags = _lattice(dt, width_steps, n_bins)
    values = master.g2_master(gen, j, lags, channel).values
    centers = (np.arange(n_bins) + 0.5) * width_steps * dt
    return CorrelationCurve(channel, centers, bin_average(values, width_steps, n_bins),
                            "master-equation")


def reference_wtd(gen: LindbladGenerator, j: Operator, dt: float, width_steps: int, n_bins: int,
                  channel: str = "?") -> CorrelationCurve:
    """Exact waiting-time density per unit time, bin-averaged like :func:`reference_g2`."""
    lags = _lattice(dt, width_steps, n_bins)
    values = master.wtd_master(gen, j, lags, channel).values
    centers = (np.arange(n_bins) + 0.5) * width_steps * dt
    return CorrelationCurve(channel, centers, bin_average(values, width_steps, n_bins),
                            "master-equation")


@dataclass(frozen=True)
class Comparison:
    """Per-bin deviations ``z = (a - b) / sqrt(σa² + σb²)``."""

    z: np.ndarray
    threshold: float = 3.0
    labels: tuple[str, str] = field(default=("a", "b"))

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.z), initial=0.0))

    @property
    def fraction_within(self) -> float:
        return float(np.mean(np.abs(self.z) <= self.threshold)) if self.z.size else 1.0


def compare(a: CorrelationCurve, b: CorrelationCurve, threshold: float = 3.0) -> Comparison:
    """Compare two curves on the same τ grid in units of their combined standard error."""
    if a.taus.shape != b.taus.shape or not np.allclose(a.taus, b.taus, rtol=1e-9, atol=1e-12):
        raise ConfigurationError("curves are sampled on different τ grids")
    var = np.zeros_like(a.values)
    for c in (a, b):
        if c.stderr is not None:
            var = var + c.stderr ** 2
    if not np.all(var > 0):
        raise StatisticsError("comparison needs a positive standard error on every bin")
    return Comparison((a.values - b.values) / np.sqrt(var), threshold, (a.source, b.source))


def smooth(values: np.ndarray, variances: np.ndarray, sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian smoothing (in bins) with exact variance propagation for independent bins."""
    values = np.asarray(values, dtype=float)
    variances = np.asarray(variances, dtype=float)
    if sigma <= 0:
        return values, variances
    radius = max(1, int(math.ceil(3 * sigma)))
    x = np.arange(-radius, radius + 1)
    w = np.exp(-0.5 * (x / sigma) ** 2)
    w /= w.sum()
    for axis in range(values.ndim):
        values = correlate1d(values, w, axis=axis, mode="nearest")
        variances = correlate1d(variances, w ** 2, axis=axis, mode="nearest")
    return values, variances


def significant_maxima(values: np.ndarray, stderr: np.ndarray, threshold: float = 3.0,
                       smoothing: float = 0.0) -> list[tuple[int, ...]]:
    """Local maxima that stand out of the noise, in 1-d or 2-d.

    Cells are flooded from the top down (0-dimensional persistence).  When two
    basins meet, the lower peak is kept only if it rises above the meeting
    level by more than ``threshold`` combined standard errors.  The global
    maximum is always returned first; the rest follow in descending height.
    """
    values = np.asarray(values, dtype=float)
    var = np.asarray(stderr, dtype=float) ** 2
    values, var = smooth(values, var, smoothing)
    shape = values.shape
    flat = values.ravel()
    fvar = var.ravel()
    order = np.argsort(-flat, kind="stable")
    parent = np.full(flat.size, -1, dtype=np.int64)
    peak_of: dict[int, int] = {}
    significant: list[int] = []

    def find(i: int) -> int:
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    offsets = [o for o in np.ndindex(*(3,) * len(shape)) if any(c != 1 for c in o)]
    offsets = [tuple(c - 1 for c in o) for o in offsets]
    for i in order:
        i = int(i)
        parent[i] = i
        peak_of[i] = i
        idx = np.unravel_index(i, shape)
        roots = set()
        for off in offsets:
            nb = tuple(a + b for a, b in zip(idx, off))
            if all(0 <= c < n for c, n in zip(nb, shape)):
                k = int(np.ravel_multi_index(nb, shape))
                if parent[k] >= 0:
                    roots.add(find(k))
        if not roots:
            continue
        # The highest neighbouring basin absorbs the others and the new cell.
        ranked = sorted(roots, key=lambda r: -flat[peak_of[r]])
        top = ranked[0]
        for r in ranked[1:]:
            p = peak_of[r]
            if flat[p] - flat[i] > threshold * math.sqrt(fvar[p] + fvar[i]):
                significant.append(p)
            parent[r] = top
        parent[i] = top
    if flat.size:
        significant.insert(0, int(order[0]))
    significant.sort(key=lambda p: -flat[p])
    return [tuple(int(c) for c in np.unravel_index(p, shape)) for p in significant]
