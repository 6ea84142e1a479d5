"""Score-distribution summaries and order-statistics score estimation.

Each triple pattern's match scores are summarized by a two-bucket histogram
splitting the score axis at the rank where 80% of the cumulative score mass
is reached. The induced density is uniform within each bucket. Sums of
scores (joins) are modeled by convolving densities; expected scores at a
given rank come from inverting the cdf at rank/(n+1).
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .store import TriplePattern, TripleStore

BOUNDARY_EPS_FRACTION = 1e-6
# target max pointwise error when re-fitting a convolved density piecewise-linearly
CONV_POINTWISE_TOL = 1e-6
_MIN_SUBDIV = 8
_MAX_SUBDIV = 512
# coarsen chained convolution inputs past this many breakpoints
_MAX_INPUT_BREAKPOINTS = 4096
# hard cap on refit grid size per convolution
_MAX_TOTAL_GRID = 60_000


class NoStatsError(ValueError):
    """Pattern has no matches, so no histogram can be built."""


class DegenerateDistributionError(ValueError):
    """All-zero score mass (or zero scale factor): no usable distribution."""


class RankOutOfRangeError(ValueError):
    """Requested rank exceeds the histogram's answer count."""


def _clamp_boundary(sigma: float, u: float) -> float:
    eps = BOUNDARY_EPS_FRACTION * u
    return min(max(sigma, eps), u - eps)


@dataclass(frozen=True)
class TwoBucketHistogram:
    """Summary {m, sigma_r, s_r, s_m, u} of a pattern's score distribution.

    m answers in total; the top bucket [sigma_r, u] holds the s_r / s_m
    share of the score mass, the tail bucket [0, sigma_r) the rest.
    """

    m: int
    sigma_r: float
    s_r: float
    s_m: float
    u: float = 1.0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if not (0.0 < self.sigma_r < self.u):
            raise ValueError(f"sigma_r {self.sigma_r} outside (0, {self.u})")
        if not (0.0 < self.s_r <= self.s_m):
            raise ValueError(f"need 0 < s_r <= s_m, got s_r={self.s_r}, s_m={self.s_m}")

    @property
    def tail_mass(self) -> float:
        return (self.s_m - self.s_r) / self.s_m

    @property
    def top_mass(self) -> float:
        return self.s_r / self.s_m

    @property
    def tail_height(self) -> float:
        return self.tail_mass / self.sigma_r

    @property
    def top_height(self) -> float:
        return self.top_mass / (self.u - self.sigma_r)

    def mean(self) -> float:
        return (self.tail_mass * self.sigma_r / 2.0
                + self.top_mass * (self.u + self.sigma_r) / 2.0)

    def to_piecewise(self) -> "PiecewisePdf":
        xs = np.array([0.0, self.sigma_r, self.u])
        slopes = np.zeros(2)
        intercepts = np.array([self.tail_height, self.top_height])
        return PiecewisePdf(xs, slopes, intercepts)

    def sample(self, size, rng: np.random.Generator) -> np.ndarray:
        """Draw scores by inverse-cdf sampling."""
        p = rng.random(size)
        return self.inverse_cdf_array(p)

    def inverse_cdf_array(self, p: np.ndarray) -> np.ndarray:
        tail = self.tail_mass
        a = self.tail_height
        b = self.top_height
        c = tail - b * self.sigma_r
        if a > 0:
            lo = p / a
        else:
            lo = np.zeros_like(p)
        hi = (p - c) / b
        out = np.where(p <= tail, lo, hi)
        return np.clip(out, 0.0, self.u)


def histogram_from_scores(scores: Iterable[float], u: float = 1.0) -> TwoBucketHistogram:
    """Summarize a nonempty score sample into a two-bucket histogram.

    The bucket boundary is the score at the smallest rank whose cumulative
    (descending) score reaches 80% of the total; it is clamped into (0, u)
    so both bucket widths stay positive.
    """
    arr = np.asarray(sorted(scores, reverse=True), dtype=float)
    m = arr.size
    if m == 0:
        raise NoStatsError("empty score sample")
    s_m = float(arr.sum())
    if s_m <= 0.0:
        raise DegenerateDistributionError("total score mass is zero")
    cum = np.cumsum(arr)
    r = int(np.searchsorted(cum, 0.8 * s_m, side="left"))
    sigma = _clamp_boundary(float(arr[r]), u)
    return TwoBucketHistogram(m=m, sigma_r=sigma, s_r=float(cum[r]), s_m=s_m, u=u)


def build_histogram(store: TripleStore, pattern: TriplePattern) -> TwoBucketHistogram:
    scores = [sm.norm_score for sm in store.scan_sorted(pattern)]
    if not scores:
        raise NoStatsError(f"no matches for pattern: {pattern}")
    return histogram_from_scores(scores, u=1.0)


def pdf_eval(h: TwoBucketHistogram, x: float) -> float:
    if not (0.0 <= x <= h.u):
        raise ValueError(f"x={x} outside [0, {h.u}]")
    return h.tail_height if x < h.sigma_r else h.top_height


def cdf_eval(h: TwoBucketHistogram, x: float) -> float:
    if not (0.0 <= x <= h.u):
        raise ValueError(f"x={x} outside [0, {h.u}]")
    if x < h.sigma_r:
        return h.tail_height * x
    b = h.top_height
    c = h.tail_mass - b * h.sigma_r
    return min(b * x + c, 1.0)


def _histogram_inverse_cdf(h: TwoBucketHistogram, p: float) -> float:
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"p={p} outside [0, 1]")
    if p <= 0.0:
        return 0.0
    tail = h.tail_mass
    if p <= tail and h.tail_height > 0:
        return p / h.tail_height
    b = h.top_height
    c = tail - b * h.sigma_r
    return min((p - c) / b, h.u)


def inverse_cdf(dist: "TwoBucketHistogram | PiecewisePdf", p: float) -> float:
    """Smallest x with F(x) >= p, exact per linear (or quadratic) segment."""
    if isinstance(dist, TwoBucketHistogram):
        return _histogram_inverse_cdf(dist, p)
    return dist.inverse_cdf(p)


class PiecewisePdf:
    """Density that is linear between consecutive breakpoints on [0, u].

    Segment i covers [breakpoints[i], breakpoints[i+1]) with density
    slopes[i] * (x - breakpoints[i]) + intercepts[i]; the intercept is the
    density at the segment's left edge. Keeping segment coefficients in
    local coordinates avoids catastrophic cancellation when convolved
    spikes produce very narrow segments far from the origin.
    """

    __slots__ = ("breakpoints", "slopes", "intercepts", "_cum_mass", "_cum_moment")

    def __init__(self, breakpoints: np.ndarray, slopes: np.ndarray, intercepts: np.ndarray):
        bp = np.asarray(breakpoints, dtype=float)
        if bp.size < 2 or np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly ascending with >= 2 entries")
        self.breakpoints = bp
        self.slopes = np.asarray(slopes, dtype=float)
        self.intercepts = np.asarray(intercepts, dtype=float)
        x0 = bp[:-1]
        dx = np.diff(bp)
        seg_mass = self.intercepts * dx + self.slopes * dx ** 2 / 2.0
        # integral of x*f(x): x0 * mass + local first moment
        seg_local = self.intercepts * dx ** 2 / 2.0 + self.slopes * dx ** 3 / 3.0
        seg_moment = x0 * seg_mass + seg_local
        self._cum_mass = np.concatenate([[0.0], np.cumsum(seg_mass)])
        self._cum_moment = np.concatenate([[0.0], np.cumsum(seg_moment)])

    @classmethod
    def from_points(cls, xs: np.ndarray, ys: np.ndarray) -> "PiecewisePdf":
        """Continuous piecewise-linear density through the sample points."""
        xs = np.asarray(xs, dtype=float)
        ys = np.maximum(np.asarray(ys, dtype=float), 0.0)
        keep = np.concatenate([[True], np.diff(xs) > 0])
        xs, ys = xs[keep], ys[keep]
        dx = np.diff(xs)
        slopes = np.diff(ys) / dx
        return cls(xs, slopes, ys[:-1])

    @property
    def u(self) -> float:
        return float(self.breakpoints[-1])

    def total_mass(self) -> float:
        return float(self._cum_mass[-1])

    def mean(self) -> float:
        return float(self._cum_moment[-1])

    def _segment_of(self, x: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.breakpoints, x, side="right") - 1
        return np.clip(idx, 0, len(self.slopes) - 1)

    def pdf_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        i = self._segment_of(x)
        return self.intercepts[i] + self.slopes[i] * (x - self.breakpoints[i])

    def cdf_at(self, x) -> np.ndarray:
        """Cdf clamped outside the support (0 below, total mass above)."""
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, self.breakpoints[0], self.breakpoints[-1])
        i = self._segment_of(xc)
        t = xc - self.breakpoints[i]
        return self._cum_mass[i] + self.intercepts[i] * t + self.slopes[i] * t ** 2 / 2.0

    def moment_at(self, x) -> np.ndarray:
        """Cumulative first moment, integral of t*f(t) over [0, x]."""
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, self.breakpoints[0], self.breakpoints[-1])
        i = self._segment_of(xc)
        x0 = self.breakpoints[i]
        t = xc - x0
        part_mass = self.intercepts[i] * t + self.slopes[i] * t ** 2 / 2.0
        part_local = self.intercepts[i] * t ** 2 / 2.0 + self.slopes[i] * t ** 3 / 3.0
        return self._cum_moment[i] + x0 * part_mass + part_local

    def normalized(self) -> "PiecewisePdf":
        mass = self.total_mass()
        if mass <= 0:
            raise DegenerateDistributionError("piecewise density has zero mass")
        return PiecewisePdf(self.breakpoints, self.slopes / mass, self.intercepts / mass)

    def inverse_cdf(self, p: float) -> float:
        if not (0.0 <= p <= 1.0):
            raise ValueError(f"p={p} outside [0, 1]")
        target = p * self.total_mass()
        i = int(np.searchsorted(self._cum_mass, target, side="left")) - 1
        i = min(max(i, 0), len(self.slopes) - 1)
        # walk forward past zero-mass segments so we return the smallest x
        while i < len(self.slopes) - 1 and self._cum_mass[i + 1] < target:
            i += 1
        lo, hi = float(self.breakpoints[i]), float(self.breakpoints[i + 1])
        rem = target - self._cum_mass[i]
        if rem <= 0:
            return lo
        s, y0 = self.slopes[i], self.intercepts[i]
        width = hi - lo
        if abs(s) * width < 1e-14 * max(y0, 1e-300):
            if y0 <= 0:
                return hi
            return float(min(lo + rem / y0, hi))
        # solve s/2 t^2 + y0 t = rem for local offset t in [0, width]
        disc = max(y0 * y0 + 2.0 * s * rem, 0.0)
        if s > 0:
            t = (-y0 + math.sqrt(disc)) / s
        else:
            t = (-y0 + math.sqrt(disc)) / s
            if not (0.0 <= t <= width):
                t = (-y0 - math.sqrt(disc)) / s
        return float(min(max(lo + t, lo), hi))

    def score_mass_boundary(self, top_fraction: float) -> float:
        """x with the top `top_fraction` of the first moment above it."""
        mu = self.mean()
        if mu <= 0:
            raise DegenerateDistributionError("zero mean density")
        target = (1.0 - top_fraction) * mu
        i = int(np.searchsorted(self._cum_moment, target, side="left")) - 1
        i = min(max(i, 0), len(self.slopes) - 1)
        while i < len(self.slopes) - 1 and self._cum_moment[i + 1] < target:
            i += 1
        lo, hi = float(self.breakpoints[i]), float(self.breakpoints[i + 1])
        # bisection on the exact cumulative moment within the segment
        for _ in range(100):
            mid = (lo + hi) / 2.0
            if float(self.moment_at(mid)) < target:
                lo = mid
            else:
                hi = mid
        return (lo + hi) / 2.0


def _two_bucket_pieces(h: TwoBucketHistogram) -> list[tuple[float, float, float]]:
    return [(0.0, h.sigma_r, h.tail_height), (h.sigma_r, h.u, h.top_height)]


def _merge_breakpoints(points: np.ndarray, scale: float) -> np.ndarray:
    pts = np.unique(points)
    keep = np.concatenate([[True], np.diff(pts) > 1e-15 * max(scale, 1.0)])
    return pts[keep]


def _convolve_const_const(h1: TwoBucketHistogram, h2: TwoBucketHistogram) -> PiecewisePdf:
    p1 = _two_bucket_pieces(h1)
    p2 = _two_bucket_pieces(h2)
    sums = [a + b for a in (0.0, h1.sigma_r, h1.u) for b in (0.0, h2.sigma_r, h2.u)]
    xs = _merge_breakpoints(np.array(sums), h1.u + h2.u)
    ys = np.zeros_like(xs)
    for a1, b1, ht1 in p1:
        for a2, b2, ht2 in p2:
            lo = np.maximum(a1, xs - b2)
            hi = np.minimum(b1, xs - a2)
            ys += ht1 * ht2 * np.maximum(hi - lo, 0.0)
    return PiecewisePdf.from_points(xs, ys).normalized()


def _coarsen(pdf: PiecewisePdf, max_points: int) -> PiecewisePdf:
    """Thin a dense density to an equal-mass grid merged with a uniform one.

    Quantile points keep narrow spikes resolved; the uniform grid keeps
    zero-mass stretches from collapsing.
    """
    n = len(pdf.breakpoints)
    if n <= max_points:
        return pdf
    qs = np.linspace(0.0, 1.0, max_points // 2)
    quantile_pts = np.array([pdf.inverse_cdf(q) for q in qs])
    uniform_pts = np.linspace(pdf.breakpoints[0], pdf.breakpoints[-1], max_points // 2)
    xs = _merge_breakpoints(np.concatenate([quantile_pts, uniform_pts]), pdf.u)
    ys = pdf.pdf_at(xs)
    return PiecewisePdf.from_points(xs, ys).normalized()


def _convolve_linear_const(f1: PiecewisePdf, h2: TwoBucketHistogram) -> PiecewisePdf:
    f1 = _coarsen(f1, _MAX_INPUT_BREAKPOINTS)
    shifts = np.array([0.0, h2.sigma_r, h2.u])
    base = _merge_breakpoints(
        (f1.breakpoints[:, None] + shifts[None, :]).ravel(), f1.u + h2.u)
    pieces = _two_bucket_pieces(h2)

    # per interval the result is one quadratic; pick subdivisions from its
    # exact second derivative so linear refit error stays under tolerance
    mids = (base[:-1] + base[1:]) / 2.0
    curw = np.zeros_like(mids)
    for a2, b2, ht in pieces:
        curw += ht * (_slope_at(f1, mids - a2) - _slope_at(f1, mids - b2))
    widths = np.diff(base)
    need = widths * np.sqrt(np.abs(curw) / (8.0 * CONV_POINTWISE_TOL))
    n_sub = np.clip(np.ceil(need), _MIN_SUBDIV, _MAX_SUBDIV).astype(int)
    total = int(n_sub.sum())
    if total > _MAX_TOTAL_GRID:
        scale = _MAX_TOTAL_GRID / total
        n_sub = np.maximum((n_sub * scale).astype(int), 2)

    grids = [np.linspace(base[i], base[i + 1], n_sub[i], endpoint=False) for i in range(len(widths))]
    xs = np.concatenate(grids + [base[-1:]])
    ys = np.zeros_like(xs)
    for a2, b2, ht in pieces:
        ys += ht * (f1.cdf_at(xs - a2) - f1.cdf_at(xs - b2))
    return PiecewisePdf.from_points(xs, ys).normalized()


def _slope_at(f: PiecewisePdf, x: np.ndarray) -> np.ndarray:
    inside = (x >= f.breakpoints[0]) & (x <= f.breakpoints[-1])
    i = f._segment_of(np.clip(x, f.breakpoints[0], f.breakpoints[-1]))
    return np.where(inside, f.slopes[i], 0.0)


def convolve(f1: "TwoBucketHistogram | PiecewisePdf", f2: TwoBucketHistogram) -> PiecewisePdf:
    """Density of the sum of two independent scores, support [0, u1+u2]."""
    if isinstance(f1, TwoBucketHistogram):
        return _convolve_const_const(f1, f2)
    return _convolve_linear_const(f1, f2)


def rebucket(f: PiecewisePdf, count: int) -> TwoBucketHistogram:
    """Collapse a convolved density back to a two-bucket summary.

    The boundary is the continuous 80% score-mass point: the x above which
    the integral of t*f(t) holds 80% of the mean.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    u = f.u
    mass = f.total_mass()
    if mass <= 0:
        raise DegenerateDistributionError("zero-mass density")
    mu = f.mean() / mass
    if mu <= 0:
        raise DegenerateDistributionError("zero-mean density (point mass at 0)")
    sigma = _clamp_boundary(f.score_mass_boundary(0.8), u)
    s_m = count * mu
    return TwoBucketHistogram(m=count, sigma_r=sigma, s_r=0.8 * s_m, s_m=s_m, u=u)


def estimate_join_count(counts: Sequence[int], selectivities: Sequence[float]) -> int:
    """Left-deep fold of m <- round(m * m' * phi), half-up, floored at 0."""
    if len(counts) != len(selectivities) + 1:
        raise ValueError(f"need len(counts) == len(selectivities) + 1, "
                         f"got {len(counts)} and {len(selectivities)}")
    if not counts:
        raise ValueError("counts must be nonempty")
    m = int(counts[0])
    for nxt, phi in zip(counts[1:], selectivities):
        m = max(int(math.floor(m * nxt * phi + 0.5)), 0)
    return m


def expected_score_at_rank(h: TwoBucketHistogram, rank: int) -> float:
    """Expected score of the rank-th highest of h.m answers (rank 1 = top)."""
    n = h.m
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    if rank > n:
        raise RankOutOfRangeError(f"rank {rank} exceeds answer count {n}")
    return _histogram_inverse_cdf(h, (n + 1 - rank) / (n + 1))


def scale_histogram(h: TwoBucketHistogram, w: float) -> TwoBucketHistogram:
    """Pushforward of the score distribution under x -> w*x."""
    if w <= 0.0:
        raise DegenerateDistributionError(f"scale factor must be positive, got {w}")
    if w > 1.0:
        raise ValueError(f"scale factor must be <= 1, got {w}")
    if w == 1.0:
        return h
    return TwoBucketHistogram(m=h.m, sigma_r=h.sigma_r * w, s_r=h.s_r * w,
                              s_m=h.s_m * w, u=h.u * w)


class PatternStatsCatalog:
    """Lazy per-pattern histogram cache with a persisted TSV sidecar.

    The sidecar is tied to the store's ingest checksum; a stale sidecar is
    ignored and rebuilt. Concurrent reads are fine, inserts take a lock.
    """

    def __init__(self, store: TripleStore, path: str | Path | None = None):
        self.store = store
        self.path = Path(path) if path is not None else None
        self._cache: dict[str, TwoBucketHistogram] = {}
        self._empty: set[str] = set()
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load_sidecar()

    @staticmethod
    def pattern_key(pattern: TriplePattern) -> str:
        return str(pattern.canonical())

    def get(self, pattern: TriplePattern) -> TwoBucketHistogram:
        h = self.get_or_none(pattern)
        if h is None:
            raise NoStatsError(f"no matches for pattern: {pattern}")
        return h

    def get_or_none(self, pattern: TriplePattern) -> TwoBucketHistogram | None:
        key = self.pattern_key(pattern)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
            if key in self._empty:
                return None
        try:
            h = build_histogram(self.store, pattern)
        except NoStatsError:
            with self._lock:
                self._empty.add(key)
            return None
        with self._lock:
            self._cache.setdefault(key, h)
        return self._cache[key]

    def prebuild(self, patterns: Iterable[TriplePattern]) -> None:
        for p in patterns:
            self.get_or_none(p)

    def __len__(self) -> int:
        return len(self._cache)

    # ------------------------------------------------------------------
    # sidecar persistence: key<TAB>m<TAB>sigma_r<TAB>s_r<TAB>s_m<TAB>u

    def save(self, path: str | Path | None = None) -> Path:
        path = Path(path) if path is not None else self.path
        if path is None:
            raise ValueError("no sidecar path configured")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"#checksum\t{self.store.checksum}\n")
            for key in sorted(self._cache):
                h = self._cache[key]
                fh.write(f"{key}\t{h.m}\t{h.sigma_r!r}\t{h.s_r!r}\t{h.s_m!r}\t{h.u!r}\n")
        return path

    def _load_sidecar(self) -> None:
        with open(self.path, "r", encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split("\t")
            if len(header) != 2 or header[0] != "#checksum":
                return
            if header[1] != self.store.checksum:
                return  # stale: store content changed since the sidecar was written
            for line in fh:
                if not line.strip():
                    continue
                key, m, sigma, s_r, s_m, u = line.rstrip("\n").split("\t")
                self._cache[key] = TwoBucketHistogram(
                    m=int(m), sigma_r=float(sigma), s_r=float(s_r),
                    s_m=float(s_m), u=float(u))
