"""
Empirical Mode Decomposition.

  find_extrema
  natural_cubic_spline
  spline_envelope
  envelopes / mean_envelope
  sift_once
  is_imf
  decompose

A signal is sifted by repeatedly subtracting the mean of its upper and lower
cubic-spline envelopes until the candidate satisfies the IMF conditions, the
accepted IMF is removed, and the procedure repeats on the remainder until it
is monotonic or has at most one extremum.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import solve_banded

logger = logging.getLogger(__name__)

BOUNDARY_POLICIES = ("mirror", "clamped")
# residual variation below this fraction of max|input| is round-off, not signal
NEGLIGIBLE = 1e-12


class InsufficientExtremaError(ValueError):
    """The signal has too few extrema to build both envelopes."""


@dataclass(frozen=True)
class EmdConfig:
    max_sift_iters: int = 100
    zero_mean_tol: float = 0.05
    max_imfs: int = 12
    boundary: str = "mirror"
    count_slack: int = 1

    def __post_init__(self):
        if self.max_sift_iters < 1:
            raise ValueError("max_sift_iters must be >= 1")
        if not self.zero_mean_tol > 0:
            raise ValueError("zero_mean_tol must be positive")
        if self.max_imfs < 0:
            raise ValueError("max_imfs must be >= 0")
        if self.boundary not in BOUNDARY_POLICIES:
            raise ValueError(f"boundary must be one of {BOUNDARY_POLICIES}")

    def to_dict(self) -> dict:
        return asdict(self)


class ExtremaSet(NamedTuple):
    max_idx: np.ndarray
    max_val: np.ndarray
    min_idx: np.ndarray
    min_val: np.ndarray

    @property
    def maxima(self) -> list[tuple[int, float]]:
        return list(zip(self.max_idx.tolist(), self.max_val.tolist()))

    @property
    def minima(self) -> list[tuple[int, float]]:
        return list(zip(self.min_idx.tolist(), self.min_val.tolist()))

    @property
    def count(self) -> int:
        return self.max_idx.size + self.min_idx.size


class EnvelopePair(NamedTuple):
    upper: np.ndarray
    lower: np.ndarray
    mean: np.ndarray


class SiftCandidate(NamedTuple):
    d: np.ndarray
    iterations: int


class ImfCheck(NamedTuple):
    ok: bool
    n_extrema: int
    n_zero_crossings: int
    max_mean_deviation: float
    tolerance: float


@dataclass
class ImfSet:
    """Ordered IMFs (highest frequency first) plus the final residual."""

    imfs: np.ndarray
    residual: np.ndarray
    sift_counts: list[int] = field(default_factory=list)
    converged: list[bool] = field(default_factory=list)
    config: EmdConfig = field(default_factory=EmdConfig)

    @property
    def n_imfs(self) -> int:
        return self.imfs.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.imfs.sum(axis=0) + self.residual

    def as_channels(self) -> np.ndarray:
        """N x (n_imfs + 1) matrix; the residual is the last column."""
        return np.column_stack([*self.imfs, self.residual])


# ---------------------------------------------------------------------------
# extrema and zero crossings


def find_extrema(signal) -> ExtremaSet:
    """Strict interior local maxima and minima.

    A flat run of equal samples bounded on both sides by lower (higher)
    samples counts as one maximum (minimum) located at its midpoint,
    rounded down. Runs touching either end of the signal are ignored.
    """
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim != 1 or x.size < 3:
        raise ValueError("find_extrema needs a 1-D signal of length >= 3")

    # collapse plateaus into runs: run k spans [starts[k], ends[k]]
    change = np.flatnonzero(np.diff(x) != 0)
    starts = np.concatenate(([0], change + 1))
    ends = np.concatenate((change, [x.size - 1]))
    run_vals = x[starts]
    if run_vals.size < 3:
        empty_i, empty_v = np.empty(0, dtype=np.int64), np.empty(0)
        return ExtremaSet(empty_i, empty_v, empty_i.copy(), empty_v.copy())

    mid = run_vals[1:-1]
    is_max = (mid > run_vals[:-2]) & (mid > run_vals[2:])
    is_min = (mid < run_vals[:-2]) & (mid < run_vals[2:])
    centres = (starts[1:-1] + ends[1:-1]) // 2

    max_idx = centres[is_max].astype(np.int64)
    min_idx = centres[is_min].astype(np.int64)
    return ExtremaSet(max_idx, x[max_idx], min_idx, x[min_idx])


def count_zero_crossings(signal) -> int:
    """Strict sign changes plus one per run of exact zeros."""
    s = np.sign(np.asarray(signal, dtype=np.float64))
    strict = int(np.count_nonzero(s[:-1] * s[1:] < 0))
    zero = s == 0
    zero_runs = int(np.count_nonzero(zero[1:] & ~zero[:-1])) + int(zero[0]) if zero.size else 0
    return strict + zero_runs


# ---------------------------------------------------------------------------
# splines and envelopes


def natural_cubic_spline(x, y, xq) -> np.ndarray:
    """Evaluate the natural cubic spline through (x, y) at ``xq``.

    ``x`` must be strictly increasing with at least two knots. Queries
    outside the knot range extend the end cubic pieces.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xq = np.asarray(xq, dtype=np.float64)
    n = x.size
    if n < 2:
        raise ValueError("natural cubic spline needs at least 2 knots")
    h = np.diff(x)
    if np.any(h <= 0):
        raise ValueError("spline knots must be strictly increasing")

    m = np.zeros(n)
    if n > 2:
        slope = np.diff(y) / h
        rhs = 6.0 * np.diff(slope)
        ab = np.zeros((3, n - 2))
        ab[0, 1:] = h[1:-1]
        ab[1, :] = 2.0 * (h[:-1] + h[1:])
        ab[2, :-1] = h[1:-1]
        m[1:-1] = solve_banded((1, 1), ab, rhs)

    j = np.clip(np.searchsorted(x, xq, side="right") - 1, 0, n - 2)
    hj = h[j]
    a = x[j + 1] - xq
    b = xq - x[j]
    return (m[j] * a**3 + m[j + 1] * b**3) / (6.0 * hj) \
        + (y[j] / hj - m[j] * hj / 6.0) * a \
        + (y[j + 1] / hj - m[j + 1] * hj / 6.0) * b


def _mirror_knots(idx, val, domain_length, nbsym=2):
    last = domain_length - 1
    left = [(-i, v) for i, v in zip(idx[:nbsym], val[:nbsym]) if i > 0]
    right = [(2 * last - i, v) for i, v in zip(idx[-nbsym:], val[-nbsym:]) if i < last]
    left.reverse()
    right.reverse()
    xs = [p for p, _ in left] + list(idx) + [p for p, _ in right]
    ys = [v for _, v in left] + list(val) + [v for _, v in right]
    return np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)


def _clamped_knots(idx, val, domain_length):
    last = domain_length - 1
    xs, ys = list(idx), list(val)
    if xs[0] > 0:
        xs.insert(0, 0)
        ys.insert(0, ys[0])
    if xs[-1] < last:
        xs.append(last)
        ys.append(ys[-1])
    return np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)


def spline_envelope(knots, domain_length: int, boundary: str = "mirror", nbsym: int = 2) -> np.ndarray:
    """Cubic-spline envelope through ``knots`` sampled at 0..domain_length-1.

    Parameters
    ----------
    knots : sequence of (index, value)
        Extrema positions, strictly increasing.
    domain_length : int
        Length of the output.
    boundary : {'mirror', 'clamped'}
        ``mirror`` reflects the ``nbsym`` outermost knots about each end of the
        domain. ``clamped`` pins the envelope at both ends to the value of the
        nearest knot.

    Returns
    -------
    ndarray
        Envelope of length ``domain_length``. With fewer than two original
        knots the extended knots are joined linearly instead.
    """
    if boundary not in BOUNDARY_POLICIES:
        raise ValueError(f"unknown boundary policy {boundary!r}")
    if len(knots) == 0:
        raise InsufficientExtremaError("no knots to build an envelope from")
    idx = np.asarray([k[0] for k in knots], dtype=np.int64)
    val = np.asarray([k[1] for k in knots], dtype=np.float64)
    if np.any(np.diff(idx) <= 0):
        raise ValueError("knot indices must be strictly increasing")

    if boundary == "mirror":
        xs, ys = _mirror_knots(idx, val, domain_length, nbsym)
    else:
        xs, ys = _clamped_knots(idx, val, domain_length)

    grid = np.arange(domain_length, dtype=np.float64)
    if xs.size == 1:
        return np.full(domain_length, ys[0])
    if idx.size < 2:
        return np.interp(grid, xs, ys)
    return natural_cubic_spline(xs, ys, grid)


def envelopes(signal, boundary: str = "mirror", extrema: Optional[ExtremaSet] = None) -> EnvelopePair:
    x = np.asarray(signal, dtype=np.float64)
    ext = find_extrema(x) if extrema is None else extrema
    if ext.max_idx.size < 1 or ext.min_idx.size < 1:
        raise InsufficientExtremaError(
            f"need a maximum and a minimum, found {ext.max_idx.size} and {ext.min_idx.size}"
        )
    upper = spline_envelope(ext.maxima, x.size, boundary)
    lower = spline_envelope(ext.minima, x.size, boundary)
    return EnvelopePair(upper, lower, mean_envelope(upper, lower))


def mean_envelope(upper, lower=None) -> np.ndarray:
    """Pointwise mean of the upper and lower envelopes.

    Accepts either an :class:`EnvelopePair` or the two sequences.
    """
    if lower is None:
        upper, lower = upper.upper, upper.lower
    u = np.asarray(upper, dtype=np.float64)
    lo = np.asarray(lower, dtype=np.float64)
    if u.shape != lo.shape:
        raise ValueError(f"envelope length mismatch: {u.shape} vs {lo.shape}")
    return (u + lo) / 2.0


# ---------------------------------------------------------------------------
# sifting


def sift_once(signal, boundary: str = "mirror") -> SiftCandidate:
    x = np.asarray(signal, dtype=np.float64)
    pair = envelopes(x, boundary)
    return SiftCandidate(x - pair.mean, 1)


def is_imf(signal, zero_mean_tol: float = 0.05, count_slack: int = 1,
           boundary: str = "mirror") -> ImfCheck:
    """Check the two IMF conditions.

    True iff the extrema and zero-crossing counts differ by at most
    ``count_slack`` and ``max|mean envelope| <= zero_mean_tol * max|signal|``.
    Signals whose envelopes cannot be built fail.
    """
    x = np.asarray(signal, dtype=np.float64)
    ext = find_extrema(x)
    n_zero = count_zero_crossings(x)
    scale = float(np.max(np.abs(x)))
    tol = zero_mean_tol * scale
    try:
        m = envelopes(x, boundary, ext).mean
    except InsufficientExtremaError:
        return ImfCheck(False, ext.count, n_zero, float("inf"), tol)
    dev = float(np.max(np.abs(m)))
    ok = abs(ext.count - n_zero) <= count_slack and dev <= tol
    return ImfCheck(ok, ext.count, n_zero, dev, tol)


def _is_terminal(x, scale: float) -> bool:
    if x.size < 3 or np.ptp(x) <= NEGLIGIBLE * scale:
        return True
    d = np.diff(x)
    if np.all(d >= 0) or np.all(d <= 0):
        return True
    return find_extrema(x).count <= 1


def _extract_imf(x, cfg: EmdConfig):
    """Sift ``x`` until the candidate is an IMF or the iteration cap is hit.

    Returns (imf, iterations, converged) or None if ``x`` cannot be sifted.
    """
    try:
        m = envelopes(x, cfg.boundary).mean
    except InsufficientExtremaError:
        return None
    h = x
    for it in range(1, cfg.max_sift_iters + 1):
        d = h - m
        ext = find_extrema(d)
        try:
            m = envelopes(d, cfg.boundary, ext).mean
        except InsufficientExtremaError:
            # candidate lost its oscillation; keep the previous one
            logger.warning("sifting stopped at iteration %d: candidate has no envelope", it)
            return (h, it - 1, False) if it > 1 else None
        counts_ok = abs(ext.count - count_zero_crossings(d)) <= cfg.count_slack
        if counts_ok and np.max(np.abs(m)) <= cfg.zero_mean_tol * np.max(np.abs(d)):
            return d, it, True
        h = d
    logger.warning("sifting hit max_sift_iters=%d; accepting candidate", cfg.max_sift_iters)
    return h, cfg.max_sift_iters, False


def decompose(series, config: Optional[EmdConfig] = None, **overrides) -> ImfSet:
    """Decompose a series into IMFs and a residual.

    ``series`` may be a CenteredSeries, TimeSeries or plain array. Keyword
    overrides (``max_sift_iters``, ``zero_mean_tol``, ``max_imfs``,
    ``boundary``) replace fields of ``config``.
    """
    cfg = config or EmdConfig()
    if overrides:
        cfg = EmdConfig(**{**cfg.to_dict(), **overrides})
    x = np.array(getattr(series, "values", series), dtype=np.float64)
    if x.ndim != 1 or x.size < 4:
        raise ValueError("decompose needs a 1-D series of length >= 4")
    if not np.all(np.isfinite(x)):
        raise ValueError("decompose input contains non-finite values")

    scale = float(np.max(np.abs(x)))
    imfs, counts, converged = [], [], []
    residual = x.copy()
    while len(imfs) < cfg.max_imfs and not _is_terminal(residual, scale):
        out = _extract_imf(residual, cfg)
        if out is None:
            break
        imf, iters, ok = out
        imfs.append(imf)
        counts.append(iters)
        converged.append(ok)
        residual = residual - imf

    if imfs and np.ptp(residual) <= NEGLIGIBLE * scale:
        # flatten round-off ripple on a constant remainder into the last IMF
        level = np.full_like(residual, residual.mean())
        imfs[-1] = imfs[-1] + (residual - level)
        residual = level

    stack = np.vstack(imfs) if imfs else np.empty((0, x.size))
    return ImfSet(stack, residual, counts, converged, cfg)
