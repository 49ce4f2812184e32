"""Log-ratios of Lanczos coefficients, sigma^2, the zero-frequency mode and sample-averaged correlations."""

import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.special import logsumexp

from config import WISHART_POOL_LIMIT

logger = logging.getLogger(__name__)


class WindowError(ValueError):
    """Window exceeds the coefficients available from the run (premature breakdown)."""


@dataclass(frozen=True)
class WindowSpec:
    """Half-open, 1-based window over Lanczos coefficients: b_start .. b_{end-1}.

    phase=1 shifts the pairing origin by one coefficient (b_{start+1} with b_{start+2}).
    """
    start: int
    end: int
    phase: int = 0

    def __post_init__(self):
        if not 0 < self.start < self.end:
            raise ValueError(f"Window must satisfy 0 < start < end, got ({self.start}, {self.end})")
        if (self.end - self.start) % 2:
            raise ValueError(f"Window length must be even, got {self.end - self.start} for ({self.start}, {self.end})")
        if self.phase not in (0, 1):
            raise ValueError(f"Window phase must be 0 or 1, got {self.phase}")

    @property
    def length(self) -> int:
        return self.end - self.start

    @property
    def n_pairs(self) -> int:
        return self.length // 2

    @property
    def last_index(self) -> int:
        """Largest 1-based coefficient index read by this window."""
        return self.end - 1 + self.phase

    @classmethod
    def from_multiples(cls, n_max: int, lo: int, hi: int, phase: int = 0) -> "WindowSpec":
        """Window (lo*N_max, hi*N_max); an odd length drops the last coefficient."""
        start, end = lo * n_max, hi * n_max
        end -= (end - start) % 2
        return cls(start, end, phase)

    @classmethod
    def full(cls, n_coefficients: int) -> "WindowSpec":
        """All of b_1..b_T, trimmed to even length."""
        return cls(1, 1 + n_coefficients - n_coefficients % 2)

    def as_tuple(self) -> Tuple[int, int]:
        return self.start, self.end


@dataclass
class XSeries:
    x: np.ndarray
    window: Optional[WindowSpec] = None

    def __len__(self):
        return self.x.size


@dataclass
class ZeroMode:
    """Even-site amplitudes psi_0, psi_2, ... with psi_0 = 1.

    log_abs holds ln|psi_2n| directly so long windows never overflow.
    """
    psi_even: np.ndarray
    log_abs: np.ndarray
    signs: np.ndarray

    def log_products(self, unit_norm: bool = False) -> np.ndarray:
        """ln|psi_2m psi_2n| as a (P+1, P+1) matrix."""
        logs = self.log_abs
        if unit_norm:
            logs = logs - 0.5 * logsumexp(2.0 * logs)
        return logs[:, None] + logs[None, :]


def log_ratios(b, window: WindowSpec) -> XSeries:
    """x_i = ln|b_{w+2i-1} / b_{w+2i}| for i = 1..P, w = window.start - 1 + window.phase.

    Args:
        b: Lanczos coefficients b_1..b_T (index 0 holds b_1)
        window: WindowSpec

    Returns:
        XSeries with P = window length / 2 values
    """
    b = np.asarray(b, dtype=float)
    if window.last_index > b.size:
        raise WindowError(
            f"Window ({window.start}, {window.end}) phase {window.phase} needs b_{window.last_index} "
            f"but the run produced {b.size} coefficients"
        )
    offset = window.start - 1 + window.phase
    selected = b[offset:offset + window.length]
    if not np.all(np.isfinite(selected)) or np.any(selected == 0):
        raise WindowError(f"Window ({window.start}, {window.end}) contains zero or non-finite coefficients")
    x = np.log(np.abs(selected[0::2])) - np.log(np.abs(selected[1::2]))
    return XSeries(x, window)


def _as_array(x) -> np.ndarray:
    return np.asarray(x.x if isinstance(x, XSeries) else x, dtype=float)


def variance(x) -> float:
    """Population variance (1/P) of the log-ratios."""
    values = _as_array(x)
    if values.size < 2:
        raise ValueError(f"variance needs at least 2 values, got {values.size}")
    return float(np.var(values))


def variance_decomposition(x) -> Tuple[float, float]:
    """Split sigma^2 into the diagonal term and the cross term.

    term_diag = (1/p - 1/p^2) sum x_i^2, term_cross = (1/p^2) sum_{i != j} x_i x_j,
    and sigma^2 = term_diag - term_cross.
    """
    values = _as_array(x)
    p = values.size
    if p < 2:
        raise ValueError(f"variance_decomposition needs at least 2 values, got {p}")
    sum_sq = float(np.dot(values, values))
    total = float(values.sum())
    term_diag = (1.0 / p - 1.0 / p ** 2) * sum_sq
    term_cross = (total ** 2 - sum_sq) / p ** 2
    return term_diag, term_cross


def zero_mode_from_ratios(x) -> ZeroMode:
    """psi_2n = (-1)^n exp(x_1 + ... + x_n)."""
    values = _as_array(x)
    log_abs = np.concatenate(([0.0], np.cumsum(values)))
    signs = np.where(np.arange(log_abs.size) % 2 == 0, 1.0, -1.0)
    return ZeroMode(signs * np.exp(log_abs), log_abs, signs)


def zero_mode(b) -> ZeroMode:
    """Zero-frequency mode of the tridiagonal Liouvillian: psi_2n / psi_0 = (-1)^n prod b_{2i-1} / b_{2i}.

    Uses consecutive pairs of b; a trailing unpaired coefficient is ignored.
    """
    b = np.asarray(b, dtype=float)
    pairs = b.size // 2
    used = b[:2 * pairs]
    if np.any(used == 0):
        raise ValueError(f"Zero coefficient at b_{int(np.flatnonzero(used == 0)[0]) + 1}")
    if not np.all(np.isfinite(used)):
        raise ValueError("Non-finite coefficient in zero-mode range")
    return zero_mode_from_ratios(np.log(np.abs(used[0::2])) - np.log(np.abs(used[1::2])))


@dataclass
class CorrelationAccumulator:
    """Running sums for <x_i x_j> (scatter matrix M = X^T X) and <ln|psi_2m psi_2n|>."""
    p: int
    unit_norm: bool = False
    n_samples: int = 0
    excluded: int = 0
    sum_xx: np.ndarray = field(default=None)
    sum_logpsi: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.p < 1:
            raise ValueError(f"Accumulator dimension must be >= 1, got {self.p}")
        if self.sum_xx is None:
            self.sum_xx = np.zeros((self.p, self.p))
        if self.sum_logpsi is None:
            self.sum_logpsi = np.zeros((self.p + 1, self.p + 1))

    def accumulate(self, x, psi: ZeroMode) -> bool:
        """Add one sample; returns False when the sample is excluded for a zero psi entry."""
        values = _as_array(x)
        if values.size != self.p or psi.log_abs.size != self.p + 1:
            raise ValueError(
                f"Dimension mismatch: accumulator P={self.p}, got x of length {values.size} "
                f"and psi of length {psi.log_abs.size}"
            )
        if not np.all(np.isfinite(psi.log_abs)):
            self.excluded += 1
            return False
        self.sum_xx += np.outer(values, values)
        self.sum_logpsi += psi.log_products(self.unit_norm)
        self.n_samples += 1
        return True

    def merge(self, other: "CorrelationAccumulator") -> "CorrelationAccumulator":
        """Fold another accumulator into this one."""
        if other.p != self.p or other.unit_norm != self.unit_norm:
            raise ValueError(f"Cannot merge accumulators with P={self.p} and P={other.p}")
        self.sum_xx += other.sum_xx
        self.sum_logpsi += other.sum_logpsi
        self.n_samples += other.n_samples
        self.excluded += other.excluded
        return self

    def finalize(self) -> Tuple[np.ndarray, np.ndarray]:
        """Returns (<x_i x_j>, <ln|psi_2m psi_2n|>)."""
        if self.n_samples == 0:
            raise ValueError("No samples accumulated")
        return self.sum_xx / self.n_samples, self.sum_logpsi / self.n_samples


def accumulate(acc: CorrelationAccumulator, x, psi: ZeroMode) -> CorrelationAccumulator:
    acc.accumulate(x, psi)
    return acc


def scatter_products(X: np.ndarray, limit: int = WISHART_POOL_LIMIT) -> Tuple[np.ndarray, np.ndarray]:
    """Pool per-sample scatter entries across samples.

    Args:
        X: (N, P) matrix of per-sample log-ratio vectors
        limit: cap on the number of pooled off-diagonal products

    Returns:
        (diagonal products x_i^2, off-diagonal products x_i x_j); off-diagonal pairs are taken
        superdiagonal by superdiagonal until the cap is reached
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("Need a non-empty (N, P) matrix of log-ratios")
    n, p = X.shape
    diag = (X ** 2).ravel()
    off = []
    count = 0
    for d in range(1, p):
        if count >= limit:
            break
        block = (X[:, :-d] * X[:, d:]).ravel()
        off.append(block)
        count += block.size
    offdiag = np.concatenate(off)[:limit] if off else np.zeros(0)
    return diag, offdiag
