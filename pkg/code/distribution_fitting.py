"""Histograms, normal and rescaled chi-square fits, moments and Kolmogorov-Smirnov checks."""

import logging
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy import stats
from scipy.optimize import curve_fit

from config import DEFAULT_BIN_RULE, KS_ALPHA, KS_MIN_SAMPLES

logger = logging.getLogger(__name__)

BIN_RULES = {"freedman_diaconis": "fd", "sqrt": "sqrt"}


@dataclass
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    total: int
    rule: str

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.total * np.diff(self.edges))


@dataclass
class NormalFit:
    mu0: float
    sigma0: float
    mode: str = "mle"

    def cdf(self, x):
        return stats.norm.cdf(x, loc=self.mu0, scale=self.sigma0)


@dataclass
class ScaledChiSquareFit:
    """sigma^2 ~ c * chi^2_k, equivalently gamma(shape=k/2, scale=2c)."""
    k: float
    c: float
    method: str = "moments"

    def cdf(self, x):
        return stats.gamma.cdf(x, self.k / 2.0, loc=0.0, scale=2.0 * self.c)


@dataclass
class MomentsReport:
    mean: float
    variance: float
    skewness: float
    kurtosis: float  # non-excess, normal -> 3


@dataclass
class KSResult:
    statistic: float
    critical_value: float
    pvalue: float
    alpha: float
    passed: bool
    n: int
    low_power: bool


def _clean(samples) -> np.ndarray:
    return np.asarray(samples, dtype=float).ravel()


def histogram(samples, rule: str = DEFAULT_BIN_RULE, nbins: Optional[int] = None) -> Histogram:
    """Bin samples over [min, max].

    Args:
        samples: 1-D sample values
        rule: "freedman_diaconis", "sqrt" or "fixed" (with nbins)
        nbins: bin count for the fixed rule

    Returns:
        Histogram whose counts sum to the sample count
    """
    values = _clean(samples)
    if np.unique(values).size < 2:
        raise ValueError("histogram needs at least 2 distinct sample values")
    if rule == "fixed":
        if not nbins or nbins < 1:
            raise ValueError(f"fixed binning needs nbins >= 1, got {nbins}")
        bins = nbins
    elif rule in BIN_RULES:
        bins = BIN_RULES[rule]
    else:
        raise ValueError(f"Unknown bin rule {rule!r} (expected freedman_diaconis, sqrt or fixed)")

    edges = np.histogram_bin_edges(values, bins=bins)
    counts, edges = np.histogram(values, bins=edges)
    return Histogram(edges, counts, int(values.size), rule)


def _normal_pdf(x, mu, sigma):
    return stats.norm.pdf(x, loc=mu, scale=sigma)


def fit_normal(samples, mode: str = "mle", rule: str = DEFAULT_BIN_RULE) -> NormalFit:
    """Fit a normal distribution.

    mode="mle" gives the sample mean and population standard deviation (the "Data" row);
    mode="histogram" least-squares fits the normal density to the binned sample (the "Fit" row).
    """
    values = _clean(samples)
    if values.size < 2:
        raise ValueError(f"fit_normal needs at least 2 samples, got {values.size}")
    mu, sigma = float(values.mean()), float(values.std())
    if sigma == 0:
        raise ValueError("fit_normal: samples have zero variance")
    if mode == "mle":
        return NormalFit(mu, sigma, "mle")
    if mode != "histogram":
        raise ValueError(f"Unknown normal-fit mode {mode!r}")

    hist = histogram(values, rule)
    (mu_fit, sigma_fit), _ = curve_fit(_normal_pdf, hist.centers, hist.density, p0=(mu, sigma))
    return NormalFit(float(mu_fit), float(abs(sigma_fit)), "histogram")


def fit_scaled_chi_square(samples, refine: bool = False) -> ScaledChiSquareFit:
    """Method of moments: k = 2 mean^2 / var, c = var / (2 mean).

    refine=True starts a gamma maximum-likelihood fit (loc fixed at 0) from the moment estimate.
    """
    values = _clean(samples)
    if values.size < 2:
        raise ValueError(f"fit_scaled_chi_square needs at least 2 samples, got {values.size}")
    if np.any(values <= 0):
        raise ValueError("fit_scaled_chi_square: all samples must be positive")
    mean, var = float(values.mean()), float(values.var())
    if var == 0:
        raise ValueError("fit_scaled_chi_square: samples have zero variance")
    k, c = 2.0 * mean ** 2 / var, var / (2.0 * mean)
    if not refine:
        return ScaledChiSquareFit(k, c, "moments")

    shape, _, scale = stats.gamma.fit(values, k / 2.0, floc=0.0, scale=2.0 * c)
    return ScaledChiSquareFit(2.0 * shape, scale / 2.0, "gamma_mle")


def moments(samples) -> MomentsReport:
    values = _clean(samples)
    if values.size < 4:
        raise ValueError(f"moments needs at least 4 samples, got {values.size}")
    var = float(values.var())
    if var == 0:
        raise ValueError("moments: samples have zero variance")
    return MomentsReport(
        mean=float(values.mean()),
        variance=var,
        skewness=float(stats.skew(values, bias=True)),
        kurtosis=float(stats.kurtosis(values, fisher=False, bias=True))
    )


def ks_statistic(samples, model_cdf: Callable, alpha: float = KS_ALPHA) -> KSResult:
    """One-sample KS distance with the asymptotic critical value K_{1-alpha} / sqrt(n)."""
    values = _clean(samples)
    if values.size == 0:
        raise ValueError("ks_statistic: no samples")
    n = int(values.size)
    result = stats.kstest(values, model_cdf)
    critical = float(stats.kstwobign.ppf(1.0 - alpha) / np.sqrt(n))
    return KSResult(
        statistic=float(result.statistic),
        critical_value=critical,
        pvalue=float(result.pvalue),
        alpha=alpha,
        passed=bool(result.statistic <= critical),
        n=n,
        low_power=n < KS_MIN_SAMPLES
    )


def fit_report(samples, model: str = "normal", rule: str = DEFAULT_BIN_RULE) -> Dict:
    """JSON-ready record {model, params, moments, ks, n_samples}."""
    values = _clean(samples)
    if model == "normal":
        fit = fit_normal(values)
        params = {"mu0": fit.mu0, "sigma0": fit.sigma0,
                  "histogram_fit": asdict(fit_normal(values, "histogram", rule))}
    elif model == "scaled_chi_square":
        fit = fit_scaled_chi_square(values)
        params = {"k": fit.k, "c": fit.c,
                  "gamma_mle": asdict(fit_scaled_chi_square(values, refine=True))}
    else:
        raise ValueError(f"Unknown model {model!r}")

    return {
        "model": model,
        "params": params,
        "moments": asdict(moments(values)),
        "ks": asdict(ks_statistic(values, fit.cdf)),
        "n_samples": int(values.size)
    }


def fit_table_rows(samples, ensemble: str, rule: str = DEFAULT_BIN_RULE) -> List[Dict]:
    """"Data" (sample mean / std) and "Fit" (histogram least squares) rows for one ensemble."""
    data = fit_normal(samples, "mle")
    fitted = fit_normal(samples, "histogram", rule)
    return [
        {"ensemble": ensemble, "row": "Data", "mu0": data.mu0, "sigma0": data.sigma0},
        {"ensemble": ensemble, "row": "Fit", "mu0": fitted.mu0, "sigma0": fitted.sigma0}
    ]
