import numpy as np
import pytest
from scipy import stats

from distribution_fitting import (fit_normal, fit_report, fit_scaled_chi_square, fit_table_rows, histogram,
                                  ks_statistic, moments)


@pytest.fixture
def normal_samples(rng):
    return rng.normal(2.0, 0.5, 5000)


@pytest.fixture
def chi_square_samples(rng):
    # sigma^2-like values: c * chi^2_k with k = 4, c = 0.01
    return 0.01 * rng.chisquare(4, 20000)


def test_histogram_counts_every_sample(normal_samples):
    for rule in ("freedman_diaconis", "sqrt"):
        hist = histogram(normal_samples, rule)
        assert hist.counts.sum() == normal_samples.size
        assert hist.edges[0] == normal_samples.min()
        assert hist.edges[-1] == normal_samples.max()
        assert np.sum(hist.density * np.diff(hist.edges)) == pytest.approx(1.0)

    fixed = histogram(normal_samples, "fixed", nbins=12)
    assert fixed.counts.size == 12


def test_histogram_fixed_bins_small_example():
    hist = histogram([0.0, 1.0, 2.0, 3.0], "fixed", nbins=2)
    np.testing.assert_array_equal(hist.edges, [0.0, 1.5, 3.0])
    np.testing.assert_array_equal(hist.counts, [2, 2])


def test_histogram_errors():
    with pytest.raises(ValueError, match="distinct"):
        histogram(np.ones(10))
    with pytest.raises(ValueError, match="nbins"):
        histogram([1.0, 2.0, 3.0], "fixed")
    with pytest.raises(ValueError, match="Unknown bin rule"):
        histogram([1.0, 2.0, 3.0], "scott")


def test_normal_data_row_is_sample_mean_and_population_std(normal_samples):
    fit = fit_normal(normal_samples)
    assert fit.mu0 == pytest.approx(normal_samples.mean(), rel=1e-12)
    assert fit.sigma0 == pytest.approx(normal_samples.std(), rel=1e-12)


@pytest.mark.parametrize("scale,shift", [(3.0, -1.5), (-0.5, 4.0)])
def test_normal_fit_is_affine_equivariant(normal_samples, scale, shift):
    base = fit_normal(normal_samples)
    moved = fit_normal(scale * normal_samples + shift)
    assert moved.mu0 == pytest.approx(scale * base.mu0 + shift, rel=1e-10)
    assert moved.sigma0 == pytest.approx(abs(scale) * base.sigma0, rel=1e-10)


def test_normal_histogram_fit_recovers_parameters(normal_samples):
    fit = fit_normal(normal_samples, "histogram")
    assert fit.mode == "histogram"
    assert fit.mu0 == pytest.approx(2.0, abs=0.05)
    assert fit.sigma0 == pytest.approx(0.5, abs=0.05)


def test_normal_fit_errors():
    with pytest.raises(ValueError):
        fit_normal([1.0])
    with pytest.raises(ValueError, match="zero variance"):
        fit_normal([2.0, 2.0, 2.0])
    with pytest.raises(ValueError, match="mode"):
        fit_normal([1.0, 2.0, 3.0], "bayes")


def test_scaled_chi_square_moment_fit(chi_square_samples):
    fit = fit_scaled_chi_square(chi_square_samples)
    assert fit.k == pytest.approx(4.0, rel=0.1)
    assert fit.c == pytest.approx(0.01, rel=0.1)
    assert ks_statistic(chi_square_samples, fit.cdf).passed


def test_scaled_chi_square_is_scale_equivariant(chi_square_samples):
    base = fit_scaled_chi_square(chi_square_samples)
    scaled = fit_scaled_chi_square(7.5 * chi_square_samples)
    assert scaled.k == pytest.approx(base.k, rel=1e-10)
    assert scaled.c == pytest.approx(7.5 * base.c, rel=1e-10)


def test_scaled_chi_square_gamma_refinement(chi_square_samples):
    fit = fit_scaled_chi_square(chi_square_samples, refine=True)
    assert fit.method == "gamma_mle"
    assert fit.k == pytest.approx(4.0, rel=0.1)
    assert fit.c == pytest.approx(0.01, rel=0.1)


def test_scaled_chi_square_requires_positive_samples():
    with pytest.raises(ValueError, match="positive"):
        fit_scaled_chi_square([0.1, -0.2, 0.3])


def test_moments_normal_and_chi_square(normal_samples, chi_square_samples):
    normal = moments(normal_samples)
    assert normal.skewness == pytest.approx(0.0, abs=0.1)
    assert normal.kurtosis == pytest.approx(3.0, abs=0.2)

    chi = moments(chi_square_samples)
    assert chi.skewness == pytest.approx(np.sqrt(2.0), abs=0.15)
    assert chi.kurtosis == pytest.approx(6.0, abs=0.8)

    with pytest.raises(ValueError):
        moments([1.0, 2.0, 3.0])


def test_moments_under_positive_affine_map(chi_square_samples):
    base = moments(chi_square_samples)
    moved = moments(40.0 * chi_square_samples + 2.0)
    assert moved.mean == pytest.approx(40.0 * base.mean + 2.0, rel=1e-10)
    assert moved.variance == pytest.approx(1600.0 * base.variance, rel=1e-10)
    assert moved.skewness == pytest.approx(base.skewness, rel=1e-8)
    assert moved.kurtosis == pytest.approx(base.kurtosis, rel=1e-8)


def test_moment_conventions_match_scipy(rng):
    x = rng.gamma(2.0, size=300)
    report = moments(x)
    assert report.variance == pytest.approx(np.var(x))
    assert report.skewness == pytest.approx(stats.skew(x))
    assert report.kurtosis == pytest.approx(stats.kurtosis(x) + 3.0)


def test_ks_statistic_accepts_and_rejects(rng):
    x = rng.normal(size=2000)
    good = ks_statistic(x, stats.norm.cdf)
    assert good.passed
    assert good.critical_value == pytest.approx(1.6276 / np.sqrt(2000), rel=1e-3)
    assert not good.low_power

    bad = ks_statistic(rng.uniform(-1.0, 1.0, 2000), stats.norm.cdf)
    assert not bad.passed
    assert bad.statistic > bad.critical_value


def test_ks_flags_small_samples(rng):
    assert ks_statistic(rng.normal(size=20), stats.norm.cdf).low_power
    with pytest.raises(ValueError):
        ks_statistic([], stats.norm.cdf)


def test_fit_report_layout(chi_square_samples):
    report = fit_report(chi_square_samples, "scaled_chi_square")
    assert report["model"] == "scaled_chi_square"
    assert set(report["params"]) == {"k", "c", "gamma_mle"}
    assert set(report["moments"]) == {"mean", "variance", "skewness", "kurtosis"}
    assert report["ks"]["passed"]
    assert report["n_samples"] == chi_square_samples.size

    normal = fit_report(chi_square_samples, "normal")
    assert set(normal["params"]) == {"mu0", "sigma0", "histogram_fit"}
    with pytest.raises(ValueError):
        fit_report(chi_square_samples, "lognormal")


def test_fit_table_rows(normal_samples):
    rows = fit_table_rows(normal_samples, "GOE")
    assert [(r["ensemble"], r["row"]) for r in rows] == [("GOE", "Data"), ("GOE", "Fit")]
    assert rows[0]["mu0"] == pytest.approx(normal_samples.mean())
    assert rows[1]["mu0"] == pytest.approx(rows[0]["mu0"], abs=0.05)
