import numpy as np
import pytest
from scipy import stats

from billiard_spectrum import Spectrum
from krylov_engine import LanczosConfig, lanczos
from localization_stats import (CorrelationAccumulator, WindowError, WindowSpec, ZeroMode, accumulate, log_ratios,
                                scatter_products, variance, variance_decomposition, zero_mode,
                                zero_mode_from_ratios)
from operator_ensembles import SeedSpec, sample_initial


# windows and log-ratios

def test_window_spec_validation():
    assert WindowSpec(1, 7).n_pairs == 3
    assert WindowSpec(1, 7, phase=1).last_index == 7
    for args in [(0, 4), (5, 5), (6, 2)]:
        with pytest.raises(ValueError):
            WindowSpec(*args)
    with pytest.raises(ValueError):
        WindowSpec(1, 5, phase=2)


def test_window_spec_rejects_odd_length():
    # (1, 6) holds b_1..b_5, which cannot be split into pairs
    with pytest.raises(ValueError, match="even"):
        WindowSpec(1, 6)
    assert WindowSpec(1, 7).length == 6


def test_window_from_multiples_trims_odd_length():
    assert WindowSpec.from_multiples(50, 5, 10).as_tuple() == (250, 500)
    assert WindowSpec.from_multiples(15, 5, 10).as_tuple() == (75, 149)
    assert WindowSpec.full(6).as_tuple() == (1, 7)
    assert WindowSpec.full(7).as_tuple() == (1, 7)


def test_constant_coefficients_give_zero_ratios():
    xs = log_ratios(np.full(10, 2.5), WindowSpec(1, 11))
    np.testing.assert_array_equal(xs.x, np.zeros(5))


def test_log_ratios_simple_sequence():
    xs = log_ratios([np.e, 1.0, np.e, 1.0], WindowSpec(1, 5))
    np.testing.assert_allclose(xs.x, [1.0, 1.0])
    assert len(xs) == 2


def test_log_ratios_match_direct_evaluation(rng):
    b = rng.uniform(0.5, 2.0, 9)
    xs = log_ratios(b, WindowSpec(1, 7))
    expected = [np.log(b[0] / b[1]), np.log(b[2] / b[3]), np.log(b[4] / b[5])]
    np.testing.assert_allclose(xs.x, expected, rtol=1e-14)

    shifted = log_ratios(b, WindowSpec(3, 7, phase=1))
    np.testing.assert_allclose(shifted.x, [np.log(b[3] / b[4]), np.log(b[5] / b[6])], rtol=1e-14)


def test_window_past_the_run_is_premature_breakdown():
    with pytest.raises(WindowError, match="produced 4 coefficients"):
        log_ratios([1.0, 2.0, 3.0, 4.0], WindowSpec(1, 7))
    with pytest.raises(WindowError):
        log_ratios([1.0, 2.0, 3.0, 4.0], WindowSpec(1, 5, phase=1))
    with pytest.raises(WindowError, match="zero"):
        log_ratios([1.0, 0.0, 3.0, 4.0], WindowSpec(1, 5))


# variance

def test_variance_examples():
    assert variance(np.zeros(6)) == 0.0
    assert variance([1.0, -1.0]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        variance([1.0])


def test_variance_is_shift_invariant(rng):
    x = rng.normal(size=40)
    assert variance(x + 3.25) == pytest.approx(variance(x), rel=1e-10)


def test_variance_decomposition_examples():
    diag, cross = variance_decomposition([1.0, -1.0])
    assert diag == pytest.approx(0.5)
    assert cross == pytest.approx(-0.5)

    p = 8
    diag, cross = variance_decomposition(np.ones(p))
    assert diag == pytest.approx(1 - 1 / p)
    assert cross == pytest.approx(1 - 1 / p)


def test_variance_decomposition_reconstructs_variance(rng):
    for _ in range(100):
        x = rng.normal(size=int(rng.integers(2, 60)))
        diag, cross = variance_decomposition(x)
        assert diag - cross == pytest.approx(variance(x), abs=1e-12)


def test_cross_term_is_small_for_independent_ratios(rng):
    small = 0
    for _ in range(1000):
        diag, cross = variance_decomposition(rng.normal(size=250))
        small += abs(cross) < diag / 10
    assert small >= 950


# zero-frequency mode

def test_zero_mode_examples():
    np.testing.assert_allclose(zero_mode([1.0, 1.0, 1.0, 1.0]).psi_even, [1.0, -1.0, 1.0])
    np.testing.assert_allclose(zero_mode([2.0, 1.0]).psi_even, [1.0, -2.0])
    # trailing unpaired coefficient is ignored
    np.testing.assert_allclose(zero_mode([2.0, 1.0, 7.0]).psi_even, [1.0, -2.0])


def test_zero_mode_satisfies_zero_frequency_condition(rng):
    b = rng.uniform(0.5, 2.0, 12)
    psi = zero_mode(b).psi_even
    residual = b[0::2] * psi[:-1] + b[1::2] * psi[1:]
    np.testing.assert_allclose(residual, 0.0, atol=1e-12 * np.max(np.abs(psi)))


def test_zero_mode_rejects_zero_coefficient():
    with pytest.raises(ValueError, match="b_2"):
        zero_mode([1.0, 0.0, 1.0, 1.0])


def test_zero_mode_log_amplitudes_survive_long_windows():
    psi = zero_mode_from_ratios(np.full(2000, 1.0))
    assert np.isinf(psi.psi_even[-1])
    assert psi.log_abs[-1] == pytest.approx(2000.0)
    logs = psi.log_products(unit_norm=True)
    assert np.all(np.isfinite(logs))
    assert np.exp(np.diag(logs)).sum() == pytest.approx(1.0)


# correlation accumulators

def test_single_sample_outer_product():
    acc = CorrelationAccumulator(2)
    assert acc.accumulate([1.0, 2.0], zero_mode_from_ratios([1.0, 2.0]))
    xx, logpsi = acc.finalize()
    np.testing.assert_array_equal(xx, [[1.0, 2.0], [2.0, 4.0]])
    log_abs = np.array([0.0, 1.0, 3.0])
    np.testing.assert_allclose(logpsi, log_abs[:, None] + log_abs[None, :])


def test_two_sample_average():
    acc = CorrelationAccumulator(2)
    accumulate(acc, [1.0, 0.0], zero_mode_from_ratios([1.0, 0.0]))
    accumulate(acc, [0.0, 1.0], zero_mode_from_ratios([0.0, 1.0]))
    xx, _ = acc.finalize()
    np.testing.assert_array_equal(xx, [[0.5, 0.0], [0.0, 0.5]])
    assert acc.n_samples == 2


def test_finalized_matrices_are_symmetric(rng):
    acc = CorrelationAccumulator(7)
    for _ in range(30):
        x = rng.normal(size=7)
        acc.accumulate(x, zero_mode_from_ratios(x))
    xx, logpsi = acc.finalize()
    np.testing.assert_array_equal(xx, xx.T)
    np.testing.assert_array_equal(logpsi, logpsi.T)


def test_zero_psi_entry_excludes_sample():
    acc = CorrelationAccumulator(1)
    singular = ZeroMode(np.array([1.0, 0.0]), np.array([0.0, -np.inf]), np.array([1.0, -1.0]))
    assert not acc.accumulate([0.5], singular)
    assert acc.excluded == 1
    assert acc.n_samples == 0
    with pytest.raises(ValueError, match="No samples"):
        acc.finalize()


def test_dimension_mismatch():
    acc = CorrelationAccumulator(3)
    with pytest.raises(ValueError, match="Dimension mismatch"):
        acc.accumulate([1.0, 2.0], zero_mode_from_ratios([1.0, 2.0]))
    with pytest.raises(ValueError):
        acc.merge(CorrelationAccumulator(2))


def test_merge_matches_sequential_accumulation(rng):
    X = rng.normal(size=(60, 5))
    sequential = CorrelationAccumulator(5)
    chunks = [CorrelationAccumulator(5) for _ in range(3)]
    for i, x in enumerate(X):
        psi = zero_mode_from_ratios(x)
        sequential.accumulate(x, psi)
        chunks[i // 20].accumulate(x, psi)
    merged = CorrelationAccumulator(5)
    for chunk in chunks:
        merged.merge(chunk)
    for a, b in zip(merged.finalize(), sequential.finalize()):
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)
    assert merged.n_samples == 60


def test_correlation_estimator_is_consistent(rng):
    sigma, n = 0.7, 10_000
    acc = CorrelationAccumulator(4)
    for x in rng.normal(0.0, sigma, size=(n, 4)):
        acc.accumulate(x, zero_mode_from_ratios(x))
    xx, _ = acc.finalize()
    standard_error = np.sqrt(2.0) * sigma ** 2 / np.sqrt(n)
    assert np.all(np.abs(np.diag(xx) - sigma ** 2) < 4 * standard_error)


def test_single_component_scatter_is_chi_square(rng):
    n = 10
    totals = []
    for _ in range(500):
        acc = CorrelationAccumulator(1)
        for x in rng.normal(size=(n, 1)):
            acc.accumulate(x, zero_mode_from_ratios(x))
        xx, _ = acc.finalize()
        totals.append(n * xx[0, 0])
    assert stats.kstest(totals, stats.chi2(df=n).cdf).pvalue > 0.01


def test_scatter_products_pooling():
    X = np.arange(1.0, 13.0).reshape(3, 4)
    diag, offdiag = scatter_products(X)
    np.testing.assert_array_equal(diag, (X ** 2).ravel())
    assert offdiag.size == 3 * 3 + 3 * 2 + 3 * 1
    assert offdiag[0] == X[0, 0] * X[0, 1]
    assert offdiag[1] == X[0, 1] * X[0, 2]

    _, capped = scatter_products(X, limit=5)
    np.testing.assert_array_equal(capped, offdiag[:5])
    with pytest.raises(ValueError):
        scatter_products(np.zeros((0, 3)))


def test_statistics_invariant_under_rescaling(rng):
    spectrum = Spectrum(np.sort(rng.uniform(0.0, 5.0, 6)), 6)
    O0 = sample_initial("GUE", 6, SeedSpec(9, 0))
    window = WindowSpec(3, 13)
    cfg = LanczosConfig(max_steps=14)

    base = log_ratios(lanczos(spectrum, O0, cfg).b, window)
    for spec, op in [(spectrum.scaled(7.5), O0), (spectrum, 0.01 * O0)]:
        other = log_ratios(lanczos(spec, op, cfg).b, window)
        np.testing.assert_allclose(other.x, base.x, rtol=1e-8, atol=1e-10)
        assert variance(other) == pytest.approx(variance(base), rel=1e-8)
