import numpy as np
import pytest
from scipy import stats

from config import ENSEMBLES
from operator_ensembles import SeedSpec, is_hermitian, sample_initial

DIM = 200


def _upper(O):
    return O[np.triu_indices(O.shape[0], k=1)]


@pytest.mark.parametrize("kind", ENSEMBLES)
def test_samples_are_exactly_hermitian(kind):
    O = sample_initial(kind, 12, SeedSpec(7, 3))
    assert O.shape == (12, 12)
    assert is_hermitian(O)


@pytest.mark.parametrize("kind", ENSEMBLES)
def test_same_seed_spec_reproduces_sample(kind):
    a = sample_initial(kind, 8, SeedSpec(99, 41))
    b = sample_initial(kind, 8, SeedSpec(99, 41))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, sample_initial(kind, 8, SeedSpec(99, 42)))
    assert not np.array_equal(a, sample_initial(kind, 8, SeedSpec(100, 41)))


def test_ensembles_draw_independent_streams():
    goe = sample_initial("GOE", 8, SeedSpec(5, 0))
    gue = sample_initial("GUE", 8, SeedSpec(5, 0))
    assert not np.array_equal(goe.real, gue.real)


def test_real_ensembles_have_no_imaginary_part():
    for kind in ("GOE", "URE"):
        O = sample_initial(kind, 10, SeedSpec(1, 0))
        assert np.all(O.imag == 0)


def test_uim_is_purely_imaginary_with_zero_diagonal():
    O = sample_initial("UIM", 10, SeedSpec(1, 0))
    assert np.all(np.diag(O) == 0)
    assert np.all(O.real == 0)
    assert np.all(np.abs(O.imag) < np.sqrt(3.0))


def test_gaussian_normalization():
    goe = sample_initial("GOE", DIM, SeedSpec(11, 0))
    assert np.var(np.diag(goe).real) == pytest.approx(1.0, abs=0.35)
    assert np.var(_upper(goe).real) == pytest.approx(0.5, abs=0.03)

    gue = sample_initial("GUE", DIM, SeedSpec(11, 0))
    upper = _upper(gue)
    assert np.var(upper.real) == pytest.approx(0.5, abs=0.03)
    assert np.var(upper.imag) == pytest.approx(0.5, abs=0.03)


@pytest.mark.parametrize("kind", ["URE", "UCP", "UIM"])
def test_uniform_components_have_unit_variance(kind):
    upper = _upper(sample_initial(kind, DIM, SeedSpec(13, 2)))
    parts = [upper.imag] if kind == "UIM" else [upper.real]
    if kind == "UCP":
        parts.append(upper.imag)
    for part in parts:
        assert np.max(np.abs(part)) < np.sqrt(3.0)
        assert np.var(part) == pytest.approx(1.0, abs=0.05)


@pytest.mark.parametrize("kind,expected", [
    ("GOE", 3.0),
    ("GUE", 3.0),
    ("URE", 1.8),
    ("UCP", 1.8),
    ("UIM", 1.8),
])
def test_entry_kurtosis_separates_gaussian_from_uniform(kind, expected):
    parts = []
    for index in range(60):
        upper = _upper(sample_initial(kind, 40, SeedSpec(17, index)))
        parts.append(upper.imag if kind == "UIM" else upper.real)
    values = np.concatenate(parts)
    assert stats.kurtosis(values, fisher=False) == pytest.approx(expected, abs=0.1)


@pytest.mark.slow
def test_goe_two_level_trace_of_square():
    # Tr O^2 = O_11^2 + O_22^2 + 2 O_12^2 has mean 1 + 1 + 2 * 1/2
    traces = []
    for index in range(40000):
        O = sample_initial("GOE", 2, SeedSpec(23, index))
        traces.append(np.trace(O @ O).real)
    assert np.mean(traces) == pytest.approx(3.0, abs=0.05)


def test_invalid_requests():
    with pytest.raises(ValueError, match="Unknown ensemble"):
        sample_initial("XYZ", 4, SeedSpec(0, 0))
    with pytest.raises(ValueError):
        sample_initial("GOE", 1, SeedSpec(0, 0))
    with pytest.raises(ValueError):
        SeedSpec(0, -1)
    with pytest.raises(ValueError):
        SeedSpec(-5, 0)
