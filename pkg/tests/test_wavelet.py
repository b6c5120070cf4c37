import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from entrowave.entropy import entropy_stream
from entrowave.wavelet import (
    EnergySpectrum,
    dwt_haar,
    dyadic_level,
    energy_spectrum,
    mra_approximation,
    stream_spectrum,
)

SQRT2 = math.sqrt(2.0)


def haar_psi(t):
    t = np.asarray(t, dtype=float)
    return np.where((t >= 0) & (t < 0.5), 1.0, np.where((t >= 0.5) & (t < 1.0), -1.0, 0.0))


def psi_jk(j, k, t):
    """Dyadically scaled and translated mother wavelet, zero-based j and k."""
    return 2.0 ** (j / 2) * haar_psi(2.0 ** j * t - k)


def brute_force_coefficients(x):
    """d_{j,k} from inner products with explicit Haar step functions.

    Samples sit at t_i = i / T; one-based (j, k) maps to zero-based
    (j - 1, k - 1) and the second-minus-first sign flips the inner product.
    """
    x = np.asarray(x, dtype=float)
    T = 2 ** int(math.floor(math.log2(x.size)))
    x = x[:T]
    t = np.arange(T) / T
    J = int(math.log2(T))
    return {
        (j, k): -float(x @ psi_jk(j - 1, k - 1, t)) / math.sqrt(T)
        for j in range(1, J + 1)
        for k in range(1, 2 ** (j - 1) + 1)
    }


streams = st.lists(st.floats(0, 8, allow_nan=False), min_size=2, max_size=300)


def test_dyadic_level():
    assert [dyadic_level(t) for t in (1, 2, 3, 4, 7, 8, 1023, 1024)] == [0, 1, 1, 2, 2, 3, 9, 10]


def test_examples():
    d = dwt_haar([2, 2, 6, 6])
    assert d.coefficient(1, 1) == pytest.approx(4.0)
    assert d.coefficient(2, 1) == pytest.approx(0.0)
    assert d.coefficient(2, 2) == pytest.approx(0.0)
    assert d.global_mean == 4.0

    d = dwt_haar([0, 4, 0, 4])
    assert d.coefficient(1, 1) == pytest.approx(0.0)
    assert d.coefficient(2, 1) == pytest.approx(2 * SQRT2)
    assert d.coefficient(2, 2) == pytest.approx(2 * SQRT2)
    np.testing.assert_allclose(energy_spectrum(d).energies, [0.0, 16.0], atol=1e-12)

    e = energy_spectrum(dwt_haar([1, 1, 1, 1, 5, 5, 5, 5]))
    np.testing.assert_allclose(e.energies, [32.0, 0.0, 0.0], atol=1e-12)


def test_constant_stream():
    d = dwt_haar([3.5] * 16)
    assert d.global_mean == 3.5
    assert np.all(d.flat() == 0.0)
    assert np.all(energy_spectrum(d).energies == 0.0)


def test_too_short():
    with pytest.raises(ValueError, match="no resolution levels"):
        dwt_haar([1.0])


def test_truncation_and_shape():
    x = np.arange(13.0)
    d = dwt_haar(x)
    assert d.J == 3 and d.truncated_length == 8
    assert d.global_mean == pytest.approx(3.5)
    coeffs = d.coefficients()
    assert len(coeffs) == 2 ** d.J - 1
    for j in range(1, d.J + 1):
        assert sorted(k for (jj, k) in coeffs if jj == j) == list(range(1, 2 ** (j - 1) + 1))


def test_accepts_entropy_stream():
    s = entropy_stream(bytes(256 * 4) + bytes(range(256)) * 4)
    d = dwt_haar(s)
    assert d.J == 3
    assert d.coefficient(1, 1) > 0


def test_brute_force_oracle(rng):
    for T in (2, 3, 4, 8, 16, 31, 64):
        x = rng.uniform(0, 8, T)
        d = dwt_haar(x)
        for key, v in brute_force_coefficients(x).items():
            assert d.coefficient(*key) == pytest.approx(v, abs=1e-10)


@settings(max_examples=200, deadline=None)
@given(streams)
def test_parseval(x):
    x = np.asarray(x)
    d = dwt_haar(x)
    xt = x[:d.truncated_length]
    lhs = float(xt @ xt)
    rhs = d.truncated_length * d.global_mean ** 2 + energy_spectrum(d).energies.sum()
    assert abs(lhs - rhs) <= 1e-9 * max(lhs, 1e-300) + 1e-12


@settings(max_examples=100, deadline=None)
@given(streams, st.floats(-5, 5))
def test_shift_changes_only_mean(x, c):
    a = dwt_haar(x)
    b = dwt_haar(np.asarray(x) + c)
    assert b.global_mean == pytest.approx(a.global_mean + c, abs=1e-9)
    np.testing.assert_allclose(b.flat(), a.flat(), atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(streams, st.floats(-4, 4))
def test_scaling_energy(x, alpha):
    e1 = stream_spectrum(x).energies
    e2 = stream_spectrum(np.asarray(x) * alpha).energies
    np.testing.assert_allclose(e2, alpha ** 2 * e1, rtol=1e-9, atol=1e-9)


def test_spectrum_sums_to_detail_energy(rng):
    d = dwt_haar(rng.uniform(0, 8, 100))
    e = energy_spectrum(d)
    assert e.J == d.J == len(e)
    assert e.energies.sum() == pytest.approx(float(d.flat() @ d.flat()))


def test_energy_spectrum_rejects_negative():
    with pytest.raises(ValueError):
        EnergySpectrum([1.0, -0.5])


def test_mra_examples(rng):
    d = dwt_haar([1, 3, 5, 7])
    np.testing.assert_allclose(mra_approximation(d, 1), [2, 2, 6, 6])
    x = rng.uniform(0, 8, 37)
    d = dwt_haar(x)
    np.testing.assert_allclose(mra_approximation(d, 0), np.full(32, x[:32].mean()))
    np.testing.assert_allclose(mra_approximation(d, d.J), x[:32], atol=1e-9)
    with pytest.raises(ValueError):
        mra_approximation(d, d.J + 1)
    with pytest.raises(ValueError):
        mra_approximation(d, -1)


def test_mra_block_means(rng):
    x = rng.uniform(0, 8, 64)
    d = dwt_haar(x)
    for level in range(d.J + 1):
        block = 2 ** (d.J - level)
        want = np.repeat(x.reshape(-1, block).mean(axis=1), block)
        np.testing.assert_allclose(mra_approximation(d, level), want, atol=1e-9)


@pytest.mark.parametrize("T", [2, 4, 8, 16, 32, 64])
def test_refinement_telescoping(rng, T):
    x = rng.uniform(0, 8, T)
    d = dwt_haar(x)
    t = np.arange(T) / T
    for level in range(d.J):
        diff = mra_approximation(d, level + 1) - mra_approximation(d, level)
        j = level + 1
        detail = sum(
            -d.coefficient(j, k) * psi_jk(j - 1, k - 1, t) / math.sqrt(T)
            for k in range(1, 2 ** (j - 1) + 1)
        )
        np.testing.assert_allclose(diff, detail, atol=1e-9)
