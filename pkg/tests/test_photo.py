import numpy as np
import pytest
from hypothesis import given, strategies as st

from degkit.errors import DomainError
from degkit.imaging import Rng
from degkit.photo import (BLOCK, ExposureParams, SensorModel, apply_low_light, apply_over_exposure,
                          apply_sensor_noise, poisson_gaussian_variance, poisson_sample, snr_db)

QUIET = SensorModel(gain=1e-8, read_sigma=0.0)


def test_zero_signal_without_read_noise_is_zero():
    out = apply_sensor_noise(np.zeros((10, 10, 3)), ExposureParams(0.004), SensorModel(read_sigma=0.0), Rng(1))
    assert np.all(out == 0.0)


@pytest.mark.parametrize("lam", [16.0, 100.0])
def test_poisson_term_mean(lam):
    k = 2.5e-4
    e = ExposureParams(0.004)
    intensity = lam * k / e.exposure
    out = apply_sensor_noise(np.full((1000, 1000), intensity), e, SensorModel(k, 0.0), Rng(2, "mean"))
    assert out.mean() == pytest.approx(lam * k, rel=0.01)


def test_same_seed_bit_identical(clean):
    e, s = ExposureParams(0.004), SensorModel()
    a = apply_low_light(clean.color, e, s, Rng(3, "x"))
    b = apply_low_light(clean.color, e, s, Rng(3, "x"))
    c = apply_low_light(clean.color, e, s, Rng(4, "x"))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_tile_streams_independent_of_image_extent():
    e, s = ExposureParams(0.004), SensorModel()
    img = np.full((2 * BLOCK, 2 * BLOCK, 3), 0.5)
    full = apply_sensor_noise(img, e, s, Rng(5))
    part = apply_sensor_noise(img[:BLOCK, :BLOCK], e, s, Rng(5))
    assert np.array_equal(full[:BLOCK, :BLOCK], part)


def test_low_light_unit_exposure_tiny_gain_is_near_identity(clean):
    out = apply_low_light(clean.color, ExposureParams(1.0), QUIET, Rng(6))
    assert np.max(np.abs(out - np.clip(clean.color, 0, 1))) < 1e-3


def _uniform_field():
    return np.full((100, 1000, 3), 0.8)  # 10^5 samples per channel


def test_low_light_statistics_before_clamp():
    e, s = ExposureParams(0.004), SensorModel()
    raw = apply_sensor_noise(_uniform_field(), e, s, Rng(7))[..., 0]
    assert raw.mean() == pytest.approx(0.0032, rel=0.02)
    assert raw.var() == pytest.approx(poisson_gaussian_variance(0.8, e, s), rel=0.05)


def test_low_light_clamped_output_statistics():
    # With the default read noise (2e-3 against a 3.2e-3 mean) the [0, 1] clamp
    # cuts the lower tail, so the clamped mean and variance are biased.
    e, s = ExposureParams(0.004), SensorModel()
    out = apply_low_light(_uniform_field(), e, s, Rng(7))[..., 0]
    assert out.mean() == pytest.approx(0.0032, rel=0.02)
    assert out.var() == pytest.approx(poisson_gaussian_variance(0.8, e, s), rel=0.05)


def test_over_exposure_monotone_in_exposure_noiseless():
    img = Rng(12, "img").random((32, 32, 3))
    prev = None
    for e in (1.0, 2.0, 4.0, 8.0):
        out = apply_over_exposure(img, ExposureParams(e), SensorModel(1e-12, 0.0), Rng(12))
        if prev is not None:
            assert np.all(out >= prev - 1e-5)
        prev = out


def test_low_light_rejects_bright_exposure():
    with pytest.raises(DomainError):
        apply_low_light(np.zeros((4, 4, 3)), ExposureParams(2.0), SensorModel(), Rng(0))


def test_over_exposure_saturates():
    out = apply_over_exposure(np.full((8, 8, 3), 0.5), ExposureParams(8.0), QUIET, Rng(8))
    assert np.all(out == 1.0)


def test_over_exposure_keeps_dark_region_scaled():
    out = apply_over_exposure(np.full((8, 8, 3), 0.05), ExposureParams(8.0), QUIET, Rng(9))
    assert np.allclose(out, 0.4, atol=1e-3)


def test_over_exposure_rejects_dim_exposure():
    with pytest.raises(DomainError):
        apply_over_exposure(np.zeros((4, 4, 3)), ExposureParams(0.5), SensorModel(), Rng(0))


@given(st.floats(1.0, 10.0), st.integers(0, 1000))
def test_over_exposure_output_in_unit_range(e, seed):
    img = Rng(seed, "img").random((16, 16, 3)) * 2.0
    out = apply_over_exposure(img, ExposureParams(e), SensorModel(), Rng(seed))
    assert out.min() >= 0.0 and out.max() <= 1.0


@given(st.floats(0.001, 1.0), st.integers(0, 1000))
def test_low_light_output_in_unit_range(e, seed):
    img = Rng(seed, "img").random((16, 16, 3))
    out = apply_low_light(img, ExposureParams(e), SensorModel(), Rng(seed))
    assert out.min() >= 0.0 and out.max() <= 1.0


def test_sensor_rejects_negative_input():
    with pytest.raises(DomainError):
        apply_sensor_noise(np.full((4, 4), -0.1), ExposureParams(1.0), SensorModel(), Rng(0))
    with pytest.raises(DomainError):
        SensorModel(gain=0.0)
    with pytest.raises(DomainError):
        ExposureParams(0.0)


def test_poisson_sampler_regimes_agree_at_switch():
    rng = np.random.default_rng(11)
    n = 400_000
    for lam in (29.9, 30.0):
        d = poisson_sample(np.full(n, lam), rng.random(n), rng.standard_normal(n))
        assert d.mean() == pytest.approx(lam, rel=0.01)
        assert d.var() == pytest.approx(lam, rel=0.03)
        assert np.all(d == np.round(d)) and d.min() >= 0


def test_snr_increases_with_exposure():
    s = SensorModel()
    assert snr_db(0.5, ExposureParams(0.005), s) > snr_db(0.5, ExposureParams(0.003), s)
