import math

import pytest

from fractalcomp.model import (
    ConfigError,
    DistanceK,
    Estimate,
    Method,
    NetworkConfig,
    PathLossLaw,
    PowerThreshold,
    config_violations,
    dbm_to_watt,
    intensity_from_c,
    validate,
    watt_to_dbm,
)


def test_dbm_conversions():
    assert dbm_to_watt(30.0) == pytest.approx(1.0, rel=1e-15)
    assert dbm_to_watt(0.0) == pytest.approx(1e-3, rel=1e-15)
    assert dbm_to_watt(-22.0) == pytest.approx(6.30957344480193e-06, rel=1e-12)
    assert watt_to_dbm(dbm_to_watt(-95.0)) == pytest.approx(-95.0, abs=1e-12)


@pytest.mark.parametrize("x", [-120.0, -39.0, 0.0, 17.5])
def test_ten_db_is_factor_ten(x):
    assert dbm_to_watt(x) * 10 == pytest.approx(dbm_to_watt(x + 10), rel=1e-12)


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_dbm_rejects_non_finite(bad):
    with pytest.raises(ValueError):
        dbm_to_watt(bad)


def test_intensity_from_c():
    assert intensity_from_c(50) == pytest.approx(1 / (2500 * math.pi))


def test_default_scenario_is_valid():
    cfg = NetworkConfig()
    assert validate(cfg, PathLossLaw()) is cfg
    assert cfg.lambda_b == pytest.approx(1 / (50**2 * math.pi))
    assert cfg.lambda_u == pytest.approx(1 / (300 * math.pi))
    assert cfg.sigma2 == pytest.approx(10 ** (-12.5))


def test_zero_station_intensity_is_named():
    with pytest.raises(ConfigError) as info:
        validate(NetworkConfig(lambda_b=0.0), PathLossLaw())
    assert info.value.fields == ["lambda_b"]


def test_low_exponent_floor_is_named():
    with pytest.raises(ConfigError) as info:
        validate(NetworkConfig(), PathLossLaw(alpha_min=1.5))
    assert "alpha_min" in info.value.violations


def test_all_violations_reported_together():
    v = config_violations(NetworkConfig(lambda_b=-1, p_s=0, sigma2=math.nan), PathLossLaw(scale=0))
    assert set(v) == {"lambda_b", "p_s", "sigma2", "scale"}


def test_validate_is_idempotent():
    cfg, law = NetworkConfig(), PathLossLaw()
    assert validate(validate(cfg, law), law) == cfg


def test_rate_form_of_exponent_law():
    law = PathLossLaw.from_rate(9, 0.5)
    assert law.scale == 2.0
    assert law.frozen().mean() == pytest.approx(18.0)
    assert PathLossLaw().frozen().mean() == pytest.approx(4.5)


def test_truncation_mass_is_small():
    assert 0.0 < PathLossLaw().truncation_mass() < 0.03


def test_strategies_validate():
    with pytest.raises(ValueError):
        DistanceK(0)
    with pytest.raises(ValueError):
        PowerThreshold(0.0)
    assert PowerThreshold.from_dbm(-22).t == pytest.approx(dbm_to_watt(-22))


def test_estimate_std_error():
    mc = Estimate(1.0, 0.196, 100, Method.MONTE_CARLO)
    assert mc.std_error == pytest.approx(0.1)
    assert float(mc) == 1.0
    assert Estimate(1.0, 1e-7).std_error == 1e-7


def test_replace_and_power_scaling():
    cfg = NetworkConfig()
    scaled = cfg.scaled_power(10)
    assert scaled.p_s == pytest.approx(1.3)
    assert scaled.sigma2 == pytest.approx(10 * cfg.sigma2)
    assert cfg.replace(w=2).w == 2
