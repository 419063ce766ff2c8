import numpy as np
import pytest

from volswitch.bsgarch import ContractSpec, GarchParams
from volswitch.config import RunConfig, config_from_text, load_config, write_garch_fragment
from volswitch.exceptions import FormatError, InvalidInputError
from volswitch.filters import FilterId

SAMPLE = """
# model
garch.omega = 5e-6
garch.alpha = 0.07
garch.beta  = 0.88   # trailing comment
noise.q11 = 2e-10
noise.r = 0.04
v0 = 2e-4

filters.n-particles = 500      # hyphens normalize to underscores
filters.ess-threshold = 0.5
switch.independent-chains = yes
data.columns.quote_date = QUOTE_DT
data.columns.strike = STRIKE_PRC
"""


def test_parse_round_trip_of_known_keys():
    cfg = config_from_text(SAMPLE)
    assert cfg.garch_omega == 5e-6
    assert cfg.garch_alpha == 0.07
    assert cfg.garch_beta == 0.88
    assert cfg.q11 == 2e-10
    assert cfg.q22 == 1e-8  # untouched default
    assert cfg.noise_r == 0.04
    assert cfg.v0 == 2e-4
    assert cfg.pf_particles == 500
    assert cfg.ess_threshold == 0.5
    assert cfg.independent_chains is True
    assert cfg.columns == {"quote_date": "QUOTE_DT", "strike": "STRIKE_PRC"}


def test_unknown_key_fails_fast():
    with pytest.raises(InvalidInputError, match="unknown config key"):
        config_from_text("garch.omga = 1e-6")


def test_malformed_lines_raise_with_location():
    with pytest.raises(FormatError, match="<config>:1"):
        config_from_text("garch.omega 1e-6")
    with pytest.raises(FormatError, match="empty key"):
        config_from_text(" = 3")
    with pytest.raises(FormatError, match="bad value"):
        config_from_text("garch.omega = sideways")
    with pytest.raises(FormatError, match="bad value"):
        config_from_text("switch.independent_chains = maybe")


def test_invalid_parameter_combinations_rejected():
    with pytest.raises(InvalidInputError):
        config_from_text("garch.alpha = 0.6\ngarch.beta = 0.5")  # persistence >= 1
    with pytest.raises(InvalidInputError):
        config_from_text("dt = 0")
    with pytest.raises(InvalidInputError):
        config_from_text("risk_transition = diagonal")


def test_measurement_variance_defaults_to_one_percent_of_strike():
    cfg = RunConfig()
    assert cfg.measurement_variance(100.0) == pytest.approx(1.0)
    assert cfg.measurement_variance(50.0) == pytest.approx(0.25)
    assert RunConfig(noise_r=0.09).measurement_variance(100.0) == 0.09


def test_model_spec_assembly():
    cfg = config_from_text("garch.omega = 4e-6\nnoise.q22 = 3e-8\nrisk_transition = literal")
    spec = cfg.model_spec(ContractSpec(strike=120.0, expiry_step=60))
    assert spec.garch.omega == 4e-6
    assert spec.risk_transition == "literal"
    np.testing.assert_allclose(spec.noise.q, np.diag([1e-10, 3e-8]))
    assert spec.noise.r == pytest.approx((0.01 * 120.0) ** 2)
    assert spec.annualization == pytest.approx(252.0)


def test_estimation_settings_translation():
    cfg = config_from_text("filters.ess_threshold = 0.3\nfilters.ukf.alpha = 0.5")
    st = cfg.estimation_settings(mode="best", filters=(FilterId.EKF, FilterId.PF), seed=9)
    assert st.mode == "best"
    assert st.filters == (FilterId.EKF, FilterId.PF)
    assert st.seed == 9
    assert st.ess_threshold == 0.3
    assert st.sigma_params.alpha == 0.5
    np.testing.assert_array_equal(st.x0, [cfg.v0, cfg.r0])
    np.testing.assert_allclose(st.p0, np.diag([cfg.p0_v, cfg.p0_r]))


def test_zero_ess_threshold_means_resample_every_step():
    st = RunConfig().estimation_settings()
    assert st.ess_threshold is None


def test_load_config_missing_file_and_fragment_round_trip(tmp_path):
    with pytest.raises(FormatError):
        load_config(tmp_path / "absent.cfg")
    params = GarchParams(omega=3.217e-06, alpha=0.0912, beta=0.8633)
    frag = tmp_path / "fitted.cfg"
    write_garch_fragment(frag, params)
    cfg = load_config(frag)
    assert cfg.garch_params() == params
