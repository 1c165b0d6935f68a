"""Configuration dataclasses, validation rules, and INI round-tripping."""

import dataclasses
import math

import pytest

from aqcka import model


def test_transmittance_at_zero_distance_is_detector_efficiency():
    ch = model.ChannelModel(distance_km=0.0)
    assert model.transmittance(ch) == pytest.approx(0.85)


def test_transmittance_follows_fiber_attenuation():
    ch = model.ChannelModel(distance_km=100.0)
    assert model.transmittance(ch) == pytest.approx(0.85 * 10 ** (-1.6), rel=1e-12)
    # halving the loss coefficient halves the exponent
    ch2 = model.ChannelModel(distance_km=100.0, alpha_db_per_km=0.08)
    assert model.transmittance(ch2) == pytest.approx(0.85 * 10 ** (-0.8), rel=1e-12)


def test_transmittance_monotone_in_distance():
    etas = [model.transmittance(model.ChannelModel(distance_km=d)) for d in (0, 50, 100, 200, 400)]
    assert all(a > b for a, b in zip(etas, etas[1:]))
    assert all(0.0 < eta <= 0.85 for eta in etas)


def test_default_config_validates():
    model.ProtocolConfig().validate()


def test_too_few_users_rejected():
    with pytest.raises(model.ConfigError):
        model.ProtocolConfig(n_users=2).validate()


def test_decoy_must_be_weaker_than_signal():
    cfg = model.ProtocolConfig()
    bad = dataclasses.replace(cfg, source=dataclasses.replace(cfg.source, mu=0.1, nu=0.2))
    with pytest.raises(model.ConfigError):
        bad.validate()


def test_intensity_probabilities_must_leave_room_for_vacuum():
    src = model.SourceConfig(p_mu=0.7, p_nu=0.4)
    with pytest.raises(model.ConfigError):
        src.validate()


def test_filtering_and_extended_sets_are_mutually_exclusive():
    cfg = model.ProtocolConfig(click_filtering=True, extended_z_sets=True)
    with pytest.raises(model.ConfigError):
        cfg.validate()


def test_coarse_quadrature_grid_rejected():
    with pytest.raises(model.ConfigError):
        model.ProtocolConfig(quad_points=4).validate()


@pytest.mark.parametrize(
    "kwargs",
    [
        {"eta_det": 1.5},
        {"eta_det": -0.2},
        {"p_d": -1e-3},
        {"e_d": -0.1},
        {"alpha_db_per_km": -0.16},
        {"distance_km": -1.0},
    ],
)
def test_channel_rejects_unphysical_values(kwargs):
    with pytest.raises(model.ConfigError):
        model.ChannelModel(**kwargs).validate()


@pytest.mark.parametrize("kwargs", [{"clock_hz": 0.0}, {"t_c_s": 0.0}, {"delta_f_hz": -1.0}])
def test_timing_rejects_unphysical_values(kwargs):
    with pytest.raises(model.ConfigError):
        model.TimingConfig(**kwargs).validate()


@pytest.mark.parametrize("eps_field", ["eps_cor", "eps_prime", "eps_hat", "eps_e", "eps_pa", "eps_chernoff"])
def test_security_epsilons_must_be_positive(eps_field):
    with pytest.raises(model.ConfigError):
        dataclasses.replace(model.SecurityParams(), **{eps_field: 0.0}).validate()


def test_config_round_trips_through_ini(tmp_path):
    cfg = model.ProtocolConfig(
        n_users=4,
        source=model.SourceConfig(mu=0.47, nu=0.031, p_mu=0.43, p_nu=0.21, m_slices=32),
        channel=model.ChannelModel(distance_km=123.456789, p_d=3.7e-9),
        timing=model.TimingConfig(t_c_s=1.25e-4, phase_locked=True),
        security=model.SecurityParams(total_pulses=1e16),
        click_filtering=True,
        quad_points=32,
    )
    path = tmp_path / "run.ini"
    path.write_text(model.dump_config(cfg))
    assert model.load_config(str(path)) == cfg


def test_dump_preserves_floats_exactly():
    cfg = model.ProtocolConfig(
        channel=model.ChannelModel(distance_km=1.0 / 3.0, p_d=math.pi * 1e-10)
    )
    text = model.dump_config(cfg)
    import configparser

    parser = configparser.ConfigParser()
    parser.read_string(text)
    assert float(parser["channel"]["distance_km"]) == 1.0 / 3.0
    assert float(parser["channel"]["p_d"]) == math.pi * 1e-10


def test_load_config_missing_file_raises(tmp_path):
    with pytest.raises(model.ConfigError):
        model.load_config(str(tmp_path / "absent.ini"))


def test_at_distance_returns_shifted_copy():
    cfg = model.ProtocolConfig()
    far = cfg.at_distance(250.0)
    assert far.channel.distance_km == 250.0
    assert cfg.channel.distance_km == 100.0
    assert far.source == cfg.source
