import math

import pytest

from fslris.scenario import (Scenario, dbm_per_hz_to_watts, load_scenario, path_loss_db,
                             scenario_to_config)

# values below were evaluated by hand from the urban-micro formulas
NLOS_100M_3GHZ = 103.16268272552881
LOS_100M_3GHZ = 83.94242509439326


def test_path_loss_reference_values():
    assert float(path_loss_db(100.0, 3e9, "nlos")) == pytest.approx(NLOS_100M_3GHZ, abs=1e-12)
    assert float(path_loss_db(100.0, 3e9, "los")) == pytest.approx(LOS_100M_3GHZ, abs=1e-12)


def test_noise_density_conversion():
    assert dbm_per_hz_to_watts(-104.0) == pytest.approx(3.9810717055349693e-14, rel=1e-14)
    assert Scenario().noise_density == pytest.approx(3.9810717055349693e-14, rel=1e-14)
    assert dbm_per_hz_to_watts(30.0) == pytest.approx(1.0)


def test_reference_geometry():
    s = Scenario(num_ris=4)
    c = math.cos(math.radians(45))
    for k, pos in enumerate(s.ris_locations, start=1):
        assert pos == pytest.approx([100 / k * c, 100 / k * c, 50])
    assert tuple(s.bs_position) == (0.0, 0.0, 100.0)


@pytest.mark.parametrize("field,value", [("num_users", -1), ("tx_power", 0.0), ("bandwidth", -1.0),
                                         ("elements_per_ris", 0), ("request_prob", 1.5),
                                         ("detector_accuracy", 0.0), ("features", "wavelet")])
def test_rejects_invalid(field, value):
    with pytest.raises(ValueError):
        Scenario(**{field: value})


def test_upload_bits_track_the_model_size():
    s = Scenario(window=32, hidden_units=64)
    assert s.num_params == 32 * 64 + 64 + 64 * 4 + 4
    assert s.upload_bits == 32 * s.num_params
    assert Scenario(features="iq").input_dim == 64


def test_replace_resets_positions_when_ris_count_changes():
    s = Scenario(num_ris=2).replace(num_ris=3)
    assert len(s.ris_locations) == 3


def test_config_round_trip(tmp_path):
    s = Scenario(num_users=5, num_ris=3, elements_per_ris=(8, 16, 32), snr_threshold_db=-55.5)
    path = tmp_path / "s.ini"
    path.write_text(scenario_to_config(s))
    assert load_scenario(path) == s


def test_config_unknown_key_is_named(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[scenario]\nnum_userz = 3\n")
    with pytest.raises(KeyError, match="num_userz"):
        load_scenario(path)
