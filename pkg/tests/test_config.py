import pytest

from wdnfdi.config import PRESETS, load_config, parse_config, parse_index_list
from wdnfdi.errors import ConfigError

MINIMAL = """
[scenario]
magnitudes = 0.1 0.2
"""


def test_index_lists():
    assert parse_index_list("1-3, 7") == [0, 1, 2, 6]
    assert parse_index_list("8-14:2") == [7, 9, 11, 13]
    assert parse_index_list("3,1,3") == [0, 2]
    assert parse_index_list(" all ") is None
    for bad in ("0-2", "x", ""):
        with pytest.raises(ConfigError):
            parse_index_list(bad)


@pytest.mark.parametrize("name", PRESETS)
def test_presets_load(name):
    cfg = load_config(f"preset:{name}")
    assert cfg.scenario.magnitudes and cfg.placement.sensors >= 1
    assert cfg.scenario.window == list(range(12, 19))


def test_minimal_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.network_source == "hanoi" and cfg.scenario.seed == 1
    assert [s.name for s in cfg.scenario.splits] == ["pretrain"]
    assert cfg.hyper.seed == 1


def test_seed_override_changes_digest():
    a, b = load_config("preset:hanoi"), load_config("preset:hanoi", seed=7)
    assert b.scenario.seed == b.profile_seed == b.hyper.seed == 7
    assert a.digest() != b.digest()
    assert a.digest() == load_config("preset:hanoi").digest()


@pytest.mark.parametrize("text, msg", [
    (MINIMAL + "[bogus]\nx = 1\n", "unknown config section"),
    ("[scenario]\nwindow = 1-3\n", "magnitudes"),
    (MINIMAL + "[network]\nsource = moon\n", "network source"),
    (MINIMAL + "[network]\nsource = generate\n", "netgen"),
    (MINIMAL.replace("0.2", "abc"), "number list"),
    ("not an ini", "config"),
])
def test_config_errors(text, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(text)


def test_unknown_preset_and_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="unknown preset"):
        load_config("preset:nope")
    with pytest.raises(OSError):
        load_config(str(tmp_path / "missing.ini"))
