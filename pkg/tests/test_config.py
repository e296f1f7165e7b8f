import pytest
import yaml

from kreslingcap.config import (SCHEMA_VERSION, Config, ConfigError, dump_config, from_flat, load_config,
                                save_config, to_flat, update)


def test_roundtrip(tmp_path):
    cfg = update(Config(), "protocol", axial_offsets=(0.0, 5.0), cycles=3)
    path = tmp_path / "c.yaml"
    save_config(cfg, path)
    assert load_config(path) == cfg
    assert dump_config(load_config(path)) == dump_config(cfg)


def test_shipped_default_matches_code():
    assert load_config("configs/default.yaml") == Config()


def test_flat_keys():
    flat = to_flat(Config())
    assert flat["schema_version"] == SCHEMA_VERSION
    assert all("." in k for k in flat if k != "schema_version")
    assert flat["geometry.beta"] == 75.0


def test_unknown_key_rejected():
    flat = to_flat(Config())
    flat["geometry.colour"] = "red"
    with pytest.raises(ConfigError, match="unknown"):
        from_flat(flat)
    flat = to_flat(Config())
    flat["nonsense"] = 1
    with pytest.raises(ConfigError):
        from_flat(flat)


@pytest.mark.parametrize("version", [None, 0, 2, "1"])
def test_schema_version_checked(version):
    flat = to_flat(Config())
    flat["schema_version"] = version
    with pytest.raises(ConfigError, match="schema_version"):
        from_flat(flat)


@pytest.mark.parametrize("key,val", [("geometry.beta", 0.0), ("protocol.cycles", 0), ("tank.bits", 4),
                                     ("electrodes.placement", "X"), ("model.facet_ratio", 0.1),
                                     ("protocol.axial_offsets", [])])
def test_invalid_values(key, val):
    with pytest.raises(ConfigError):
        Config().with_values(**{key: val})


def test_non_mapping_file(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(p)
    p.write_text("a: [1,\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_partial_file_uses_defaults(tmp_path):
    p = tmp_path / "p.yaml"
    p.write_text(yaml.safe_dump({"schema_version": 1, "protocol.cycles": 2}))
    cfg = load_config(p)
    assert cfg.protocol.cycles == 2 and cfg.geometry == Config().geometry
