import json

import pytest

from conftest import make_document
from src.config import config_digest, load_config, parse_config, with_overrides
from src.errors import ConfigError


def test_valid_document_round_trips(document, tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(document))
    config = load_config(path)
    assert config.grid.dim == 1
    assert config.potential.delta == 0.2
    assert config.experiment.duhamel.isometry_paths == 200
    assert config_digest(config) == config_digest(parse_config(document))


def test_digest_tracks_content(document):
    base = config_digest(parse_config(document))
    assert len(base) == 16
    changed = config_digest(parse_config(make_document(noise={"dt": 0.025})))
    assert changed != base


def test_unknown_keys_are_rejected():
    document = make_document(noise={"seed": 3})
    with pytest.raises(ConfigError, match="noise.seed"):
        parse_config(document)


@pytest.mark.parametrize(
    "section,update",
    [
        ("noise", {"dt": 0.0}),
        ("noise", {"n_paths": 0}),
        ("noise", {"master_seed": 2**64}),
        ("grid", {"dim": 4}),
        ("potential", {"delta": -0.1}),
        ("potential", {"shape": "square"}),
        ("potential", {"shape": "sum-of-gaussians"}),
        ("ensemble", {"q": [1.5]}),
        ("ensemble", {"rho": [1.0]}),
    ],
)
def test_invalid_values_are_rejected(section, update):
    with pytest.raises(ConfigError):
        parse_config(make_document(**{section: update}))


def test_isometry_needs_enough_paths():
    document = make_document()
    document["experiment"]["duhamel"]["isometry_paths"] = 50
    with pytest.raises(ConfigError, match="isometry_paths"):
        parse_config(document)


def test_unreadable_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(broken)
    listing = tmp_path / "list.json"
    listing.write_text("[]")
    with pytest.raises(ConfigError):
        load_config(listing)


def test_seed_override(config):
    assert with_overrides(config) is config
    seeded = with_overrides(config, seed=5)
    assert seeded.noise.master_seed == 5
    assert seeded.noise.dt == config.noise.dt
    assert config_digest(seeded) != config_digest(config)
