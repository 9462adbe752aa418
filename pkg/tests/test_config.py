import math

import pytest

from eidlab.config import EXPERIMENTS, SCHEMA, canonical_name, parse_config, parse_config_text
from eidlab.errors import ResourceError, ValidationError


def test_minimal_axioms_config():
    cfg = parse_config_text("[experiment]\nname = axioms\n")
    assert cfg.experiment == "axioms-check"
    assert cfg["trials"] == 1000
    assert cfg["p"] == (2.0,)
    assert cfg.seed == 0


def test_every_experiment_has_defaults():
    for name in EXPERIMENTS:
        cfg = parse_config_text(f"[experiment]\nname = {name}\n")
        assert set(cfg.params) == set(SCHEMA[name])


def test_values_are_parsed():
    cfg = parse_config_text("[experiment]\nname = axioms\nseed = 9\n[parameters]\np = 1.5, 2, 3\nn_values = 2\n")
    assert cfg.seed == 9
    assert cfg["p"] == (1.5, 2.0, 3.0)
    assert cfg["n_values"] == (2,)


def test_exponent_must_exceed_one():
    with pytest.raises(ValidationError, match="parameters.p: p must exceed 1"):
        parse_config_text("[experiment]\nname = axioms\n[parameters]\np = 0.5\n")


def test_gasket_level_cap():
    with pytest.raises(ResourceError, match="max_level"):
        parse_config_text("[experiment]\nname = gasket\n[parameters]\nmax_level = 12\n")


@pytest.mark.parametrize("text,path", [
    ("[experiment]\nname = axioms\n[parameters]\ntrails = 3\n", "parameters.trails"),
    ("[experiment]\nname = axioms\ncolour = red\n", "experiment.colour"),
    ("[experiment]\nname = axioms\n[extra]\nx = 1\n", "extra"),
    ("[experiment]\nname = nope\n", "experiment.name"),
    ("[experiment]\nname = axioms\nseed = -1\n", "experiment.seed"),
    ("[experiment]\nname = eid-scalar\n[parameters]\nladder = 257, 500\n", "parameters.ladder"),
    ("[experiment]\nname = approx\n[parameters]\nstencil = hex\n", "parameters.stencil"),
    ("[experiment]\nname = axioms\n[parameters]\ntrials = many\n", "parameters.trials"),
])
def test_schema_errors_name_the_key(text, path):
    with pytest.raises(ValidationError, match=path.replace(".", r"\.")):
        parse_config_text(text)


def test_requested_experiment_must_match():
    with pytest.raises(ValidationError):
        parse_config_text("[experiment]\nname = axioms\n", experiment="preiss")
    assert parse_config_text("[parameters]\nsize = 65\n", experiment="preiss")["size"] == 65


def test_graph_input_is_hashed(tmp_path):
    (tmp_path / "g.txt").write_text("[edges]\n0 1 1.0\n1 2 1.0\n")
    cfg_path = tmp_path / "a.ini"
    cfg_path.write_text("[experiment]\nname = axioms\n[parameters]\ngraph = g.txt\n")
    cfg = parse_config(cfg_path)
    assert cfg["graph"] == (tmp_path / "g.txt").resolve()
    assert [len(d) for _, d in cfg.inputs] == [64, 64]
    cfg_path.write_text("[experiment]\nname = axioms\n[parameters]\ngraph = missing.txt\n")
    with pytest.raises(ValidationError, match="parameters.graph"):
        parse_config(cfg_path)


def test_malformed_and_non_utf8(tmp_path):
    with pytest.raises(ValidationError):
        parse_config_text("name = axioms\n")
    bad = tmp_path / "bad.ini"
    bad.write_bytes(b"[experiment]\nname = \xff\n")
    with pytest.raises(ValidationError, match="UTF-8"):
        parse_config(bad)


def test_aliases():
    assert canonical_name("gasket") == "gasket-mdim"
    assert canonical_name("preiss") == "preiss"
    assert SCHEMA["gasket-mdim"]["hausdorff_dim"].default == pytest.approx(math.log(3) / math.log(2))
