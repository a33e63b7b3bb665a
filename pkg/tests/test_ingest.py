import json
from pathlib import Path

import pytest

from functional import FunctionKind
from ingest import (
    IngestError,
    apply_overrides,
    config_hash,
    config_to_dict,
    default_config_path,
    dump_config,
    load_config,
    parse_config,
)
from limitlaw import Order


def _payload(**changes):
    payload = {
        "schema_version": 1,
        "kernel": {"family": "subfbm", "H": 0.4, "d": 5, "critical": True},
        "function": {"kind": "gauss", "sigma": 1.0},
        "order": "first",
        "n_list": [1, 2],
        "t1": 1.0,
        "t2": 2.0,
        "replicates": 10,
    }
    payload.update(changes)
    return payload


@pytest.mark.parametrize("name", ["fbm_d4", "subfbm_d5", "bifbm_d4"])
def test_shipped_configs_load(config_dir, name):
    config = load_config(config_dir / f"{name}.json")
    assert config.kernel.d == config.function.d
    assert config.source.endswith(f"{name}.json")


def test_bifbm_config_is_second_order(config_dir):
    config = load_config(config_dir / "bifbm_d4.json")
    assert config.order == Order.SECOND
    assert config.function.kind == FunctionKind.DIFF_GAUSS
    assert config.function.mass == 0.0


def test_defaults_filled():
    config = parse_config(_payload())
    assert (config.M_lin, config.M_log) == (8, 128)
    assert config.root_seed is None
    assert config.n_list == (1.0, 2.0)
    assert config.assumptions.gammas == (2.0, 5.0, 10.0, 100.0)


def test_hash_stable_under_reordering():
    payload = _payload()
    shuffled = dict(reversed(list(payload.items())))
    shuffled["kernel"] = dict(reversed(list(payload["kernel"].items())))
    assert config_hash(parse_config(payload)) == config_hash(parse_config(shuffled))


def test_hash_changes_with_content():
    assert config_hash(parse_config(_payload())) != config_hash(parse_config(_payload(replicates=11)))


def test_dump_round_trip(tmp_path, config_dir):
    original = load_config(config_dir / "subfbm_d5.json")
    path = tmp_path / "echo.json"
    path.write_text(dump_config(original), encoding="utf-8")
    echoed = load_config(path)
    assert config_hash(echoed) == config_hash(original)
    assert echoed == original


def test_unknown_key_reports_field_and_line(tmp_path):
    text = json.dumps(_payload(), indent=2).replace('"replicates": 10', '"replicates": 10,\n  "replicate": 3')
    path = tmp_path / "bad.json"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(IngestError) as excinfo:
        load_config(path)
    assert excinfo.value.field == "replicate"
    assert excinfo.value.line == text.splitlines().index('  "replicate": 3') + 1


def test_syntax_error_reports_line(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "schema_version": 1,\n  "kernel": {\n}}}\n', encoding="utf-8")
    with pytest.raises(IngestError) as excinfo:
        load_config(path)
    assert excinfo.value.line == 4


def test_missing_file():
    with pytest.raises(IngestError):
        load_config("configs/does_not_exist.json")


@pytest.mark.parametrize(
    "changes,field",
    [
        ({"schema_version": 2}, "schema_version"),
        ({"order": "third"}, "order"),
        ({"replicates": 1}, "replicates"),
        ({"t1": 0}, "t1"),
        ({"function": {"kind": "sinc"}}, "function.kind"),
        ({"kernel": {"family": "fbm", "H": 0.4, "d": 4, "critical": True}}, "kernel"),
        ({"kernel": {"family": "fbm", "d": 4}}, "kernel.H"),
    ],
)
def test_validation_errors(changes, field):
    with pytest.raises(IngestError) as excinfo:
        parse_config(_payload(**changes))
    assert excinfo.value.field == field


def test_second_order_requires_mean_zero():
    with pytest.raises(IngestError) as excinfo:
        parse_config(_payload(order="second"))
    assert excinfo.value.field == "function.kind"


def test_apply_overrides():
    config = parse_config(_payload())
    assert apply_overrides(config, root_seed=None) is config
    assert apply_overrides(config, root_seed=5).root_seed == 5
    with pytest.raises(ValueError):
        apply_overrides(config, seed=5)


def test_to_experiment():
    config = parse_config(_payload(root_seed=3))
    experiment = config.to_experiment(root_seed=3, workers=2)
    assert experiment.t_min == 1.0
    assert experiment.workers == 2
    assert experiment.f.d == 5


def test_config_to_dict_includes_seed_only_when_set():
    assert "root_seed" not in config_to_dict(parse_config(_payload()))
    assert config_to_dict(parse_config(_payload(root_seed=9)))["root_seed"] == 9


def test_default_config_path():
    assert default_config_path("fbm_d4").name == "fbm_d4.json"
    assert default_config_path("fbm_d4.json").name == "fbm_d4.json"
    assert default_config_path("fbm_d4.cfg") == Path("configs") / "fbm_d4.json"
