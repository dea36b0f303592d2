import hashlib
import json
import re

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from mpmgan.cli import main
from mpmgan.config import TrainConfig
from mpmgan.runfiles import run_lock

SMALL = {"hidden": 8, "batch": 8, "n_iters": 10, "checkpoint_every": 5,
         "dataset": {"kind": "ring_mixture", "k": 8, "radius": 2.0, "sigma": 0.02, "n": 200}}


def write_config(path, **kw):
    cfg = dict(SMALL, out_dir=str(path.parent / "run"))
    cfg.update(kw)
    path.write_text(json.dumps(cfg))
    return path


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """One none-mode and one message-passing run shared by the eval/plot tests."""
    root = tmp_path_factory.mktemp("cli")
    runs = {}
    for name, extra in (("plain", {}), ("cmp", {"message_mode": "conditioned_message_passing"})):
        cfg = write_config(root / f"{name}.json", out_dir=str(root / name), **extra)
        assert main(["train", str(cfg)]) == 0
        runs[name] = root / name
    return runs


def test_train_ten_iterations(trained):
    lines = (trained["plain"] / "metrics.csv").read_text().splitlines()
    assert len(lines) == 11
    manifest = json.loads((trained["plain"] / "run_manifest.json").read_text())
    listed = {entry["path"] for entry in manifest["files"]}
    assert {"metrics.csv", "config.json", "dataset.csv", "checkpoints/ckpt_000010.ckpt"} <= listed


def test_unknown_key_exit_two(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", learningrate=0.1)
    assert main(["train", str(cfg)]) == 2
    assert "learningrate" in capsys.readouterr().err


def test_wrong_type_names_key_and_type(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", batch="8")
    assert main(["train", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "batch" in err and "int" in err


def test_missing_config_file(tmp_path, capsys):
    assert main(["train", str(tmp_path / "nope.json")]) == 1
    assert "not found" in capsys.readouterr().err


def test_numeric_abort_exit_three(tmp_path, monkeypatch):
    # Saturated scores are clamped, so a NaN has to come from the data itself.
    import mpmgan.trainer as trainer

    real = trainer.make_dataset

    def poisoned(config, tag="data"):
        ds = real(config, tag)
        ds.samples.values[5:] = float("nan")
        return ds

    monkeypatch.setattr(trainer, "make_dataset", poisoned)
    cfg = write_config(tmp_path / "c.json")
    assert main(["train", str(cfg)]) == 3
    assert (tmp_path / "run" / "checkpoints" / "diagnostic.ckpt").exists()


def test_identical_runs_identical_hashes(tmp_path):
    cfg = write_config(tmp_path / "c.json")
    assert main(["train", str(cfg), "--out-dir", str(tmp_path / "a")]) == 0
    assert main(["train", str(cfg), "--out-dir", str(tmp_path / "b")]) == 0
    for name in ("metrics.csv", "dataset.csv", "config.json", "checkpoints/ckpt_000010.ckpt"):
        assert digest(tmp_path / "a" / name) == digest(tmp_path / "b" / name)


def test_probe_msg_on_plain_run_is_contradiction(trained, capsys):
    ckpt = trained["plain"] / "checkpoints" / "ckpt_000010.ckpt"
    assert main(["eval", str(ckpt), "probe", "--source", "msg", "--samples", "90"]) == 5
    assert "message networks untrained" in capsys.readouterr().err


def test_interp_sixteen_rows_and_svg(trained):
    ckpt = trained["cmp"] / "checkpoints" / "ckpt_000010.ckpt"
    assert main(["eval", str(ckpt), "interp", "--kind", "message", "--gen", "g2", "--steps", "16"]) == 0
    rows = (trained["cmp"] / "eval" / "interp_message_g2_ckpt_000010.csv").read_text().splitlines()
    assert len(rows) == 17
    assert len(list((trained["cmp"] / "eval").glob("interp_message_g2_*.svg"))) == 1


COVERAGE_REPORT = {
    "type": "object",
    "required": ["modes_covered", "per_mode_fraction", "high_quality_fraction", "covered_modes", "n_samples"],
    "properties": {
        "modes_covered": {"type": "integer", "minimum": 0, "maximum": 8},
        "per_mode_fraction": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1},
                              "minItems": 8, "maxItems": 8},
        "high_quality_fraction": {"type": "number", "minimum": 0, "maximum": 1},
        "covered_modes": {"type": "array", "items": {"type": "integer", "minimum": 0, "maximum": 7}},
        "n_samples": {"type": "integer", "minimum": 1},
    },
}
COVERAGE_SCHEMA = {
    "type": "object",
    "required": ["checkpoint_iteration", "k", "g1", "g2", "union"],
    "properties": {"g1": COVERAGE_REPORT, "g2": COVERAGE_REPORT,
                   "union": {"type": "object", "required": ["modes_covered", "covered_modes"]}},
}


def test_coverage_json_is_schema_valid(trained):
    jsonschema = pytest.importorskip("jsonschema")
    ckpt = trained["cmp"] / "checkpoints" / "ckpt_000010.ckpt"
    assert main(["eval", str(ckpt), "coverage", "--samples", "200"]) == 0
    doc = json.loads((trained["cmp"] / "eval" / "coverage_ckpt_000010.json").read_text())
    jsonschema.validate(doc, COVERAGE_SCHEMA)
    assert doc["g1"]["n_samples"] == 200
    assert doc["g1"]["modes_covered"] == len(doc["g1"]["covered_modes"])


@pytest.mark.parametrize("source", ["disc", "msg", "both"])
def test_probe_and_cluster_outputs(trained, source):
    ckpt = trained["cmp"] / "checkpoints" / "ckpt_000010.ckpt"
    assert main(["eval", str(ckpt), "probe", "--source", source, "--samples", "120"]) == 0
    doc = json.loads((trained["cmp"] / "eval" / f"probe_{source}_ckpt_000010.json").read_text())
    assert doc["feature_dim"] == {"disc": 8, "msg": 8, "both": 16}[source]
    assert 0 <= doc["accuracy"] <= 1
    assert main(["eval", str(ckpt), "cluster", "--source", source, "--samples", "60"]) == 0


def test_eval_does_not_mutate_checkpoint(trained):
    ckpt = trained["cmp"] / "checkpoints" / "ckpt_000005.ckpt"
    before = digest(ckpt)
    for args in (["coverage", "--samples", "50"], ["interp", "--kind", "noise", "--gen", "g1"],
                 ["probe", "--source", "both", "--samples", "60"]):
        assert main(["eval", str(ckpt), *args]) == 0
    assert digest(ckpt) == before


def test_eval_is_idempotent(trained):
    ckpt = trained["cmp"] / "checkpoints" / "ckpt_000010.ckpt"
    out = trained["cmp"] / "eval" / "interp_noise_g1_ckpt_000010.csv"
    main(["eval", str(ckpt), "interp", "--kind", "noise", "--gen", "g1"])
    first = out.read_bytes()
    main(["eval", str(ckpt), "interp", "--kind", "noise", "--gen", "g1"])
    assert out.read_bytes() == first


def test_version_mismatch_exit_four(trained, tmp_path, capsys):
    raw = (trained["plain"] / "checkpoints" / "ckpt_000010.ckpt").read_bytes()
    bad = tmp_path / "checkpoints" / "ckpt_000010.ckpt"
    bad.parent.mkdir()
    bad.write_bytes(raw.replace(b'"schema_version": 1', b'"schema_version": 2', 1))
    assert main(["eval", str(bad), "coverage"]) == 4
    assert "version" in capsys.readouterr().err


def test_plot_points_and_rerun(trained):
    assert main(["plot", str(trained["plain"])]) == 0
    plots = trained["plain"] / "plots"
    loss = (plots / "loss_curves.svg").read_text()
    series = re.findall(r'<polyline class="series" data-name="([^"]+)"[^>]* points="([^"]*)"', loss)
    # G2 is live in a two-generator run, so all three loss columns plot.
    assert [name for name, _ in series] == ["loss_d", "loss_g1", "loss_g2"]
    assert all(len(pts.split()) == 10 for _, pts in series)
    gen = (plots / "generations.svg").read_text()
    for marker in ("dot", "ring", "cross"):
        assert f"marker-{marker}" in gen
    before = {p.name: p.read_bytes() for p in plots.iterdir()}
    assert main(["plot", str(trained["plain"])]) == 0
    assert {p.name: p.read_bytes() for p in plots.iterdir()} == before


def test_plot_empty_dir(tmp_path, capsys):
    assert main(["plot", str(tmp_path)]) != 0
    assert "missing metrics file" in capsys.readouterr().err


def test_plot_corrupt_csv(tmp_path, capsys):
    (tmp_path / "metrics.csv").write_text("iter,loss_d\n1,2\n")
    assert main(["plot", str(tmp_path)]) == 1
    assert "corrupt" in capsys.readouterr().err


def test_locked_run_dir_is_refused(trained, capsys):
    with run_lock(trained["plain"]):
        assert main(["plot", str(trained["plain"])]) == 1
    assert "busy" in capsys.readouterr().err.lower()


configs = st.fixed_dictionaries({
    "generator_mode": st.sampled_from(["vanilla", "competing", "conceding"]),
    "message_mode": st.sampled_from(["none", "message_passing", "conditioned_message_passing"]),
    "noise1": st.sampled_from(["uniform_pm1", "normal01"]),
    "noise2": st.sampled_from(["uniform_pm1", "normal01"]),
    "noise_dim": st.integers(1, 16),
    "msg_dim": st.integers(1, 16),
    "hidden": st.integers(1, 128),
    "lr": st.floats(1e-6, 1e-1),
    "beta1": st.floats(0, 0.99),
    "n_iters": st.integers(0, 10**6),
    "batch": st.integers(1, 1024),
    "seed": st.integers(0, 2**63 - 1),
    "detach_messages": st.booleans(),
    "non_saturating": st.booleans(),
    "shared_msg_gen": st.booleans(),
    "dataset": st.one_of(
        st.fixed_dictionaries({"kind": st.just("ring_mixture"), "k": st.integers(1, 32),
                               "radius": st.floats(0.1, 10), "sigma": st.floats(1e-4, 1)}),
        st.fixed_dictionaries({"kind": st.just("labeled_blobs"), "k": st.integers(2, 10),
                               "sigma": st.floats(1e-3, 1)})),
})


@settings(max_examples=100, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(raw=configs)
def test_config_round_trip(raw, tmp_path):
    cfg = TrainConfig.from_dict(raw)
    path = tmp_path / "rt.json"
    from mpmgan.config import dump_config, load_config

    path.write_text(dump_config(cfg), encoding="utf-8")
    again = load_config(path)
    assert again == cfg
    assert again.to_dict() == cfg.to_dict()
