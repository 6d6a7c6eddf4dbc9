import json

import numpy as np
import pytest

from sgnet import cli
from sgnet.config import ConfigError, load_config, parse_pairs
from sgnet.data import foreground_fraction, read_manifest, read_volume
from sgnet.models import ArchitectureSpec, build_model, save_checkpoint

TINY = [
    "arch=sgnet", "encoder_widths=4,8", "sgm_groups=2", "width_multiplier=1.0",
    "patch=16,16,16", "window=32,32,32", "batch_size=2", "steps_per_epoch=2",
    "max_epochs=2", "patience=2", "lr=3e-3",
]


def run(*argv):
    return cli.main([str(a) for a in argv])


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("phantoms")
    assert run("phantom", "--out", root, "--n-train", 3, "--n-val", 1, "--n-test", 3, "--dim", 32, "--seed", 1) == 0
    return root / "manifest.tsv"


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    rundir = tmp_path_factory.mktemp("run")
    sets = [x for kv in TINY for x in ("--set", kv)]
    assert run("train", "--data", dataset, "--out", rundir, *sets) == 0
    return rundir / "checkpoint.sgck"


# ------------------------------------------------------------------ phantom


def test_phantom_byte_identical_trees(tmp_path):
    for name in ("a", "b"):
        assert run("phantom", "--out", tmp_path / name, "--n-train", 4, "--n-val", 1, "--n-test", 2, "--seed", 7) == 0
    a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
    assert a == b and len(a) == 15
    entries = read_manifest(tmp_path / "a" / "manifest.tsv")
    assert [e.split for e in entries] == ["train"] * 4 + ["val"] + ["test"] * 2
    assert len({e.subject for e in entries}) == 7
    for e in entries:
        assert 0.005 <= foreground_fraction(read_volume(e.mask)) <= 0.02


# ---------------------------------------------------------- exit-code taxonomy


def test_train_missing_manifest(tmp_path, capsys):
    missing = tmp_path / "nowhere" / "manifest.tsv"
    assert run("train", "--data", missing, "--out", tmp_path / "r") == cli.EXIT_DATA
    assert str(missing) in capsys.readouterr().err


def test_train_unknown_key(dataset, tmp_path, capsys):
    assert run("train", "--data", dataset, "--out", tmp_path / "r", "--set", "learning_rate=1") == cli.EXIT_CONFIG
    assert "learning_rate" in capsys.readouterr().err


def test_train_indivisible_patch(dataset, tmp_path, capsys):
    code = run("train", "--data", dataset, "--out", tmp_path / "r", "--set", "patch=30,32,32")
    assert code == cli.EXIT_CONFIG and "divisible" in capsys.readouterr().err


def test_evaluate_corrupt_checkpoint(dataset, tmp_path):
    bad = tmp_path / "bad.sgck"
    bad.write_bytes(b"garbage")
    assert run("evaluate", "--ckpt", bad, "--data", dataset, "--report", tmp_path / "r.json") == cli.EXIT_DATA


def test_compare_rejects_foreign_file(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{}")
    assert run("compare", "--reports", p, "--out", tmp_path / "c.json") == cli.EXIT_DATA


# ---------------------------------------------------------- train/evaluate


def test_train_writes_run_directory(trained):
    rundir = trained.parent
    assert {p.name for p in rundir.iterdir()} >= {"checkpoint.sgck", "trainlog.jsonl", "config.txt"}
    echoed = (rundir / "config.txt").read_text()
    assert "encoder_widths = 4, 8" in echoed and "lr = 0.003" in echoed
    lines = [json.loads(x) for x in (rundir / "trainlog.jsonl").read_text().splitlines()]
    assert lines[-1]["type"] == "summary" and len(lines) == 3


def test_evaluate_deterministic_and_consistent(dataset, trained, tmp_path):
    for name in ("a", "b"):
        assert run("evaluate", "--ckpt", trained, "--data", dataset, "--report", tmp_path / f"{name}.json") == 0
    a, b = (tmp_path / "a.json").read_bytes(), (tmp_path / "b.json").read_bytes()
    assert a == b
    rep = json.loads(a)
    assert rep["schema"] == "sgnet-metrics" and rep["schema_version"] == 1
    assert [s["id"] for s in rep["subjects"]] == ["sub-004", "sub-005", "sub-006"]
    for key in ("dice", "precision", "recall", "hd95"):
        values = [s[key] for s in rep["subjects"]]
        assert abs(rep["cohort"][key]["mean"] - np.mean(values)) <= 1e-12
    assert (tmp_path / "a.txt").read_text().startswith("model=sgnet split=test")


def test_all_background_checkpoint(dataset, tmp_path):
    model = build_model(ArchitectureSpec(kind="unet", encoder_widths=(2, 4)), seed=0)
    for p in model.parameters():
        p.data[...] = 0.0
    model._children["head"].bias.data[...] = -30.0
    ckpt = tmp_path / "bg.sgck"
    save_checkpoint(model, ckpt, {"window": [32, 32, 32]})
    assert run("evaluate", "--ckpt", ckpt, "--data", dataset, "--report", tmp_path / "bg.json") == 0
    rep = json.loads((tmp_path / "bg.json").read_text())
    for s in rep["subjects"]:
        assert s["dice"] == 0.0
        assert s["hd95"] == pytest.approx(np.sqrt(3) * 32)
        assert "pred_empty" in s["flags"] and "hd95_sentinel" in s["flags"]
    assert rep["cohort"]["flagged_subjects"] == 3


# ------------------------------------------------------------------ compare


def _report(tmp_path, name, dice, sid_prefix="s"):
    rep = {
        "schema": "sgnet-metrics", "schema_version": 1, "split": "test",
        "model": {"name": name, "kind": name},
        "subjects": [
            {"id": f"{sid_prefix}{i:02d}", "dice": d, "precision": d, "recall": d, "hd95": 10.0 * d, "flags": []}
            for i, d in enumerate(dice)
        ],
        "cohort": {},
    }
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(rep))
    return path


def test_compare_with_itself(tmp_path):
    dice = list(np.random.default_rng(0).random(19))
    a, b = _report(tmp_path, "sgnet", dice), _report(tmp_path, "twin", dice)
    assert run("compare", "--reports", a, b, "--out", tmp_path / "cmp.json") == 0
    cmp = json.loads((tmp_path / "cmp.json").read_text())
    vs = cmp["models"][1]["vs_reference"]["dice"]
    assert vs["t"] == 0.0 and vs["p_raw"] == 1.0 and not vs["significant"]
    assert "*" not in (tmp_path / "cmp.txt").read_text().splitlines()[3]


def test_compare_constant_shift(tmp_path):
    dice = list(np.random.default_rng(1).random(19) * 0.5)
    a = _report(tmp_path, "sgnet", dice)
    b = _report(tmp_path, "other", [d + 0.2 for d in dice])
    assert run("compare", "--reports", a, b, "--out", tmp_path / "cmp.json") == 0
    vs = json.loads((tmp_path / "cmp.json").read_text())["models"][1]["vs_reference"]["dice"]
    assert vs["p_raw"] < 1e-12 and vs["significant"]


def test_compare_bonferroni_and_layout(tmp_path):
    rng = np.random.default_rng(2)
    base = rng.random(19) * 0.6
    paths = [_report(tmp_path, n, list(base + s + 0.05 * rng.standard_normal(19)))
             for n, s in [("sgnet", 0.0), ("unet", -0.1), ("resunet", -0.05), ("attunet", -0.2)]]
    assert run("compare", "--reports", *paths, "--out", tmp_path / "cmp.json") == 0
    cmp = json.loads((tmp_path / "cmp.json").read_text())
    assert cmp["bonferroni_k"] == 3
    for m in cmp["models"][1:]:
        v = m["vs_reference"]["dice"]
        assert v["p_bonferroni"] == min(1.0, 3 * v["p_raw"])
    text = (tmp_path / "cmp.txt").read_text()
    assert "±" in text and "Bonferroni k=3" in text


def test_compare_mismatched_subjects(tmp_path):
    a = _report(tmp_path, "sgnet", [0.1, 0.2, 0.3])
    b = _report(tmp_path, "other", [0.1, 0.2, 0.3], sid_prefix="x")
    assert run("compare", "--reports", a, b, "--out", tmp_path / "c.json") == cli.EXIT_DATA


def test_compare_table_anchor_row():
    from sgnet.reports import comparison_table

    cmp = {"alpha": 0.05, "reference": "sgnet", "bonferroni_k": 1, "models": [{
        "name": "sgnet", "vs_reference": {},
        "summary": {
            "dice": {"mean": 0.5578, "sd": 0.2413, "ci_low": 0.441497, "ci_high": 0.674103},
            "precision": {"mean": 0.5}, "recall": {"mean": 0.5}, "hd95": {"mean": 56.13},
        },
    }]}
    assert "0.56 ± 0.24 [0.44, 0.67]" in comparison_table(cmp)


# ------------------------------------------------------------------- params


def test_params_all(tmp_path, capsys):
    assert run("params", "--all", "--out", tmp_path / "p.json") == 0
    models = json.loads((tmp_path / "p.json").read_text())["models"]
    t = {k: v["total"] for k, v in models.items()}
    assert t["sgnet"] < t["unet"] < t["resunet"] < t["attunet"]
    for v in models.values():
        assert sum(v["blocks"].values()) == v["total"]
    for name, model in [(k, build_model(ArchitectureSpec(kind=k), seed=0)) for k in t]:
        assert t[name] == sum(int(np.prod(s)) for s in model.build_shapes)


def test_parameter_table_dense_toy():
    from sgnet.models.layers import Module

    class Toy(Module):
        def __init__(self):
            super().__init__()
            self.add_param("weight", np.zeros((2, 4)))
            self.add_param("bias", np.zeros(2))

    data, text = cli.parameter_table({"toy": Toy()})
    assert data["toy"]["total"] == 10 and "TOTAL" in text


def test_params_timing_column(capsys):
    assert run("params", "--arch", "unet", "--time", "--time-dims", "16,16,16") == 0
    assert "informational" in capsys.readouterr().out


# ------------------------------------------------------------------ paradox


def _paradox(dataset, tmp_path, r):
    out = tmp_path / f"paradox{r}.json"
    assert run("paradox", "--oracle-gt", "--data", dataset, "--dilate", r, "--report", out) == 0
    return json.loads(out.read_text())


def test_paradox_zero_radius(dataset, tmp_path):
    rep = _paradox(dataset, tmp_path, 0)
    for s in rep["subjects"]:
        assert all(v == 0.0 for v in s["delta"].values())


def test_paradox_directions_and_monotone(dataset, tmp_path):
    r1, r3 = _paradox(dataset, tmp_path, 1), _paradox(dataset, tmp_path, 3)
    for a, b in zip(r1["subjects"], r3["subjects"]):
        assert b["delta"]["recall"] >= 0
        assert b["delta"]["precision"] < 0 and b["delta"]["hd95"] > 0
        assert abs(b["delta"]["precision"]) >= abs(a["delta"]["precision"])
        assert abs(b["delta"]["hd95"]) >= abs(a["delta"]["hd95"])
    assert r3["cohort"]["precision_decreasing"] == r3["cohort"]["n"] == 3


def test_paradox_with_checkpoint(dataset, trained, tmp_path):
    out = tmp_path / "p.json"
    assert run("paradox", "--ckpt", trained, "--data", dataset, "--dilate", 2, "--report", out) == 0
    assert json.loads(out.read_text())["source"].startswith("checkpoint:")


def test_paradox_negative_radius(dataset, tmp_path):
    assert run("paradox", "--oracle-gt", "--data", dataset, "--dilate", -1, "--report", tmp_path / "x.json") == cli.EXIT_CONFIG


# ------------------------------------------------------------------ overlay


def test_overlay_writes_ppm(dataset, trained, tmp_path):
    out = tmp_path / "o.ppm"
    assert run("overlay", "--data", dataset, "--subject", "sub-004", "--ckpt", trained, "--out", out) == 0
    assert out.read_bytes().startswith(b"P6\n32 32\n255\n")


def test_overlay_unknown_subject(dataset, tmp_path):
    assert run("overlay", "--data", dataset, "--subject", "nobody", "--out", tmp_path / "o.ppm") == cli.EXIT_DATA


# ------------------------------------------------------------------- config


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\narch = unet\nlr = 0.01  # trailing\npatch = 32, 32, 16\n\n")
    cfg = load_config(p, ["lr=0.02"])
    assert cfg.arch == "unet" and cfg.lr == 0.02 and cfg.patch == (32, 32, 16)
    assert load_config(tmp_path / "run.cfg").training().lr == 0.01


def test_config_echo_round_trips(tmp_path):
    cfg = load_config(None, ["encoder_widths=4,8", "sgm_groups=2", "width_multiplier=1.0", "sgm_variant=spatial"])
    p = tmp_path / "echo.cfg"
    p.write_text(cfg.to_text())
    assert load_config(p) == cfg


@pytest.mark.parametrize("line", ["nonsense", "bogus = 1", "lr = fast", "patience = 500"])
def test_config_errors(line):
    with pytest.raises(ConfigError):
        load_config(None, [line])


def test_parse_pairs_names_line():
    with pytest.raises(ConfigError, match="cfg:2"):
        parse_pairs([(1, "lr = 1"), (2, "oops")], "cfg")
