import hashlib
import json

import numpy as np
import pytest

from raid import nn
from raid.attacks import load_manifest
from raid.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


BLOBS = ["--data", "synthetic:blobs", "--size", "400"]


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    code = main(["train-net", *BLOBS, "--test-data", "synthetic:blobs", "--hidden", "16,8",
                 "--epochs", "15", "--lr", "0.1", "--seed", "3", "--out", str(d / "net.json")])
    assert code == 0
    return d


def test_missing_dataset_is_usage_error(capsys, tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["train-net", "--out", str(tmp_path)])
    assert exc.value.code == 1
    code, _, err = run(capsys, "train-net", "--data", tmp_path / "absent.csv", "--out", tmp_path)
    assert code == 2 and "error" in err


def test_network_hash_determinism(capsys, tmp_path):
    for name in ("a.json", "b.json"):
        assert run(capsys, "train-net", *BLOBS, "--hidden", "6", "--epochs", "3", "--seed", "5",
                   "--out", tmp_path / name)[0] == 0
    assert sha(tmp_path / "a.json") == sha(tmp_path / "b.json")


def test_blobs_accuracy(trained, capsys):
    net = nn.load_network(trained / "net.json")
    from raid.datasets import make_blobs
    test = make_blobs(1000, seed=99)
    assert nn.accuracy(net, test.inputs, test.labels) >= 0.99


def test_attack_groups_and_manifest(trained, capsys):
    out = trained / "adv"
    code, text, _ = run(capsys, "attack", "--network", trained / "net.json", *BLOBS,
                        "--attacks", "fgsm,pgd,bim", "--seed", "1", "--out", out)
    assert code == 0
    assert text.splitlines()[0].startswith("Linf: FGSM ")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["groups"] == {"Linf": ["FGSM", "PGD", "BIM"]}
    cfgs = load_manifest(out / "manifest.json")
    from raid.attacks import AttackConfig
    assert cfgs["PGD"] == AttackConfig("PGD", seed=1)
    assert AttackConfig.from_dict(cfgs["FGSM"].to_dict()) == cfgs["FGSM"]


@pytest.mark.parametrize("names,code", [("none", 1), ("fgsm,teleport", 2)])
def test_attack_name_errors(trained, capsys, names, code):
    argv = ["attack", "--network", trained / "net.json", *BLOBS, "--attacks", names, "--out", trained / "x"]
    if code == 1:
        with pytest.raises(SystemExit) as exc:
            main([str(a) for a in argv])
        assert exc.value.code == 1
    else:
        assert run(capsys, *argv)[0] == 2


@pytest.fixture(scope="module")
def adv_dir(trained):
    out = trained / "linf"
    assert main(["attack", "--network", str(trained / "net.json"), *BLOBS, "--attacks", "Linf",
                 "--out", str(out)]) == 0
    return out


def test_fit_defaults_and_refit(trained, adv_dir, capsys):
    argv = ["fit", "--network", trained / "net.json", *BLOBS, "--adversarial", adv_dir / "adversarial.csv"]
    assert run(capsys, *argv, "--out", trained / "d1.json", "--diagnostics")[0] == 0
    assert run(capsys, *argv, "--out", trained / "d2.json")[0] == 0
    assert (trained / "d1.json").read_bytes() == (trained / "d2.json").read_bytes()
    obj = json.loads((trained / "d1.json").read_text())
    assert obj["config"]["filtering_threshold"] == 0.5 and obj["config"]["k"] == 64
    assert obj["config"]["detector"]["kind"] == "RF" and obj["config"]["detector"]["estimators"] == 32
    assert (trained / "d1_neurons.csv").read_text().startswith("neuron,mean_diff,band")


def test_pool_fit_and_detect(trained, adv_dir, capsys):
    code, text, _ = run(capsys, "fit", "--network", trained / "net.json", *BLOBS,
                        "--adversarial", adv_dir / "adversarial.csv", "--pool-size", 32,
                        "--detector", "DT", "--neurons", 4, "--out", trained / "pool.json")
    assert code == 0 and "pool of 32" in text
    obj = json.loads((trained / "pool.json").read_text())
    assert obj["type"] == "pool" and len(obj["members"]) == 32
    code, text, _ = run(capsys, "detect", "--network", trained / "net.json", "--detector",
                        trained / "pool.json", *BLOBS, "--limit", 50)
    lines = text.splitlines()
    assert code == 0 and len(lines) == 50
    for line in lines:
        i, pred, member, verdict = line.split("\t")
        assert 0 <= int(member.split("=")[1]) < 32 and verdict in ("normal", "adversarial")


def test_detect_verdicts(trained, adv_dir, capsys):
    det = trained / "single.json"
    assert run(capsys, "fit", "--network", trained / "net.json", *BLOBS,
               "--adversarial", adv_dir / "adversarial.csv", "--out", det)[0] == 0
    _, text, _ = run(capsys, "detect", "--network", trained / "net.json", "--detector", det,
                     "--data", "synthetic:blobs", "--size", 300, "--data-seed", 50)
    normal = [ln.split("\t") for ln in text.splitlines()]
    assert all(len(f) == 4 and 0.0 <= float(f[2]) <= 1.0 for f in normal)
    fpr = np.mean([f[3] == "adversarial" for f in normal])
    fresh = trained / "fresh"
    run(capsys, "attack", "--network", trained / "net.json", "--data", "synthetic:blobs", "--size", 300,
        "--data-seed", 50, "--attacks", "fgsm", "--out", fresh)
    _, text, _ = run(capsys, "detect", "--network", trained / "net.json", "--detector", det,
                     "--data", fresh / "adversarial.csv")
    adv = [ln.split("\t") for ln in text.splitlines()]
    tpr = np.mean([f[3] == "adversarial" for f in adv])
    assert fpr < 0.5 and tpr > 0.5


def test_detect_dimension_mismatch(trained, adv_dir, capsys, tmp_path):
    run(capsys, "train-net", *BLOBS, "--hidden", "5", "--epochs", "1", "--out", tmp_path / "other.json")
    assert run(capsys, *["fit", "--network", trained / "net.json", *BLOBS, "--adversarial",
                         adv_dir / "adversarial.csv", "--out", tmp_path / "d.json"])[0] == 0
    code, _, err = run(capsys, "detect", "--network", tmp_path / "other.json", "--detector",
                       tmp_path / "d.json", *BLOBS)
    assert code == 2 and "different hidden neurons" in err


SMALL = ["--train-data", "synthetic:blobs", "--test-data", "synthetic:blobs", "--train-size", 400,
         "--test-size", 240, "--epochs", 10, "--repetitions", 2, "--detector", "RF8"]


def eval_config(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text("[experiment]\nhidden = [16, 8]\nlearning_rate = 0.1\n\n"
                 "[attack.CW]\nbinary_search_steps = 2\nmax_iter = 20\ninitial_const = 1.0\n")
    return p


def test_eval_cross_norm_layout_and_rerun(capsys, tmp_path):
    cfg = eval_config(tmp_path)
    outs = []
    for name in ("r1", "r2"):
        code, text, _ = run(capsys, "eval", "--config", cfg, *SMALL, "--experiment", "cross-norm",
                            "--out", tmp_path / name)
        assert code == 0
        outs.append(tmp_path / name / "cross-norm.json")
    assert outs[0].read_bytes() == outs[1].read_bytes()
    res = json.loads(outs[0].read_text())["results"]
    groups = ["Lstar", "Linf", "L2", "L0"]
    assert list(res) == groups
    assert all((res[a][b] is None) == (a == b) for a in groups for b in groups)
    assert "Lstar" in (tmp_path / "r1" / "cross-norm.txt").read_text()


def test_eval_single_roc_and_classifier_list(capsys, tmp_path):
    cfg = eval_config(tmp_path)
    code, _, _ = run(capsys, "eval", "--config", cfg, *SMALL, "--train-attacks", "FGSM",
                     "--test-attacks", "FGSM", "--roc", "--out", tmp_path)
    assert code == 0
    assert (tmp_path / "single_roc_1.csv").read_text().startswith("fpr,tpr,threshold")
    code, _, _ = run(capsys, "eval", "--config", cfg, *SMALL, "--experiment", "classifiers",
                     "--groups", "Linf", "--repetitions", 1, "--out", tmp_path)
    res = json.loads((tmp_path / "classifiers.json").read_text())["results"]
    assert list(res) == ["DT", "RF32", "RF64", "RF128", "AB32", "AB64", "AB128", "KNN3", "KNN5"]


def test_sweep_command(capsys, tmp_path):
    code, text, _ = run(capsys, "sweep", "--config", eval_config(tmp_path), *SMALL, "--groups", "Linf",
                        "--neurons-list", "1,4,256", "--sweep-modes", "random,worst", "--repetitions", 1,
                        "--out", tmp_path)
    assert code == 0
    res = json.loads((tmp_path / "sweep.json").read_text())["results"]
    assert list(res["random"]["Linf"]) == ["1", "4", "256"]
    assert res["random"]["Linf"]["256"]["reports"][0]["config"]["k"] == 12
