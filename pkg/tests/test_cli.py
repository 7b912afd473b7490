import json
import os

import numpy as np
import pytest

from edgenet.cli import main
from edgenet.data_pipeline import DatasetSplit, save_dataset, split_indices
from edgenet.lstm_net import zeros_params
from edgenet.model_store import save_dense
from edgenet.synthetic import config_dict, make_synthetic, write_csv


def small_config(tmp_path, rows=120):
    """Config with shrunken epochs/architecture for fast CLI runs."""
    doc = config_dict(seed=42)
    doc["architecture"].update({"layers": 2, "hidden": 8})
    for phase in ("dense", "sparse", "redense"):
        doc["phases"][phase].update({"epochs": 2, "batch_size": 32})
    cfg_path = tmp_path / "config.json"
    cfg_path.write_text(json.dumps(doc), encoding="utf-8")
    x, y = make_synthetic(n_rows=rows, seed=11)
    csv_path = tmp_path / "data.csv"
    write_csv(str(csv_path), x, y)
    return str(cfg_path), str(csv_path)


@pytest.fixture()
def workdir(tmp_path):
    cfg, csv = small_config(tmp_path)
    return tmp_path, cfg, csv


class TestPipeline:
    def test_full_flow(self, workdir, capsys):
        tmp, cfg, csv = workdir
        data = str(tmp / "data")
        models = str(tmp / "models")

        assert main(["preprocess", "--config", cfg, "--csv", csv, "--out", data]) == 0
        for f in ("train.eidd", "val.eidd", "test.eidd", "sidecar.json"):
            assert os.path.exists(os.path.join(data, f))

        assert main(["train", "--config", cfg, "--data", data, "--out", models]) == 0
        for f in ("baseline.eidm", "pruned.eidm", "checkpoint_dense.eidm", "run.csv"):
            assert os.path.exists(os.path.join(models, f))
        run_lines = open(os.path.join(models, "run.csv")).read().strip().split("\n")
        assert run_lines[0].startswith("epoch,phase,train_loss")
        assert len(run_lines) == 1 + 6  # 2 epochs per phase

        base = os.path.join(models, "baseline.eidm")
        quant = os.path.join(models, "quantized.eidm")
        pruned = os.path.join(models, "pruned.eidm")
        pq = os.path.join(models, "pruned_quantized.eidm")
        assert main(["quantize", base, quant]) == 0
        assert main(["quantize", pruned, pq]) == 0
        assert os.path.getsize(quant) < os.path.getsize(base)
        assert os.path.getsize(pq) < os.path.getsize(pruned)

        eval_dir = str(tmp / "eval")
        assert main(["evaluate", base, os.path.join(data, "val.eidd"),
                     "--out", eval_dir]) == 0
        metrics = open(os.path.join(eval_dir, "metrics.csv")).read()
        assert metrics.startswith("FAR%,Acc%,Prec%,DR%,F1%\n")
        roc = open(os.path.join(eval_dir, "roc.csv")).read()
        assert roc.startswith("fpr,tpr\n")

        capsys.readouterr()
        assert main(["size-report", "--baseline", base, quant, pruned, pq,
                     "--eval", "baseline=" + os.path.join(eval_dir, "metrics.csv")]) == 0
        out = capsys.readouterr().out
        lines = out.strip().split("\n")
        assert lines[0] == "name,accuracy,size_bytes,ratio"
        assert len(lines) == 5
        assert lines[1].startswith("baseline,") and ",1.0000" in lines[1]

        assert main(["dump", pq]) == 0
        capsys.readouterr()
        feats = ",".join(["0.5"] * 10)
        assert main(["predict", quant, "--features", feats]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert set(payload) == {"probability", "label"}
        assert payload["label"] in (0, 1)

    def test_preprocess_reruns_byte_identical(self, workdir):
        tmp, cfg, csv = workdir
        d1, d2 = str(tmp / "d1"), str(tmp / "d2")
        assert main(["preprocess", "--config", cfg, "--csv", csv, "--out", d1]) == 0
        assert main(["preprocess", "--config", cfg, "--csv", csv, "--out", d2]) == 0
        for f in ("train.eidd", "val.eidd", "test.eidd", "sidecar.json"):
            a = open(os.path.join(d1, f), "rb").read()
            b = open(os.path.join(d2, f), "rb").read()
            assert a == b, f

    def test_seed_override_changes_split(self, workdir):
        tmp, cfg, csv = workdir
        d1, d2 = str(tmp / "d1"), str(tmp / "d2")
        assert main(["preprocess", "--config", cfg, "--csv", csv, "--out", d1]) == 0
        assert main(["preprocess", "--config", cfg, "--csv", csv, "--out", d2,
                     "--seed", "7"]) == 0
        a = open(os.path.join(d1, "train.eidd"), "rb").read()
        b = open(os.path.join(d2, "train.eidd"), "rb").read()
        assert a != b


class TestErrorPaths:
    def test_unknown_category_in_test_rows(self, tmp_path, capsys):
        # place the unseen category at a row the seed routes to the test split
        cfg_doc = {
            "seed": 42,
            "schema": {"columns": [{"name": "dur", "kind": "numeric"},
                                   {"name": "proto", "kind": "categorical"},
                                   {"name": "label", "kind": "label"}],
                       "selected_features": ["dur", "proto"]},
            "split": {"ratios": [0.6, 0.2, 0.2]},
        }
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(cfg_doc), encoding="utf-8")
        n = 10
        _, _, test_idx = split_indices(n, (0.6, 0.2, 0.2), seed=42)
        protos = ["tcp"] * n
        protos[int(test_idx[0])] = "udp"  # only occurrence, never in train
        rows = "\n".join(f"{i}.0,{protos[i]},{i % 2}" for i in range(n))
        csv = tmp_path / "d.csv"
        csv.write_text("dur,proto,label\n" + rows + "\n", encoding="utf-8")
        rc = main(["preprocess", "--config", str(cfg), "--csv", str(csv),
                   "--out", str(tmp_path / "out")])
        assert rc == 1
        assert "UnknownCategory" in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"seeed": 1}), encoding="utf-8")
        rc = main(["preprocess", "--config", str(cfg), "--csv", "x.csv",
                   "--out", str(tmp_path)])
        assert rc == 1
        assert "seeed" in capsys.readouterr().err

    def test_missing_model_is_io_error(self, tmp_path, capsys):
        rc = main(["dump", str(tmp_path / "nope.eidm")])
        assert rc == 3

    def test_bad_threshold(self, tmp_path):
        rc = main(["evaluate", "m.eidm", "d.eidd", "--threshold", "1.5"])
        assert rc == 1

    def test_threads_env_validated(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("EDGENET_THREADS", "many")
        rc = main(["dump", str(tmp_path / "nope.eidm")])
        assert rc == 1
        monkeypatch.setenv("EDGENET_THREADS", "-1")
        assert main(["dump", str(tmp_path / "nope.eidm")]) == 1

    def test_divergence_exit_code(self, workdir):
        tmp, cfg, csv = workdir
        doc = json.loads(open(cfg).read())
        doc["phases"]["dense"]["learning_rate"] = 1e200
        bad_cfg = tmp / "bad.json"
        bad_cfg.write_text(json.dumps(doc), encoding="utf-8")
        data = str(tmp / "data")
        assert main(["preprocess", "--config", cfg, "--csv", csv, "--out", data]) == 0
        with np.errstate(over="ignore"):
            rc = main(["train", "--config", str(bad_cfg), "--data", data,
                       "--out", str(tmp / "m")])
        assert rc == 4


class TestEvaluateEdgeCases:
    def test_constant_half_model_flags_everything(self, tmp_path, capsys):
        # all-zero net scores exactly 0.5; ties classify as anomaly
        net = zeros_params((10, 8), dropout_rate=0.0)
        model = str(tmp_path / "zero.eidm")
        save_dense(net, model)
        rng = np.random.default_rng(0)
        ds = DatasetSplit(features=rng.random((40, 10)),
                          labels=np.array([0, 1] * 20), row_ids=np.arange(40))
        data = str(tmp_path / "d.eidd")
        save_dataset(ds, data)
        assert main(["evaluate", model, data, "--threshold", "0.5"]) == 0
        out = capsys.readouterr().out
        row = out.strip().split("\n")[1].split(",")
        far, acc, prec, dr, f1 = map(float, row)
        assert dr == 100.0 and far == 100.0

    def test_single_class_split_still_reports_metrics(self, tmp_path, capsys):
        net = zeros_params((10, 8), dropout_rate=0.0)
        model = str(tmp_path / "zero.eidm")
        save_dense(net, model)
        ds = DatasetSplit(features=np.random.default_rng(1).random((10, 10)),
                          labels=np.ones(10, dtype=np.int64), row_ids=np.arange(10))
        data = str(tmp_path / "one.eidd")
        save_dataset(ds, data)
        out_dir = str(tmp_path / "eval")
        assert main(["evaluate", model, data, "--out", out_dir]) == 0
        captured = capsys.readouterr()
        assert "single-class" in captured.err
        assert os.path.exists(os.path.join(out_dir, "metrics.csv"))
        assert not os.path.exists(os.path.join(out_dir, "roc.csv"))


class TestQuantizeIdempotence:
    def test_quantize_twice_byte_identical(self, workdir):
        tmp, cfg, csv = workdir
        data, models = str(tmp / "data"), str(tmp / "models")
        assert main(["preprocess", "--config", cfg, "--csv", csv, "--out", data]) == 0
        assert main(["train", "--config", cfg, "--data", data, "--out", models]) == 0
        base = os.path.join(models, "baseline.eidm")
        q1 = os.path.join(models, "q1.eidm")
        q2 = os.path.join(models, "q2.eidm")
        assert main(["quantize", base, q1]) == 0
        assert main(["quantize", q1, q2]) == 0
        assert open(q1, "rb").read() == open(q2, "rb").read()
