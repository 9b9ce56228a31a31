import json
import struct

import pytest

from normlab.checkpoint import load_checkpoint, save_checkpoint
from normlab.cli import METRICS_HEADER, main, run_training
from normlab.config import validate_experiment
from normlab.nn import network_evaluate
from normlab.config import prepare_task


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    monkeypatch.delenv("BLN_SEED", raising=False)


def base_config(**overrides):
    config = {
        "task": "cnn-synthetic",
        "normalizer": "bln",
        "batch_size": 25,
        "epochs": 1,
        "seed": 123,
        "train_fraction": 0.1,
    }
    config.update(overrides)
    return config


def write_config(tmp_path, name="config.json", **overrides):
    path = tmp_path / name
    path.write_text(json.dumps(base_config(**overrides)), encoding="utf-8")
    return str(path)


class TestTrainCommand:
    def test_runs_and_is_byte_identical_across_reruns(self, tmp_path):
        config = write_config(tmp_path)
        out1, ck1 = str(tmp_path / "a.csv"), str(tmp_path / "a.ckpt")
        out2, ck2 = str(tmp_path / "b.csv"), str(tmp_path / "b.ckpt")
        assert main(["train", "--config", config, "--out", out1, "--checkpoint", ck1]) == 0
        assert main(["train", "--config", config, "--out", out2, "--checkpoint", ck2]) == 0
        assert open(out1, "rb").read() == open(out2, "rb").read()
        assert open(ck1, "rb").read() == open(ck2, "rb").read()

    def test_metrics_header_and_config_comments(self, tmp_path):
        config = write_config(tmp_path)
        out = str(tmp_path / "m.csv")
        main(["train", "--config", config, "--out", out, "--checkpoint", str(tmp_path / "m.ckpt")])
        lines = open(out, encoding="utf-8").read().splitlines()
        comments = [l for l in lines if l.startswith("#")]
        assert comments, "config comment lines missing"
        body = [l for l in lines if not l.startswith("#")]
        assert body[0] == METRICS_HEADER
        embedded = json.loads("\n".join(c[2:] for c in comments))
        assert embedded["seed"] == 123
        # one train and one test row per epoch
        assert len(body) - 1 == 2

    def test_unknown_config_key_names_the_key(self, tmp_path, capsys):
        config = write_config(tmp_path, stdf=True)
        code = main(["train", "--config", config, "--out", str(tmp_path / "x.csv"),
                     "--checkpoint", str(tmp_path / "x.ckpt")])
        assert code == 1
        assert "'stdf'" in capsys.readouterr().err

    def test_checkpoint_collision_requires_force(self, tmp_path):
        config = write_config(tmp_path)
        out = str(tmp_path / "c.csv")
        ck = tmp_path / "c.ckpt"
        ck.write_bytes(b"occupied")
        code = main(["train", "--config", config, "--out", out, "--checkpoint", str(ck)])
        assert code == 1
        code = main(["train", "--config", config, "--out", out, "--checkpoint", str(ck), "--force"])
        assert code == 0
        assert ck.read_bytes()[:4] == b"BLN1"

    def test_env_seed_override(self, tmp_path, monkeypatch):
        config = write_config(tmp_path)
        monkeypatch.setenv("BLN_SEED", "999")
        out = str(tmp_path / "e.csv")
        main(["train", "--config", config, "--out", out, "--checkpoint", str(tmp_path / "e.ckpt")])
        text = open(out, encoding="utf-8").read()
        assert '"seed": 999' in text
        assert "-s999," in text.splitlines()[-1]

    def test_invalid_env_seed_is_usage_error(self, tmp_path, capsys):
        config = write_config(tmp_path)
        import os
        os.environ["BLN_SEED"] = "not-a-number"
        try:
            code = main(["train", "--config", config, "--out", str(tmp_path / "x.csv"),
                         "--checkpoint", str(tmp_path / "x.ckpt")])
        finally:
            del os.environ["BLN_SEED"]
        assert code == 1

    def test_missing_required_flag_is_usage_error(self, capsys):
        assert main(["train", "--out", "x.csv"]) == 1

    def test_malformed_cifar_is_data_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"\x00" * 100)
        config = write_config(
            tmp_path,
            task="cnn-cifar10",
            paths={"train": str(bad), "test": str(bad)},
        )
        code = main(["train", "--config", config, "--out", str(tmp_path / "x.csv"),
                     "--checkpoint", str(tmp_path / "x.ckpt")])
        assert code == 2


class TestCheckpointRoundTrip:
    def test_bitwise_round_trip_and_equal_metrics(self, tmp_path):
        config = validate_experiment(base_config())
        _, net = run_training(config)
        first = tmp_path / "one.ckpt"
        second = tmp_path / "two.ckpt"
        save_checkpoint(str(first), net, meta=config.to_dict())
        loaded, manifest = load_checkpoint(str(first))
        save_checkpoint(str(second), loaded, meta=manifest["meta"])
        assert first.read_bytes() == second.read_bytes()

        _, _, test_ds = prepare_task(config)
        assert network_evaluate(net, test_ds) == network_evaluate(loaded, test_ds)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"XXXX" + struct.pack("<I", 2) + b"{}")
        from normlab.data import DataFormatError
        with pytest.raises(DataFormatError):
            load_checkpoint(str(path))

    def test_truncated_payload_rejected(self, tmp_path):
        config = validate_experiment(base_config())
        _, net = run_training(config)
        path = tmp_path / "trunc.ckpt"
        save_checkpoint(str(path), net)
        blob = path.read_bytes()
        path.write_bytes(blob[:-16])
        from normlab.data import DataFormatError
        with pytest.raises(DataFormatError):
            load_checkpoint(str(path))


class TestCompareCommand:
    def test_six_runs_with_distinct_ids(self, tmp_path):
        config = write_config(tmp_path, normalizer=["bn", "ln", "bln"], batch_size=[5, 25])
        out = str(tmp_path / "cmp.csv")
        assert main(["compare", "--config", config, "--out", out]) == 0
        rows = [l for l in open(out, encoding="utf-8").read().splitlines()
                if not l.startswith("#")][1:]
        run_ids = {r.split(",")[0] for r in rows}
        assert len(run_ids) == 6

    def test_rows_match_individual_train_runs(self, tmp_path):
        config = write_config(tmp_path, normalizer=["bn", "bln"], batch_size=5)
        out = str(tmp_path / "cmp.csv")
        main(["compare", "--config", config, "--out", out])
        combined = [l for l in open(out, encoding="utf-8").read().splitlines()
                    if not l.startswith("#")][1:]

        single = write_config(tmp_path, name="single.json", normalizer="bn", batch_size=5)
        solo_out = str(tmp_path / "solo.csv")
        main(["train", "--config", single, "--out", solo_out,
              "--checkpoint", str(tmp_path / "solo.ckpt")])
        solo = [l for l in open(solo_out, encoding="utf-8").read().splitlines()
                if not l.startswith("#")][1:]
        assert combined[:len(solo)] == solo

    def test_threaded_compare_matches_serial(self, tmp_path):
        config = write_config(tmp_path, normalizer=["bn", "bln"], batch_size=25)
        serial = str(tmp_path / "s.csv")
        threaded = str(tmp_path / "t.csv")
        main(["compare", "--config", config, "--out", serial])
        main(["compare", "--config", config, "--out", threaded, "--threads", "2"])
        assert open(serial, "rb").read() == open(threaded, "rb").read()

    def test_single_normalizer_rejected(self, tmp_path):
        config = write_config(tmp_path, normalizer=["bn"])
        assert main(["compare", "--config", config, "--out", str(tmp_path / "x.csv")]) == 1


class TestGridsearchCommand:
    def run_train(self, tmp_path, normalizer="bln"):
        config = write_config(tmp_path, name=f"{normalizer}.json", normalizer=normalizer)
        ck = str(tmp_path / f"{normalizer}.ckpt")
        main(["train", "--config", config, "--out", str(tmp_path / f"{normalizer}.csv"),
              "--checkpoint", ck])
        return config, ck

    def test_sixteen_rows_rank_permutation_checkpoint_untouched(self, tmp_path):
        config, ck = self.run_train(tmp_path)
        before = open(ck, "rb").read()
        out = str(tmp_path / "grid.csv")
        assert main(["gridsearch", "--config", config, "--checkpoint", ck, "--out", out]) == 0
        assert open(ck, "rb").read() == before
        rows = [l for l in open(out, encoding="utf-8").read().splitlines()
                if not l.startswith("#")]
        assert rows[0] == "rank,e_b,std_b,e_f,std_f,loss,accuracy"
        data = rows[1:]
        assert len(data) == 16
        ranks = [int(r.split(",")[0]) for r in data]
        assert sorted(ranks) == list(range(1, 17))
        flags = {tuple(r.split(",")[1:5]) for r in data}
        assert len(flags) == 16
        for r in data:
            for field in r.split(",")[1:5]:
                assert field in ("True", "False")

    def test_rerun_is_identical(self, tmp_path):
        config, ck = self.run_train(tmp_path)
        out1, out2 = str(tmp_path / "g1.csv"), str(tmp_path / "g2.csv")
        main(["gridsearch", "--config", config, "--checkpoint", ck, "--out", out1])
        main(["gridsearch", "--config", config, "--checkpoint", ck, "--out", out2])
        assert open(out1, "rb").read() == open(out2, "rb").read()

    def test_search_on_test_differs_from_validation(self, tmp_path):
        config, ck = self.run_train(tmp_path)
        val_out = str(tmp_path / "val.csv")
        test_out = str(tmp_path / "test.csv")
        main(["gridsearch", "--config", config, "--checkpoint", ck, "--out", val_out])
        main(["gridsearch", "--config", config, "--checkpoint", ck, "--out", test_out,
              "--search-on-test"])
        assert open(val_out, "rb").read() != open(test_out, "rb").read()

    def test_checkpoint_without_bln_layers_is_data_error(self, tmp_path, capsys):
        config, ck = self.run_train(tmp_path, normalizer="bn")
        code = main(["gridsearch", "--config", config, "--checkpoint", ck,
                     "--out", str(tmp_path / "x.csv")])
        assert code == 2
        assert "no BLN layers to configure" in capsys.readouterr().err

    def test_threaded_gridsearch_matches_serial(self, tmp_path):
        config, ck = self.run_train(tmp_path)
        serial = str(tmp_path / "gs.csv")
        threaded = str(tmp_path / "gt.csv")
        main(["gridsearch", "--config", config, "--checkpoint", ck, "--out", serial])
        main(["gridsearch", "--config", config, "--checkpoint", ck, "--out", threaded,
              "--threads", "4"])
        assert open(serial, "rb").read() == open(threaded, "rb").read()


class TestCommittedConfigs:
    CONFIG_DIR = __file__.rsplit("/", 2)[0] + "/configs"

    def test_smoke_config_loss_is_monotone_non_increasing(self, tmp_path):
        config = f"{self.CONFIG_DIR}/cnn-bln-smoke.json"
        out = str(tmp_path / "smoke.csv")
        assert main(["train", "--config", config, "--out", out,
                     "--checkpoint", str(tmp_path / "smoke.ckpt")]) == 0
        rows = [l for l in open(out, encoding="utf-8").read().splitlines()
                if not l.startswith("#")][1:]
        losses = [float(r.split(",")[7]) for r in rows if r.split(",")[6] == "train"]
        assert len(losses) == 3
        assert all(b <= a for a, b in zip(losses, losses[1:])), losses

    def test_metric_rows_are_unique_by_key(self, tmp_path):
        config = f"{self.CONFIG_DIR}/cnn-bln-smoke.json"
        out = str(tmp_path / "uniq.csv")
        main(["train", "--config", config, "--out", out,
              "--checkpoint", str(tmp_path / "uniq.ckpt")])
        rows = [l for l in open(out, encoding="utf-8").read().splitlines()
                if not l.startswith("#")][1:]
        keys = [(r.split(",")[0], r.split(",")[6], r.split(",")[4], r.split(",")[5])
                for r in rows]
        assert len(keys) == len(set(keys))

    def test_gradcheck_config_passes(self):
        assert main(["gradcheck", "--config", f"{self.CONFIG_DIR}/gradcheck-bln.json"]) == 0


class TestGradcheckCommand:
    def write_spec(self, tmp_path, **overrides):
        spec = {"layer": "bln", "m": 25, "d": 8, "seed": 0}
        spec.update(overrides)
        path = tmp_path / "gradcheck.json"
        path.write_text(json.dumps(spec), encoding="utf-8")
        return str(path)

    def test_bln_passes(self, tmp_path, capsys):
        assert main(["gradcheck", "--config", self.write_spec(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_degenerate_batch_passes(self, tmp_path):
        assert main(["gradcheck", "--config", self.write_spec(tmp_path, m=1)]) == 0

    def test_corrupted_gradient_detected(self, tmp_path, capsys):
        code = main(["gradcheck", "--config", self.write_spec(tmp_path, corrupt=True)])
        assert code == 3
        assert "FAIL" in capsys.readouterr().out

    def test_network_spec(self, tmp_path):
        assert main(["gradcheck", "--config", self.write_spec(tmp_path, layer="network", m=4, d=6)]) == 0

    def test_unknown_key_rejected(self, tmp_path, capsys):
        code = main(["gradcheck", "--config", self.write_spec(tmp_path, stride=2)])
        assert code == 1
        assert "'stride'" in capsys.readouterr().err
