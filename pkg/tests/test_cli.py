import os

import numpy as np
import pytest

from ipcnet.cli import main

TOY_FLAGS = ["--trunk-widths", "8,8,8,12,16", "--head-widths", "12",
             "--tnet-mlp-widths", "6,8", "--tnet-fc-widths", "6",
             "--n-points", "64", "--batch-size", "2",
             "--learning-rate", "0.005", "--train-fraction", "0.5",
             "--seed", "3"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One shared dataset + trained checkpoint for the read-only tests."""
    root = tmp_path_factory.mktemp("cli")
    data = str(root / "data")
    assert main(["gen-data", "--family", "rocket", "--count", "6",
                 "--points", "64", "--seed", "5", "--out", data]) == 0
    run = str(root / "run")
    assert main(["train", "--data", os.path.join(data, "rocket"),
                 "--out", run, "--epochs", "3", *TOY_FLAGS]) == 0
    return root


def _tree_bytes(path):
    out = {}
    for base, _, names in os.walk(path):
        for name in names:
            full = os.path.join(base, name)
            out[os.path.relpath(full, path)] = open(full, "rb").read()
    return out


class TestParsing:
    def test_help_exits_zero(self, capsys):
        for argv in (["--help"], ["train", "--help"]):
            with pytest.raises(SystemExit) as exc:
                main(argv)
            assert exc.value.code == 0
        assert "gen-data" in capsys.readouterr().out

    def test_unknown_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main(["gen-data", "--family", "rocket", "--count", "1",
                  "--out", "x", "--turbo"])
        assert exc.value.code == 2

    def test_missing_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2


class TestGenData:
    def test_layout_and_determinism(self, tmp_path):
        argv = ["gen-data", "--family", "car", "--count", "3", "--points", "32",
                "--seed", "11"]
        assert main(argv + ["--out", str(tmp_path / "a")]) == 0
        assert main(argv + ["--out", str(tmp_path / "b")]) == 0
        a = _tree_bytes(tmp_path / "a")
        assert "car/manifest.txt" in a
        assert "car/points/cloud_0000.pts" in a
        assert "car/labels/cloud_0000.seg" in a
        assert a == _tree_bytes(tmp_path / "b")

    def test_unknown_family_exits_2(self, tmp_path, capsys):
        rc = main(["gen-data", "--family", "boat", "--count", "1",
                   "--out", str(tmp_path)])
        assert rc == 2
        assert "boat" in capsys.readouterr().err

    def test_env_seed_fallback(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("IPCNET_SEED", "42")
        rc = main(["gen-data", "--family", "car", "--count", "1",
                   "--points", "16", "--out", str(tmp_path)])
        assert rc == 0
        assert "seed=42" in capsys.readouterr().out

    def test_bad_env_seed_exits_2(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv("IPCNET_SEED", "many")
        rc = main(["gen-data", "--family", "car", "--count", "1",
                   "--out", str(tmp_path)])
        assert rc == 2
        assert "IPCNET_SEED" in capsys.readouterr().err


class TestSample:
    def _write_mesh(self, path):
        path.write_text("OFF\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n"
                        "3 0 1 2\n3 0 2 3\n")
        path.with_suffix(".flab").write_text("0\n1\n")

    def test_writes_pts_and_seg(self, tmp_path, capsys):
        mesh = tmp_path / "quad.off"
        self._write_mesh(mesh)
        rc = main(["sample", "--mesh", str(mesh), "--points", "50",
                   "--seed", "2", "--out", str(tmp_path / "out")])
        assert rc == 0
        pts = np.loadtxt(tmp_path / "out" / "quad.pts")
        seg = np.loadtxt(tmp_path / "out" / "quad.seg", dtype=int)
        assert pts.shape == (50, 3) and seg.shape == (50,)
        assert set(seg) <= {0, 1}

    def test_normalize_caps_norms(self, tmp_path):
        mesh = tmp_path / "quad.off"
        self._write_mesh(mesh)
        rc = main(["sample", "--mesh", str(mesh), "--points", "40", "--seed", "1",
                   "--normalize", "--out", str(tmp_path / "out")])
        assert rc == 0
        pts = np.loadtxt(tmp_path / "out" / "quad.pts")
        assert np.linalg.norm(pts, axis=1).max() <= 1.0 + 1e-9

    def test_missing_mesh_exits_2(self, tmp_path):
        rc = main(["sample", "--mesh", str(tmp_path / "no.off"),
                   "--out", str(tmp_path)])
        assert rc == 2


class TestTrain:
    def test_outputs_and_determinism(self, workdir, tmp_path, capsys):
        data = str(workdir / "data" / "rocket")
        argv = ["train", "--data", data, "--epochs", "2", *TOY_FLAGS]
        assert main(argv + ["--out", str(tmp_path / "r1")]) == 0
        out1 = capsys.readouterr().out
        assert "resolved config:" in out1
        assert "model=pointnet" in out1
        assert main(argv + ["--out", str(tmp_path / "r2")]) == 0
        assert _tree_bytes(tmp_path / "r1") == _tree_bytes(tmp_path / "r2")
        assert (tmp_path / "r1" / "metrics.csv").exists()
        assert (tmp_path / "r1" / "model.ckpt").exists()

    def test_flags_override_config_file(self, workdir, tmp_path, capsys):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("epochs=9\nmodel=pointnet\n")
        data = str(workdir / "data" / "rocket")
        rc = main(["train", "--data", data, "--config", str(cfg),
                   "--epochs", "2", "--out", str(tmp_path / "out"), *TOY_FLAGS])
        assert rc == 0
        out = capsys.readouterr().out
        assert "epochs=2" in out and "epochs=9" not in out

    def test_missing_data_exits_2(self, tmp_path):
        rc = main(["train", "--data", str(tmp_path / "nope"),
                   "--out", str(tmp_path / "out"), *TOY_FLAGS])
        assert rc == 2

    def test_malformed_config_exits_2(self, workdir, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("epochs == 2\n")
        rc = main(["train", "--data", str(workdir / "data" / "rocket"),
                   "--config", str(cfg), "--out", str(tmp_path / "out")])
        assert rc == 2
        assert "epochs" in capsys.readouterr().err

    def test_runtime_failure_exits_1(self, workdir, tmp_path):
        data = str(workdir / "data" / "rocket")
        with np.errstate(all="ignore"):
            rc = main(["train", "--data", data, "--out", str(tmp_path / "out"),
                       "--epochs", "3", *TOY_FLAGS[:-2],
                       "--seed", "3", "--learning-rate", "1e200"])
        assert rc == 1


class TestEval:
    def test_writes_predictions(self, workdir, tmp_path, capsys):
        rc = main(["eval", "--model", str(workdir / "run" / "model.ckpt"),
                   "--data", str(workdir / "data" / "rocket"),
                   "--out", str(tmp_path)])
        assert rc == 0
        assert "accuracy" in capsys.readouterr().out
        segs = sorted(p for p in os.listdir(tmp_path) if p.endswith(".seg"))
        assert len(segs) == 6
        labels = np.loadtxt(tmp_path / segs[0], dtype=int)
        assert labels.shape == (64,)

    def test_class_mismatch_exits_2(self, workdir, tmp_path, capsys):
        data = str(tmp_path / "data")
        assert main(["gen-data", "--family", "aircraft", "--count", "2",
                     "--points", "64", "--seed", "1", "--out", data]) == 0
        rc = main(["eval", "--model", str(workdir / "run" / "model.ckpt"),
                   "--data", os.path.join(data, "aircraft"),
                   "--out", str(tmp_path / "out")])
        assert rc == 2
        assert "classes" in capsys.readouterr().err


class TestCompare:
    def test_side_by_side_outputs(self, workdir, tmp_path, capsys):
        data = str(workdir / "data" / "rocket")
        rc = main(["compare", "--data", data, "--epochs", "2",
                   "--out", str(tmp_path), *TOY_FLAGS])
        assert rc == 0
        out = capsys.readouterr().out
        assert "final test accuracy: pointnet" in out
        assert "redundancy score" in out
        for name in ("pointnet_metrics.csv", "ipcnet_metrics.csv", "compare.csv",
                     "pointnet.ckpt", "ipcnet.ckpt"):
            assert (tmp_path / name).exists()

    def test_data_xor_family_enforced(self, workdir, tmp_path):
        data = str(workdir / "data" / "rocket")
        rc = main(["compare", "--data", data, "--family", "rocket",
                   "--out", str(tmp_path), *TOY_FLAGS])
        assert rc == 2
        rc = main(["compare", "--out", str(tmp_path), *TOY_FLAGS])
        assert rc == 2


class TestAnalysisCommands:
    def test_kernels_writes_csvs(self, workdir, tmp_path):
        cloud = str(workdir / "data" / "rocket" / "points" / "cloud_0000.pts")
        rc = main(["kernels", "--model", str(workdir / "run" / "model.ckpt"),
                   "--cloud", cloud, "--layer", "trunk0", "--kernels", "0,2",
                   "--axes", "x,z", "--out", str(tmp_path)])
        assert rc == 0
        for name in ("activation_trunk0_0.csv", "activation_trunk0_2.csv",
                     "projection_trunk0_0.csv", "projection_trunk0_2.csv"):
            assert (tmp_path / name).exists()
        header = (tmp_path / "projection_trunk0_0.csv").read_text().splitlines()[0]
        assert header == "x,z,activation"

    def test_kernels_unknown_layer_exits_2(self, workdir, tmp_path):
        cloud = str(workdir / "data" / "rocket" / "points" / "cloud_0000.pts")
        rc = main(["kernels", "--model", str(workdir / "run" / "model.ckpt"),
                   "--cloud", cloud, "--layer", "trunk99",
                   "--out", str(tmp_path)])
        assert rc == 2

    def test_heatmap_outputs_and_determinism(self, workdir, tmp_path, capsys):
        argv = ["heatmap", "--model", str(workdir / "run" / "model.ckpt"),
                "--layer", "trunk4"]
        assert main(argv + ["--out", str(tmp_path / "a")]) == 0
        assert "redundancy score" in capsys.readouterr().out
        assert main(argv + ["--out", str(tmp_path / "b")]) == 0
        a, b = _tree_bytes(tmp_path / "a"), _tree_bytes(tmp_path / "b")
        assert a == b
        assert set(a) == {"heatmap_trunk4.csv", "order_trunk4.csv",
                          "heatmap_trunk4.pgm"}
