import numpy as np
import pytest

from ipcnet import training as tr
from ipcnet.geometry import LabeledPointCloud


def blob_cloud(seed, n=64, num_classes=3):
    """Separable three-blob cloud; easy to overfit."""
    gen = np.random.default_rng(seed)
    centers = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
    labels = gen.integers(0, num_classes, size=n)
    pts = centers[labels] + 0.15 * gen.normal(size=(n, 3))
    return LabeledPointCloud(points=pts, labels=labels, num_classes=num_classes)


def toy_config(**overrides):
    base = dict(model="pointnet", epochs=30, batch_size=2, learning_rate=0.005,
                lambda_reg=1e-3, seed=3, train_fraction=0.5, n_points=64,
                trunk_widths=(8, 8, 8, 12, 16), transform_stage=2,
                head_widths=(12,), tnet_mlp_widths=(6, 8), tnet_fc_widths=(6,))
    base.update(overrides)
    return tr.TrainConfig(**base)


class TestSplit:
    def test_rocket_scale_split(self):
        clouds = list(range(75))
        train, test = tr.split_dataset(clouds, 0.8, seed=1)
        assert len(train) == 60 and len(test) == 15

    def test_exact_fraction(self):
        train, test = tr.split_dataset(list(range(10)), 0.3, seed=0)
        assert len(train) == 3 and len(test) == 7

    def test_same_seed_same_partition(self):
        clouds = list(range(40))
        assert tr.split_dataset(clouds, 0.8, 9) == tr.split_dataset(clouds, 0.8, 9)

    def test_disjoint_and_covering_over_seeds(self):
        clouds = list(range(23))
        for seed in range(50):
            train, test = tr.split_dataset(clouds, 0.7, seed)
            assert set(train) | set(test) == set(clouds)
            assert not set(train) & set(test)

    def test_empty_side_rejected(self):
        with pytest.raises(ValueError):
            tr.split_dataset(list(range(3)), 0.01, 0)
        with pytest.raises(ValueError):
            tr.split_dataset(list(range(3)), 0.99, 0)

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError):
            tr.split_dataset([], 0.8, 0)


class TestConfig:
    def test_defaults_valid(self):
        cfg = tr.TrainConfig()
        assert cfg.model == "pointnet" and cfg.train_fraction == 0.8

    def test_bad_values_rejected(self):
        with pytest.raises(ValueError, match="model"):
            tr.TrainConfig(model="resnet")
        with pytest.raises(ValueError, match="train_fraction"):
            tr.TrainConfig(train_fraction=1.0)
        with pytest.raises(ValueError, match="epochs"):
            tr.TrainConfig(epochs=0)
        with pytest.raises(ValueError, match="learning_rate"):
            tr.TrainConfig(learning_rate=-1.0)

    def test_text_roundtrip(self):
        cfg = toy_config(model="ipcnet", strict_holdout=True)
        mapping = dict(line.split("=", 1) for line in cfg.to_text().splitlines())
        assert tr.TrainConfig.from_mapping(mapping) == cfg

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="momentum"):
            tr.TrainConfig.from_mapping({"momentum": "0.9"})

    def test_config_file_parsing(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nmodel=ipcnet\n\nepochs = 12\n")
        mapping = tr.read_config_file(path)
        assert mapping == {"model": "ipcnet", "epochs": "12"}
        bad = tmp_path / "bad.cfg"
        bad.write_text("epochs 12\n")
        with pytest.raises(ValueError, match="bad.cfg:1"):
            tr.read_config_file(bad)


class TestTrain:
    def test_overfits_single_cloud(self):
        run = tr.train([blob_cloud(0), blob_cloud(1)], toy_config(epochs=200))
        assert max(run.train_accuracy) >= 0.99
        hit = next(i for i, a in enumerate(run.train_accuracy) if a >= 0.99)
        assert hit + 1 <= 200

    def test_trajectory_lengths_match_epochs(self):
        run = tr.train([blob_cloud(0), blob_cloud(1)], toy_config(epochs=4))
        for traj in (run.train_loss, run.train_accuracy, run.train_miou,
                     run.test_loss, run.test_accuracy, run.test_miou,
                     run.epoch_seconds):
            assert len(traj) == 4

    def test_bitwise_deterministic(self):
        data = [blob_cloud(s) for s in range(4)]
        a = tr.train(data, toy_config(epochs=5))
        b = tr.train(data, toy_config(epochs=5))
        assert a.train_loss == b.train_loss
        assert a.test_accuracy == b.test_accuracy
        assert a.best_epoch == b.best_epoch
        pa, pb = a.model.named_parameters(), b.model.named_parameters()
        assert sorted(pa) == sorted(pb)
        for name in pa:
            assert np.array_equal(pa[name].data, pb[name].data)

    def test_loss_decomposition(self):
        run = tr.train([blob_cloud(0), blob_cloud(1)], toy_config(epochs=6))
        for loss, ce, reg in zip(run.train_loss, run.train_ce, run.train_reg):
            assert abs(loss - (ce + run.config.lambda_reg * reg)) < 1e-12

    def test_zero_lambda_gives_pure_cross_entropy(self):
        run = tr.train([blob_cloud(0), blob_cloud(1)],
                       toy_config(epochs=5, lambda_reg=0.0))
        for loss, ce in zip(run.train_loss, run.train_ce):
            assert abs(loss - ce) < 1e-12
        assert all(r == 0.0 for r in run.train_reg)

    def test_best_epoch_selection(self):
        run = tr.train([blob_cloud(s) for s in range(4)], toy_config(epochs=8))
        assert 1 <= run.best_epoch <= 8
        best = max(run.test_accuracy)
        assert run.test_accuracy[run.best_epoch - 1] == best
        # ties break toward the earliest epoch
        assert run.best_epoch - 1 == run.test_accuracy.index(best)

    def test_strict_holdout_keeps_final_model(self):
        data = [blob_cloud(s) for s in range(4)]
        strict = tr.train(data, toy_config(epochs=6, strict_holdout=True))
        assert strict.best_epoch == 6
        # final params match a fresh run's final params bitwise
        loose = tr.train(data, toy_config(epochs=6))
        if loose.best_epoch != 6:
            pa = strict.model.named_parameters()
            pb = loose.model.named_parameters()
            assert any(not np.array_equal(pa[n].data, pb[n].data) for n in pa)

    def test_ipcnet_trains_too(self):
        from ipcnet import interpoint as ip
        cfg = toy_config(model="ipcnet", epochs=3)
        run = tr.train([blob_cloud(0), blob_cloud(1)], cfg)
        assert isinstance(run.model, ip.IPCNetSegModel)
        assert len(run.test_accuracy) == 3

    def test_wrong_point_count_rejected(self):
        with pytest.raises(ValueError, match="n_points"):
            tr.train([blob_cloud(0, n=32)], toy_config())

    def test_inconsistent_classes_rejected(self):
        bad = LabeledPointCloud(points=blob_cloud(1).points,
                                labels=blob_cloud(1).labels, num_classes=5)
        with pytest.raises(ValueError, match="classes"):
            tr.train([blob_cloud(0), bad], toy_config())

    def test_non_finite_loss_names_epoch_and_batch(self):
        data = [blob_cloud(s) for s in range(4)]
        with pytest.raises(FloatingPointError, match="epoch"):
            with np.errstate(all="ignore"):
                tr.train(data, toy_config(epochs=3, learning_rate=1e200))


class TestEvaluate:
    def test_overfit_cloud_scores_high(self):
        data = [blob_cloud(0), blob_cloud(1)]
        run = tr.train(data, toy_config(epochs=200))
        report = tr.evaluate(run.model, data)
        assert report.accuracy >= 0.99
        assert len(report.per_cloud_accuracy) == 2
        assert len(report.per_cloud_miou) == 2

    def test_constant_predictor_on_balanced_labels(self):
        cfg = toy_config()
        model = tr.build_model(cfg, num_classes=2)
        for p in model.parameters():
            p.data[:] = 0.0           # all-zero logits -> argmax picks class 0
        labels = np.repeat([0, 1], 32)
        cloud = LabeledPointCloud(points=np.random.default_rng(0).normal(size=(64, 3)),
                                  labels=labels, num_classes=2)
        report = tr.evaluate(model, [cloud])
        assert report.accuracy == 0.5

    def test_empty_dataset_rejected(self):
        model = tr.build_model(toy_config(), num_classes=3)
        with pytest.raises(ValueError, match="empty"):
            tr.evaluate(model, [])

    def test_class_mismatch_rejected(self):
        model = tr.build_model(toy_config(), num_classes=3)
        cloud = blob_cloud(0, num_classes=2)
        with pytest.raises(ValueError, match="classes"):
            tr.evaluate(model, [cloud])

    def test_checkpoint_path_accepted(self, tmp_path):
        from ipcnet import checkpoint as ckpt
        data = [blob_cloud(0), blob_cloud(1)]
        run = tr.train(data, toy_config(epochs=2))
        path = tmp_path / "m.ckpt"
        ckpt.save_model(path, run.model)
        direct = tr.evaluate(run.model, data)
        via_file = tr.evaluate(path, data)
        assert via_file.accuracy == direct.accuracy
        assert via_file.miou == direct.miou


class TestReports:
    def test_metrics_csv_layout(self, tmp_path):
        run = tr.train([blob_cloud(0), blob_cloud(1)], toy_config(epochs=3))
        path = tmp_path / "metrics.csv"
        tr.write_metrics_csv(path, run)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,split,loss,accuracy,miou"
        assert len(lines) == 1 + 2 * 3
        first = lines[1].split(",")
        assert first[0] == "1" and first[1] == "train"
        assert float(first[2]) == run.train_loss[0]
        assert float(lines[2].split(",")[3]) == run.test_accuracy[0]

    def test_epochs_to_accuracy(self):
        run = tr.TrainRun(config=toy_config(), num_classes=3)
        run.test_accuracy = [0.4, 0.7, 0.85, 0.9]
        assert tr.epochs_to_accuracy(run, 0.8) == 3
        assert tr.epochs_to_accuracy(run, 0.95) is None

    def test_comparison_runs_both_models(self, tmp_path):
        data = [blob_cloud(s) for s in range(4)]
        result = tr.run_comparison(data, toy_config(epochs=2))
        assert result.pointnet.config.model == "pointnet"
        assert result.ipcnet.config.model == "ipcnet"
        assert result.pointnet_redundancy > 0.0
        assert result.ipcnet_redundancy > 0.0
        path = tmp_path / "compare.csv"
        tr.write_comparison_csv(path, result)
        lines = path.read_text().splitlines()
        assert len(lines) == 3
        assert float(lines[1].split(",")[1]) == result.pointnet.test_accuracy[0]
        assert float(lines[1].split(",")[2]) == result.ipcnet.test_accuracy[0]
