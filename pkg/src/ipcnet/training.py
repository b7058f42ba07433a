"""Training and evaluation loops for the segmentation models.

The protocol is the usual one: shuffle the training split every epoch,
process clouds in small batches (each cloud goes through the network
independently; only the loss is averaged), take an Adam step per batch,
and re-evaluate the held-out split after every epoch.  The minimized
objective is mean cross-entropy plus ``lambda_reg`` times the
orthogonality penalty on the predicted feature transform.

Model selection note: by default the returned model is the checkpoint
with the best held-out accuracy, which quietly tunes one bit (the
stopping point) on the test split.  That mirrors common practice in the
experiments this reproduces, but it is mild leakage; pass
``strict_holdout=True`` to keep the final-epoch model instead.
"""

import logging
import os
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import analysis as an
from . import autodiff as ad
from . import checkpoint as ckpt
from . import rng
from .interpoint import IPCNetSegModel
from .pointnet import PointNetConfig, PointNetSegModel, l_reg

log = logging.getLogger(__name__)

_MODEL_KINDS = ("pointnet", "ipcnet")


@dataclass(frozen=True)
class TrainConfig:
    model: str = "pointnet"
    epochs: int = 150
    batch_size: int = 8
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    lambda_reg: float = 1e-3
    seed: int = 0
    train_fraction: float = 0.8
    n_points: int = 2048
    strict_holdout: bool = False
    trunk_widths: tuple = (64, 64, 64, 128, 1024)
    transform_stage: int = 2
    head_widths: tuple = (512, 256, 128)
    tnet_mlp_widths: tuple = (64, 128, 1024)
    tnet_fc_widths: tuple = (512, 256)

    def __post_init__(self):
        if self.model not in _MODEL_KINDS:
            raise ValueError(f"model must be one of {_MODEL_KINDS}, got {self.model!r}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        for name in ("epochs", "batch_size", "n_points"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    def pointnet_config(self, num_classes):
        return PointNetConfig(num_classes=num_classes,
                              trunk_widths=self.trunk_widths,
                              transform_stage=self.transform_stage,
                              head_widths=self.head_widths,
                              tnet_mlp_widths=self.tnet_mlp_widths,
                              tnet_fc_widths=self.tnet_fc_widths)

    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_mapping(cls, mapping):
        """Build from string key/value pairs (config files, CLI overrides)."""
        kwargs = {}
        known = {f.name: f for f in fields(cls)}
        for key, value in mapping.items():
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            default = known[key].default
            try:
                if isinstance(default, bool):
                    if str(value).lower() not in ("true", "false", "0", "1"):
                        raise ValueError("expects a boolean")
                    kwargs[key] = str(value).lower() in ("true", "1")
                elif isinstance(default, int):
                    kwargs[key] = int(value)
                elif isinstance(default, float):
                    kwargs[key] = float(value)
                elif isinstance(default, tuple):
                    kwargs[key] = tuple(int(x) for x in str(value).split(",") if x != "")
                else:
                    kwargs[key] = str(value)
            except ValueError:
                raise ValueError(f"config key {key!r} cannot take value {value!r}")
        return cls(**kwargs)


def read_config_file(path):
    """Flat key=value lines; blank lines and #-comments ignored."""
    mapping = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            mapping[key.strip()] = value.strip()
    return mapping


@dataclass
class TrainRun:
    config: TrainConfig
    num_classes: int
    train_loss: list = field(default_factory=list)
    train_ce: list = field(default_factory=list)
    train_reg: list = field(default_factory=list)
    train_accuracy: list = field(default_factory=list)
    train_miou: list = field(default_factory=list)
    test_loss: list = field(default_factory=list)
    test_accuracy: list = field(default_factory=list)
    test_miou: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    best_epoch: int = 0            # 1-based; the epoch the returned model is from
    model: object = None
    checkpoint_path: str = ""


@dataclass
class EvalReport:
    per_cloud_accuracy: list
    per_cloud_miou: list
    accuracy: float                # pooled over all points
    miou: float                    # mean of per-cloud mIoU
    loss: float
    predictions: list = field(default_factory=list)   # one label array per cloud


def split_dataset(clouds, fraction, seed):
    """Deterministic shuffled split; train gets round(fraction * n) clouds."""
    n = len(clouds)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    n_train = int(np.floor(fraction * n + 0.5))
    if n_train == 0 or n_train == n:
        raise ValueError(f"fraction {fraction} leaves an empty side for {n} clouds")
    perm = rng.make_rng(seed, rng.SPLIT).permutation(n)
    train = [clouds[i] for i in perm[:n_train]]
    test = [clouds[i] for i in perm[n_train:]]
    return train, test


def build_model(config: TrainConfig, num_classes):
    pn_config = config.pointnet_config(num_classes)
    if config.model == "ipcnet":
        return IPCNetSegModel(pn_config, config.n_points, config.seed)
    return PointNetSegModel(pn_config, config.seed)


def _validate_dataset(clouds, config):
    if not clouds:
        raise ValueError("dataset is empty")
    k = clouds[0].num_classes
    for i, cloud in enumerate(clouds):
        if cloud.points.shape[0] != config.n_points:
            raise ValueError(f"cloud {i} has {cloud.points.shape[0]} points; "
                             f"config says n_points={config.n_points}")
        if cloud.num_classes != k:
            raise ValueError(f"cloud {i} declares {cloud.num_classes} classes, "
                             f"others {k}")
    return k


def _cloud_loss(model, cloud, lambda_reg):
    """Graph for one cloud: (ce tensor, reg tensor, predicted labels)."""
    logits, (_, a_matrix) = model.segment(cloud.points)
    ce = ad.cross_entropy(logits, cloud.labels)
    reg = l_reg(a_matrix) if lambda_reg != 0.0 else None
    pred = logits.data.argmax(axis=1)
    return ce, reg, pred


def train(dataset, config: TrainConfig) -> TrainRun:
    """Run the full loop and return trajectories plus the selected model."""
    num_classes = _validate_dataset(dataset, config)
    train_set, test_set = split_dataset(dataset, config.train_fraction, config.seed)
    model = build_model(config, num_classes)
    params = model.parameters()
    state = ad.init_adam(params, config.learning_rate, config.beta1, config.beta2)
    run = TrainRun(config=config, num_classes=num_classes, model=model)
    lam = config.lambda_reg
    n_train = len(train_set)
    best_acc = -1.0
    best_params = None

    for epoch in range(1, config.epochs + 1):
        tick = time.perf_counter()
        order = rng.make_rng(config.seed, rng.SHUFFLE, epoch).permutation(n_train)
        ce_sum = reg_sum = 0.0
        correct = 0
        mious = []
        for start in range(0, n_train, config.batch_size):
            batch = [train_set[i] for i in order[start:start + config.batch_size]]
            ad.zero_grads(params)
            ce_terms, reg_terms = [], []
            for cloud in batch:
                ce, reg, pred = _cloud_loss(model, cloud, lam)
                ce_terms.append(ce)
                if reg is not None:
                    reg_terms.append(reg)
                ce_sum += float(ce.data)
                correct += int((pred == cloud.labels).sum())
                mious.append(an.miou(pred, cloud.labels, num_classes))
            total = ce_terms[0]
            for t in ce_terms[1:]:
                total = ad.add(total, t)
            total = ad.scale(total, 1.0 / len(batch))
            if reg_terms:
                reg_total = reg_terms[0]
                for t in reg_terms[1:]:
                    reg_total = ad.add(reg_total, t)
                reg_sum += float(reg_total.data)
                total = ad.add(total, ad.scale(reg_total, lam / len(batch)))
            if not np.isfinite(total.data):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}, batch {start // config.batch_size}")
            ad.backward(total)
            try:
                ad.adam_step(params, [p.grad for p in params], state)
            except FloatingPointError as err:
                raise FloatingPointError(
                    f"epoch {epoch}, batch {start // config.batch_size}: {err}") from err
        mean_ce = ce_sum / n_train
        mean_reg = reg_sum / n_train
        run.train_ce.append(mean_ce)
        run.train_reg.append(mean_reg)
        run.train_loss.append(mean_ce + lam * mean_reg)
        run.train_accuracy.append(correct / (n_train * config.n_points))
        run.train_miou.append(float(np.mean(mious)))

        report = evaluate(model, test_set, lambda_reg=lam)
        run.test_loss.append(report.loss)
        run.test_accuracy.append(report.accuracy)
        run.test_miou.append(report.miou)
        run.epoch_seconds.append(time.perf_counter() - tick)
        if report.accuracy > best_acc:
            best_acc = report.accuracy
            run.best_epoch = epoch
            if not config.strict_holdout:
                best_params = {name: t.data.copy()
                               for name, t in model.named_parameters().items()}
        log.debug("epoch %d: train acc %.4f, test acc %.4f",
                  epoch, run.train_accuracy[-1], report.accuracy)

    if config.strict_holdout:
        run.best_epoch = config.epochs
    elif best_params is not None:
        for name, tensor in model.named_parameters().items():
            tensor.data = best_params[name]
    return run


def evaluate(model, clouds, lambda_reg=0.0) -> EvalReport:
    """Score a model (object or checkpoint path) on labeled clouds."""
    if isinstance(model, (str, os.PathLike)):
        model = ckpt.load_model(model)
    if not clouds:
        raise ValueError("cannot evaluate on an empty dataset")
    k = model.config.num_classes
    for i, cloud in enumerate(clouds):
        if cloud.num_classes != k:
            raise ValueError(f"cloud {i} has {cloud.num_classes} classes; "
                             f"model predicts {k}")
    accs, mious, preds = [], [], []
    ce_sum = reg_sum = 0.0
    correct = total_points = 0
    for cloud in clouds:
        ce, reg, pred = _cloud_loss(model, cloud, lambda_reg)
        ce_sum += float(ce.data)
        if reg is not None:
            reg_sum += float(reg.data)
        accs.append(an.accuracy(pred, cloud.labels))
        mious.append(an.miou(pred, cloud.labels, k))
        preds.append(pred)
        correct += int((pred == cloud.labels).sum())
        total_points += len(cloud.labels)
    n = len(clouds)
    return EvalReport(per_cloud_accuracy=accs, per_cloud_miou=mious,
                      accuracy=correct / total_points,
                      miou=float(np.mean(mious)),
                      loss=ce_sum / n + lambda_reg * (reg_sum / n),
                      predictions=preds)


def write_metrics_csv(path, run: TrainRun):
    """`epoch,split,loss,accuracy,miou`, one train and one test row per epoch."""
    with open(path, "w") as f:
        f.write("epoch,split,loss,accuracy,miou\n")
        for i in range(len(run.train_loss)):
            for split, loss, acc, mi in (
                    ("train", run.train_loss[i], run.train_accuracy[i],
                     run.train_miou[i]),
                    ("test", run.test_loss[i], run.test_accuracy[i],
                     run.test_miou[i])):
                f.write(f"{i + 1},{split},{loss:.17g},{acc:.17g},{mi:.17g}\n")


def epochs_to_accuracy(run: TrainRun, threshold):
    """First (1-based) epoch whose test accuracy reaches the threshold,
    or None if the run never gets there."""
    for i, acc in enumerate(run.test_accuracy):
        if acc >= threshold:
            return i + 1
    return None


@dataclass
class ComparisonResult:
    pointnet: TrainRun
    ipcnet: TrainRun
    pointnet_redundancy: float
    ipcnet_redundancy: float


def run_comparison(dataset, config: TrainConfig) -> ComparisonResult:
    """Train PointNet and IPC-Net on the identical split/seed and report
    both, plus the redundancy score of the last trunk layer of each."""
    runs = {}
    for kind in _MODEL_KINDS:
        runs[kind] = train(dataset, replace(config, model=kind))
    last_trunk = f"trunk{len(config.trunk_widths) - 1}"
    scores = {}
    for kind in _MODEL_KINDS:
        hm = an.redundancy_heatmap(runs[kind].model, last_trunk)
        scores[kind] = an.redundancy_score(hm)
        log.info("%s redundancy score at %s: %.6f", kind, last_trunk, scores[kind])
    return ComparisonResult(pointnet=runs["pointnet"], ipcnet=runs["ipcnet"],
                            pointnet_redundancy=scores["pointnet"],
                            ipcnet_redundancy=scores["ipcnet"])


def write_comparison_csv(path, result: ComparisonResult):
    """Side-by-side per-epoch test accuracy of the two models."""
    with open(path, "w") as f:
        f.write("epoch,pointnet_test_accuracy,ipcnet_test_accuracy,"
                "pointnet_test_miou,ipcnet_test_miou\n")
        for i in range(len(result.pointnet.test_accuracy)):
            f.write(f"{i + 1},{result.pointnet.test_accuracy[i]:.17g},"
                    f"{result.ipcnet.test_accuracy[i]:.17g},"
                    f"{result.pointnet.test_miou[i]:.17g},"
                    f"{result.ipcnet.test_miou[i]:.17g}\n")
