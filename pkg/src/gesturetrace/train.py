"""Training procedure: progressive resolution rounds with frozen/unfrozen
phases, ranger (RAdam + Lookahead) optimization and best-checkpoint
selection.

A training run walks an increasing resolution schedule; every round trains
two phases of equal epoch count: phase a with everything but the head
frozen, phase b with all layers trainable at a reduced learning rate. The
returned checkpoint is the epoch snapshot with the best validation
accuracy; on ties the earlier (lower-resolution) round wins, since smaller
images classify faster.
"""

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .evalreport import stratified_split_indices
from .images import resize_area
from .optim import Ranger, lr_range_scan

#: Desk-scale default schedule. The benchmark schedule used for full-size
#: 1920x1080 renders is (192, 384, 576, 960, 1536, 1920); pass it via
#: TrainConfig(schedule=...) when training on real datasets.
DESK_SCHEDULE = (48, 96, 192)
FULL_SCHEDULE = (192, 384, 576, 960, 1536, 1920)


@dataclass(frozen=True)
class TrainConfig:
    schedule: tuple[int, ...] = DESK_SCHEDULE
    epochs_per_phase: int = 10
    lr_a: float = 2e-3
    lr_b: float | None = None  # defaults to lr_a / 10
    batch_size: int = 16
    seed: int = 0
    freeze_boundary: str = "head"
    lookahead_k: int = 6
    lookahead_alpha: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    val_fraction: float = 0.3
    channels: tuple[int, ...] = (16, 32, 64, 128)

    def __post_init__(self):
        if any(b >= a for a, b in zip(self.schedule[1:], self.schedule)):
            raise ValueError(f"schedule must be strictly increasing: {self.schedule}")
        if self.epochs_per_phase < 0:
            raise ValueError("epochs_per_phase must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr_a <= 0 or (self.lr_b is not None and self.lr_b <= 0):
            raise ValueError("learning rates must be positive")

    @property
    def phase_b_lr(self) -> float:
        return self.lr_b if self.lr_b is not None else self.lr_a / 10.0


@dataclass
class HistoryRow:
    round: int
    phase: str
    epoch: int
    train_loss: float
    val_accuracy: float


def history_csv(rows: list[HistoryRow]) -> str:
    lines = ["round,phase,epoch,train_loss,val_accuracy"]
    for r in rows:
        lines.append(
            f"{r.round},{r.phase},{r.epoch},{repr(r.train_loss)},"
            f"{repr(r.val_accuracy)}"
        )
    return "\n".join(lines) + "\n"


@dataclass
class TrainResult:
    model: nn.Sequential  # carrying the best-epoch weights
    history: list[HistoryRow]
    best_val_accuracy: float
    best_round: int
    best_phase: str
    best_epoch: int
    best_resolution: int
    output_files: dict = field(default_factory=dict)


def set_freeze(model: nn.Sequential, boundary: str) -> nn.Sequential:
    """Freeze every layer before the named boundary layer. Frozen layers
    still run forward/backward (gradients flow through them); they just
    receive no parameter updates."""
    names = model.layer_names
    if boundary not in names:
        raise ValueError(f"unknown layer {boundary!r}; layers: {names}")
    cut = names.index(boundary)
    for i, name in enumerate(names):
        model.trainable[name] = i >= cut
    return model


def _accuracy(model: nn.Sequential, x: np.ndarray, labels: np.ndarray,
              batch_size: int) -> float:
    logits = model.predict_logits(x, batch_size)
    return float((logits.argmax(axis=1) == labels).mean())


def _check_resolution(res: int, num_pools: int) -> None:
    if res % (2 ** num_pools):
        raise ValueError(
            f"resolution {res} is not divisible by 2^{num_pools} "
            f"(the net has {num_pools} pooling stages)"
        )


def train(images, labels, config: TrainConfig, classes,
          val_images=None, val_labels=None, out_dir=None,
          render_manifest: dict | None = None) -> TrainResult:
    """Run the full schedule and return the best checkpoint plus history.

    images: (N, 3, H, W) float array at the stored resolution; every round
    resizes it to that round's square resolution. When no explicit
    validation set is given, a seeded stratified split carves one out of
    the training images. With out_dir set, per-round/phase checkpoints,
    history.csv, the best-epoch checkpoint and a best.ckpt pointer are
    written there.
    """
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    if val_images is None:
        if len(images) < 2:
            raise ValueError("need at least 2 samples to split off validation")
        tr_idx, va_idx = stratified_split_indices(
            labels, 1.0 - config.val_fraction, config.seed
        )
        val_images, val_labels = images[va_idx], labels[va_idx]
        images, labels = images[tr_idx], labels[tr_idx]
    else:
        val_images = np.asarray(val_images, dtype=np.float32)
        val_labels = np.asarray(val_labels, dtype=np.int64)
    if len(images) == 0:
        raise ValueError("training set is empty")
    if len(val_images) == 0:
        raise ValueError("validation set is empty")

    num_pools = len(config.channels)
    for res in config.schedule:
        _check_resolution(res, num_pools)

    seeds = np.random.SeedSequence(config.seed).spawn(2)
    model = nn.build_miniconvnet(
        len(classes), channels=config.channels,
        seed=seeds[0].generate_state(1)[0],
    )
    shuffle_rng = np.random.default_rng(seeds[1])

    history: list[HistoryRow] = []
    best = {
        "acc": -1.0,
        "params": {k: v.copy() for k, v in model.parameters().items()},
        "round": 0,
        "phase": "-",
        "epoch": 0,
        "resolution": config.schedule[0] if config.schedule else images.shape[2],
    }
    outputs: dict[str, str] = {}
    out_path = None
    if out_dir is not None:
        from pathlib import Path

        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)

    def save(name: str, params: dict, resolution: int) -> None:
        if out_path is None:
            return
        saved = {k: v.copy() for k, v in model.parameters().items()}
        model.set_parameters(params)
        nn.save_checkpoint(out_path / name, model, classes, resolution,
                           config.seed, render=render_manifest)
        model.set_parameters(saved)
        outputs[name] = str(out_path / name)

    for round_idx, res in enumerate(config.schedule, start=1):
        tr_x = resize_area(images, res, res)
        va_x = resize_area(val_images, res, res)
        for phase in ("a", "b"):
            if phase == "a":
                set_freeze(model, config.freeze_boundary)
                lr = config.lr_a
            else:
                set_freeze(model, model.layer_names[0])
                lr = config.phase_b_lr
            optimizer = Ranger(
                model.parameters(trainable_only=True), lr=lr,
                beta1=config.beta1, beta2=config.beta2, eps=config.eps,
                lookahead_k=config.lookahead_k,
                lookahead_alpha=config.lookahead_alpha,
            )
            for epoch in range(1, config.epochs_per_phase + 1):
                order = shuffle_rng.permutation(len(tr_x))
                loss_sum = 0.0
                for start in range(0, len(order), config.batch_size):
                    batch = order[start:start + config.batch_size]
                    loss, grads, _ = model.loss_and_grads(
                        tr_x[batch], labels[batch]
                    )
                    optimizer.step(grads)
                    loss_sum += loss * len(batch)
                train_loss = loss_sum / len(order)
                val_acc = _accuracy(model, va_x, val_labels, config.batch_size)
                history.append(HistoryRow(round_idx, phase, epoch,
                                          train_loss, val_acc))
                if val_acc > best["acc"]:
                    best = {
                        "acc": val_acc,
                        "params": {k: v.copy()
                                   for k, v in model.parameters().items()},
                        "round": round_idx,
                        "phase": phase,
                        "epoch": epoch,
                        "resolution": res,
                    }
            save(f"round{round_idx}_{res}px_phase{phase}.ckpt",
                 model.parameters(), res)

    model.set_parameters(best["params"])
    set_freeze(model, model.layer_names[0])
    save("best_epoch.ckpt", best["params"], best["resolution"])
    if out_path is not None:
        (out_path / "history.csv").write_text(history_csv(history),
                                              encoding="utf-8")
        outputs["history.csv"] = str(out_path / "history.csv")
        nn.write_pointer(out_path / "best.ckpt", "best_epoch.ckpt")
        outputs["best.ckpt"] = str(out_path / "best.ckpt")

    return TrainResult(
        model=model,
        history=history,
        best_val_accuracy=max(best["acc"], 0.0),
        best_round=best["round"],
        best_phase=best["phase"],
        best_epoch=best["epoch"],
        best_resolution=best["resolution"],
        output_files=outputs,
    )


def clone_model(model: nn.Sequential) -> nn.Sequential:
    copy = nn.model_from_spec(model.spec())
    copy.set_parameters({k: v.copy() for k, v in model.parameters().items()})
    copy.trainable = dict(model.trainable)
    return copy


def lr_range_test(model: nn.Sequential, images, labels,
                  lr_span: tuple[float, float], batch_size: int = 16,
                  steps: int = 100, seed: int = 0):
    """Learning-rate range probe on a throwaway copy of the model.

    Mini-batches cycle through a seeded shuffle of the data while the probe
    rate ramps exponentially across lr_span; see optim.lr_range_scan for
    the suggestion rule.
    """
    images = np.asarray(images, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) == 0:
        raise ValueError("lr range test needs data")
    probe = clone_model(model)
    params = probe.parameters(trainable_only=True)
    order = np.random.default_rng(seed).permutation(len(images))

    def objective(_params, i):
        batch = order[(i * batch_size + np.arange(batch_size)) % len(order)]
        loss, grads, _ = probe.loss_and_grads(images[batch], labels[batch])
        return loss, {k: grads[k] for k in params}

    return lr_range_scan(objective, params, lr_span, steps=steps)
