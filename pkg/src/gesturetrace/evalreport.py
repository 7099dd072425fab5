"""Dataset splits, accuracy, confusion matrices and top-loss reporting.

Split conventions: the segmented-recording benchmark trains on recordings
1..35 and validates on 36..50 (reproducing the published 779/355 sample
counts), while freshly captured datasets use a seeded stratified random
split. Published reference accuracies are embedded in reports as
annotations only; they were obtained with an ImageNet-pretrained 50-layer
backbone and are not comparable to the compact trainable net shipped here.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import images as gimages
from . import nn, render
from .skeleton import GestureSample

#: Published accuracies recorded in report headers for context. These are
#: backbone-dependent reference points, never acceptance thresholds.
REFERENCE_ACCURACIES = {
    "trajectory_features_svm_baseline": 0.8478,
    "pretrained_backbone_single_view": 0.9183,
    "pretrained_backbone_double_view": 0.9211,
    "pretrained_backbone_new_dataset": 0.9878,
}
REFERENCE_NOTE = (
    "Reference results were obtained with an ImageNet-pretrained 50-layer "
    "backbone and are listed for context only."
)


# ---------------------------------------------------------------------------
# splits

def split_lmdhg(samples: list[GestureSample]):
    """Recordings 1..35 -> train, 36..50 -> validation."""
    for s in samples:
        if s.recording_index is None:
            raise ValueError(
                f"sample {s.sample_id!r} carries no recording index; "
                "the recording-based split needs recordings numbered 1..50"
            )
    train = [s for s in samples if s.recording_index <= 35]
    val = [s for s in samples if s.recording_index > 35]
    return train, val


def stratified_split_indices(labels, fraction: float, seed: int):
    """Seeded stratified split -> (train_idx, val_idx) index arrays.

    Per class, floor(fraction * n + 0.5) samples go to train, so class
    proportions stay within one sample of the global fraction.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    val_idx: list[int] = []
    for cls in sorted(set(labels.tolist())):
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(len(members))]
        k = int(np.floor(fraction * len(members) + 0.5))
        train_idx.extend(members[:k].tolist())
        val_idx.extend(members[k:].tolist())
    return np.array(sorted(train_idx)), np.array(sorted(val_idx))


def random_split(samples: list[GestureSample], fraction: float, seed: int):
    """Stratified random split of labeled samples -> (train, val)."""
    labels = [s.label for s in samples]
    if any(lb is None for lb in labels):
        raise ValueError("random_split needs labeled samples")
    train_idx, val_idx = stratified_split_indices(labels, fraction, seed)
    return [samples[i] for i in train_idx], [samples[i] for i in val_idx]


# ---------------------------------------------------------------------------
# confusion matrix

@dataclass(frozen=True)
class ConfusionMatrix:
    """Integer counts, rows = true class, columns = predicted class."""

    counts: np.ndarray
    classes: tuple[str, ...]

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        n = len(self.classes)
        if counts.shape != (n, n):
            raise ValueError(f"counts shape {counts.shape} != ({n}, {n})")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_pairs(cls, true_idx, pred_idx, classes) -> "ConfusionMatrix":
        n = len(classes)
        counts = np.zeros((n, n), dtype=np.int64)
        np.add.at(counts, (np.asarray(true_idx), np.asarray(pred_idx)), 1)
        return cls(counts=counts, classes=tuple(classes))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        total = self.total
        return float(np.trace(self.counts)) / total if total else 0.0

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def per_class_recall(self) -> dict[str, float]:
        rows = self.row_sums()
        diag = np.diag(self.counts)
        return {
            cls: (float(diag[i]) / rows[i] if rows[i] else float("nan"))
            for i, cls in enumerate(self.classes)
        }

    def to_csv_text(self) -> str:
        lines = ["true\\predicted," + ",".join(self.classes)]
        for i, cls in enumerate(self.classes):
            lines.append(cls + "," + ",".join(str(v) for v in self.counts[i]))
        return "\n".join(lines) + "\n"

    def save_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv_text())

    def save_heatmap(self, path) -> None:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        n = len(self.classes)
        fig, ax = plt.subplots(figsize=(max(6, n * 0.6), max(5, n * 0.5)))
        im = ax.imshow(self.counts, cmap="Blues")
        ax.set_xticks(range(n), self.classes, rotation=90, fontsize=8)
        ax.set_yticks(range(n), self.classes, fontsize=8)
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        if n <= 20:
            vmax = self.counts.max() or 1
            for i in range(n):
                for j in range(n):
                    v = self.counts[i, j]
                    if v:
                        ax.text(j, i, str(v), ha="center", va="center",
                                fontsize=7,
                                color="white" if v > vmax / 2 else "black")
        fig.colorbar(im, ax=ax, shrink=0.8)
        fig.tight_layout()
        fig.savefig(path, dpi=120)
        plt.close(fig)


# ---------------------------------------------------------------------------
# classification pipeline over a checkpoint

class CheckpointClassifier:
    """Bundles a model with the class set and the exact render settings it
    was trained with, so evaluation and streaming reproduce the training
    image pipeline."""

    def __init__(self, model: nn.Sequential, classes, resolution: int,
                 view: str = "top",
                 config: render.RenderConfig | None = None):
        self.model = model
        self.classes = tuple(classes)
        self.resolution = int(resolution)
        self.view = view
        self.config = config or render.scaled_config(resolution, resolution)

    @classmethod
    def from_checkpoint(cls, path) -> "CheckpointClassifier":
        model, header = nn.load_checkpoint(path)
        view = "top"
        config = None
        manifest = header.get("render")
        if manifest:
            view = manifest.get("view", "top")
            config = render.RenderConfig.from_json_dict(manifest["config"])
        return cls(model, header["classes"], header["resolution"], view, config)

    def render_array(self, sample: GestureSample) -> np.ndarray:
        img = render.render_views(sample, self.config, self.view)
        arr = gimages.image_to_array(img)
        return gimages.resize_area(arr, self.resolution, self.resolution)

    def predict_arrays(self, arrays: np.ndarray, batch_size: int = 64):
        """(B, 3, H, W) -> (pred indices, probabilities)."""
        logits = self.model.predict_logits(
            arrays.astype(np.float32, copy=False), batch_size
        )
        probs = nn.softmax(logits)
        return probs.argmax(axis=1), probs

    def predict_sample(self, sample: GestureSample) -> nn.Prediction:
        arr = self.render_array(sample)
        _, probs = self.predict_arrays(arr[None])
        return nn.prediction_from_probs(probs[0], self.classes)


@dataclass
class EvalResult:
    accuracy: float
    confusion: ConfusionMatrix
    sample_ids: list[str] = field(default_factory=list)
    true_idx: np.ndarray | None = None
    pred_idx: np.ndarray | None = None
    probs: np.ndarray | None = None


def _label_indices(classifier: CheckpointClassifier,
                   samples: list[GestureSample]) -> np.ndarray:
    sample_classes = sorted({s.label for s in samples if s.label is not None})
    missing = [c for c in sample_classes if c not in classifier.classes]
    if missing or any(s.label is None for s in samples):
        raise ValueError(
            "sample labels do not match the checkpoint class set; "
            f"checkpoint classes: {list(classifier.classes)}; "
            f"sample classes: {sample_classes}"
        )
    return np.array([classifier.classes.index(s.label) for s in samples])


def evaluate_samples(classifier: CheckpointClassifier,
                     samples: list[GestureSample],
                     batch_size: int = 64) -> EvalResult:
    """Render every sample with the checkpoint's recorded settings, classify
    by argmax, and aggregate accuracy plus the confusion matrix."""
    if not samples:
        raise ValueError("no samples to evaluate")
    true_idx = _label_indices(classifier, samples)
    arrays = gimages.stack_batch([classifier.render_array(s) for s in samples])
    pred_idx, probs = classifier.predict_arrays(arrays, batch_size)
    return _aggregate(classifier.classes, [s.sample_id for s in samples],
                      true_idx, pred_idx, probs)


def evaluate_arrays(classifier: CheckpointClassifier, arrays: np.ndarray,
                    true_idx: np.ndarray, sample_ids: list[str] | None = None,
                    batch_size: int = 64) -> EvalResult:
    """Evaluate pre-rendered image arrays (already at any resolution; they
    are resized to the checkpoint's training resolution)."""
    arrays = gimages.resize_area(
        np.asarray(arrays), classifier.resolution, classifier.resolution
    )
    pred_idx, probs = classifier.predict_arrays(arrays, batch_size)
    ids = sample_ids or [str(i) for i in range(len(true_idx))]
    return _aggregate(classifier.classes, ids, np.asarray(true_idx),
                      pred_idx, probs)


def _aggregate(classes, sample_ids, true_idx, pred_idx, probs) -> EvalResult:
    confusion = ConfusionMatrix.from_pairs(true_idx, pred_idx, classes)
    return EvalResult(
        accuracy=confusion.accuracy,
        confusion=confusion,
        sample_ids=list(sample_ids),
        true_idx=true_idx,
        pred_idx=pred_idx,
        probs=probs,
    )


@dataclass(frozen=True)
class TopLossEntry:
    sample_id: str
    loss: float
    predicted_class: str
    true_class: str


def top_losses_from_result(result: EvalResult, classes,
                           count: int) -> list[TopLossEntry]:
    if count < 1:
        raise ValueError("count must be >= 1")
    n = len(result.sample_ids)
    picked = result.probs[np.arange(n), result.true_idx]
    losses = -np.log(np.maximum(picked, np.finfo(picked.dtype).tiny))
    entries = [
        TopLossEntry(
            sample_id=result.sample_ids[i],
            loss=float(losses[i]),
            predicted_class=classes[int(result.pred_idx[i])],
            true_class=classes[int(result.true_idx[i])],
        )
        for i in range(n)
    ]
    entries.sort(key=lambda e: (-e.loss, e.sample_id))
    return entries[:count]


def top_losses(classifier: CheckpointClassifier, samples: list[GestureSample],
               count: int) -> list[TopLossEntry]:
    """Per-sample cross-entropy, highest first (pure loss ordering; correct
    predictions are not filtered out)."""
    result = evaluate_samples(classifier, samples)
    return top_losses_from_result(result, classifier.classes, count)


def save_top_losses_csv(path, entries: list[TopLossEntry]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "loss", "predicted", "true"])
        for e in entries:
            writer.writerow([e.sample_id, repr(e.loss), e.predicted_class,
                             e.true_class])


def write_report(path, result: EvalResult, extra: dict | None = None) -> None:
    """report.json: accuracy, per-class recall, and the published reference
    accuracies as clearly marked annotations."""
    import math

    recall = {
        cls: (None if math.isnan(v) else v)
        for cls, v in result.confusion.per_class_recall().items()
    }
    payload = {
        "accuracy": result.accuracy,
        "num_samples": result.confusion.total,
        "classes": list(result.confusion.classes),
        "per_class_recall": recall,
        "reference_accuracies": REFERENCE_ACCURACIES,
        "reference_note": REFERENCE_NOTE,
    }
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
