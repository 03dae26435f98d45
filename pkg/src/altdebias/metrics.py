"""Evaluation protocols: alignment-combination accuracy grid, group
accuracies, equal-opportunity gaps, and bias-discovery accuracy."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import mlp
from .datasets import NUM_CLASSES

_EVAL_CHUNK = 2048


@dataclass
class MetricsRecord:
    epoch: int
    acc_aa: Optional[float] = None   # aligned/aligned (or aligned, 1 attr)
    acc_ac: Optional[float] = None   # aligned left, conflicting right
    acc_ca: Optional[float] = None
    acc_cc: Optional[float] = None   # both conflicting (or conflicting, 1 attr)
    unbiased: Optional[float] = None
    avg_group: Optional[float] = None
    worst_group: Optional[float] = None
    eo_gap_max: Optional[float] = None
    eo_gap_mean: Optional[float] = None
    disc_acc_left: Optional[float] = None
    disc_acc_right: Optional[float] = None
    loss_c: Optional[float] = None
    loss_d: Optional[float] = None

    CSV_FIELDS = ("epoch", "acc_aa", "acc_ac", "acc_ca", "acc_cc", "unbiased",
                  "avg_group", "worst_group", "eo_gap_max", "eo_gap_mean",
                  "disc_acc_left", "disc_acc_right", "loss_c", "loss_d")

    def csv_row(self):
        cells = []
        for name in self.CSV_FIELDS:
            v = getattr(self, name)
            if v is None:
                cells.append("")
            elif name == "epoch":
                cells.append(str(v))
            else:
                cells.append(f"{v:.6f}")
        return ",".join(cells)

    def to_dict(self):
        return {name: getattr(self, name) for name in self.CSV_FIELDS}


def predict_probs(model, dataset, indices=None):
    """Frozen forward over the dataset in chunks; returns an (n, out) array."""
    if indices is None:
        indices = np.arange(dataset.count)
    chunks = []
    for start in range(0, indices.size, _EVAL_CHUNK):
        batch = dataset.images_float(indices[start:start + _EVAL_CHUNK],
                                     dtype=model.weights[0].dtype.type)
        chunks.append(model.forward_frozen(batch).data)
    return np.concatenate(chunks, axis=0)


def classifier_predictions(model, dataset):
    probs = predict_probs(model, dataset)
    return probs.argmax(axis=1)


def _combination_masks(dataset):
    """Masks of the alignment combinations, most-aligned first.

    Two attributes give (aa, ac, ca, cc); one attribute gives
    (aligned, conflicting).
    """
    a = dataset.aligned
    if dataset.num_attributes == 2:
        return [
            a[:, 0] & a[:, 1],
            a[:, 0] & ~a[:, 1],
            ~a[:, 0] & a[:, 1],
            ~a[:, 0] & ~a[:, 1],
        ]
    return [a[:, 0], ~a[:, 0]]


def group_accuracy_grid(model, dataset):
    """Accuracy per alignment combination plus their unweighted mean."""
    preds = classifier_predictions(model, dataset)
    correct = preds == dataset.targets
    accs = []
    for mask in _combination_masks(dataset):
        if not mask.any():
            raise ValueError("empty alignment combination in test set")
        accs.append(float(correct[mask].mean()))
    return accs, float(np.mean(accs))


def avg_worst_group(predictions, targets, bias_labels):
    """Mean and min accuracy over the (binary target x binary bias) grid."""
    predictions = np.asarray(predictions)
    targets = np.asarray(targets)
    bias_labels = np.asarray(bias_labels)
    accs = []
    for t in (0, 1):
        for b in (0, 1):
            mask = (targets == t) & (bias_labels == b)
            if not mask.any():
                raise ValueError(f"empty group (target={t}, bias={b})")
            accs.append(float((predictions[mask] == t).mean()))
    return float(np.mean(accs)), float(min(accs))


def eo_gap(predictions, targets, bias_labels):
    """Per-class absolute TPR difference between the two bias groups.

    Returns (gaps dict class->gap or None when a group is empty, max, mean
    over defined classes).
    """
    predictions = np.asarray(predictions)
    targets = np.asarray(targets)
    bias_labels = np.asarray(bias_labels).astype(bool)
    gaps = {}
    for k in np.unique(targets):
        k = int(k)
        tprs = []
        for group_mask in (~bias_labels, bias_labels):
            mask = (targets == k) & group_mask
            if not mask.any():
                tprs = None
                break
            tprs.append(float((predictions[mask] == k).mean()))
        gaps[k] = None if tprs is None else abs(tprs[0] - tprs[1])
    defined = [g for g in gaps.values() if g is not None]
    if not defined:
        return gaps, None, None
    return gaps, float(max(defined)), float(np.mean(defined))


def aligned_probability(discoverer, classifier, dataset):
    """Map discoverer outputs to P(bias-aligned) per test image.

    The positive/negative group labels are arbitrary, so orientation is
    fixed by whichever soft group the classifier performs better on,
    computed over the whole test set (per target class for per-class
    heads). Flipping every discoverer output leaves the result invariant.
    """
    cls_probs = predict_probs(classifier, dataset)
    p_t = cls_probs[np.arange(dataset.count), dataset.targets]
    disc_out = predict_probs(discoverer, dataset)
    p_aligned = np.empty(dataset.count, dtype=np.float64)
    if discoverer.head_kind == mlp.HEAD_SIGMOID_GLOBAL:
        class_of = np.zeros(dataset.count, dtype=np.int64)
        head_col = np.zeros(dataset.count, dtype=np.int64)
    else:
        class_of = dataset.targets.astype(np.int64)
        head_col = class_of
    p_b1 = disc_out[np.arange(dataset.count), head_col]
    for k in np.unique(class_of):
        mask = class_of == k
        pos = (p_b1[mask] * p_t[mask]).sum() / (p_b1[mask].sum() + 1e-6)
        neg = (((1 - p_b1[mask]) * p_t[mask]).sum()
               / ((1 - p_b1[mask]).sum() + 1e-6))
        p_aligned[mask] = p_b1[mask] if pos >= neg else 1.0 - p_b1[mask]
    return p_aligned


def discovery_accuracy(discoverer, classifier, dataset, attribute):
    """Bias-discovery accuracy against the ground-truth aligned flags."""
    p_aligned = aligned_probability(discoverer, classifier, dataset)
    pred_aligned = p_aligned >= 0.5
    return float((pred_aligned == dataset.aligned[:, attribute]).mean())


def lff_style_discovery_accuracy(gce_model, dataset, attribute):
    """A bias-amplified K-way model predicts 'aligned' iff its argmax class
    equals the ground-truth digit class."""
    preds = classifier_predictions(gce_model, dataset)
    pred_aligned = preds == dataset.targets
    return float((pred_aligned == dataset.aligned[:, attribute]).mean())


def evaluate(classifier, dataset, discoverer=None, epoch=0,
             loss_c=None, loss_d=None):
    """Full per-epoch MetricsRecord on a balanced test set."""
    accs, unbiased = group_accuracy_grid(classifier, dataset)
    preds = classifier_predictions(classifier, dataset)
    record = MetricsRecord(epoch=epoch, unbiased=unbiased,
                           avg_group=unbiased,
                           worst_group=float(min(accs)),
                           loss_c=loss_c, loss_d=loss_d)
    if dataset.num_attributes == 2:
        record.acc_aa, record.acc_ac, record.acc_ca, record.acc_cc = accs
    else:
        record.acc_aa, record.acc_cc = accs

    gap_maxes = []
    gap_means = []
    for a in range(dataset.num_attributes):
        _, gmax, gmean = eo_gap(preds, dataset.targets, dataset.aligned[:, a])
        if gmax is not None:
            gap_maxes.append(gmax)
            gap_means.append(gmean)
    if gap_maxes:
        record.eo_gap_max = float(max(gap_maxes))
        record.eo_gap_mean = float(np.mean(gap_means))

    if discoverer is not None:
        record.disc_acc_left = discovery_accuracy(
            discoverer, classifier, dataset, 0)
        if dataset.num_attributes == 2:
            record.disc_acc_right = discovery_accuracy(
                discoverer, classifier, dataset, 1)
    return record
