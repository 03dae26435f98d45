"""Training loops: alternate two-network mitigation, discover-only, and
single-network baselines.

One iteration of the alternate loop consumes one classifier batch and one
independently sampled discoverer batch; the classifier phase always runs
first and uses the discoverer's pre-update parameters. An epoch is defined
by the classifier's batch count.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import losses, metrics, mlp
from .autodiff import Tensor
from .datasets import NUM_CLASSES, EpochSampler, split_by_class

METHODS = ("vanilla", "focal", "gce_biased", "debian", "debian_no_ua",
           "debian_minmax", "discover_only")

ALTERNATE_METHODS = ("debian", "debian_no_ua", "debian_minmax")


@dataclass
class TrainConfig:
    method: str
    epochs: int = 100
    batch_size: int = 256
    lr: float = 1e-3
    seed: int = 0
    eval_every: int = 1
    hidden: int = mlp.HIDDEN_DIM
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    gce_q: float = 0.7
    classifier_ckpt: Optional[str] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ValueError("invalid schedule parameters")
        if self.method == "discover_only" and not self.classifier_ckpt:
            raise ValueError("discover_only requires a classifier checkpoint")


@dataclass
class TrainState:
    classifier: mlp.Mlp
    adam_c: Optional[object]
    discoverer: Optional[mlp.Mlp]
    adam_d: Optional[object]
    epoch: int = 0
    iteration: int = 0
    skipped_steps: int = 0
    degenerate_batches: int = 0


def _mean_loss(terms):
    total = terms[0]
    for t in terms[1:]:
        total = total + t
    return total * (1.0 / len(terms))


def _uses_discoverer(method):
    return method in ALTERNATE_METHODS or method == "discover_only"


def init_state(config, input_dim=mlp.INPUT_DIM):
    ss = np.random.SeedSequence(config.seed)
    init_c, init_d = [np.random.default_rng(s) for s in ss.spawn(2)]
    if config.method == "discover_only":
        classifier = mlp.load_checkpoint(config.classifier_ckpt)
        adam_c = None
    else:
        classifier = mlp.Mlp(mlp.HEAD_SOFTMAX_CLASSES, hidden=config.hidden,
                             input_dim=input_dim, rng=init_c)
        adam_c = _make_adam(classifier, config)
    if _uses_discoverer(config.method):
        discoverer = mlp.Mlp(mlp.HEAD_SIGMOID_PER_CLASS, hidden=config.hidden,
                             input_dim=input_dim, rng=init_d)
        adam_d = _make_adam(discoverer, config)
    else:
        discoverer = None
        adam_d = None
    return TrainState(classifier=classifier, adam_c=adam_c,
                      discoverer=discoverer, adam_d=adam_d)


def _make_adam(model, config):
    from .autodiff import AdamState
    return AdamState(model.params, lr=config.lr)


def _classifier_p_t(state, images, targets, record_graph):
    if record_graph:
        probs = state.classifier.forward(images)
    else:
        probs = state.classifier.forward_frozen(images)
    return probs.take_per_row(targets)


def _discoverer_column(probs_d, mask, class_id):
    rows = probs_d.select(mask)
    col = np.full(int(mask.sum()), class_id, dtype=np.int64)
    return rows.take_per_row(col)


def discover_step(state, train_set, batch_indices, use_ua=True):
    """Alg.-style discoverer update: classifier frozen, per-class mean of
    separation loss (+ balance penalty)."""
    class_batches = split_by_class(train_set.targets, batch_indices)
    if not class_batches:
        state.skipped_steps += 1
        return None
    images = train_set.images_float(batch_indices)
    targets = train_set.targets[batch_indices].astype(np.int64)
    batch_targets = train_set.targets[batch_indices]
    p_t = _classifier_p_t(state, images, targets, record_graph=False)
    probs_d = state.discoverer.forward(images)
    terms = []
    for cb in class_batches:
        if cb.indices.size == 1:
            state.degenerate_batches += 1
        mask = batch_targets == cb.class_id
        p_t_k = p_t.select(mask)
        p_b1_k = _discoverer_column(probs_d, mask, cb.class_id)
        stats = losses.group_stats(p_t_k, p_b1_k)
        loss_k = losses.eov_loss(stats)
        if use_ua:
            loss_k = loss_k + losses.ua_penalty(p_b1_k)
        terms.append(loss_k)
    loss = _mean_loss(terms)
    loss.backward()
    state.adam_d.step()
    return loss.item()


def _classifier_step(state, train_set, batch_indices, method, config):
    """Classifier update with the discoverer (if any) frozen."""
    images = train_set.images_float(batch_indices)
    targets = train_set.targets[batch_indices].astype(np.int64)
    p_t = _classifier_p_t(state, images, targets, record_graph=True)

    if method in ("vanilla", "gce_biased", "focal"):
        if method == "vanilla":
            loss = losses.ce_loss(p_t)
        elif method == "focal":
            loss = losses.focal_loss(p_t, config.focal_alpha,
                                     config.focal_gamma)
        else:
            loss = losses.gce_loss(p_t, config.gce_q)
        loss.backward()
        state.adam_c.step()
        return loss.item()

    class_batches = split_by_class(train_set.targets, batch_indices)
    if not class_batches:
        state.skipped_steps += 1
        return None
    p_b1_all = state.discoverer.forward_frozen(images).data
    batch_targets = train_set.targets[batch_indices]
    terms = []
    for cb in class_batches:
        if cb.indices.size == 1:
            state.degenerate_batches += 1
        mask = batch_targets == cb.class_id
        p_t_k = p_t.select(mask)
        p_b1_k = Tensor(p_b1_all[mask, cb.class_id])
        if method == "debian_minmax":
            stats = losses.group_stats(p_t_k, p_b1_k)
            terms.append(losses.minmax_classifier_loss(stats, p_t_k))
        else:
            stats = losses.group_stats(p_t_k.detach(), p_b1_k)
            weights = losses.rce_weights(stats, p_b1_k)
            terms.append(losses.rce_loss(p_t_k, weights))
    loss = _mean_loss(terms)
    loss.backward()
    state.adam_c.step()
    return loss.item()


def mitigate_step(state, train_set, batch_for_c, batch_for_d, config):
    """One alternate iteration: classifier phase first, then discoverer."""
    loss_c = _classifier_step(state, train_set, batch_for_c,
                              config.method, config)
    loss_d = discover_step(state, train_set, batch_for_d,
                           use_ua=config.method != "debian_no_ua")
    return loss_c, loss_d


def run(config, train_set, test_set, on_epoch=None):
    """Train per the configured method; returns (state, metrics records)."""
    state = init_state(config)
    ss = np.random.SeedSequence((config.seed, 0xDA7A))
    rng_c, rng_d = [np.random.default_rng(s) for s in ss.spawn(2)]
    sampler_c = EpochSampler(train_set.count, config.batch_size, rng_c)
    sampler_d = EpochSampler(train_set.count, config.batch_size, rng_d)
    alternate = config.method in ALTERNATE_METHODS
    records = []

    def evaluate(epoch, loss_c, loss_d):
        classifier = state.classifier
        record = metrics.evaluate(classifier, test_set,
                                  discoverer=state.discoverer, epoch=epoch,
                                  loss_c=loss_c, loss_d=loss_d)
        records.append(record)
        if on_epoch is not None:
            on_epoch(record, state)

    if config.epochs == 0:
        evaluate(0, None, None)
        return state, records

    for epoch in range(1, config.epochs + 1):
        state.epoch = epoch
        losses_c = []
        losses_d = []
        batches_d = sampler_d.epoch() if (alternate or
                                          config.method == "discover_only") else None
        for batch_c in sampler_c.epoch():
            state.iteration += 1
            if config.method == "discover_only":
                ld = discover_step(state, train_set, next(batches_d))
                if ld is not None:
                    losses_d.append(ld)
                continue
            if alternate:
                lc, ld = mitigate_step(state, train_set, batch_c,
                                       next(batches_d), config)
                if lc is not None:
                    losses_c.append(lc)
                if ld is not None:
                    losses_d.append(ld)
            else:
                lc = _classifier_step(state, train_set, batch_c,
                                      config.method, config)
                if lc is not None:
                    losses_c.append(lc)
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            evaluate(epoch,
                     float(np.mean(losses_c)) if losses_c else None,
                     float(np.mean(losses_d)) if losses_d else None)
    return state, records


def assignment_imbalance(discoverer, dataset):
    """Mean over target classes of |mean(p(b=1) - p(b=0))| on a dataset;
    1.0 means everything in one group, 0.0 a perfectly balanced split."""
    out = metrics.predict_probs(discoverer, dataset)
    vals = []
    for k in range(NUM_CLASSES):
        mask = dataset.targets == k
        if not mask.any():
            continue
        col = 0 if discoverer.head_kind == mlp.HEAD_SIGMOID_GLOBAL else k
        p_b1 = out[mask, col]
        vals.append(abs(float(np.mean(2.0 * p_b1 - 1.0))))
    return float(np.mean(vals))
