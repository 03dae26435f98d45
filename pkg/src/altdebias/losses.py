"""Objective functions for the discoverer/classifier pair plus baselines.

All functions take and return :class:`~altdebias.autodiff.Tensor` values so
gradients flow wherever the caller has not detached an input. Gradient
stopping between the two networks is the caller's job: when the discoverer
is being optimized, ``p_t`` must be detached; when the classifier is being
optimized, ``p_b1`` (and hence the weights) must be detached.
"""

from dataclasses import dataclass

from .autodiff import LOG_EPS, Tensor

# Added to weighted-average denominators so an empty soft group divides
# cleanly to zero instead of raising.
DENOM_EPS = 1e-6


@dataclass
class GroupStats:
    """Weighted average target probabilities of the two soft bias groups."""

    p_bar_pos: Tensor
    p_bar_neg: Tensor

    @property
    def orientation(self):
        """True when the positive group is the better-performed one (ties
        resolve positive)."""
        return self.p_bar_pos.item() >= self.p_bar_neg.item()


def group_stats(p_t, p_b1, eps=DENOM_EPS):
    if p_t.shape != p_b1.shape:
        raise ValueError(f"length mismatch: {p_t.shape} vs {p_b1.shape}")
    p_b0 = 1.0 - p_b1
    pos = (p_b1 * p_t).sum() / (p_b1.sum() + eps)
    neg = (p_b0 * p_t).sum() / (p_b0.sum() + eps)
    return GroupStats(p_bar_pos=pos, p_bar_neg=neg)


def eov_loss(stats):
    """Negative log gap between the two groups' average target probability.

    Minimizing this drives the group assignment toward the split on which
    the classifier's performance differs most.
    """
    return -(stats.p_bar_pos - stats.p_bar_neg).abs().log()


def ua_penalty(p_b1):
    """Penalty against assigning (almost) everything to one group."""
    n = p_b1.data.size
    imbalance = ((p_b1 * 2.0 - 1.0).sum() / n).abs()
    return -(1.0 - imbalance).log()


def rce_weights(stats, p_b1):
    """Per-image loss weights: the worse-performed group is up-weighted.

    The result is detached; weights act as constants for the classifier
    update.
    """
    if stats.orientation:
        w = 1.0 - p_b1
    else:
        w = p_b1
    return w.detach()


def rce_loss(p_t, weights):
    if p_t.shape != weights.shape:
        raise ValueError(f"length mismatch: {p_t.shape} vs {weights.shape}")
    return -((1.0 + weights) * p_t.log()).mean()


def ce_loss(p_t):
    return -p_t.log().mean()


def focal_loss(p_t, alpha=0.25, gamma=2.0):
    return -((1.0 - p_t).pow_const(gamma) * p_t.log()).mean() * alpha


def gce_loss(p_t, q=0.7):
    # -p_t^q * log(p_t); recovers plain cross-entropy as q -> 0. The clamp
    # keeps the p^(q-1) gradient factor finite when softmax underflows a
    # target probability to exactly zero.
    p_t = p_t.clamp_min(LOG_EPS)
    return -(p_t.pow_const(q) * p_t.log()).mean()


def minmax_classifier_loss(stats, p_t):
    """Ablation objective: the classifier directly shrinks the group gap
    while also minimizing cross-entropy."""
    gap = (stats.p_bar_pos - stats.p_bar_neg).abs()
    return -(1.0 - gap).log() + ce_loss(p_t)
