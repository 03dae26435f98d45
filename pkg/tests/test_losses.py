import math

import numpy as np
import pytest

import oracles
from altdebias import losses
from altdebias.autodiff import Tensor


def t(data):
    return Tensor(np.asarray(data, dtype=np.float64))


def rand_probs(rng, n, lo=1e-4, hi=1.0 - 1e-4):
    return rng.uniform(lo, hi, size=n)


class TestGroupStats:
    def test_hard_split(self):
        # two crisp groups: pos avg 0.85, neg avg 0.15 (up to eps in denom)
        stats = losses.group_stats(t([0.9, 0.8, 0.1, 0.2]),
                                   t([1.0, 1.0, 0.0, 0.0]))
        assert stats.p_bar_pos.item() == pytest.approx(0.85, abs=1e-6)
        assert stats.p_bar_neg.item() == pytest.approx(0.15, abs=1e-6)
        assert stats.orientation is True

    def test_empty_group_divides_to_zero(self):
        stats = losses.group_stats(t([0.9, 0.8]), t([1.0, 1.0]))
        assert stats.p_bar_neg.item() == 0.0

    def test_swap_symmetry(self):
        rng = np.random.default_rng(0)
        p_t, p_b1 = rand_probs(rng, 16), rand_probs(rng, 16)
        a = losses.group_stats(t(p_t), t(p_b1))
        b = losses.group_stats(t(p_t), t(1.0 - p_b1))
        assert a.p_bar_pos.item() == pytest.approx(b.p_bar_neg.item(),
                                                   abs=1e-12)
        assert a.p_bar_neg.item() == pytest.approx(b.p_bar_pos.item(),
                                                   abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            losses.group_stats(t([0.5]), t([0.5, 0.5]))

    def test_matches_oracle(self):
        rng = np.random.default_rng(1)
        for n in (1, 2, 8, 64):
            p_t, p_b1 = rand_probs(rng, n), rand_probs(rng, n)
            stats = losses.group_stats(t(p_t), t(p_b1))
            pos, neg = oracles.group_stats_ref(list(p_t), list(p_b1))
            assert stats.p_bar_pos.item() == pytest.approx(pos, abs=1e-9)
            assert stats.p_bar_neg.item() == pytest.approx(neg, abs=1e-9)


class TestEov:
    def test_known_gap(self):
        # gap 0.7 -> -log 0.7
        stats = losses.group_stats(t([0.9, 0.8, 0.1, 0.2]),
                                   t([1.0, 1.0, 0.0, 0.0]))
        expected = -math.log(abs(0.85 - 0.15))
        assert losses.eov_loss(stats).item() == pytest.approx(expected,
                                                              abs=1e-5)

    def test_zero_gap_clamped(self):
        stats = losses.group_stats(t([0.5, 0.5]), t([0.5, 0.5]))
        val = losses.eov_loss(stats).item()
        assert math.isfinite(val)
        assert val == pytest.approx(-math.log(1e-12))

    def test_sign_invariance(self):
        rng = np.random.default_rng(2)
        p_t, p_b1 = rand_probs(rng, 8), rand_probs(rng, 8)
        a = losses.eov_loss(losses.group_stats(t(p_t), t(p_b1))).item()
        b = losses.eov_loss(losses.group_stats(t(p_t), t(1.0 - p_b1))).item()
        assert a == pytest.approx(b, abs=1e-9)

    def test_matches_oracle(self):
        rng = np.random.default_rng(3)
        for n in (1, 2, 8, 64):
            p_t, p_b1 = rand_probs(rng, n), rand_probs(rng, n)
            got = losses.eov_loss(losses.group_stats(t(p_t), t(p_b1))).item()
            assert got == pytest.approx(oracles.eov_ref(list(p_t),
                                                        list(p_b1)),
                                        abs=1e-9)


class TestUa:
    def test_three_quarters_one_group(self):
        # imbalance |3-1|/4 = 0.5 -> -log 0.5 = log 2
        val = losses.ua_penalty(t([1.0, 1.0, 1.0, 0.0])).item()
        assert val == pytest.approx(math.log(2.0), abs=1e-12)

    def test_balanced_is_zero(self):
        assert losses.ua_penalty(t([1.0, 0.0, 1.0, 0.0])).item() == \
            pytest.approx(0.0, abs=1e-12)

    def test_collapse_clamped(self):
        val = losses.ua_penalty(t([1.0, 1.0, 1.0, 1.0])).item()
        assert math.isfinite(val)
        assert val == pytest.approx(-math.log(1e-12))

    def test_monotone_in_imbalance(self):
        # pushing the mean assignment toward one group only increases UA
        vals = [losses.ua_penalty(t([0.5 + d, 0.5 + d, 0.5 + d,
                                     0.5 + d])).item()
                for d in (0.0, 0.1, 0.2, 0.3, 0.4)]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    def test_matches_oracle(self):
        rng = np.random.default_rng(4)
        for n in (1, 2, 8, 64):
            p_b1 = rand_probs(rng, n)
            got = losses.ua_penalty(t(p_b1)).item()
            assert got == pytest.approx(oracles.ua_ref(list(p_b1)), abs=1e-9)


class TestRce:
    def test_worse_group_upweighted(self):
        # positive group performs better -> weights follow 1 - p_b1
        p_t = t([0.9, 0.8, 0.1, 0.2])
        p_b1 = t([1.0, 1.0, 0.0, 0.0])
        w = losses.rce_weights(losses.group_stats(p_t, p_b1), p_b1)
        np.testing.assert_allclose(w.data, [0.0, 0.0, 1.0, 1.0])
        assert not w.requires_grad

    def test_flipped_orientation(self):
        p_t = t([0.1, 0.2, 0.9, 0.8])
        p_b1 = t([1.0, 1.0, 0.0, 0.0])
        w = losses.rce_weights(losses.group_stats(p_t, p_b1), p_b1)
        np.testing.assert_allclose(w.data, [1.0, 1.0, 0.0, 0.0])

    def test_uniform_half_weights_are_scaled_ce(self):
        # constant W = 0.5 makes RCE = 1.5 * CE
        rng = np.random.default_rng(5)
        p_t = rand_probs(rng, 16)
        rce = losses.rce_loss(t(p_t), t(np.full(16, 0.5))).item()
        ce = losses.ce_loss(t(p_t)).item()
        assert rce == pytest.approx(1.5 * ce, abs=1e-12)

    def test_known_value(self):
        # single sample, weight 0.4, p_t 0.5 -> 1.4 * ln 2
        val = losses.rce_loss(t([0.5]), t([0.4])).item()
        assert val == pytest.approx(1.4 * math.log(2.0), abs=1e-12)

    def test_matches_oracle(self):
        rng = np.random.default_rng(6)
        for n in (1, 2, 8, 64):
            p_t, p_b1 = rand_probs(rng, n), rand_probs(rng, n)
            stats = losses.group_stats(t(p_t), t(p_b1))
            w = losses.rce_weights(stats, t(p_b1))
            got = losses.rce_loss(t(p_t), w).item()
            ref = oracles.rce_ref(list(p_t),
                                  oracles.weights_ref(list(p_t),
                                                      list(p_b1)))
            assert got == pytest.approx(ref, abs=1e-9)


class TestBaselineLosses:
    def test_ce_known_value(self):
        assert losses.ce_loss(t([0.5, 0.25])).item() == \
            pytest.approx((math.log(2) + math.log(4)) / 2, abs=1e-12)

    def test_focal_well_classified_nearly_free(self):
        # p_t = 0.99: alpha (1-p)^2 log p ~ 2.5e-7; vastly below CE
        focal = losses.focal_loss(t([0.99])).item()
        assert focal == pytest.approx(
            -0.25 * 0.01 ** 2 * math.log(0.99), abs=1e-12)
        assert focal < losses.ce_loss(t([0.99])).item()

    def test_gce_down_weights_hard_samples(self):
        # relative to CE, gce scales each term by p^q < 1
        p = 0.3
        assert losses.gce_loss(t([p]), q=0.7).item() == \
            pytest.approx(-(p ** 0.7) * math.log(p), abs=1e-12)

    def test_gce_q_to_zero_recovers_ce(self):
        rng = np.random.default_rng(7)
        p_t = rand_probs(rng, 16)
        gce = losses.gce_loss(t(p_t), q=1e-8).item()
        ce = losses.ce_loss(t(p_t)).item()
        assert gce == pytest.approx(ce, rel=1e-6)

    def test_focal_gce_match_oracle(self):
        rng = np.random.default_rng(8)
        for n in (1, 2, 8, 64):
            p_t = rand_probs(rng, n)
            assert losses.focal_loss(t(p_t)).item() == \
                pytest.approx(oracles.focal_ref(list(p_t)), abs=1e-9)
            assert losses.gce_loss(t(p_t)).item() == \
                pytest.approx(oracles.gce_ref(list(p_t)), abs=1e-9)


class TestMinmax:
    def test_known_value(self):
        # gap 0.5 with p_t all 0.5: -log(0.5) + ln 2 = 2 ln 2
        p_t = t([0.75, 0.25])
        p_b1 = t([1.0, 0.0])
        stats = losses.group_stats(p_t, p_b1)
        got = losses.minmax_classifier_loss(stats, t([0.5, 0.5])).item()
        assert got == pytest.approx(2 * math.log(2.0), abs=1e-5)

    def test_matches_oracle(self):
        rng = np.random.default_rng(9)
        for n in (2, 8, 64):
            p_t, p_b1 = rand_probs(rng, n), rand_probs(rng, n)
            stats = losses.group_stats(t(p_t), t(p_b1))
            got = losses.minmax_classifier_loss(stats, t(p_t)).item()
            assert got == pytest.approx(
                oracles.minmax_ref(list(p_t), list(p_b1)), abs=1e-9)
