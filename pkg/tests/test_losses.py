import math

import numpy as np
import pytest

from vlpl_lab import losses
from vlpl_lab.dataset import LabelState
from vlpl_lab.errors import ConfigError, NonFiniteScore, ShapeMismatch, UnexpectedState
from vlpl_lab.losses import LossConfig, LossVariant

OP = int(LabelState.OBSERVED_POSITIVE)
TN = int(LabelState.TRUE_NEGATIVE)
UNK = int(LabelState.UNKNOWN)
PP = int(LabelState.PSEUDO_POSITIVE)
PN = int(LabelState.PSEUDO_NEGATIVE)


def fd_grad(fn, scores, h=1e-5):
    """Central finite differences of a scalar function of the scores."""
    grad = np.zeros_like(scores, dtype=np.float64)
    for i in range(scores.size):
        up = scores.copy()
        up.flat[i] += h
        down = scores.copy()
        down.flat[i] -= h
        grad.flat[i] = (fn(up) - fn(down)) / (2 * h)
    return grad


def rel_err(a, b):
    return np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))


def random_states(rng, variant, length):
    row = np.full(length, UNK, dtype=np.int8)
    row[rng.integers(length)] = OP
    if variant in (LossVariant.VLPL_FULL, LossVariant.VLPL_POSITIVE_ONLY):
        for i in range(length):
            if row[i] == UNK:
                r = rng.random()
                if r < 0.3:
                    row[i] = PP
                elif r < 0.5:
                    row[i] = PN
    return row


def loss_fn(variant, states, cfg=None):
    if variant == LossVariant.ASSUME_NEGATIVE:
        return lambda z: losses.assume_negative_loss(z, states).value
    if variant == LossVariant.ENTROPY_MAX:
        alpha = (cfg or LossConfig()).alpha
        return lambda z: losses.em_loss(z, states, alpha).value
    cfg = cfg or LossConfig(variant=variant)
    return lambda z: losses.vlpl_loss(z, states, cfg).value


class TestSigmoid:
    def test_zero(self):
        assert losses.sigmoid_probs(np.array([0.0]))[0] == 0.5

    def test_clamp(self):
        assert losses.sigmoid_probs(np.array([40.0]))[0] == 1.0 - 1e-7
        assert losses.sigmoid_probs(np.array([-40.0]))[0] == 1e-7

    def test_symmetry(self, rng):
        z = rng.uniform(-10, 10, size=200)
        f = losses.sigmoid_probs(z) + losses.sigmoid_probs(-z)
        np.testing.assert_allclose(f, 1.0, atol=1e-12)

    def test_non_finite_rejected(self):
        with pytest.raises(NonFiniteScore):
            losses.sigmoid_probs(np.array([np.nan]))


class TestEntropyTerm:
    def test_maximum_at_half(self):
        assert abs(losses.entropy_term(0.5) - math.log(2)) < 1e-12

    def test_near_certainty(self):
        f = 1.0 - 1e-7
        expected = -(f * math.log(f) + (1.0 - f) * math.log(1.0 - f))
        assert abs(losses.entropy_term(f) - expected) < 1e-18
        assert losses.entropy_term(f) < 2e-6

    def test_symmetry(self, rng):
        f = rng.uniform(0.01, 0.99, size=100)
        np.testing.assert_allclose(losses.entropy_term(f), losses.entropy_term(1 - f), atol=1e-12)


class TestSmoothedPseudoTerm:
    def test_rho_one_is_positive_bce(self):
        assert abs(losses.smoothed_pseudo_term(0.5, 1.0) - math.log(2)) < 1e-12

    def test_symmetric_target(self):
        assert abs(losses.smoothed_pseudo_term(0.5, 0.5) - math.log(2)) < 1e-12

    def test_grid_argmin_at_rho(self):
        # 1-D grid oracle, step 1e-4
        grid = np.arange(1e-4, 1.0, 1e-4)
        values = losses.smoothed_pseudo_term(grid, 0.9)
        assert abs(grid[np.argmin(values)] - 0.9) <= 1e-4 + 1e-12


class TestAssumeNegative:
    def test_perfect_fit_single_label(self):
        states = np.array([OP], dtype=np.int8)
        result = losses.assume_negative_loss(np.array([40.0]), states)
        assert abs(result.value - 1e-7) < 1e-9

    def test_hand_value(self):
        states = np.array([OP, UNK], dtype=np.int8)
        result = losses.assume_negative_loss(np.zeros(2), states)
        assert abs(result.value - math.log(2)) < 1e-12

    def test_true_negative_treated_as_negative(self):
        value_tn = losses.assume_negative_loss(np.zeros(2), np.array([OP, TN], dtype=np.int8)).value
        value_unk = losses.assume_negative_loss(np.zeros(2), np.array([OP, UNK], dtype=np.int8)).value
        assert value_tn == value_unk


class TestEmLoss:
    def test_all_unknown_hand_value(self):
        states = np.full(5, UNK, dtype=np.int8)
        result = losses.em_loss(np.zeros(5), states, alpha=1.0)
        assert abs(result.value - (-math.log(2))) < 1e-12

    def test_alpha_zero_drops_unknowns(self):
        states = np.array([OP, UNK, UNK], dtype=np.int8)
        result = losses.em_loss(np.array([40.0, 1.0, -2.0]), states, alpha=0.0)
        assert abs(result.value) < 1e-7

    def test_unknown_gradient_zero_at_half(self):
        states = np.array([OP, UNK], dtype=np.int8)
        result = losses.em_loss(np.array([1.0, 0.0]), states, alpha=0.7)
        assert result.grad_scores[1] == 0.0

    def test_unexpected_states(self):
        for bad in (TN, PP, PN):
            with pytest.raises(UnexpectedState):
                losses.em_loss(np.zeros(2), np.array([OP, bad], dtype=np.int8), alpha=1.0)


class TestVlplLoss:
    def test_reduces_to_em_without_pseudo(self, rng):
        states = np.array([OP, UNK, UNK, UNK], dtype=np.int8)
        z = rng.normal(size=4)
        cfg = LossConfig(variant=LossVariant.VLPL_POSITIVE_ONLY, alpha=0.3, beta=7.0, gamma=2.0)
        a = losses.vlpl_loss(z, states, cfg)
        b = losses.em_loss(z, states, alpha=0.3)
        assert a.value == b.value
        np.testing.assert_array_equal(a.grad_scores, b.grad_scores)

    def test_hand_value(self):
        z = math.log(9.0)  # sigmoid -> 0.9
        states = np.array([OP, PP], dtype=np.int8)
        cfg = LossConfig(variant=LossVariant.VLPL_POSITIVE_ONLY, beta=1.0, rho=0.9)
        result = losses.vlpl_loss(np.array([z, z]), states, cfg)
        smoothed = -(0.9 * math.log(0.9) + 0.1 * math.log(0.1))
        expected = (-math.log(0.9) + smoothed) / 2.0
        assert abs(result.value - expected) < 1e-12

    def test_coefficient_degeneracy(self, rng):
        states = np.array([OP, UNK, UNK], dtype=np.int8)
        z = rng.normal(size=3)
        cfg = LossConfig(variant=LossVariant.VLPL_FULL, alpha=0.4, beta=0.0, gamma=0.0)
        assert losses.vlpl_loss(z, states, cfg).value == losses.em_loss(z, states, alpha=0.4).value

    def test_smoothing_disabled_is_rho_one(self, rng):
        states = np.array([OP, PP, UNK, PN], dtype=np.int8)
        z = rng.normal(size=4)
        off = LossConfig(variant=LossVariant.VLPL_FULL, rho=0.9, smoothing_enabled=False)
        one = LossConfig(variant=LossVariant.VLPL_FULL, rho=1.0, smoothing_enabled=True)
        a = losses.vlpl_loss(z, states, off)
        b = losses.vlpl_loss(z, states, one)
        assert a.value == b.value
        np.testing.assert_array_equal(a.grad_scores, b.grad_scores)

    def test_positive_only_ignores_pseudo_negatives(self, rng):
        z = rng.normal(size=3)
        with_pn = np.array([OP, UNK, PN], dtype=np.int8)
        without = np.array([OP, UNK, UNK], dtype=np.int8)
        cfg = LossConfig(variant=LossVariant.VLPL_POSITIVE_ONLY, alpha=0.0, gamma=5.0)
        assert losses.vlpl_loss(z, with_pn, cfg).value == losses.vlpl_loss(z, without, cfg).value
        assert losses.vlpl_loss(z, with_pn, cfg).grad_scores[2] == 0.0

    def test_monotone_on_observed_positive(self, rng):
        for _ in range(50):
            z = rng.uniform(-4, 4, size=5)
            states = random_states(rng, LossVariant.VLPL_FULL, 5)
            cfg = LossConfig(variant=LossVariant.VLPL_FULL)
            grad = losses.vlpl_loss(z, states, cfg).grad_scores
            assert (grad[states == OP] < 0).all()

    def test_true_negative_rejected(self):
        cfg = LossConfig(variant=LossVariant.VLPL_FULL)
        with pytest.raises(UnexpectedState):
            losses.vlpl_loss(np.zeros(2), np.array([OP, TN], dtype=np.int8), cfg)

    def test_requires_vlpl_variant(self):
        with pytest.raises(ConfigError):
            losses.vlpl_loss(np.zeros(1), np.array([OP], dtype=np.int8), LossConfig(variant=LossVariant.ENTROPY_MAX))

    def test_finite_for_extreme_scores(self):
        states = np.array([OP, UNK, PP, PN], dtype=np.int8)
        cfg = LossConfig(variant=LossVariant.VLPL_FULL)
        for z in (np.full(4, 500.0), np.full(4, -500.0)):
            result = losses.vlpl_loss(z, states, cfg)
            assert np.isfinite(result.value)
            assert np.isfinite(result.grad_scores).all()


class TestGradients:
    @pytest.mark.parametrize("variant", list(LossVariant))
    def test_matches_finite_differences(self, variant, rng):
        cfg = LossConfig(
            variant=variant if variant.value.startswith("vlpl") else LossVariant.VLPL_FULL,
            alpha=0.37,
            beta=1.3,
            gamma=0.8,
            rho=0.9,
        )
        for _ in range(100):
            length = int(rng.integers(2, 9))
            states = random_states(rng, variant, length)
            z = rng.uniform(-4.0, 4.0, size=length)
            if variant == LossVariant.ASSUME_NEGATIVE:
                result = losses.assume_negative_loss(z, states)
            elif variant == LossVariant.ENTROPY_MAX:
                result = losses.em_loss(z, states, alpha=0.37)
            else:
                result = losses.vlpl_loss(z, states, LossConfig(
                    variant=variant, alpha=0.37, beta=1.3, gamma=0.8, rho=0.9))
            numeric = fd_grad(loss_fn(variant, states, cfg), z)
            assert rel_err(result.grad_scores, numeric).max() < 1e-4


class TestBatchLoss:
    def test_batch_is_mean_of_samples(self, rng):
        B, L = 6, 5
        scores = rng.uniform(-3, 3, size=(B, L))
        states = np.stack([random_states(rng, LossVariant.VLPL_FULL, L) for _ in range(B)])
        cfg = LossConfig(variant=LossVariant.VLPL_FULL)
        value, grad = losses.batch_loss(scores, states, cfg)
        singles = [losses.vlpl_loss(scores[i], states[i], cfg) for i in range(B)]
        assert abs(value - np.mean([s.value for s in singles])) < 1e-12
        np.testing.assert_allclose(grad, np.stack([s.grad_scores for s in singles]) / B, atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            losses.batch_loss(np.zeros((2, 3)), np.zeros((2, 4), dtype=np.int8), LossConfig())

    def test_non_finite_scores(self):
        with pytest.raises(NonFiniteScore):
            losses.batch_loss(np.array([[np.inf]]), np.array([[OP]], dtype=np.int8), LossConfig())


class TestLossConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            LossConfig(alpha=-0.1)
        with pytest.raises(ConfigError):
            LossConfig(rho=0.0)
        with pytest.raises(ConfigError):
            LossConfig(rho=1.2)

    def test_variant_coercion(self):
        cfg = LossConfig(variant="entropy_max")
        assert cfg.variant is LossVariant.ENTROPY_MAX

    def test_effective_rho(self):
        assert LossConfig(rho=0.9, smoothing_enabled=False).effective_rho == 1.0
        assert LossConfig(rho=0.9, smoothing_enabled=True).effective_rho == 0.9
