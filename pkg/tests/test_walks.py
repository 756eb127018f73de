"""Tests for adjacency construction and the two walk losses."""

import numpy as np
import pytest

from slotwalks import autodiff as ad
from slotwalks import walks
from slotwalks.errors import ConfigError, DegenerateInputError
from slotwalks.gradcheck import full_model_errors
from slotwalks.walks import WalkConfig, WalkProjection, adjacency, pwp_loss, pwp_target, total_loss, wpw_loss


def adjacency_oracle(a, b, tau):
    """Explicit normalize -> dot -> softmax evaluation."""
    an = a / np.linalg.norm(a, axis=1, keepdims=True)
    bn = b / np.linalg.norm(b, axis=1, keepdims=True)
    logits = an @ bn.T / tau
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def pwp_target_oracle(x, gamma):
    """Mask-then-softmax with explicit loops."""
    xn = x / np.linalg.norm(x, axis=1, keepdims=True)
    f = xn @ xn.T
    n = f.shape[0]
    out = np.zeros_like(f)
    for i in range(n):
        survivors = [j for j in range(n) if f[i, j] > gamma]
        logits = np.array([f[i, j] for j in survivors])
        e = np.exp(logits - logits.max())
        p = e / e.sum()
        for j, pj in zip(survivors, p):
            out[i, j] = pj
    return out


class TestWalkConfig:
    def test_defaults_valid(self):
        cfg = WalkConfig()
        assert cfg.tau == 0.1 and cfg.gamma == 0.7

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"tau": 0.0},
            {"tau": -0.5},
            {"alpha": -1.0},
            {"alpha": 0.0, "beta": 0.0},
            {"gamma": 1.0},
            {"gamma": 1.5},
            {"gamma": -2.0},
            {"dim": 0},
        ],
    )
    def test_invalid_rejected(self, kwargs):
        with pytest.raises(ConfigError):
            WalkConfig(**kwargs)

    def test_no_threshold_sentinel_allowed(self):
        assert WalkConfig(gamma=float("-inf")).gamma == float("-inf")


class TestAdjacency:
    def test_single_matching_vector(self):
        v = np.array([[0.6, 0.8]])
        assert adjacency(v, v, 0.1).value[0, 0] == 1.0

    def test_matching_vs_orthogonal_mass(self):
        a = np.array([[1.0, 0.0, 0.0]])
        b = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        out = adjacency(a, b, 0.05).value
        closed_form = np.exp(20.0) / (np.exp(20.0) + 1.0)
        assert out[0, 0] >= 1.0 - 2.1e-9
        assert abs(out[0, 0] - closed_form) <= 1e-12

    def test_matches_oracle(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=(3, 5)), rng.normal(size=(4, 5))
        assert np.allclose(adjacency(a, b, 0.3).value, adjacency_oracle(a, b, 0.3), atol=1e-12)

    def test_zero_row_rejected(self):
        a = np.array([[0.0, 0.0], [1.0, 0.0]])
        with pytest.raises(DegenerateInputError):
            adjacency(a, np.ones((2, 2)), 0.1)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        for _ in range(25):
            a = rng.normal(size=(rng.integers(1, 6), 4))
            b = rng.normal(size=(rng.integers(1, 6), 4))
            sums = adjacency(a, b, 0.2).value.sum(axis=1)
            assert np.max(np.abs(sums - 1.0)) <= 1e-12

    def test_row_scale_invariance(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(5, 4))
        scales_a = rng.uniform(0.1, 10.0, size=(3, 1))
        scales_b = rng.uniform(0.1, 10.0, size=(5, 1))
        base = adjacency(a, b, 0.1).value
        scaled = adjacency(a * scales_a, b * scales_b, 0.1).value
        assert np.max(np.abs(base - scaled)) <= 1e-12


class TestWpwLoss:
    def test_single_slot_exact_zero(self):
        rng = np.random.default_rng(3)
        for i in range(10):
            x = rng.normal(size=(6, 4))
            s = rng.normal(size=(1, 4))
            assert wpw_loss(s, x, 0.1).value[0, 0] == 0.0

    def test_orthogonal_clusters_near_zero(self):
        rng = np.random.default_rng(4)
        slots = np.eye(2, 6)
        noise = rng.normal(scale=0.01, size=(10, 6))
        x = np.vstack([np.tile(slots[0], (5, 1)), np.tile(slots[1], (5, 1))]) + noise
        loss = wpw_loss(slots, x, 0.05).value[0, 0]
        assert loss <= 1e-3
        # direct evaluation of the two-hop product
        m = adjacency_oracle(slots, x, 0.05) @ adjacency_oracle(x, slots, 0.05)
        expect = -np.log(np.clip(np.diag(m), 1e-12, 1.0)).mean()
        assert abs(loss - expect) <= 1e-9

    def test_matches_diagonal_log_oracle(self):
        rng = np.random.default_rng(5)
        s, x = rng.normal(size=(3, 4)), rng.normal(size=(9, 4))
        loss = wpw_loss(s, x, 0.1).value[0, 0]
        m = adjacency_oracle(s, x, 0.1) @ adjacency_oracle(x, s, 0.1)
        expect = -np.log(np.maximum(np.diag(m), 1e-12)).sum() / 3
        assert abs(loss - expect) <= 1e-9

    def test_non_negative(self):
        rng = np.random.default_rng(6)
        for _ in range(25):
            s = rng.normal(size=(rng.integers(1, 5), 4))
            x = rng.normal(size=(rng.integers(5, 12), 4))
            assert wpw_loss(s, x, 0.2).value[0, 0] >= 0.0

    def test_round_trip_rows_stochastic(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            s = rng.normal(size=(3, 5))
            x = rng.normal(size=(8, 5))
            m = ad.matmul(adjacency(s, x, 0.1), adjacency(x, s, 0.1)).value
            assert np.max(np.abs(m.sum(axis=1) - 1.0)) <= 1e-9


class TestPwpTarget:
    def test_orthogonal_rows_identity(self):
        x = np.eye(4, 5) * 3.0
        assert np.array_equal(pwp_target(x, 0.7), np.eye(4))

    def test_identical_rows_half(self):
        x = np.tile(np.array([[1.0, 2.0, -1.0]]), (2, 1))
        assert np.allclose(pwp_target(x, 0.7), 0.5, atol=1e-15)

    def test_matches_mask_then_softmax_oracle(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(6, 4))
        for gamma in (0.3, 0.0, -0.5, float("-inf")):
            assert np.allclose(pwp_target(x, gamma), pwp_target_oracle(x, gamma), atol=1e-12)

    def test_gamma_at_or_above_one_rejected(self):
        with pytest.raises(ConfigError):
            pwp_target(np.eye(3), 1.0)

    def test_rows_stochastic_and_diagonal_survives(self):
        rng = np.random.default_rng(9)
        for _ in range(25):
            x = rng.normal(size=(7, 5))
            s = pwp_target(x, 0.7)
            assert np.max(np.abs(s.sum(axis=1) - 1.0)) <= 1e-12
            assert np.all(np.diag(s) > 0.0)


class TestPwpLoss:
    def test_slots_equal_features_near_zero(self):
        x = np.eye(4, 4)
        loss = pwp_loss(x, x, 0.05, 0.7).value[0, 0]
        assert loss <= 1e-2

    def test_matches_product_then_ce_oracle(self):
        rng = np.random.default_rng(10)
        x, s = rng.normal(size=(7, 4)), rng.normal(size=(3, 4))
        loss = pwp_loss(x, s, 0.1, 0.3).value[0, 0]
        m = adjacency_oracle(x, s, 0.1) @ adjacency_oracle(s, x, 0.1)
        target = pwp_target_oracle(x, 0.3)
        expect = -(target * np.log(np.clip(m, 1e-12, 1.0))).sum() / 7
        assert abs(loss - expect) <= 1e-9

    def test_frozen_target_is_used(self):
        rng = np.random.default_rng(11)
        x, s = rng.normal(size=(5, 4)), rng.normal(size=(2, 4))
        frozen = np.full((5, 5), 0.2)
        loss = pwp_loss(x, s, 0.1, 0.7, target=frozen).value[0, 0]
        m = adjacency_oracle(x, s, 0.1) @ adjacency_oracle(s, x, 0.1)
        expect = -(frozen * np.log(np.clip(m, 1e-12, 1.0))).sum() / 5
        assert abs(loss - expect) <= 1e-9


class TestTotalLoss:
    def setup_method(self):
        rng = np.random.default_rng(12)
        self.x = rng.normal(size=(8, 6))
        self.s_hat = rng.normal(size=(3, 5))
        self.proj = WalkProjection.create(input_dim=6, slot_dim=5, dim=4, seed=13)

    def _projected(self):
        feats_p = ad.matmul(self.x, self.proj.p_x)
        slots_p = ad.matmul(self.s_hat, self.proj.p_s)
        return feats_p, slots_p

    def test_alpha_only_equals_wpw(self):
        cfg = WalkConfig(alpha=1.0, beta=0.0, tau=0.1, gamma=0.7, dim=4)
        feats_p, slots_p = self._projected()
        expect = wpw_loss(slots_p, feats_p, 0.1).value[0, 0]
        assert total_loss(self.x, self.s_hat, self.proj, cfg).value[0, 0] == expect

    def test_beta_only_equals_pwp(self):
        cfg = WalkConfig(alpha=0.0, beta=1.0, tau=0.1, gamma=0.7, dim=4)
        feats_p, slots_p = self._projected()
        expect = pwp_loss(feats_p, slots_p, 0.1, 0.7).value[0, 0]
        assert total_loss(self.x, self.s_hat, self.proj, cfg).value[0, 0] == expect

    def test_both_terms_sum(self):
        cfg = WalkConfig(alpha=1.0, beta=1.0, tau=0.1, gamma=0.7, dim=4)
        feats_p, slots_p = self._projected()
        wpw = wpw_loss(slots_p, feats_p, 0.1).value[0, 0]
        pwp = pwp_loss(feats_p, slots_p, 0.1, 0.7).value[0, 0]
        total = total_loss(self.x, self.s_hat, self.proj, cfg).value[0, 0]
        assert abs(total - (wpw + pwp)) <= 1e-12

    def test_beta_zero_never_evaluates_pwp(self, monkeypatch):
        def boom(*args, **kwargs):
            raise AssertionError("pwp path evaluated despite beta == 0")

        monkeypatch.setattr(walks, "pwp_loss", boom)
        cfg = WalkConfig(alpha=1.0, beta=0.0, tau=0.1, gamma=0.7, dim=4)
        total_loss(self.x, self.s_hat, self.proj, cfg)

    def test_coefficients_scale_terms(self):
        cfg = WalkConfig(alpha=2.0, beta=0.5, tau=0.1, gamma=0.7, dim=4)
        feats_p, slots_p = self._projected()
        wpw = wpw_loss(slots_p, feats_p, 0.1).value[0, 0]
        pwp = pwp_loss(feats_p, slots_p, 0.1, 0.7).value[0, 0]
        total = total_loss(self.x, self.s_hat, self.proj, cfg).value[0, 0]
        assert abs(total - (2.0 * wpw + 0.5 * pwp)) <= 1e-12


class TestWalkGradients:
    def test_full_loss_passes_finite_differences_small(self):
        errors = full_model_errors(8, 2, 5, iterations=1, seed=3)
        assert max(errors.values()) <= 1e-3, errors
