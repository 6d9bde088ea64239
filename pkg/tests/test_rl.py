import numpy as np
import pytest

from econrl.nets import init_params, map_params, zeros_like_params
from econrl.rl import (
    adam_step,
    clip_gradients,
    copy_optimizer,
    discounted_returns,
    entropy_term,
    gradient_norm,
    huber_value_loss,
    init_optimizer,
    ppo_surrogate,
    reinforce_loss,
    standardized_advantages,
)
from bandit import run_bandit


class TestDiscountedReturns:
    def test_undiscounted_reward_to_go(self):
        g = discounted_returns(np.array([1.0, 1.0, 1.0]), 1.0)
        assert g.tolist() == [3.0, 2.0, 1.0]

    def test_gamma_zero_is_identity(self):
        r = np.array([0.3, -1.0, 2.0])
        assert discounted_returns(r, 0.0).tolist() == r.tolist()

    def test_half_discount(self):
        g = discounted_returns(np.array([0.0, 0.0, 5.0]), 0.5)
        assert g.tolist() == [1.25, 2.5, 5.0]

    def test_recurrence_exact(self):
        rng = np.random.default_rng(0)
        r = rng.normal(size=(30, 4))
        gamma = 0.97
        g = discounted_returns(r, gamma)
        for t in range(29):
            assert np.array_equal(g[t], r[t] + gamma * g[t + 1])
        assert np.array_equal(g[29], r[29])


class TestAdvantages:
    def test_perfect_values_give_zero(self):
        g = np.array([1.0, 2.0, 3.0])
        assert np.allclose(standardized_advantages(g, g), 0.0)

    def test_two_point_standardization(self):
        adv = standardized_advantages(np.array([1.0, 3.0]), np.zeros(2))
        assert np.allclose(adv, [-1.0, 1.0], atol=1e-7)

    def test_constant_advantage_guarded(self):
        adv = standardized_advantages(np.full(5, 2.0), np.zeros(5))
        assert np.allclose(adv, 0.0)

    def test_batch_statistics(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            g = rng.normal(size=200) * rng.uniform(0.1, 50.0)
            v = rng.normal(size=200)
            adv = standardized_advantages(g, v)
            assert abs(adv.mean()) < 1e-6
            assert abs(adv.std() - 1.0) < 1e-3


class TestHuber:
    def test_zero_at_target(self):
        loss, dv = huber_value_loss(np.array([2.0]), np.array([2.0]))
        assert loss == 0.0 and dv[0] == 0.0

    def test_quadratic_branch(self):
        loss, _ = huber_value_loss(np.array([0.5]), np.array([0.0]))
        assert loss == pytest.approx(0.125)

    def test_linear_branch(self):
        loss, dv = huber_value_loss(np.array([3.0]), np.array([0.0]))
        assert loss == pytest.approx(2.5)
        assert dv[0] == pytest.approx(1.0)  # slope capped at delta


class TestPpoSurrogate:
    def test_ratio_one_reduces_to_mean_advantage(self):
        logp = np.array([-0.5, -1.0])
        adv = np.array([2.0, -1.0])
        loss, dlogp = ppo_surrogate(logp, logp.copy(), adv, 0.2)
        assert loss == pytest.approx(-adv.mean())
        assert np.allclose(dlogp, -adv / 2.0)

    def test_positive_advantage_clipped_above(self):
        logp_old = np.array([0.0])
        logp_new = np.array([np.log(2.0)])
        loss, dlogp = ppo_surrogate(logp_new, logp_old, np.array([1.0]), 0.2)
        assert loss == pytest.approx(-1.2)  # min(2, 1.2) * 1
        assert dlogp[0] == 0.0  # clipped branch active, no gradient

    def test_negative_advantage_pessimistic_bound(self):
        logp_old = np.array([0.0])
        logp_new = np.array([np.log(0.5)])
        loss, _ = ppo_surrogate(logp_new, logp_old, np.array([-1.0]), 0.2)
        assert loss == pytest.approx(0.8)  # min(-0.5, -0.8) = -0.8

    def test_min_structure_pointwise(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            n = 50
            logp_old = rng.normal(size=n)
            logp_new = logp_old + rng.normal(scale=0.5, size=n)
            adv = rng.normal(size=n)
            ratio = np.exp(logp_new - logp_old)
            unclipped = ratio * adv
            clipped = np.clip(ratio, 0.8, 1.2) * adv
            loss, _ = ppo_surrogate(logp_new, logp_old, adv, 0.2)
            assert loss == pytest.approx(-np.minimum(unclipped, clipped).mean(), rel=1e-12)


class TestReinforce:
    def test_zero_advantage_is_pure_entropy_objective(self):
        logp = np.array([-1.0, -2.0])
        ent = np.array([0.5, 0.7])
        loss, dlogp, dent = reinforce_loss(logp, np.zeros(2), ent, alpha=0.3)
        assert loss == pytest.approx(-0.3 * ent.mean())
        assert np.allclose(dlogp, 0.0)
        assert np.allclose(dent, -0.15)

    def test_gradient_increases_chosen_probability(self):
        # positive advantage pushes log-prob up: d loss / d logp < 0
        _, dlogp, _ = reinforce_loss(np.array([-0.7]), np.array([1.0]), np.zeros(1), 0.0)
        assert dlogp[0] < 0.0

    def test_matches_ppo_gradient_at_ratio_one(self):
        logp = np.array([-0.3, -1.5, -0.2])
        adv = np.array([1.0, -2.0, 0.5])
        _, dlogp_pg, _ = reinforce_loss(logp, adv, np.zeros(3), 0.0)
        _, dlogp_ppo = ppo_surrogate(logp, logp.copy(), adv, 0.2)
        assert np.allclose(dlogp_pg, dlogp_ppo, rtol=1e-12)

    def test_entropy_term_seeds(self):
        ent = np.array([0.1, 0.9])
        loss, dent = entropy_term(ent, 0.5)
        assert loss == pytest.approx(-0.25)
        assert np.allclose(dent, -0.25)


def net_and_grads(scale, seed=0):
    params = init_params(np.random.default_rng(seed), 4, (3,), hidden=8, dtype=np.float64)
    grads = map_params(lambda a: np.full_like(a, scale), params)
    return params, grads


class TestClipGradients:
    def test_below_threshold_unchanged(self):
        _, grads = net_and_grads(1e-4)
        norm = gradient_norm(grads)
        clipped, reported = clip_gradients(grads, max_norm=2.0)
        assert reported == norm
        assert clipped is grads

    def test_scales_to_max_norm(self):
        _, grads = net_and_grads(0.5)
        norm = gradient_norm(grads)
        assert norm > 2.0
        clipped, _ = clip_gradients(grads, max_norm=2.0)
        assert gradient_norm(clipped) == pytest.approx(2.0, rel=1e-12)
        # direction preserved
        assert np.allclose(clipped.w1 / grads.w1, 2.0 / norm)

    def test_zero_gradients_unchanged(self):
        params, _ = net_and_grads(0.0)
        zeros = zeros_like_params(params)
        clipped, norm = clip_gradients(zeros, 2.0)
        assert norm == 0.0 and clipped is zeros

    def test_idempotent(self):
        _, grads = net_and_grads(0.7, seed=3)
        once, _ = clip_gradients(grads, 2.0)
        twice, _ = clip_gradients(once, 2.0)
        for (_, a), (_, b) in zip(once.flat(), twice.flat()):
            assert np.allclose(a, b, rtol=1e-12, atol=0.0)


class TestAdam:
    def test_zero_gradient_fresh_state_no_change(self):
        params, _ = net_and_grads(0.0)
        opt = init_optimizer(params, lr=0.01)
        updated = adam_step(params, zeros_like_params(params), opt)
        for (_, a), (_, b) in zip(params.flat(), updated.flat()):
            assert np.array_equal(a, b)

    def test_first_step_is_lr_times_sign(self):
        params, grads = net_and_grads(0.3)
        opt = init_optimizer(params, lr=0.01)
        updated = adam_step(params, grads, opt)
        step = params.w1 - updated.w1
        assert np.allclose(step, 0.01 * np.sign(grads.w1), rtol=1e-6)

    def test_constant_gradient_converges_to_sign_steps(self):
        params, grads = net_and_grads(0.123)
        opt = init_optimizer(params, lr=0.01)
        current = params
        for _ in range(200):
            prev = current
            current = adam_step(current, grads, opt)
        step = prev.w1 - current.w1
        assert np.allclose(step, 0.01 * np.sign(grads.w1), rtol=1e-4)

    def test_copy_optimizer_is_independent(self):
        params, grads = net_and_grads(0.5)
        opt = init_optimizer(params, lr=0.01)
        adam_step(params, grads, opt)
        clone = copy_optimizer(opt)
        adam_step(params, grads, opt)
        assert clone.step == 1 and opt.step == 2
        assert not np.array_equal(clone.m.w1, opt.m.w1)


class TestBanditConvergence:
    @pytest.mark.parametrize("algo", ["reinforce", "ppo"])
    def test_three_seeds_reach_99_percent(self, algo):
        for seed in (1, 2, 3):
            p_best, used = run_bandit(algo, seed, max_updates=2000)
            assert p_best > 0.99, f"{algo} seed {seed} stuck at {p_best:.3f}"
            assert used <= 2000
