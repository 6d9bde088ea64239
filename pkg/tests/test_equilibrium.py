import numpy as np
import pytest

from econrl.config import ConfigError
from econrl.curriculum import terminal_state
from econrl.equilibrium import (
    best_response,
    default_sweep_rates,
    evaluate,
    fixed_tax_sweep,
)
from econrl.trainer import eval_rng, load_checkpoint, run_episode, train
from configs import tiny_run_config


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    out = tmp_path_factory.mktemp("eqrun")
    cfg = tiny_run_config(training=dict(num_updates=5, checkpoint_interval=5))
    train(cfg, seed=17, out_dir=str(out))
    return str(out / "checkpoints" / "final.npz")


class TestEvaluate:
    def test_same_seed_is_identical(self, checkpoint):
        rs = load_checkpoint(checkpoint)
        a = evaluate(rs.config, rs.nets, seed=3, episodes=4)
        b = evaluate(rs.config, rs.nets, seed=3, episodes=4)
        for key in a:
            assert np.array_equal(a[key], b[key])

    def test_different_seeds_differ(self, checkpoint):
        rs = load_checkpoint(checkpoint)
        a = evaluate(rs.config, rs.nets, seed=3, episodes=4)
        b = evaluate(rs.config, rs.nets, seed=4, episodes=4)
        assert not np.array_equal(a["reward_consumer"], b["reward_consumer"])

    def test_fixed_zero_taxes_collect_no_revenue(self, checkpoint):
        rs = load_checkpoint(checkpoint)
        cur = terminal_state(rs.config.curriculum, rs.config.economy)
        trace = run_episode(
            rs.config, rs.nets, cur.masks, cur.theta,
            rng=eval_rng(0, 0), fixed_government=(0.0, 0.0), record_trace=True,
        ).trace
        assert all(x == 0.0 for x in trace["tax_revenue"])
        assert all(x == 0.0 for x in trace["tax_income"])
        assert all(x == 0.0 for x in trace["tax_corporate"])


class TestBestResponse:
    def test_zero_updates_zero_epsilon(self, checkpoint):
        report = best_response(checkpoint, "consumer", br_updates=0, seed=5, eval_episodes=4)
        assert report.improvement == 0.0
        assert report.reward_before == report.reward_after
        assert not report.flagged_worse

    def test_opponents_frozen_and_report_complete(self, checkpoint):
        report = best_response(checkpoint, "firm", br_updates=2, seed=5, eval_episodes=4)
        assert report.agent_type == "firm"
        assert report.br_updates == 2
        assert np.isfinite(report.reward_before) and np.isfinite(report.reward_after)
        assert report.training_gain is not None

    def test_unknown_type_rejected(self, checkpoint):
        with pytest.raises(ConfigError):
            best_response(checkpoint, "banker", br_updates=1, seed=0)


class TestFixedTaxSweep:
    def test_default_rates_cover_20_to_80_squared(self, checkpoint):
        rs = load_checkpoint(checkpoint)
        rates = default_sweep_rates(rs.config)
        assert len(rates) == 16
        values = sorted({r for pair in rates for r in pair})
        assert values == [0.2, 0.4, 0.6, 0.8]

    def test_one_row_per_rate_pair(self, checkpoint):
        report = fixed_tax_sweep(
            checkpoint, rates=[(0.2, 0.2), (0.4, 0.6), (0.8, 0.8)],
            seed=2, eval_episodes=3,
        )
        assert len(report["rows"]) == 3
        welfares = [row["welfare"] for row in report["rows"]]
        assert report["best_fixed"]["welfare"] == max(welfares)
        assert np.isfinite(report["rl_policy_welfare"])

    def test_off_grid_rates_rejected(self, checkpoint):
        with pytest.raises(ConfigError, match="off the tax grid"):
            fixed_tax_sweep(checkpoint, rates=[(0.25, 0.2)])

    def test_retraining_against_fixed_rates(self, checkpoint):
        report = fixed_tax_sweep(
            checkpoint, rates=[(0.2, 0.2)], seed=2, eval_episodes=2,
            retrain_updates=1,
        )
        assert report["retrain_updates"] == 1
        assert len(report["rows"]) == 1
