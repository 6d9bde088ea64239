"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. The smoke-scale training arms (10 consumers, 2 firms, T=20, open
economy, 3 seeds per arm) are shared between the curriculum and equilibrium
criteria through a module-scoped fixture.
"""

import time

import numpy as np
import pytest

from econrl.config import EconomyConfig
from econrl.curriculum import action_masks, entropy_coeff, theta_schedule, training_gates
from econrl.economy import step
from econrl.equilibrium import best_response, evaluate, fixed_tax_sweep
from econrl.trainer import collect_rollouts, load_checkpoint, new_run_state, train
from econrl.curriculum import at_step
from bandit import run_bandit
from configs import smoke_run_config
from grad_harness import (
    analytic_grads,
    finite_difference_grads,
    make_instance,
    max_relative_error,
)
from ledger_oracle import oracle_step, random_actions, random_state, state_to_dict

SMOKE_SEEDS = (101, 202, 303)
BR_UPDATES = 64  # 20% of the 320 main-training updates
EVAL_EPISODES = 16


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {criterion} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


@pytest.fixture(scope="module")
def smoke_arms(tmp_path_factory):
    """Three curriculum and three no-curriculum smoke runs, checkpointed at 25%."""
    root = tmp_path_factory.mktemp("smoke")
    t0 = time.time()
    arms = {"curriculum": {}, "no_curriculum": {}}
    for seed in SMOKE_SEEDS:
        out = root / f"curr_{seed}"
        train(smoke_run_config(), seed=seed, out_dir=str(out))
        arms["curriculum"][seed] = out
    for seed in SMOKE_SEEDS:
        out = root / f"flat_{seed}"
        cfg = smoke_run_config(curriculum=dict(enabled=False))
        train(cfg, seed=seed, out_dir=str(out))
        arms["no_curriculum"][seed] = out
    arms["runtime"] = time.time() - t0
    return arms


def final_metrics_row(out_dir) -> dict:
    lines = (out_dir / "metrics.csv").read_text().splitlines()
    header = lines[0].split(",")
    return {k: float(v) for k, v in zip(header, lines[-1].split(","))}


class TestCriterion1DynamicsOracle:
    def test_step_matches_scalar_ledger_oracle(self):
        cfg = EconomyConfig(num_consumers=3, num_firms=2, episode_length=8)
        rng = np.random.default_rng(20260808)
        t0 = time.time()
        worst = 0.0
        for _ in range(1000):
            state = random_state(cfg, rng)
            consumers, firms, gov = random_actions(cfg, rng)
            expected = oracle_step(cfg, state_to_dict(state), consumers, firms, gov)
            nxt, out = step(cfg, state, consumers, firms, gov)
            for got, want in (
                (nxt.consumer_budget, expected["consumer_budget"]),
                (nxt.firm_budget, expected["firm_budget"]),
                (nxt.inventory, expected["inventory"]),
                (out.profit, expected["profit"]),
                (np.array([out.tax_revenue]), [expected["tax_revenue"]]),
            ):
                want = np.asarray(want)
                err = np.abs(got - want) / np.maximum(np.abs(want), 1.0)
                worst = max(worst, float(err.max()))
        elapsed = time.time() - t0
        ok = worst < 1e-9 and elapsed < 10.0
        report(
            1, ok,
            f"1000 random (state, action) instances vs scalar ledger oracle: "
            f"worst relative error {worst:.2e} (tol 1e-9), {elapsed:.1f}s (< 10s)",
        )


class TestCriterion2MoneyConservation:
    def test_conservation_over_random_episodes(self):
        rng = np.random.default_rng(7)
        worst = 0.0
        for episode in range(100):
            cfg = EconomyConfig(
                num_consumers=3,
                num_firms=2,
                episode_length=20,
                export_enabled=bool(episode % 2),
            )
            state = random_state(cfg, rng)
            for _ in range(cfg.episode_length):
                consumers, firms, gov = random_actions(cfg, rng)
                nxt, out = step(cfg, state, consumers, firms, gov)
                delta = (
                    nxt.consumer_budget.sum() + nxt.firm_budget.sum()
                    - state.consumer_budget.sum() - state.firm_budget.sum()
                )
                expected = out.export_revenue.sum() - (nxt.capital - state.capital).sum()
                scale = max(
                    1.0, abs(state.consumer_budget).sum() + abs(state.firm_budget).sum()
                )
                worst = max(worst, abs(delta - expected) / scale)
                state = nxt
        ok = worst < 1e-9
        report(
            2, ok,
            f"money conservation over 100 random episodes (open and closed): "
            f"worst per-step violation {worst:.2e} (tol 1e-9)",
        )


class TestCriterion3GradientCorrectness:
    def test_composed_loss_gradients_match_finite_differences(self):
        worst = 0.0
        for seed in range(50):
            inst = make_instance(seed)
            analytic = analytic_grads(inst["params"], inst)
            fd = finite_difference_grads(inst["params"], inst, h=1e-5)
            worst = max(worst, max_relative_error(analytic, fd))
        ok = worst < 1e-4
        report(
            3, ok,
            f"PPO + Huber + entropy gradients vs central differences on 50 "
            f"width-8 float64 nets: worst relative error {worst:.2e} (tol 1e-4)",
        )


class TestCriterion4BanditConvergence:
    def test_reinforce_and_ppo_solve_the_bandit(self):
        t0 = time.time()
        results = {}
        for algo in ("reinforce", "ppo"):
            for seed in (1, 2, 3):
                p_best, used = run_bandit(algo, seed, max_updates=2000)
                results[(algo, seed)] = (p_best, used)
        elapsed = time.time() - t0
        ok = all(p > 0.99 for p, _ in results.values()) and elapsed < 5.0
        worst_p = min(p for p, _ in results.values())
        most_updates = max(u for _, u in results.values())
        report(
            4, ok,
            f"2-armed bandit: REINFORCE and PPO reach P(best) > 0.99 on 3/3 seeds "
            f"(worst {worst_p:.4f}, slowest {most_updates} updates, {elapsed:.1f}s < 5s)",
        )


class TestCriterion5CurriculumNecessity:
    def test_curriculum_runs_sustain_activity(self, smoke_arms):
        results = {}
        for seed in SMOKE_SEEDS:
            row = final_metrics_row(smoke_arms["curriculum"][seed])
            results[seed] = (row["consumption_mean"], row["hours_mean"])
        healthy = sum(c > 0.0 and h > 0.0 for c, h in results.values())
        for seed in SMOKE_SEEDS:  # reported, not gated
            row = final_metrics_row(smoke_arms["no_curriculum"][seed])
            print(
                f"\n  no-curriculum arm seed {seed}: consumption "
                f"{row['consumption_mean']:.3f}, hours {row['hours_mean']:.1f} (report only)"
            )
        minutes = smoke_arms["runtime"] / 60.0
        ok = healthy >= 2 and minutes < 30.0
        detail = ", ".join(
            f"seed {s}: cons {c:.2f} hours {h:.0f}" for s, (c, h) in results.items()
        )
        report(
            5, ok,
            f"curriculum smoke arm keeps consumption and hours positive in "
            f"{healthy}/3 seeds ({detail}); both arms trained in {minutes:.1f} min (< 30)",
        )


def br_fraction_table(smoke_arms):
    """Fractional BR improvement per (type, seed, checkpoint), eval-based gains."""
    table = {"25": {}, "final": {}}
    gains = {}
    for seed in SMOKE_SEEDS:
        ckpts = smoke_arms["curriculum"][seed] / "checkpoints"
        rs0 = load_checkpoint(str(ckpts / "checkpoint_000000.npz"))
        rs_final = load_checkpoint(str(ckpts / "final.npz"))
        e0 = evaluate(rs0.config, rs0.nets, seed=900 + seed, episodes=EVAL_EPISODES)
        e_final = evaluate(rs_final.config, rs_final.nets, seed=900 + seed, episodes=EVAL_EPISODES)
        gains[seed] = {
            kind: float(e_final[f"reward_{kind}"].mean() - e0[f"reward_{kind}"].mean())
            for kind in ("consumer", "firm", "government")
        }
        for tag, name in (("25", "checkpoint_000080.npz"), ("final", "final.npz")):
            for kind in ("consumer", "firm", "government"):
                rep = best_response(
                    str(ckpts / name), kind,
                    br_updates=BR_UPDATES, seed=777 + seed, eval_episodes=EVAL_EPISODES,
                )
                table[tag][(kind, seed)] = rep.improvement / abs(gains[seed][kind])
    return table


class TestCriterion6EpsilonTrend:
    def test_best_response_improvement_shrinks_with_training(self, smoke_arms):
        table = br_fraction_table(smoke_arms)
        lines = []
        directional_ok = True
        for kind in ("consumer", "firm", "government"):
            m25 = float(np.median([table["25"][(kind, s)] for s in SMOKE_SEEDS]))
            mfin = float(np.median([table["final"][(kind, s)] for s in SMOKE_SEEDS]))
            directional_ok &= m25 > mfin
            lines.append(f"{kind}: median 25% {m25:+.1%} vs final {mfin:+.1%}")
        consumer_final = float(
            np.median([table["final"][("consumer", s)] for s in SMOKE_SEEDS])
        )
        consumer_gate = consumer_final < 0.10
        ok = directional_ok and consumer_gate
        report(
            6, ok,
            "best-response fractional improvement shrinks from the 25% checkpoint "
            f"to the final one for every agent type ({'; '.join(lines)}); "
            f"final consumer epsilon {consumer_final:+.1%} < 10%",
        )


class TestCriterion7FixedTaxMachinery:
    def test_sweep_reports_best_fixed_rates(self, smoke_arms):
        ckpt = str(smoke_arms["curriculum"][SMOKE_SEEDS[0]] / "checkpoints" / "final.npz")
        result = fixed_tax_sweep(ckpt, seed=5, eval_episodes=8)
        expected_pairs = {(ti, tc) for ti in (0.2, 0.4, 0.6, 0.8) for tc in (0.2, 0.4, 0.6, 0.8)}
        got_pairs = {(r["tax_income"], r["tax_corporate"]) for r in result["rows"]}
        ok = got_pairs == expected_pairs and np.isfinite(result["best_fixed"]["welfare"])
        rl = result["rl_policy_welfare"]
        best = result["best_fixed"]
        gap = result["rl_minus_best_fixed"] / abs(best["welfare"])
        print(
            f"\n  RL taxes vs best fixed rates (report only): RL welfare {rl:.1f}, "
            f"best fixed ({best['tax_income']:.1f}, {best['tax_corporate']:.1f}) "
            f"welfare {best['welfare']:.1f}, RL advantage {gap:+.1%}"
        )
        report(
            7, ok,
            f"baseline sweep covers all 16 fixed-rate pairs in {{0.2..0.8}}^2 and "
            f"identifies the best fixed policy (welfare {best['welfare']:.1f})",
        )


class TestCriterion8ScheduleExactness:
    def test_schedules_match_closed_forms_at_probe_points(self):
        econ = EconomyConfig(num_consumers=4, num_firms=2)
        from econrl.config import CurriculumConfig

        cur = CurriculumConfig(
            t_start_firm=100, t_start_government=200,
            firm_anneal_span=50, government_anneal_span=50,
            theta_anneal_span=80, entropy_decay_rate=1000.0,
        )
        probes = [0, 1, 25, 49, 50, 55, 66, 67, 80, 84, 99, 100, 101, 149, 150, 160, 175, 199, 200, 400]
        assert len(probes) == 20
        worst_cont = 0.0
        masks_ok = gates_ok = True
        for t in probes:
            # continuous schedules against the closed forms
            expected_alpha = 0.5 * max(np.exp(-t / 1000.0), 0.1)
            worst_cont = max(worst_cont, abs(entropy_coeff(cur, "consumer", t) - expected_alpha))
            t_firm = max(0, t - 100)
            expected_alpha_f = 0.5 * max(np.exp(-t_firm / 1000.0), 0.1)
            worst_cont = max(worst_cont, abs(entropy_coeff(cur, "firm", t) - expected_alpha_f))
            expected_theta = 0.01 * min(t / 80.0, 1.0)
            worst_cont = max(worst_cont, abs(theta_schedule(cur, econ, t) - expected_theta))
            # gates: strict inequality on the starts
            gates = training_gates(cur, t)
            gates_ok &= gates == {
                "consumer": True, "firm": t > 100, "government": t > 200,
            }
            # masks: stepwise widening, one grid point per direction per
            # sub-interval, symmetric for firms, upward from zero for taxes
            def expected_mask(n, pin, start, span, symmetric):
                if t >= start + span:
                    return [True] * n
                if t < start:
                    return [i == pin for i in range(n)]
                steps_needed = max(pin, n - 1 - pin) if symmetric else n - 1 - pin
                s = 1 + (t - start) * steps_needed // span
                lo = max(0, pin - s) if symmetric else pin
                hi = min(n - 1, pin + s)
                return [lo <= i <= hi for i in range(n)]

            price, wage = action_masks(cur, econ, "firm", t)
            masks_ok &= price.tolist() == expected_mask(6, 2, 50, 50, True)
            masks_ok &= wage.tolist() == expected_mask(5, 0, 50, 50, True)
            for mask in action_masks(cur, econ, "government", t):
                masks_ok &= mask.tolist() == expected_mask(6, 0, 150, 50, False)
            for mask in action_masks(cur, econ, "consumer", t):
                masks_ok &= mask.all()
        ok = worst_cont < 1e-12 and masks_ok and gates_ok
        report(
            8, ok,
            f"entropy/theta schedules match closed forms within {worst_cont:.1e} "
            f"(tol 1e-12) and masks/gates match exactly at 20 probe points",
        )


class TestCriterion9Reproducibility:
    def test_identical_invocations_are_byte_identical(self, tmp_path):
        cfg = smoke_run_config(training=dict(num_updates=24, num_replicas=6, checkpoint_interval=24))
        train(cfg, seed=42, out_dir=str(tmp_path / "a"))
        train(cfg, seed=42, out_dir=str(tmp_path / "b"))
        a = (tmp_path / "a" / "metrics.csv").read_bytes()
        b = (tmp_path / "b" / "metrics.csv").read_bytes()
        ok = a == b
        report(
            9, ok,
            f"two train invocations with identical seed and config wrote "
            f"byte-identical metrics.csv ({len(a)} bytes) on the smoke economy",
        )


class TestCriterion10ParallelEquivalence:
    def test_worker_count_does_not_change_rollouts(self):
        from concurrent.futures import ProcessPoolExecutor

        cfg = smoke_run_config(training=dict(num_replicas=8))
        rs = new_run_state(cfg, seed=31)
        cur = at_step(cfg.curriculum, cfg.economy, 3)
        serial = collect_rollouts(cfg, rs.nets, cur, seed=31, update=3)
        with ProcessPoolExecutor(max_workers=4) as pool:
            parallel = collect_rollouts(
                cfg, rs.nets, cur, seed=31, update=3, pool=pool, workers=4
            )
        same = True
        for kind in ("consumer", "firm", "government"):
            for field in ("obs", "actions", "logp_old", "values", "rewards"):
                same &= np.array_equal(
                    getattr(serial, field)[kind], getattr(parallel, field)[kind]
                )
        same &= np.array_equal(serial.aggregates, parallel.aggregates)
        report(
            10, same,
            "rollout batches from 1 worker and 4 workers are identical "
            "(same per-replica streams, scheduling-independent)",
        )
