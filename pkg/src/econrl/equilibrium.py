"""Approximate best-response analysis for the meta-game over agent types,
and social-welfare sweeps under fixed tax rates.

The meta-game treats each agent type as one player whose action is the policy
shared by all agents of that type. A best-response run continues training one
type with every other type frozen, with curriculum schedules pinned at their
terminal values; the measured reward improvement is a lower bound on the
epsilon of the learned local equilibrium.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .config import ConfigError, RunConfig
from .curriculum import terminal_state
from .economy import AGENT_TYPES
from .nets import MlpParams
from .observations import ObsEncoder
from .rl import copy_optimizer
from .trainer import (
    AGG_COLUMNS,
    TrainRunState,
    collect_rollouts,
    eval_rng,
    load_checkpoint,
    run_episode,
    type_rows,
    update_policy,
)

DEFAULT_EVAL_EPISODES = 32


def evaluate(
    cfg: RunConfig,
    nets: dict[str, MlpParams],
    seed: int,
    episodes: int = DEFAULT_EVAL_EPISODES,
    fixed_government: tuple[float, float] | None = None,
) -> dict[str, np.ndarray]:
    """Mean episode aggregates under frozen policies and terminal schedules.

    Episodes use dedicated evaluation streams keyed by (seed, episode index),
    so two evaluations with the same seed are paired sample by sample.
    """
    cur = terminal_state(cfg.curriculum, cfg.economy)
    encoder = ObsEncoder(cfg.economy)
    rows = [
        run_episode(
            cfg, nets, cur.masks, cur.theta,
            rng=eval_rng(seed, e),
            encoder=encoder,
            fixed_government=fixed_government,
        ).aggregates
        for e in range(episodes)
    ]
    table = np.stack(rows)
    return {name: table[:, i] for i, name in enumerate(AGG_COLUMNS)}


@dataclass
class BestResponseReport:
    """Outcome of retraining one agent type against frozen opponents."""

    agent_type: str
    br_updates: int
    eval_episodes: int
    seed: int
    reward_before: float
    reward_after: float
    improvement: float  # the epsilon lower bound, in raw reward units
    training_gain: float | None  # main-run reward change for this type
    fractional_improvement: float | None  # improvement / |training_gain|
    flagged_worse: bool  # reward dropped by more than eval noise

    def to_dict(self) -> dict:
        return asdict(self)


def best_response(
    checkpoint_path: str,
    agent_type: str,
    br_updates: int,
    seed: int,
    eval_episodes: int = DEFAULT_EVAL_EPISODES,
    num_replicas: int | None = None,
) -> BestResponseReport:
    """Continue training one type from a checkpoint, opponents byte-frozen."""
    if agent_type not in AGENT_TYPES:
        raise ConfigError(f"agent_type must be one of {AGENT_TYPES}, got {agent_type!r}")
    rs = load_checkpoint(checkpoint_path)
    cfg = rs.config
    before = evaluate(cfg, rs.nets, seed, eval_episodes)
    frozen = {
        kind: rs.nets[kind].copy() for kind in AGENT_TYPES if kind != agent_type
    }
    nets = dict(rs.nets)
    nets[agent_type] = _retrain(
        cfg, nets, rs.opts, agent_type, br_updates, seed, num_replicas
    )
    for kind, params in frozen.items():
        for (_, a), (_, b) in zip(params.flat(), nets[kind].flat()):
            if not np.array_equal(a, b):
                raise AssertionError(f"frozen opponent {kind} was mutated during BR")
    after = evaluate(cfg, nets, seed, eval_episodes)

    key = f"reward_{agent_type}"
    r_before = float(before[key].mean())
    r_after = float(after[key].mean())
    improvement = r_after - r_before
    stderr = float(before[key].std() / np.sqrt(len(before[key])))
    gain = None
    frac = None
    if rs.reward_first is not None:
        gain = rs.reward_last[agent_type] - rs.reward_first[agent_type]
        if abs(gain) > 1e-12:
            frac = improvement / abs(gain)
    return BestResponseReport(
        agent_type=agent_type,
        br_updates=br_updates,
        eval_episodes=eval_episodes,
        seed=seed,
        reward_before=r_before,
        reward_after=r_after,
        improvement=improvement,
        training_gain=gain,
        fractional_improvement=frac,
        flagged_worse=improvement < -2.0 * stderr,
    )


def _retrain(
    cfg: RunConfig,
    nets: dict[str, MlpParams],
    opts,
    agent_type: str,
    updates: int,
    seed: int,
    num_replicas: int | None,
) -> MlpParams:
    """BR training loop: terminal schedules, single trainable type."""
    cur = terminal_state(cfg.curriculum, cfg.economy)
    gammas = {
        "consumer": cfg.economy.consumer_discount,
        "firm": cfg.economy.firm_discount,
        "government": cfg.economy.government_discount,
    }
    net = nets[agent_type]
    for u in range(updates):
        live = dict(nets)
        live[agent_type] = net
        batch = collect_rollouts(
            cfg, live, cur, seed, u, num_replicas=num_replicas
        )
        rows = type_rows(batch, agent_type, gammas[agent_type])
        net, _ = update_policy(
            net, opts[agent_type], *rows,
            masks=cur.masks[agent_type], tcfg=cfg.training,
            entropy_alpha=cur.entropy_coeffs[agent_type], what=f"br-{agent_type}",
        )
    return net


@dataclass
class SweepRow:
    tax_income: float
    tax_corporate: float
    welfare: float
    reward_consumer: float
    reward_firm: float

    def to_dict(self) -> dict:
        return asdict(self)


def default_sweep_rates(cfg: RunConfig) -> list[tuple[float, float]]:
    """The tax-grid pairs between 20% and 80%, inclusive."""
    inner = [r for r in cfg.economy.tax_grid if 0.2 <= r <= 0.8]
    return [(ti, tc) for ti in inner for tc in inner]


def fixed_tax_sweep(
    checkpoint_path: str,
    rates: list[tuple[float, float]] | None = None,
    seed: int = 0,
    eval_episodes: int = DEFAULT_EVAL_EPISODES,
    retrain_updates: int = 0,
) -> dict:
    """Social welfare under constant tax rates, from a trained checkpoint.

    With `retrain_updates` > 0, consumers and firms are retrained against each
    fixed rate before evaluation (the government stays a constant controller).
    Off-grid rates are rejected.
    """
    rs = load_checkpoint(checkpoint_path)
    cfg = rs.config
    if rates is None:
        rates = default_sweep_rates(cfg)
    grid = set(cfg.economy.tax_grid)
    for ti, tc in rates:
        if ti not in grid or tc not in grid:
            raise ConfigError(f"rate pair ({ti}, {tc}) is off the tax grid {sorted(grid)}")

    rows = []
    for ti, tc in rates:
        nets = {k: p.copy() for k, p in rs.nets.items()}
        if retrain_updates > 0:
            for kind in ("consumer", "firm"):
                nets[kind] = _retrain_against_fixed(
                    cfg, nets, rs, kind, retrain_updates, seed, (ti, tc)
                )
        outcome = evaluate(
            cfg, nets, seed, eval_episodes, fixed_government=(ti, tc)
        )
        rows.append(
            SweepRow(
                tax_income=ti,
                tax_corporate=tc,
                welfare=float(outcome["welfare_mean"].mean()),
                reward_consumer=float(outcome["reward_consumer"].mean()),
                reward_firm=float(outcome["reward_firm"].mean()),
            )
        )
    best = max(rows, key=lambda r: r.welfare)
    rl_welfare = float(evaluate(cfg, rs.nets, seed, eval_episodes)["welfare_mean"].mean())
    return {
        "rows": [r.to_dict() for r in rows],
        "best_fixed": best.to_dict(),
        "rl_policy_welfare": rl_welfare,
        "rl_minus_best_fixed": rl_welfare - best.welfare,
        "eval_episodes": eval_episodes,
        "seed": seed,
        "retrain_updates": retrain_updates,
    }


def _retrain_against_fixed(
    cfg: RunConfig,
    nets: dict[str, MlpParams],
    rs: TrainRunState,
    agent_type: str,
    updates: int,
    seed: int,
    fixed_government: tuple[float, float],
) -> MlpParams:
    cur = terminal_state(cfg.curriculum, cfg.economy)
    gamma = (
        cfg.economy.consumer_discount
        if agent_type == "consumer"
        else cfg.economy.firm_discount
    )
    net = nets[agent_type]
    opt = copy_optimizer(rs.opts[agent_type])  # each rate pair retrains independently
    for u in range(updates):
        live = dict(nets)
        live[agent_type] = net
        batch = collect_rollouts(
            cfg, live, cur, seed, u, fixed_government=fixed_government
        )
        rows = type_rows(batch, agent_type, gamma)
        net, _ = update_policy(
            net, opt, *rows,
            masks=cur.masks[agent_type], tcfg=cfg.training,
            entropy_alpha=cur.entropy_coeffs[agent_type], what=f"fixed-tax-{agent_type}",
        )
    return net
