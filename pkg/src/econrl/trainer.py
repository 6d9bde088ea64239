"""Rollout collection over parallel environment replicas and per-type updates.

Each update collects one full episode from every replica, then applies one
optimizer cycle per agent type whose curriculum gate is open. All agents of a
type share one policy/value network; their samples are pooled into a single
batch. Rollout and update phases strictly alternate, so parameters are
read-only while replicas are stepped.

Every replica owns a counter-based RNG stream derived from
(master seed, replica id, update index), which makes rollouts independent of
how replicas are distributed over workers and makes resumed runs continue
bit-exactly.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import RunConfig, TrainingConfig
from .curriculum import CurriculumState, at_step, terminal_state
from .economy import (
    AGENT_TYPES,
    GovernmentAction,
    consumer_actions_from_indices,
    firm_actions_from_indices,
    government_action_from_indices,
    head_sizes,
    initial_state,
    step,
)
from .io import (
    export_rollout,
    parse_config,
    rollout_record,
    serialize_config,
    write_manifest,
)
from .nets import (
    ActionDistribution,
    MlpParams,
    backward,
    entropy_logit_grads,
    forward,
    init_params,
    params_from_arrays,
    params_to_arrays,
    policy_logit_grads,
)
from .observations import ObsEncoder
from .rl import (
    OptimizerState,
    adam_step,
    clip_gradients,
    discounted_returns,
    entropy_term,
    huber_value_loss,
    init_optimizer,
    ppo_surrogate,
    reinforce_loss,
    standardized_advantages,
)

CHECKPOINT_VERSION = 1

# First spawn-key element keeps the derived RNG streams from colliding.
_STREAM_ROLLOUT = 0
_STREAM_INIT = 1
_STREAM_EVAL = 2

METRIC_COLUMNS = (
    ["update", "theta"]
    + [f"entropy_coeff_{k}" for k in AGENT_TYPES]
    + [f"gate_{k}" for k in AGENT_TYPES]
    + [f"reward_{k}" for k in AGENT_TYPES]
    + [
        "price_mean",
        "wage_mean",
        "tax_income_mean",
        "tax_corporate_mean",
        "consumption_mean",
        "hours_mean",
        "export_mean",
        "welfare_mean",
    ]
    + [f"loss_{k}" for k in AGENT_TYPES]
    + [f"grad_norm_{k}" for k in AGENT_TYPES]
    + [f"entropy_{k}" for k in AGENT_TYPES]
)

AGG_COLUMNS = (
    "reward_consumer",
    "reward_firm",
    "reward_government",
    "price_mean",
    "wage_mean",
    "tax_income_mean",
    "tax_corporate_mean",
    "consumption_mean",
    "hours_mean",
    "export_mean",
    "welfare_mean",
)


def replica_rng(seed: int, replica: int, update: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(_STREAM_ROLLOUT, replica, update))
    )


def eval_rng(seed: int, episode: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(_STREAM_EVAL, episode))
    )


@dataclass
class EpisodeData:
    """One replica's episode: flat per-type tensors plus summary aggregates."""

    obs: dict[str, np.ndarray]  # (T, A, D) float32
    actions: dict[str, np.ndarray]  # (T, A, H) int64
    logp: dict[str, np.ndarray]  # (T, A)
    values: dict[str, np.ndarray]  # (T, A)
    rewards: dict[str, np.ndarray]  # (T, A), scaled
    aggregates: np.ndarray  # (len(AGG_COLUMNS),) raw-unit episode summaries
    trace: dict | None = None


def run_episode(
    cfg: RunConfig,
    nets: dict[str, MlpParams],
    masks: dict[str, list[np.ndarray]],
    theta: float,
    rng: np.random.Generator,
    encoder: ObsEncoder | None = None,
    fixed_government: tuple[float, float] | None = None,
    record_trace: bool = False,
) -> EpisodeData:
    """Simulate one full episode, sampling all actions from the given nets.

    With `fixed_government`, the sampled government action is replaced by the
    constant tax pair (the stream still draws the same random numbers, so
    paired comparisons stay aligned).
    """
    econ, tcfg = cfg.economy, cfg.training
    encoder = encoder or ObsEncoder(econ)
    T, C, F = econ.episode_length, econ.num_consumers, econ.num_firms
    counts = {"consumer": C, "firm": F, "government": 1}
    scales = {
        "consumer": tcfg.reward_scale_consumer,
        "firm": tcfg.reward_scale_firm,
        "government": tcfg.reward_scale_government,
    }
    widths = encoder.layout.widths()
    obs = {k: np.empty((T, counts[k], widths[k]), dtype=np.float32) for k in AGENT_TYPES}
    actions = {
        k: np.empty((T, counts[k], len(head_sizes(econ, k))), dtype=np.int64)
        for k in AGENT_TYPES
    }
    logp = {k: np.empty((T, counts[k])) for k in AGENT_TYPES}
    values = {k: np.empty((T, counts[k])) for k in AGENT_TYPES}
    rewards = {k: np.empty((T, counts[k])) for k in AGENT_TYPES}
    trace: dict[str, list] | None = None
    if record_trace:
        trace = {key: [] for key in (
            "price", "wage", "inventory", "capital", "firm_budget", "export_sold",
            "production", "labor", "profit", "consumption", "hours",
            "consumer_budget", "tax_income", "tax_corporate", "tax_revenue",
            "social_welfare",
        )}

    raw_return = {k: 0.0 for k in AGENT_TYPES}  # episode sums of pre-scaling rewards
    price_sum = wage_sum = tax_i_sum = tax_c_sum = 0.0
    consumption_units = export_units = 0.0
    hours_grid = np.asarray(econ.hours_grid)

    state = initial_state(econ, rng=rng, theta=theta)
    if fixed_government is not None:
        state.tax_income, state.tax_corporate = fixed_government
    for t in range(T):
        step_obs = {
            "consumer": encoder.consumer_obs_all(state),
            "firm": encoder.firm_obs_all(state),
            "government": encoder.government_obs(state)[np.newaxis, :],
        }
        idx = {}
        for kind in AGENT_TYPES:
            fwd = forward(nets[kind], step_obs[kind])
            dist = ActionDistribution.from_logits(fwd.logits, masks[kind])
            idx[kind], logp[kind][t] = dist.sample(rng)
            obs[kind][t] = step_obs[kind]
            actions[kind][t] = idx[kind]
            values[kind][t] = fwd.value
        if fixed_government is None:
            gov_action = government_action_from_indices(econ, idx["government"])
        else:
            gov_action = GovernmentAction(*fixed_government)
        prev = state
        state, outcome = step(
            econ,
            state,
            consumer_actions_from_indices(econ, idx["consumer"]),
            firm_actions_from_indices(econ, idx["firm"]),
            gov_action,
        )
        rewards["consumer"][t] = outcome.consumer_utility / scales["consumer"]
        firm_scaled = outcome.profit / scales["firm"]
        if outcome.ponzi_violation.any():
            firm_scaled = firm_scaled + econ.no_ponzi_penalty * outcome.ponzi_violation
        rewards["firm"][t] = firm_scaled
        rewards["government"][t] = outcome.social_welfare / scales["government"]
        raw_return["consumer"] += outcome.consumer_utility.mean()
        raw_return["firm"] += outcome.profit.mean()
        raw_return["government"] += outcome.social_welfare
        price_sum += prev.price.mean()
        wage_sum += prev.wage.mean()
        tax_i_sum += prev.tax_income
        tax_c_sum += prev.tax_corporate
        consumption_units += outcome.consumption.sum()
        export_units += outcome.export_sold.sum()
        if trace is not None:
            trace["price"].append(prev.price)
            trace["wage"].append(prev.wage)
            trace["inventory"].append(prev.inventory)
            trace["capital"].append(prev.capital)
            trace["firm_budget"].append(prev.firm_budget)
            trace["export_sold"].append(outcome.export_sold)
            trace["production"].append(outcome.production)
            trace["labor"].append(outcome.labor)
            trace["profit"].append(outcome.profit)
            trace["consumption"].append(outcome.consumption.sum(axis=1))
            trace["hours"].append(hours_grid[actions["consumer"][t][:, F + 1]])
            trace["consumer_budget"].append(prev.consumer_budget)
            trace["tax_income"].append(prev.tax_income)
            trace["tax_corporate"].append(prev.tax_corporate)
            trace["tax_revenue"].append(outcome.tax_revenue)
            trace["social_welfare"].append(outcome.social_welfare)

    all_hours = hours_grid[actions["consumer"][:, :, F + 1]]  # (T, C)
    aggregates = np.array([
        raw_return["consumer"],
        raw_return["firm"],
        raw_return["government"],
        price_sum / T,
        wage_sum / T,
        tax_i_sum / T,
        tax_c_sum / T,
        consumption_units / (T * C),
        all_hours.mean(),
        export_units / (T * F),
        raw_return["government"] / T,
    ])
    return EpisodeData(
        obs=obs, actions=actions, logp=logp, values=values, rewards=rewards,
        aggregates=aggregates, trace=trace,
    )


@dataclass
class RolloutBatch:
    """Flat storage of one update's rollouts: (replicas, timesteps, agents, ...)."""

    update: int
    obs: dict[str, np.ndarray]
    actions: dict[str, np.ndarray]
    logp_old: dict[str, np.ndarray]
    values: dict[str, np.ndarray]
    rewards: dict[str, np.ndarray]
    masks: dict[str, list[np.ndarray]]
    aggregates: np.ndarray  # (R, len(AGG_COLUMNS))

    def agg(self, name: str) -> float:
        return float(self.aggregates[:, AGG_COLUMNS.index(name)].mean())


def _collect_chunk(payload) -> list[EpisodeData]:
    (cfg, nets, masks, theta, seed, update, replica_ids, fixed_government) = payload
    encoder = ObsEncoder(cfg.economy)
    return [
        run_episode(
            cfg, nets, masks, theta,
            rng=replica_rng(seed, r, update),
            encoder=encoder,
            fixed_government=fixed_government,
        )
        for r in replica_ids
    ]


def collect_rollouts(
    cfg: RunConfig,
    nets: dict[str, MlpParams],
    cur: CurriculumState,
    seed: int,
    update: int,
    pool: ProcessPoolExecutor | None = None,
    workers: int = 1,
    num_replicas: int | None = None,
    fixed_government: tuple[float, float] | None = None,
) -> RolloutBatch:
    """Run one episode per replica and stack results into contiguous arrays.

    Results are bit-identical for any worker count: each replica's stream
    depends only on (seed, replica id, update index).
    """
    R = num_replicas if num_replicas is not None else cfg.training.num_replicas
    replica_ids = list(range(R))
    chunks = [replica_ids[i::workers] for i in range(workers)] if workers > 1 else [replica_ids]
    chunks = [c for c in chunks if c]
    payloads = [
        (cfg, nets, cur.masks, cur.theta, seed, update, chunk, fixed_government)
        for chunk in chunks
    ]
    if pool is not None and len(payloads) > 1:
        chunk_results = list(pool.map(_collect_chunk, payloads))
    else:
        chunk_results = [_collect_chunk(p) for p in payloads]
    by_replica: list[EpisodeData | None] = [None] * R
    for chunk, results in zip(chunks, chunk_results):
        for rid, ep in zip(chunk, results):
            by_replica[rid] = ep
    episodes = [ep for ep in by_replica if ep is not None]
    return RolloutBatch(
        update=update,
        obs={k: np.stack([e.obs[k] for e in episodes]) for k in AGENT_TYPES},
        actions={k: np.stack([e.actions[k] for e in episodes]) for k in AGENT_TYPES},
        logp_old={k: np.stack([e.logp[k] for e in episodes]) for k in AGENT_TYPES},
        values={k: np.stack([e.values[k] for e in episodes]) for k in AGENT_TYPES},
        rewards={k: np.stack([e.rewards[k] for e in episodes]) for k in AGENT_TYPES},
        masks=cur.masks,
        aggregates=np.stack([e.aggregates for e in episodes]),
    )


@dataclass
class UpdateStats:
    loss: float
    policy_loss: float
    value_loss: float
    entropy: float
    grad_norm: float


def update_policy(
    net: MlpParams,
    opt: OptimizerState,
    obs: np.ndarray,
    actions: np.ndarray,
    logp_old: np.ndarray,
    returns: np.ndarray,
    values_old: np.ndarray,
    masks: list[np.ndarray] | None,
    tcfg: TrainingConfig,
    entropy_alpha: float,
    what: str = "policy",
) -> tuple[MlpParams, UpdateStats]:
    """One optimizer cycle on flat sample rows (PPO epochs, or one PG pass).

    Advantages are standardized once per batch from the rollout-time value
    predictions; PPO epochs recompute log-probs and values under the same
    action masks the samples were drawn with.
    """
    adv = standardized_advantages(returns, values_old)
    masks = masks if masks is not None else [None] * actions.shape[1]
    epochs = tcfg.ppo_epochs if tcfg.algo == "ppo" else 1
    stats = None
    for _ in range(epochs):
        fwd = forward(net, obs)
        dist = ActionDistribution.from_logits(fwd.logits, masks)
        logp_new = dist.log_prob(actions)
        ent = dist.entropy()
        value_loss, dvalue = huber_value_loss(fwd.value, returns, tcfg.huber_delta)
        if tcfg.algo == "ppo":
            policy_loss, dlogp = ppo_surrogate(logp_new, logp_old, adv, tcfg.ppo_clip)
            ent_loss, dent = entropy_term(ent, entropy_alpha)
            policy_loss += ent_loss
        else:
            policy_loss, dlogp, dent = reinforce_loss(logp_new, adv, ent, entropy_alpha)
        total = policy_loss + tcfg.value_loss_coeff * value_loss
        if not np.isfinite(total):
            raise RuntimeError(
                f"non-finite loss while updating {what}: policy={policy_loss!r} "
                f"value={value_loss!r} alpha={entropy_alpha!r} batch={obs.shape}"
            )
        dlogits = policy_logit_grads(dist, actions, dlogp)
        for h, g in enumerate(entropy_logit_grads(dist, dent)):
            dlogits[h] = dlogits[h] + g
        grads = backward(net, fwd, dlogits, dvalue * tcfg.value_loss_coeff)
        grads, norm = clip_gradients(grads, tcfg.max_grad_norm)
        net = adam_step(net, grads, opt)
        stats = UpdateStats(
            loss=float(total),
            policy_loss=float(policy_loss),
            value_loss=float(value_loss),
            entropy=float(ent.mean()),
            grad_norm=float(norm),
        )
    return net, stats


def type_rows(
    batch: RolloutBatch, kind: str, gamma: float
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Flatten one type's rollout tensors to sample rows with episodic returns."""
    rewards = batch.rewards[kind]  # (R, T, A)
    returns = discounted_returns(rewards.transpose(1, 0, 2), gamma).transpose(1, 0, 2)
    R, T, A = rewards.shape
    n = R * T * A
    obs = batch.obs[kind].reshape(n, -1)
    actions = batch.actions[kind].reshape(n, -1)
    logp_old = batch.logp_old[kind].reshape(n)
    values_old = batch.values[kind].reshape(n)
    return obs, actions, logp_old, returns.reshape(n), values_old


@dataclass
class TrainRunState:
    """Everything that persists across updates (and into checkpoints)."""

    config: RunConfig
    seed: int
    update: int
    nets: dict[str, MlpParams]
    opts: dict[str, OptimizerState]
    reward_first: dict[str, float] | None  # per-type mean episode raw reward, update 0
    reward_last: dict[str, float]


def new_run_state(cfg: RunConfig, seed: int) -> TrainRunState:
    widths = ObsEncoder(cfg.economy).layout.widths()
    nets, opts = {}, {}
    for k, kind in enumerate(AGENT_TYPES):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(_STREAM_INIT, k))
        )
        nets[kind] = init_params(
            rng, widths[kind], head_sizes(cfg.economy, kind), hidden=cfg.training.hidden_width
        )
        lr = (
            cfg.training.learning_rate_government
            if kind == "government"
            else cfg.training.learning_rate
        )
        opts[kind] = init_optimizer(
            nets[kind], lr,
            beta1=cfg.training.adam_beta1,
            beta2=cfg.training.adam_beta2,
            eps=cfg.training.adam_eps,
        )
    return TrainRunState(
        config=cfg, seed=seed, update=0, nets=nets, opts=opts,
        reward_first=None, reward_last={k: 0.0 for k in AGENT_TYPES},
    )


def save_checkpoint(path: str, rs: TrainRunState) -> None:
    """Single-file npz snapshot; parameters round-trip bit-exactly."""
    arrays: dict[str, np.ndarray] = {}
    for kind in AGENT_TYPES:
        arrays.update(params_to_arrays(rs.nets[kind], prefix=f"{kind}__p__"))
        arrays.update(params_to_arrays(rs.opts[kind].m, prefix=f"{kind}__m__"))
        arrays.update(params_to_arrays(rs.opts[kind].v, prefix=f"{kind}__v__"))
        arrays[f"{kind}__opt_step"] = np.array(rs.opts[kind].step, dtype=np.int64)
    meta = {
        "checkpoint_version": CHECKPOINT_VERSION,
        "update": rs.update,
        "seed": rs.seed,
        "reward_first": rs.reward_first,
        "reward_last": rs.reward_last,
    }
    arrays["meta_json"] = np.array(json.dumps(meta))
    arrays["config_text"] = np.array(serialize_config(rs.config))
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    os.replace(tmp, path)


def load_checkpoint(path: str) -> TrainRunState:
    with np.load(path, allow_pickle=False) as data:
        arrays = {name: data[name] for name in data.files}
    meta = json.loads(str(arrays["meta_json"]))
    if meta["checkpoint_version"] != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta['checkpoint_version']}")
    cfg = parse_config(str(arrays["config_text"]), source=f"{path}:config")
    nets, opts = {}, {}
    for kind in AGENT_TYPES:
        num_heads = len(head_sizes(cfg.economy, kind))
        nets[kind] = params_from_arrays(arrays, num_heads, prefix=f"{kind}__p__")
        lr = (
            cfg.training.learning_rate_government
            if kind == "government"
            else cfg.training.learning_rate
        )
        opts[kind] = OptimizerState(
            m=params_from_arrays(arrays, num_heads, prefix=f"{kind}__m__"),
            v=params_from_arrays(arrays, num_heads, prefix=f"{kind}__v__"),
            step=int(arrays[f"{kind}__opt_step"]),
            lr=lr,
            beta1=cfg.training.adam_beta1,
            beta2=cfg.training.adam_beta2,
            eps=cfg.training.adam_eps,
        )
    return TrainRunState(
        config=cfg,
        seed=int(meta["seed"]),
        update=int(meta["update"]),
        nets=nets,
        opts=opts,
        reward_first=meta["reward_first"],
        reward_last=meta["reward_last"],
    )


def _format_cell(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def train(
    cfg: RunConfig,
    seed: int,
    out_dir: str,
    resume: str | None = None,
    workers: int | None = None,
    argv: list[str] | None = None,
    log_every: int = 0,
) -> TrainRunState:
    """Run the full staged training loop, writing metrics and checkpoints."""
    if resume is not None:
        rs = load_checkpoint(resume)
        cfg = rs.config
    else:
        rs = new_run_state(cfg, seed)
    tcfg = cfg.training
    workers = tcfg.workers if workers is None else workers
    os.makedirs(out_dir, exist_ok=True)
    ckpt_dir = os.path.join(out_dir, "checkpoints")
    os.makedirs(ckpt_dir, exist_ok=True)
    write_manifest(out_dir, cfg, rs.seed, argv)
    metrics_path = os.path.join(out_dir, "metrics.csv")
    fresh = rs.update == 0 or not os.path.exists(metrics_path)
    metrics = open(metrics_path, "w" if fresh else "a", encoding="utf-8")
    if fresh:
        metrics.write(",".join(METRIC_COLUMNS) + "\n")

    gammas = {
        "consumer": cfg.economy.consumer_discount,
        "firm": cfg.economy.firm_discount,
        "government": cfg.economy.government_discount,
    }
    if rs.update == 0:
        save_checkpoint(os.path.join(ckpt_dir, "checkpoint_000000.npz"), rs)
    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for u in range(rs.update, tcfg.num_updates):
            cur = at_step(cfg.curriculum, cfg.economy, u)
            batch = collect_rollouts(
                cfg, rs.nets, cur, rs.seed, u, pool=pool, workers=workers,
            )
            stats: dict[str, UpdateStats | None] = {}
            for kind in AGENT_TYPES:
                if not cur.gates[kind]:
                    stats[kind] = None
                    continue
                rows = type_rows(batch, kind, gammas[kind])
                rs.nets[kind], stats[kind] = update_policy(
                    rs.nets[kind], rs.opts[kind], *rows,
                    masks=cur.masks[kind], tcfg=tcfg,
                    entropy_alpha=cur.entropy_coeffs[kind], what=kind,
                )
            rewards = {k: batch.agg(f"reward_{k}") for k in AGENT_TYPES}
            if rs.reward_first is None:
                rs.reward_first = dict(rewards)
            rs.reward_last = dict(rewards)
            rs.update = u + 1

            row = [u, cur.theta]
            row += [cur.entropy_coeffs[k] for k in AGENT_TYPES]
            row += [int(cur.gates[k]) for k in AGENT_TYPES]
            row += [rewards[k] for k in AGENT_TYPES]
            row += [
                batch.agg("price_mean"), batch.agg("wage_mean"),
                batch.agg("tax_income_mean"), batch.agg("tax_corporate_mean"),
                batch.agg("consumption_mean"), batch.agg("hours_mean"),
                batch.agg("export_mean"), batch.agg("welfare_mean"),
            ]
            for series in ("loss", "grad_norm", "entropy"):
                for kind in AGENT_TYPES:
                    s = stats[kind]
                    row.append(float("nan") if s is None else getattr(s, series))
            metrics.write(",".join(_format_cell(x) for x in row) + "\n")
            metrics.flush()
            if log_every and (u % log_every == 0 or u + 1 == tcfg.num_updates):
                print(
                    f"update {u}: reward c={rewards['consumer']:.3f} "
                    f"f={rewards['firm']:.1f} g={rewards['government']:.2f}",
                    flush=True,
                )
            if rs.update % tcfg.checkpoint_interval == 0 or rs.update == tcfg.num_updates:
                save_checkpoint(
                    os.path.join(ckpt_dir, f"checkpoint_{rs.update:06d}.npz"), rs
                )
    finally:
        metrics.close()
        if pool is not None:
            pool.shutdown()
    save_checkpoint(os.path.join(ckpt_dir, "final.npz"), rs)
    export_final_rollout(os.path.join(out_dir, "rollout.json"), rs, episodes=2)
    return rs


def export_final_rollout(path: str, rs: TrainRunState, episodes: int = 2) -> None:
    """Dump sample episodes from the trained policies as a versioned JSON record."""
    cfg = rs.config
    cur = terminal_state(cfg.curriculum, cfg.economy)
    encoder = ObsEncoder(cfg.economy)
    traces = [
        run_episode(
            cfg, rs.nets, cur.masks, cur.theta,
            rng=eval_rng(rs.seed, e), encoder=encoder, record_trace=True,
        ).trace
        for e in range(episodes)
    ]
    export_rollout(path, rollout_record(cfg.economy, traces, rs.seed))
