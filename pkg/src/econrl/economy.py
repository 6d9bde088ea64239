"""One-replica dynamics of the real-business-cycle Markov game.

A step is a pure function of (config, state, actions). Within a quarter the
phases run in a fixed order: labor and production first, then budget-scaled
and rationed consumption, export sales, capital investment from the
start-of-step budget, profit and tax settlement with full redistribution, and
finally installation of the prices, wages, and tax rates posted for the next
quarter.

Firms may run negative budgets (borrowing); consumer budgets cannot go
negative because attempted consumption is scaled down to the budget before it
is rationed against inventory. Consumers pay only for realized consumption.
Firms that end the episode in debt are flagged (`ponzi_violation`); the
trainer converts those flags into the configured penalty on the scaled reward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ConfigError, EconomyConfig


class ActionError(ConfigError):
    """An action is off its grid or structurally invalid. Never silently clamped."""


AGENT_TYPES = ("consumer", "firm", "government")


def head_sizes(cfg: EconomyConfig, agent_type: str) -> tuple[int, ...]:
    """Categorical action-head cardinalities, in sampling order.

    Consumers: one head per good (attempted units), the firm worked for, and
    hours. Firms: next price, next wage. Government: the two tax rates.
    """
    if agent_type == "consumer":
        return (len(cfg.consumption_grid),) * cfg.num_firms + (
            cfg.num_firms,
            len(cfg.hours_grid),
        )
    if agent_type == "firm":
        return (len(cfg.price_grid), len(cfg.wage_grid))
    if agent_type == "government":
        return (len(cfg.tax_grid), len(cfg.tax_grid))
    raise ValueError(f"unknown agent type {agent_type!r}")


def consumer_actions_from_indices(cfg: EconomyConfig, idx: np.ndarray) -> list[ConsumerAction]:
    """Decode sampled head indices (C, F+2) into consumer actions."""
    grid = np.asarray(cfg.consumption_grid)
    hours = np.asarray(cfg.hours_grid)
    F = cfg.num_firms
    return [
        ConsumerAction(
            consumption=grid[row[:F]],
            work_firm=int(row[F]),
            hours=float(hours[row[F + 1]]),
        )
        for row in np.asarray(idx, dtype=int)
    ]


def firm_actions_from_indices(cfg: EconomyConfig, idx: np.ndarray) -> list[FirmAction]:
    """Decode sampled head indices (F, 2) into firm actions."""
    return [
        FirmAction(price=cfg.price_grid[row[0]], wage=cfg.wage_grid[row[1]])
        for row in np.asarray(idx, dtype=int)
    ]


def government_action_from_indices(cfg: EconomyConfig, idx: np.ndarray) -> GovernmentAction:
    """Decode sampled head indices (2,) or (1, 2) into the government action."""
    row = np.asarray(idx, dtype=int).reshape(-1)
    return GovernmentAction(
        tax_income=cfg.tax_grid[row[0]], tax_corporate=cfg.tax_grid[row[1]]
    )


@dataclass
class ConsumerAction:
    consumption: np.ndarray  # (F,) attempted units per good, consumption-grid values
    work_firm: int | None  # firm index worked for this quarter
    hours: float  # hours-grid value; must be 0 when work_firm is None


@dataclass
class FirmAction:
    price: float  # price-grid value, effective next quarter
    wage: float  # wage-grid value, effective next quarter


@dataclass
class GovernmentAction:
    tax_income: float  # tax-grid value, effective next quarter
    tax_corporate: float


@dataclass
class WorldState:
    """Complete simulation state of one replica at the start of quarter `t`."""

    t: int
    inventory: np.ndarray  # (F,) units, never negative
    price: np.ndarray  # (F,) currency per unit, in effect this quarter
    wage: np.ndarray  # (F,) currency per hour, in effect this quarter
    tax_income: float
    tax_corporate: float
    consumer_budget: np.ndarray  # (C,)
    firm_budget: np.ndarray  # (F,) may be negative
    capital: np.ndarray  # (F,) > 0
    overdemand: np.ndarray  # (F,) bool, from the previous quarter
    last_tax_revenue: float
    theta: float  # work-disutility coefficient in effect this episode
    wage_multiplier: np.ndarray  # (C,) per-consumer pay multiplier (all ones by default)

    def copy(self) -> "WorldState":
        return WorldState(
            t=self.t,
            inventory=self.inventory.copy(),
            price=self.price.copy(),
            wage=self.wage.copy(),
            tax_income=self.tax_income,
            tax_corporate=self.tax_corporate,
            consumer_budget=self.consumer_budget.copy(),
            firm_budget=self.firm_budget.copy(),
            capital=self.capital.copy(),
            overdemand=self.overdemand.copy(),
            last_tax_revenue=self.last_tax_revenue,
            theta=self.theta,
            wage_multiplier=self.wage_multiplier.copy(),
        )


@dataclass
class StepOutcome:
    """Everything realized during one quarter, with pre-scaling rewards."""

    consumption: np.ndarray  # (C, F) realized units
    labor: np.ndarray  # (F,) hours received
    production: np.ndarray  # (F,) units produced
    export_sold: np.ndarray  # (F,) units
    export_revenue: np.ndarray  # (F,) currency
    profit: np.ndarray  # (F,) currency; the firm reward
    tax_revenue: float  # currency, fully redistributed
    consumer_utility: np.ndarray  # (C,) the consumer reward
    social_welfare: float  # the government reward
    ponzi_violation: np.ndarray  # (F,) bool; set only on the episode's final step


def initial_state(
    cfg: EconomyConfig, rng: np.random.Generator | None = None, theta: float | None = None
) -> WorldState:
    """Fresh start-of-episode state.

    `theta` overrides the configured work disutility (the curriculum passes the
    annealed value). Pareto wage multipliers are drawn here when enabled; this
    is the only stochastic element of the environment itself.
    """
    C, F = cfg.num_consumers, cfg.num_firms
    mult = np.ones(C)
    if cfg.pareto_wage_multipliers:
        if rng is None:
            raise ConfigError("pareto_wage_multipliers requires an rng at reset")
        # Pareto quantile function with shape `pareto_scale`: multipliers >= 1.
        mult = (1.0 - rng.random(C)) ** (-1.0 / cfg.pareto_scale)
    return WorldState(
        t=0,
        inventory=np.zeros(F),
        price=np.full(F, cfg.initial_price),
        wage=np.full(F, cfg.initial_wage),
        tax_income=0.0,
        tax_corporate=0.0,
        consumer_budget=np.full(C, float(cfg.initial_consumer_budget)),
        firm_budget=np.full(F, float(cfg.initial_firm_budget)),
        capital=np.array(cfg.initial_capital, dtype=float),
        overdemand=np.zeros(F, dtype=bool),
        last_tax_revenue=0.0,
        theta=cfg.labor_disutility_theta if theta is None else float(theta),
        wage_multiplier=mult,
    )


def scale_to_budget(
    attempted: np.ndarray, prices: np.ndarray, budget: float
) -> np.ndarray:
    """Scale one consumer's attempted consumption so its cost fits the budget.

    Within budget the input is returned unchanged; otherwise every good is
    scaled by budget/cost. The returned basket always costs at most `budget`,
    including under floating-point rounding.
    """
    return scale_to_budget_batch(
        attempted[np.newaxis, :], prices, np.array([float(budget)])
    )[0]


def scale_to_budget_batch(
    attempted: np.ndarray, prices: np.ndarray, budgets: np.ndarray
) -> np.ndarray:
    cost = attempted @ prices
    over = cost > budgets
    if not over.any():
        return attempted
    factor = np.ones_like(budgets)
    factor[over] = budgets[over] / cost[over]
    scaled = attempted * factor[:, np.newaxis]
    # Nudge the factor down by ulps until rounding cannot push cost past budget.
    while True:
        bad = (scaled @ prices) > budgets
        if not bad.any():
            return scaled
        factor[bad] = np.nextafter(factor[bad], 0.0)
        scaled = attempted * factor[:, np.newaxis]


def ration(attempted: np.ndarray, inventory: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Proportionally ration per-good demand against inventory.

    `attempted` is (C, F); each good's realized consumption is
    min(1, inventory/demand) times the attempt, with zero demand meaning no
    rationing. Returns (realized (C, F), overdemand flags (F,)).
    """
    demand = attempted.sum(axis=0)
    factor = np.ones_like(demand)
    short = demand > 0.0
    factor[short] = np.minimum(1.0, inventory[short] / demand[short])
    return attempted * factor[np.newaxis, :], demand > inventory


def produce(
    capital: np.ndarray, labor: np.ndarray, a: np.ndarray, alpha: np.ndarray
) -> np.ndarray:
    """Cobb-Douglas output A * k^(1-alpha) * L^alpha, with 0^0 = 1 at the edges."""
    return a * capital ** (1.0 - alpha) * labor**alpha


def firm_invest(firm_budget: np.ndarray, invest_fraction: float) -> np.ndarray:
    """Capital purchased this quarter: a fixed fraction of the budget, if positive."""
    return np.where(firm_budget > 0.0, invest_fraction * firm_budget, 0.0)


def export_step(
    price: np.ndarray, remaining: np.ndarray, cfg: EconomyConfig
) -> tuple[np.ndarray, np.ndarray]:
    """Price-taker export demand after consumers have bought.

    Goods priced strictly above the export minimum sell up to the per-good
    quota from what is left. Returns (units sold, revenue) per firm.
    """
    if not cfg.export_enabled:
        zero = np.zeros_like(price)
        return zero, zero.copy()
    sold = np.where(
        price > cfg.export_min_price, np.minimum(cfg.export_quota, remaining), 0.0
    )
    return sold, price * sold


def consumer_utility(
    consumption: np.ndarray, hours: float, theta: float, eta: float
) -> float:
    """Isoelastic consumption utility minus linear work disutility, one consumer.

    The (theta/2) * hours term is charged once per consumer per quarter, not
    once per good.
    """
    iso = ((consumption + 1.0) ** (1.0 - eta) - 1.0) / (1.0 - eta)
    return float(iso.sum() - 0.5 * theta * hours)


def consumer_utility_batch(
    consumption: np.ndarray, hours: np.ndarray, theta: float, eta: float
) -> np.ndarray:
    iso = ((consumption + 1.0) ** (1.0 - eta) - 1.0) / (1.0 - eta)
    return iso.sum(axis=1) - 0.5 * theta * hours


def social_welfare(
    consumer_utilities: np.ndarray, profits: np.ndarray, cfg: EconomyConfig
) -> float:
    swf = float(consumer_utilities.sum())
    if cfg.welfare_mode == "total":
        swf += cfg.firm_welfare_weight * float(profits.sum())
    return swf


def _check_grid(values: np.ndarray, grid: tuple[float, ...], what: str) -> None:
    ok = np.isin(values, np.asarray(grid))
    if not ok.all():
        bad = np.asarray(values)[~ok]
        raise ActionError(f"{what} value {bad.flat[0]!r} is not on the grid {grid}")


def _validate_actions(
    cfg: EconomyConfig,
    consumer_actions: list[ConsumerAction],
    firm_actions: list[FirmAction],
    government_action: GovernmentAction,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    C, F = cfg.num_consumers, cfg.num_firms
    if len(consumer_actions) != C:
        raise ActionError(f"expected {C} consumer actions, got {len(consumer_actions)}")
    if len(firm_actions) != F:
        raise ActionError(f"expected {F} firm actions, got {len(firm_actions)}")
    attempted = np.stack([np.asarray(a.consumption, dtype=float) for a in consumer_actions])
    if attempted.shape != (C, F):
        raise ActionError(f"consumption array must be ({C}, {F}), got {attempted.shape}")
    _check_grid(attempted, cfg.consumption_grid, "consumption")
    hours = np.array([float(a.hours) for a in consumer_actions])
    _check_grid(hours, cfg.hours_grid, "work hours")
    firm_idx = np.empty(C, dtype=int)
    for j, a in enumerate(consumer_actions):
        if a.work_firm is None:
            if a.hours != 0.0:
                raise ActionError(f"consumer {j}: hours must be 0 when work_firm is None")
            firm_idx[j] = -1
        else:
            if not 0 <= a.work_firm < F:
                raise ActionError(f"consumer {j}: work_firm {a.work_firm} out of range")
            firm_idx[j] = a.work_firm
    _check_grid(np.array([a.price for a in firm_actions]), cfg.price_grid, "price")
    _check_grid(np.array([a.wage for a in firm_actions]), cfg.wage_grid, "wage")
    _check_grid(
        np.array([government_action.tax_income, government_action.tax_corporate]),
        cfg.tax_grid,
        "tax rate",
    )
    return attempted, hours, firm_idx


def step(
    cfg: EconomyConfig,
    state: WorldState,
    consumer_actions: list[ConsumerAction],
    firm_actions: list[FirmAction],
    government_action: GovernmentAction,
) -> tuple[WorldState, StepOutcome]:
    """Advance one replica by one quarter. Deterministic and side-effect free."""
    if state.t >= cfg.episode_length:
        raise ConfigError(f"episode is over (t={state.t}, T={cfg.episode_length})")
    attempted, hours, firm_idx = _validate_actions(
        cfg, consumer_actions, firm_actions, government_action
    )
    C, F = cfg.num_consumers, cfg.num_firms

    # Phase 1: labor supplied at current wages, production added to inventory.
    worked = firm_idx >= 0
    labor = np.zeros(F)
    np.add.at(labor, firm_idx[worked], hours[worked])
    production = produce(
        state.capital, labor, np.asarray(cfg.production_a), np.asarray(cfg.production_alpha)
    )
    available = state.inventory + production

    # Phase 2: consumption, scaled to budget first, then rationed.
    scaled = scale_to_budget_batch(attempted, state.price, state.consumer_budget)
    realized, overdemand = ration(scaled, available)
    consumed = realized.sum(axis=0)

    # Phase 3: export market buys from the leftover inventory.
    remaining = np.maximum(available - consumed, 0.0)
    export_sold, export_revenue = export_step(state.price, remaining, cfg)

    # Phase 4: investment out of the start-of-step budget.
    dk = firm_invest(state.firm_budget, cfg.invest_fraction)

    # Phase 5: profits, taxes, redistribution, budget updates.
    paid_hours = hours * state.wage_multiplier
    income = np.where(worked, paid_hours * state.wage[np.clip(firm_idx, 0, F - 1)], 0.0)
    wage_bill = np.zeros(F)
    np.add.at(wage_bill, firm_idx[worked], income[worked])
    profit = state.price * consumed + export_revenue - wage_bill - dk

    firm_tax = state.tax_corporate * profit
    revenue = state.tax_income * float(income.sum()) + float(firm_tax.sum())
    redistributed = revenue
    if cfg.floor_negative_redistribution and revenue < 0.0:
        # Keep the government at zero by shrinking corporate rebates pro rata
        # instead of redistributing a negative amount.
        rebates = np.where(firm_tax < 0.0, -firm_tax, 0.0)
        total_rebates = float(rebates.sum())
        keep = (total_rebates + revenue) / total_rebates  # in [0, 1)
        firm_tax = np.where(firm_tax < 0.0, firm_tax * keep, firm_tax)
        redistributed = 0.0

    consumption_cost = realized @ state.price
    consumer_budget_next = (
        state.consumer_budget
        + (1.0 - state.tax_income) * income
        + redistributed / C
        - consumption_cost
    )
    firm_budget_next = state.firm_budget + profit - firm_tax

    # Phase 6/7: next-quarter prices, wages, and taxes take effect; clock advances.
    next_state = WorldState(
        t=state.t + 1,
        inventory=np.maximum(available - consumed - export_sold, 0.0),
        price=np.array([a.price for a in firm_actions], dtype=float),
        wage=np.array([a.wage for a in firm_actions], dtype=float),
        tax_income=float(government_action.tax_income),
        tax_corporate=float(government_action.tax_corporate),
        consumer_budget=consumer_budget_next,
        firm_budget=firm_budget_next,
        capital=state.capital + dk,
        overdemand=overdemand,
        last_tax_revenue=redistributed,
        theta=state.theta,
        wage_multiplier=state.wage_multiplier,
    )

    utility = consumer_utility_batch(realized, hours, state.theta, cfg.crra_eta)
    ponzi = (
        firm_budget_next < 0.0
        if next_state.t == cfg.episode_length
        else np.zeros(F, dtype=bool)
    )
    outcome = StepOutcome(
        consumption=realized,
        labor=labor,
        production=production,
        export_sold=export_sold,
        export_revenue=export_revenue,
        profit=profit,
        tax_revenue=redistributed,
        consumer_utility=utility,
        social_welfare=social_welfare(utility, profit, cfg),
        ponzi_violation=ponzi,
    )
    return next_state, outcome
