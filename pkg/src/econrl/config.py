"""Configuration bundles for the economy, the training curriculum, and RL training.

Defaults reproduce the reference experiment layout: 100 consumers, 10 firms
split into a low-capital (5000) and a high-capital (10000) group with
heterogeneous production exponents, discrete action grids for consumption,
hours, prices, wages, and tax rates, and an open export market.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Sequence


class ConfigError(ValueError):
    """A configuration value violates an invariant, or a config file is malformed."""


DEFAULT_CONSUMPTION_GRID = tuple(float(v) for v in range(11))
DEFAULT_HOURS_GRID = (0.0, 260.0, 520.0, 780.0, 1040.0)
DEFAULT_PRICE_GRID = (0.0, 500.0, 1000.0, 1500.0, 2000.0, 2500.0)
DEFAULT_WAGE_GRID = (0.0, 11.0, 22.0, 33.0, 44.0)
DEFAULT_TAX_GRID = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
DEFAULT_ALPHA_GRID = (0.2, 0.4, 0.6, 0.8)

WELFARE_MODES = ("consumer_only", "total")


def spread_over_grid(grid: Sequence[float], n: int) -> tuple[float, ...]:
    """Assign `n` items values from `grid`, spread as evenly as possible.

    Used to hand out production exponents within a capital group: 4 firms get
    the grid exactly, 5 firms get (0.2, 0.4, 0.6, 0.6, 0.8), 1 firm gets the
    lowest value. Monotone in the item index.
    """
    if n <= 0:
        return ()
    if n == 1:
        return (grid[0],)
    top = len(grid) - 1
    return tuple(grid[round(k * top / (n - 1))] for k in range(n))


def _default_capital(num_firms: int) -> tuple[float, ...]:
    low = num_firms - num_firms // 2
    return (5000.0,) * low + (10000.0,) * (num_firms - low)


def _default_alpha(num_firms: int) -> tuple[float, ...]:
    low = num_firms - num_firms // 2
    return spread_over_grid(DEFAULT_ALPHA_GRID, low) + spread_over_grid(
        DEFAULT_ALPHA_GRID, num_firms - low
    )


def _per_firm(value, num_firms: int, name: str) -> tuple[float, ...]:
    if isinstance(value, (int, float)):
        return (float(value),) * num_firms
    out = tuple(float(v) for v in value)
    if len(out) != num_firms:
        raise ConfigError(
            f"{name} has {len(out)} entries but num_firms is {num_firms}"
        )
    return out


@dataclass
class EconomyConfig:
    """Parameters of the simulated economy, including all discrete action grids."""

    num_consumers: int = 100
    num_firms: int = 10
    episode_length: int = 40
    crra_eta: float = 0.1
    labor_disutility_theta: float = 0.01
    # Scalar values broadcast to all firms; sequences must have one entry per firm.
    production_a: float | Sequence[float] = 1.0
    production_alpha: Sequence[float] | None = None
    initial_capital: float | Sequence[float] | None = None
    initial_firm_budget: float = 2_200_000.0
    initial_consumer_budget: float = 1000.0
    initial_price: float = 1000.0
    initial_wage: float = 0.0
    invest_fraction: float = 0.10
    export_enabled: bool = True
    export_min_price: float = 500.0
    export_quota: float = 100.0
    welfare_mode: str = "total"
    firm_welfare_weight: float = 0.0025
    consumer_discount: float = 0.99
    firm_discount: float = 0.99
    government_discount: float = 0.99
    # Applied once, in scaled reward units, to each firm ending the episode in debt.
    no_ponzi_penalty: float = -1.0
    # Speculative consumer wage-multiplier draw; off unless pareto_wage_multipliers.
    pareto_scale: float = 4.0
    pareto_wage_multipliers: bool = False
    # When tax revenue would be negative (corporate rebates exceeding income tax),
    # floor redistribution at zero and shrink rebates pro rata; disabling this
    # lets consumer budgets go negative through negative redistribution.
    floor_negative_redistribution: bool = True
    consumption_grid: tuple[float, ...] = DEFAULT_CONSUMPTION_GRID
    hours_grid: tuple[float, ...] = DEFAULT_HOURS_GRID
    price_grid: tuple[float, ...] = DEFAULT_PRICE_GRID
    wage_grid: tuple[float, ...] = DEFAULT_WAGE_GRID
    tax_grid: tuple[float, ...] = DEFAULT_TAX_GRID

    def __post_init__(self):
        if self.production_alpha is None:
            self.production_alpha = _default_alpha(self.num_firms)
        if self.initial_capital is None:
            self.initial_capital = _default_capital(self.num_firms)
        self.production_a = _per_firm(self.production_a, self.num_firms, "production_a")
        self.production_alpha = _per_firm(
            self.production_alpha, self.num_firms, "production_alpha"
        )
        self.initial_capital = _per_firm(
            self.initial_capital, self.num_firms, "initial_capital"
        )
        for g in ("consumption_grid", "hours_grid", "price_grid", "wage_grid", "tax_grid"):
            setattr(self, g, tuple(float(v) for v in getattr(self, g)))
        self.validate()

    def validate(self) -> None:
        if self.num_consumers < 1:
            raise ConfigError("num_consumers must be >= 1")
        if self.num_firms < 1:
            raise ConfigError("num_firms must be >= 1")
        if self.episode_length < 1:
            raise ConfigError("episode_length must be >= 1")
        if self.crra_eta == 1.0:
            raise ConfigError("crra_eta must differ from 1 (isoelastic utility pole)")
        if not 0.0 <= self.invest_fraction <= 1.0:
            raise ConfigError("invest_fraction must lie in [0, 1]")
        for name in ("consumer_discount", "firm_discount", "government_discount"):
            g = getattr(self, name)
            if not 0.0 < g <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1]")
        if self.welfare_mode not in WELFARE_MODES:
            raise ConfigError(
                f"welfare_mode must be one of {WELFARE_MODES}, got {self.welfare_mode!r}"
            )
        for a in self.production_alpha:
            if not 0.0 <= a <= 1.0:
                raise ConfigError("production_alpha entries must lie in [0, 1]")
        for k in self.initial_capital:
            if k <= 0.0:
                raise ConfigError("initial_capital entries must be > 0")
        if self.initial_consumer_budget < 0.0:
            raise ConfigError("initial_consumer_budget must be >= 0")
        if self.export_quota < 0.0:
            raise ConfigError("export_quota must be >= 0")
        for name in ("consumption_grid", "hours_grid", "price_grid", "wage_grid", "tax_grid"):
            grid = getattr(self, name)
            if len(grid) < 1:
                raise ConfigError(f"{name} must not be empty")
            steps = [b - a for a, b in zip(grid, grid[1:])]
            if any(s <= 0.0 for s in steps):
                raise ConfigError(f"{name} must be strictly increasing: {grid}")
            if any(v < 0.0 for v in grid):
                raise ConfigError(f"{name} values must be >= 0")
        for v in self.tax_grid:
            if v > 1.0:
                raise ConfigError("tax_grid values must lie in [0, 1]")
        if self.tax_grid[0] != 0.0:
            raise ConfigError("tax_grid must start at 0 (rates start at zero)")
        if len(self.tax_grid) > 1 and self.tax_grid[-1] != 1.0:
            raise ConfigError(
                f"tax_grid must span 0 to 1, got maximum {self.tax_grid[-1]}"
            )
        if self.initial_price not in self.price_grid:
            raise ConfigError(
                f"initial_price {self.initial_price} is not a price_grid point"
            )
        if self.initial_wage not in self.wage_grid:
            raise ConfigError(f"initial_wage {self.initial_wage} is not a wage_grid point")


@dataclass
class CurriculumConfig:
    """Training-step-indexed schedule parameters for the structured curriculum.

    Firms and the government each get a gate (training starts strictly after
    it) preceded by an action-annealing window of the given span; the work
    disutility ramps linearly over `theta_anneal_span`. Entropy regularization
    decays per type from its own training start.
    """

    enabled: bool = True
    t_start_firm: int = 5000
    t_start_government: int = 10000
    firm_anneal_span: int = 2500
    government_anneal_span: int = 2500
    theta_anneal_span: int = 5000
    entropy_initial: float = 0.5
    entropy_min_coeff: float = 0.1
    entropy_decay_rate: float = 10000.0
    # If False, the coefficient is max(exp(-t/decay), min_coeff) without the
    # entropy_initial factor.
    compose_entropy_initial: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in (
            "t_start_firm",
            "t_start_government",
            "firm_anneal_span",
            "government_anneal_span",
            "theta_anneal_span",
        ):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.entropy_decay_rate <= 0.0:
            raise ConfigError("entropy_decay_rate must be > 0")
        if not 0.0 <= self.entropy_min_coeff <= 1.0:
            raise ConfigError("entropy_min_coeff must lie in [0, 1]")
        if self.entropy_initial < 0.0:
            raise ConfigError("entropy_initial must be >= 0")
        if not self.enabled:
            return
        if not 0 < self.t_start_firm < self.t_start_government:
            raise ConfigError(
                "gates must be ordered: 0 < t_start_firm < t_start_government"
            )
        if self.firm_anneal_span > self.t_start_firm:
            raise ConfigError(
                "firm_anneal_span must complete by t_start_firm "
                "(full action range before firms train)"
            )
        if self.government_anneal_span > self.t_start_government:
            raise ConfigError(
                "government_anneal_span must complete by t_start_government"
            )


@dataclass
class TrainingConfig:
    """RL hyperparameters shared by the trainer and the analysis tools."""

    algo: str = "ppo"
    num_updates: int = 12500
    num_replicas: int = 128
    hidden_width: int = 128
    learning_rate: float = 0.001
    learning_rate_government: float = 0.0005
    ppo_clip: float = 0.2
    ppo_epochs: int = 2
    max_grad_norm: float = 2.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    huber_delta: float = 1.0
    value_loss_coeff: float = 1.0
    reward_scale_consumer: float = 5.0
    reward_scale_firm: float = 30000.0
    reward_scale_government: float = 1000.0
    checkpoint_interval: int = 500
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.algo not in ("ppo", "reinforce"):
            raise ConfigError(f"algo must be 'ppo' or 'reinforce', got {self.algo!r}")
        for name in ("num_updates", "num_replicas", "hidden_width", "ppo_epochs", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.checkpoint_interval < 1:
            raise ConfigError("checkpoint_interval must be >= 1")
        for name in (
            "learning_rate",
            "learning_rate_government",
            "ppo_clip",
            "max_grad_norm",
            "huber_delta",
        ):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be > 0")
        for name in (
            "reward_scale_consumer",
            "reward_scale_firm",
            "reward_scale_government",
        ):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be > 0")


@dataclass
class RunConfig:
    """The full configuration bundle for one training run."""

    economy: EconomyConfig = field(default_factory=EconomyConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)


def config_field_names(cls) -> tuple[str, ...]:
    return tuple(f.name for f in fields(cls))
