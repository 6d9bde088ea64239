"""Fixed-width observation vectors per agent type.

Wide-ranging quantities (inventories, budgets, capital) are digit-encoded:
each base-10 digit of the rounded value becomes one feature in [0, 1],
least-significant digit first, saturating at all-nines on overflow. Prices,
wages, and taxes are divided by their grid maxima; time by the episode
length. Every feature lands in [-1, 1]; the only negative-capable feature is
the firm-budget sign bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import EconomyConfig
from .economy import WorldState

BUDGET_DIGITS = 7  # covers the 2.2M initial firm endowment
STOCK_DIGITS = 6  # inventories and capital


def encode_digits(value: float, num_digits: int) -> np.ndarray:
    """Digit features of a nonnegative scalar, least-significant first, /9."""
    if value < 0:
        raise ValueError(f"cannot digit-encode negative value {value}")
    return encode_digits_batch(np.array([value]), num_digits)[0]


def encode_digits_batch(values: np.ndarray, num_digits: int) -> np.ndarray:
    if (values < 0).any():
        raise ValueError("cannot digit-encode negative values")
    n = np.rint(values).astype(np.int64)
    overflow = n >= 10**num_digits
    powers = 10 ** np.arange(num_digits, dtype=np.int64)
    digits = (n[:, np.newaxis] // powers) % 10
    digits[overflow] = 9
    return digits / 9.0


def _block_table(blocks: list[tuple[str, int]]) -> dict[str, tuple[int, int]]:
    table, start = {}, 0
    for name, width in blocks:
        table[name] = (start, start + width)
        start += width
    return table


@dataclass
class ObsLayout:
    """Widths, offsets, and scale constants; a pure function of the config."""

    num_consumers: int
    num_firms: int
    episode_length: int
    budget_digits: int
    stock_digits: int
    price_scale: float
    wage_scale: float
    theta_scale: float
    global_width: int = field(init=False)
    consumer_width: int = field(init=False)
    firm_width: int = field(init=False)
    government_width: int = field(init=False)
    blocks: dict[str, dict[str, tuple[int, int]]] = field(init=False)

    def __post_init__(self):
        F = self.num_firms
        global_blocks = [
            ("time", 1),
            ("inventory_digits", F * self.stock_digits),
            ("prices", F),
            ("wages", F),
            ("overdemand", F),
            ("tax_rates", 2),
        ]
        self.global_width = sum(w for _, w in global_blocks)
        consumer_blocks = global_blocks + [
            ("budget_digits", self.budget_digits),
            ("work_disutility", 1),
        ]
        firm_blocks = global_blocks + [
            ("budget_sign", 1),
            ("budget_digits", self.budget_digits),
            ("capital_digits", self.stock_digits),
            ("identity_onehot", F),
            ("production_alpha", 1),
        ]
        self.consumer_width = sum(w for _, w in consumer_blocks)
        self.firm_width = sum(w for _, w in firm_blocks)
        self.government_width = self.global_width
        self.blocks = {
            "global": _block_table(global_blocks),
            "consumer": _block_table(consumer_blocks),
            "firm": _block_table(firm_blocks),
            "government": _block_table(global_blocks),
        }

    def widths(self) -> dict[str, int]:
        return {
            "consumer": self.consumer_width,
            "firm": self.firm_width,
            "government": self.government_width,
        }

    def to_json_dict(self) -> dict:
        return {
            "num_consumers": self.num_consumers,
            "num_firms": self.num_firms,
            "episode_length": self.episode_length,
            "budget_digits": self.budget_digits,
            "stock_digits": self.stock_digits,
            "scales": {
                "price": self.price_scale,
                "wage": self.wage_scale,
                "work_disutility": self.theta_scale,
            },
            "widths": self.widths() | {"global": self.global_width},
            "blocks": {k: dict(v) for k, v in self.blocks.items()},
        }


class ObsEncoder:
    """Builds observation vectors for every agent type from a WorldState."""

    def __init__(self, cfg: EconomyConfig):
        self.cfg = cfg
        self.layout = ObsLayout(
            num_consumers=cfg.num_consumers,
            num_firms=cfg.num_firms,
            episode_length=cfg.episode_length,
            budget_digits=BUDGET_DIGITS,
            stock_digits=STOCK_DIGITS,
            price_scale=max(cfg.price_grid) or 1.0,
            wage_scale=max(cfg.wage_grid) or 1.0,
            theta_scale=cfg.labor_disutility_theta or 1.0,
        )
        self._alpha = np.asarray(cfg.production_alpha)
        self._eye = np.eye(cfg.num_firms)

    def global_obs(self, state: WorldState) -> np.ndarray:
        return np.concatenate(
            [
                [state.t / self.cfg.episode_length],
                encode_digits_batch(state.inventory, STOCK_DIGITS).ravel(),
                state.price / self.layout.price_scale,
                state.wage / self.layout.wage_scale,
                state.overdemand.astype(float),
                [state.tax_income, state.tax_corporate],
            ]
        )

    def consumer_obs(self, state: WorldState, j: int) -> np.ndarray:
        if not 0 <= j < self.cfg.num_consumers:
            raise IndexError(f"consumer index {j} out of range")
        return self.consumer_obs_all(state)[j]

    def firm_obs(self, state: WorldState, i: int) -> np.ndarray:
        if not 0 <= i < self.cfg.num_firms:
            raise IndexError(f"firm index {i} out of range")
        return self.firm_obs_all(state)[i]

    def government_obs(self, state: WorldState) -> np.ndarray:
        return self.global_obs(state)

    def consumer_obs_all(self, state: WorldState) -> np.ndarray:
        C = self.cfg.num_consumers
        g = self.global_obs(state)
        theta = state.theta / self.layout.theta_scale
        return np.hstack(
            [
                np.broadcast_to(g, (C, g.shape[0])),
                encode_digits_batch(state.consumer_budget, BUDGET_DIGITS),
                np.full((C, 1), theta),
            ]
        )

    def firm_obs_all(self, state: WorldState) -> np.ndarray:
        F = self.cfg.num_firms
        g = self.global_obs(state)
        sign = np.where(state.firm_budget >= 0.0, 1.0, -1.0)
        return np.hstack(
            [
                np.broadcast_to(g, (F, g.shape[0])),
                sign[:, np.newaxis],
                encode_digits_batch(np.abs(state.firm_budget), BUDGET_DIGITS),
                encode_digits_batch(state.capital, STOCK_DIGITS),
                self._eye,
                self._alpha[:, np.newaxis],
            ]
        )
