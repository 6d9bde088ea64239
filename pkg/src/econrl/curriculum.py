"""Training-step-indexed schedules: staged gates, action-range annealing,
work-disutility ramp, and entropy-coefficient decay.

Consumers train from step 0. Firm and government action ranges start pinned
to their initial values, widen stepwise over an annealing window that ends at
the type's gate, and the type starts training strictly after its gate. Each
widening step admits one more grid point per direction; firms widen
symmetrically around the pinned point, the government widens upward from
zero. The entropy coefficient decays per type on a clock that starts at that
type's gate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import CurriculumConfig, EconomyConfig
from .economy import AGENT_TYPES, head_sizes


def training_gates(cur: CurriculumConfig, t: int) -> dict[str, bool]:
    """Which agent types take optimizer updates at training step t."""
    if not cur.enabled:
        return {kind: True for kind in AGENT_TYPES}
    return {
        "consumer": True,
        "firm": t > cur.t_start_firm,
        "government": t > cur.t_start_government,
    }


def entropy_coeff(cur: CurriculumConfig, agent_type: str, t: int) -> float:
    """Entropy regularization weight for one type, decayed from its own start."""
    starts = {
        "consumer": 0,
        "firm": cur.t_start_firm if cur.enabled else 0,
        "government": cur.t_start_government if cur.enabled else 0,
    }
    t_rel = max(0, t - starts[agent_type])
    decayed = max(np.exp(-t_rel / cur.entropy_decay_rate), cur.entropy_min_coeff)
    if cur.compose_entropy_initial:
        return float(cur.entropy_initial * decayed)
    return float(decayed)


def theta_schedule(cur: CurriculumConfig, econ: EconomyConfig, t: int) -> float:
    """Work-disutility coefficient: linear ramp from 0 to the configured value."""
    theta = econ.labor_disutility_theta
    if not cur.enabled or cur.theta_anneal_span == 0 or t >= cur.theta_anneal_span:
        return theta
    return theta * max(t, 0) / cur.theta_anneal_span


def _widened(n: int, pin: int, t: int, start: int, span: int, symmetric: bool) -> np.ndarray:
    """Boolean mask over a grid of size n, pinned at `pin` before `start`,
    widened one grid point per direction per sub-interval, full from start+span."""
    mask = np.zeros(n, dtype=bool)
    if t >= start + span:
        mask[:] = True
        return mask
    if t < start:
        mask[pin] = True
        return mask
    steps_needed = max(pin, n - 1 - pin) if symmetric else n - 1 - pin
    if steps_needed == 0:
        mask[:] = True
        return mask
    s = 1 + int((t - start) * steps_needed / span)
    lo = max(0, pin - s) if symmetric else pin
    mask[lo : min(n - 1, pin + s) + 1] = True
    return mask


def action_masks(
    cur: CurriculumConfig, econ: EconomyConfig, agent_type: str, t: int
) -> list[np.ndarray]:
    """Per-head boolean masks (True = admissible) for one type at step t."""
    sizes = head_sizes(econ, agent_type)
    if agent_type == "consumer" or not cur.enabled:
        return [np.ones(n, dtype=bool) for n in sizes]
    if agent_type == "firm":
        start = cur.t_start_firm - cur.firm_anneal_span
        span = cur.firm_anneal_span
        price_pin = econ.price_grid.index(econ.initial_price)
        wage_pin = econ.wage_grid.index(econ.initial_wage)
        return [
            _widened(sizes[0], price_pin, t, start, span, symmetric=True),
            _widened(sizes[1], wage_pin, t, start, span, symmetric=True),
        ]
    if agent_type == "government":
        start = cur.t_start_government - cur.government_anneal_span
        span = cur.government_anneal_span
        zero_pin = econ.tax_grid.index(0.0) if 0.0 in econ.tax_grid else 0
        return [
            _widened(n, zero_pin, t, start, span, symmetric=False) for n in sizes
        ]
    raise ValueError(f"unknown agent type {agent_type!r}")


@dataclass
class CurriculumState:
    """Everything the trainer needs from the curriculum at one training step."""

    step: int
    theta: float
    gates: dict[str, bool]
    entropy_coeffs: dict[str, float]
    masks: dict[str, list[np.ndarray]]


def at_step(cur: CurriculumConfig, econ: EconomyConfig, t: int) -> CurriculumState:
    return CurriculumState(
        step=t,
        theta=theta_schedule(cur, econ, t),
        gates=training_gates(cur, t),
        entropy_coeffs={kind: entropy_coeff(cur, kind, t) for kind in AGENT_TYPES},
        masks={kind: action_masks(cur, econ, kind, t) for kind in AGENT_TYPES},
    )


def terminal_state(cur: CurriculumConfig, econ: EconomyConfig) -> CurriculumState:
    """Schedules frozen at their end-of-training values (full masks, final theta)."""
    horizon = max(cur.t_start_government + cur.government_anneal_span, cur.theta_anneal_span)
    state = at_step(cur, econ, horizon + 1)
    state.entropy_coeffs = {
        kind: (
            cur.entropy_initial * cur.entropy_min_coeff
            if cur.compose_entropy_initial
            else cur.entropy_min_coeff
        )
        for kind in AGENT_TYPES
    }
    return state


def schedule_rows(cur: CurriculumConfig, econ: EconomyConfig, steps) -> tuple[list[str], list[list]]:
    """(header, rows) table of the schedule for plotting or inspection."""
    header = ["step", "theta"]
    header += [f"entropy_{k}" for k in AGENT_TYPES]
    header += [f"gate_{k}" for k in AGENT_TYPES]
    for kind in AGENT_TYPES:
        for h, _ in enumerate(head_sizes(econ, kind)):
            header.append(f"mask_size_{kind}_{h}")
    rows = []
    for t in steps:
        state = at_step(cur, econ, t)
        row = [t, state.theta]
        row += [state.entropy_coeffs[k] for k in AGENT_TYPES]
        row += [int(state.gates[k]) for k in AGENT_TYPES]
        for kind in AGENT_TYPES:
            row += [int(m.sum()) for m in state.masks[kind]]
        rows.append(row)
    return header, rows
