"""Built-in MDPs: the two-state example, the inventory system, random MDPs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import FiniteMdp, QhDiscount, check_policy, deterministic_policy


def two_state() -> FiniteMdp:
    """State 1 offers a1 (reward 0, go to 2) and a2 (reward 2, stay or move
    with equal odds); state 2 offers only a1 (reward 17, back to 1)."""
    transition = [
        [0.0, 1.0],  # (1, a1)
        [0.5, 0.5],  # (1, a2)
        [1.0, 0.0],  # (2, a1)
    ]
    return FiniteMdp(("1", "2"), (("a1", "a2"), ("a1",)), transition, [0.0, 2.0, 17.0])


def two_state_policy(name: str) -> np.ndarray:
    """The stationary policies f (a1), g (a2) and h (uniform) at state 1."""
    mdp = two_state()
    if name == "f":
        return deterministic_policy(mdp, ["a1", "a1"])
    if name == "g":
        return deterministic_policy(mdp, ["a2", "a1"])
    if name == "h":
        return np.array([0.5, 0.5, 1.0])
    raise KeyError(f"unknown two-state policy {name!r}; expected f, g or h")


@dataclass(frozen=True)
class InventoryParams:
    capacity: int = 2
    unit_cost: float = 500.0
    holding_cost: float = 50.0
    price: float = 900.0
    demand_pmf: tuple[float, ...] = (0.3, 0.2, 0.5)

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be at least 1")
        pmf = np.asarray(self.demand_pmf, dtype=float)
        if pmf.ndim != 1 or pmf.size == 0 or np.any(pmf < 0) or abs(pmf.sum() - 1.0) > 1e-9:
            raise ValueError("demand_pmf must be a probability vector")


def inventory_reward(params: InventoryParams, stock: int, order: int, demand: int) -> float:
    """Profit of one day given the realised demand."""
    level = stock + order
    return (
        params.price * min(level, demand)
        - params.unit_cost * order
        - params.holding_cost * max(level - demand, 0)
    )


def inventory(params: InventoryParams | None = None) -> FiniteMdp:
    """Stock levels 0..M; at stock s one may order 0..M-s items.

    Demand is folded into the expected reward and the leftover-stock
    transition.
    """
    params = params or InventoryParams()
    m = params.capacity
    states = tuple(str(s) for s in range(m + 1))
    actions = tuple(tuple(str(a) for a in range(m - s + 1)) for s in range(m + 1))
    rows, rewards = [], []
    for s in range(m + 1):
        for a in range(m - s + 1):
            row = np.zeros(m + 1)
            r = 0.0
            for d, p in enumerate(params.demand_pmf):
                row[max(s + a - d, 0)] += p
                r += p * inventory_reward(params, s, a, d)
            rows.append(row)
            rewards.append(r)
    return FiniteMdp(states, actions, np.array(rows), np.array(rewards))


PAPER_INVENTORY_DISCOUNT = QhDiscount(sigma=0.3, gamma=0.9)

# Action-probability matrices as printed (rows are stock levels 0..2).
INVENTORY_POLICIES = {
    "mpe1": [[0.00, 0.53, 0.47], [0.53, 0.47], [1.00]],
    "mpe2": [[0.0, 0.8, 0.2], [0.0, 1.0], [1.0]],
    "mpe3": [[0.0, 0.3, 0.7], [1.0, 0.0], [1.0]],
    "optimal": [[0.0, 0.0, 1.0], [0.0, 1.0], [1.0]],
    "naive": [[0.0, 1.0, 0.0], [1.0, 0.0], [1.0]],
}


def inventory_policy(name: str, mdp: FiniteMdp | None = None) -> np.ndarray:
    mdp = mdp or inventory()
    try:
        rows = INVENTORY_POLICIES[name]
    except KeyError:
        raise KeyError(f"unknown inventory policy {name!r}; expected one of {sorted(INVENTORY_POLICIES)}") from None
    return check_policy(mdp, np.concatenate([np.asarray(r, dtype=float) for r in rows]))


def random_mdp(
    seed: int,
    n_states: int,
    max_actions: int,
    reward_range: tuple[float, float] = (-1.0, 1.0),
) -> FiniteMdp:
    """Random MDP with 1..max_actions actions per state and flat-Dirichlet rows."""
    if n_states < 1 or max_actions < 1:
        raise ValueError("n_states and max_actions must be at least 1")
    rng = np.random.default_rng(seed)
    counts = rng.integers(1, max_actions + 1, size=n_states)
    n_pairs = int(counts.sum())
    transition = rng.dirichlet(np.ones(n_states), size=n_pairs)
    reward = rng.uniform(reward_range[0], reward_range[1], size=n_pairs)
    states = tuple(f"s{i}" for i in range(n_states))
    actions = tuple(tuple(f"a{j}" for j in range(c)) for c in counts)
    return FiniteMdp(states, actions, transition, reward)


BUILTIN = {"two-state": two_state, "inventory": inventory}


def builtin(name: str) -> FiniteMdp:
    try:
        return BUILTIN[name]()
    except KeyError:
        raise KeyError(f"unknown environment {name!r}; expected one of {sorted(BUILTIN)}") from None


def named_policy(env: str, name: str) -> np.ndarray:
    if env == "two-state":
        return two_state_policy(name)
    if env == "inventory":
        return inventory_policy(name)
    raise KeyError(f"no named policies for environment {env!r}")
