"""Finite MDP data model, policies and the MDP/policy JSON formats.

Every table (Q-values, policies, softmax parameters, gradients) is a flat
float array with one entry per admissible (state, action) pair, laid out in
declaration order: all pairs of the first state, then the second, and so on.
``FiniteMdp`` owns that layout.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

ROW_SUM_TOL = 1e-9
THETA_CLIP = 500.0


class MdpFormatError(ValueError):
    """Raised when an MDP or policy document is malformed."""


@dataclass(frozen=True)
class QhDiscount:
    """Short-term factor ``sigma`` and long-term factor ``gamma``.

    ``sigma == 1`` is admitted and reduces to exponential discounting.
    """

    sigma: float
    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.sigma <= 1.0:
            raise ValueError(f"sigma must lie in [0, 1], got {self.sigma}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """Finite MDP with state-dependent admissible actions.

    ``transition`` has shape (n_pairs, n_states) and ``reward`` shape
    (n_pairs,), both indexed by pair in declaration order.  Rewards are the
    expected immediate rewards.
    """

    states: tuple[str, ...]
    actions: tuple[tuple[str, ...], ...]
    transition: np.ndarray
    reward: np.ndarray
    discount: QhDiscount | None = None
    # derived layout
    pairs: tuple[tuple[str, str], ...] = field(init=False, repr=False)
    pair_state: np.ndarray = field(init=False, repr=False)
    state_start: np.ndarray = field(init=False, repr=False)
    state_stop: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        states = tuple(str(s) for s in self.states)
        actions = tuple(tuple(str(a) for a in acts) for acts in self.actions)
        if len(actions) != len(states):
            raise ValueError("need one action list per state")
        if len(set(states)) != len(states):
            raise ValueError("duplicate state identifiers")
        pairs, pair_state, start, stop = [], [], [], []
        for i, (s, acts) in enumerate(zip(states, actions)):
            if len(set(acts)) != len(acts):
                raise ValueError(f"duplicate action identifiers at state {s!r}")
            start.append(len(pairs))
            for a in acts:
                pairs.append((s, a))
                pair_state.append(i)
            stop.append(len(pairs))
        transition = np.array(self.transition, dtype=float, copy=True)
        reward = np.array(self.reward, dtype=float, copy=True)
        if transition.shape != (len(pairs), len(states)):
            raise ValueError(
                f"transition must have shape {(len(pairs), len(states))}, got {transition.shape}"
            )
        if reward.shape != (len(pairs),):
            raise ValueError(f"reward must have shape {(len(pairs),)}, got {reward.shape}")
        for arr in (transition, reward):
            arr.flags.writeable = False
        set_ = object.__setattr__
        set_(self, "states", states)
        set_(self, "actions", actions)
        set_(self, "transition", transition)
        set_(self, "reward", reward)
        set_(self, "pairs", tuple(pairs))
        for name, values in (("pair_state", pair_state), ("state_start", start), ("state_stop", stop)):
            arr = np.array(values, dtype=np.int64)
            arr.flags.writeable = False
            set_(self, name, arr)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_pairs(self) -> int:
        return len(self.pairs)

    @property
    def r_max(self) -> float:
        return float(np.max(np.abs(self.reward))) if self.n_pairs else 0.0

    def state_index(self, s: str) -> int:
        return self.states.index(str(s))

    def index(self, s: str, a: str) -> int:
        """Flat pair index of ``(s, a)``."""
        i = self.state_index(s)
        try:
            return int(self.state_start[i]) + self.actions[i].index(str(a))
        except ValueError:
            raise KeyError(f"action {a!r} is not admissible at state {s!r}") from None

    def state_slice(self, i: int) -> slice:
        return slice(int(self.state_start[i]), int(self.state_stop[i]))

    def policy_matrix(self, pi: np.ndarray) -> np.ndarray:
        """(n_states, n_pairs) matrix with ``pi`` placed on each state's pairs."""
        out = np.zeros((self.n_states, self.n_pairs))
        out[self.pair_state, np.arange(self.n_pairs)] = pi
        return out

    def state_sum(self, values: np.ndarray) -> np.ndarray:
        """Per-state sums of a pair-indexed array."""
        return np.bincount(self.pair_state, weights=values, minlength=self.n_states)

    def state_max(self, values: np.ndarray) -> np.ndarray:
        return np.array([values[self.state_slice(i)].max() for i in range(self.n_states)])

    def table(self, values: Iterable[float]) -> dict[tuple[str, str], float]:
        return {pair: float(v) for pair, v in zip(self.pairs, values)}

    def from_table(self, table: Mapping[tuple[str, str], float]) -> np.ndarray:
        missing = [p for p in self.pairs if p not in table]
        if missing:
            s, a = missing[0]
            raise KeyError(f"missing entry for admissible pair ({s}, {a})")
        extra = [p for p in table if tuple(p) not in set(self.pairs)]
        if extra:
            raise KeyError(f"entry for non-admissible pair {extra[0]}")
        return np.array([float(table[p]) for p in self.pairs])


@dataclass(frozen=True)
class Violation:
    kind: str
    state: str
    action: str | None
    detail: str

    def __str__(self):
        where = self.state if self.action is None else f"({self.state}, {self.action})"
        return f"{self.kind} at {where}: {self.detail}"


def validate_mdp(mdp: FiniteMdp) -> list[Violation]:
    """Return the list of violations; an empty list means the MDP is valid."""
    out = []
    for i, s in enumerate(mdp.states):
        if mdp.state_stop[i] == mdp.state_start[i]:
            out.append(Violation("empty action set", s, None, "no admissible action"))
    for k, (s, a) in enumerate(mdp.pairs):
        row = mdp.transition[k]
        if not np.all(np.isfinite(row)):
            out.append(Violation("non-finite probability", s, a, repr(row.tolist())))
            continue
        if np.any(row < 0):
            out.append(Violation("negative probability", s, a, f"min entry {row.min():.3g}"))
        total = row.sum()
        if abs(total - 1.0) > ROW_SUM_TOL:
            out.append(Violation("row sum", s, a, f"sums to {total:.12g}"))
        if not math.isfinite(mdp.reward[k]):
            out.append(Violation("non-finite reward", s, a, repr(float(mdp.reward[k]))))
    return out


def check_policy(mdp: FiniteMdp, pi: np.ndarray, tol: float = ROW_SUM_TOL) -> np.ndarray:
    """Validate a pair-indexed probability vector and return it as an array."""
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (mdp.n_pairs,):
        raise ValueError(f"policy must have shape ({mdp.n_pairs},), got {pi.shape}")
    if not np.all(np.isfinite(pi)) or np.any(pi < 0):
        raise ValueError("policy entries must be finite and non-negative")
    sums = mdp.state_sum(pi)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if bad.size:
        s = mdp.states[bad[0]]
        raise ValueError(f"policy at state {s!r} sums to {sums[bad[0]]:.12g}")
    return pi


def softmax_policy(mdp: FiniteMdp, theta: np.ndarray) -> np.ndarray:
    """Per-state softmax over admissible actions, max-shifted for stability."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (mdp.n_pairs,):
        raise ValueError(f"theta must have shape ({mdp.n_pairs},), got {theta.shape}")
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta has non-finite entries")
    shifted = theta - mdp.state_max(theta)[mdp.pair_state]
    e = np.exp(shifted)
    return e / mdp.state_sum(e)[mdp.pair_state]


def policy_support(mdp: FiniteMdp, pi: np.ndarray, tol: float = 1e-6) -> list[tuple[str, ...]]:
    """Actions with probability above ``tol``, per state."""
    return [
        tuple(a for a, p in zip(mdp.actions[i], pi[mdp.state_slice(i)]) if p > tol)
        for i in range(mdp.n_states)
    ]


def deterministic_policy(mdp: FiniteMdp, choice: Mapping[str, str] | Sequence[str]) -> np.ndarray:
    """Policy putting all mass on one action per state."""
    if not isinstance(choice, Mapping):
        choice = dict(zip(mdp.states, choice))
    pi = np.zeros(mdp.n_pairs)
    for s in mdp.states:
        pi[mdp.index(s, choice[s])] = 1.0
    return pi


# --- JSON interchange --------------------------------------------------------

_TOP_KEYS = {"states", "actions", "transitions", "rewards", "discount"}


def _pair_key(s: str, a: str) -> str:
    return f"{s}|{a}"


def _split_key(key: str, where: str) -> tuple[str, str]:
    parts = key.split("|")
    if len(parts) != 2:
        raise MdpFormatError(f"{where}: key {key!r} is not of the form 'state|action'")
    return parts[0], parts[1]


def _reject_unknown(obj: Mapping, allowed: set, where: str):
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise MdpFormatError(f"{where}: unknown field {unknown[0]!r}")


def _require(obj: Mapping, key: str, where: str):
    if key not in obj:
        raise MdpFormatError(f"{where}: missing field {key!r}")
    return obj[key]


def mdp_to_dict(mdp: FiniteMdp) -> dict:
    transitions = []
    for k, (s, a) in enumerate(mdp.pairs):
        nxt = [
            {"s2": s2, "p": float(p)}
            for s2, p in zip(mdp.states, mdp.transition[k])
            if p != 0.0
        ]
        transitions.append({"s": s, "a": a, "next": nxt})
    doc = {
        "states": list(mdp.states),
        "actions": {s: list(acts) for s, acts in zip(mdp.states, mdp.actions)},
        "transitions": transitions,
        "rewards": {_pair_key(s, a): float(r) for (s, a), r in zip(mdp.pairs, mdp.reward)},
    }
    if mdp.discount is not None:
        doc["discount"] = {"sigma": mdp.discount.sigma, "gamma": mdp.discount.gamma}
    return doc


def mdp_from_dict(doc: Mapping) -> FiniteMdp:
    if not isinstance(doc, Mapping):
        raise MdpFormatError("MDP document must be a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "mdp")
    states = [str(s) for s in _require(doc, "states", "mdp")]
    for s in states:
        if "|" in s:
            raise MdpFormatError(f"states: identifier {s!r} contains '|'")
    actions_doc = _require(doc, "actions", "mdp")
    _reject_unknown(actions_doc, set(states), "actions")
    actions = []
    for s in states:
        acts = [str(a) for a in _require(actions_doc, s, "actions")]
        if any("|" in a for a in acts):
            raise MdpFormatError(f"actions.{s}: identifier contains '|'")
        actions.append(tuple(acts))
    pairs = [(s, a) for s, acts in zip(states, actions) for a in acts]
    pair_pos = {p: k for k, p in enumerate(pairs)}
    state_pos = {s: i for i, s in enumerate(states)}

    transition = np.zeros((len(pairs), len(states)))
    seen = set()
    for j, entry in enumerate(_require(doc, "transitions", "mdp")):
        where = f"transitions[{j}]"
        _reject_unknown(entry, {"s", "a", "next"}, where)
        key = (str(_require(entry, "s", where)), str(_require(entry, "a", where)))
        if key not in pair_pos:
            raise MdpFormatError(f"{where}: ({key[0]}, {key[1]}) is not an admissible pair")
        if key in seen:
            raise MdpFormatError(f"{where}: duplicate row for ({key[0]}, {key[1]})")
        seen.add(key)
        for m, nxt in enumerate(_require(entry, "next", where)):
            w = f"{where}.next[{m}]"
            _reject_unknown(nxt, {"s2", "p"}, w)
            s2 = str(_require(nxt, "s2", w))
            if s2 not in state_pos:
                raise MdpFormatError(f"{w}: unknown state {s2!r}")
            transition[pair_pos[key], state_pos[s2]] += float(_require(nxt, "p", w))
    for s, a in pairs:
        if (s, a) not in seen:
            raise MdpFormatError(f"transitions: missing row for ({s}, {a})")
    sums = transition.sum(axis=1)
    for k, total in enumerate(sums):
        if abs(total - 1.0) > ROW_SUM_TOL:
            s, a = pairs[k]
            raise MdpFormatError(f"transitions: row ({s}, {a}) sums to {total:.12g}")

    rewards_doc = _require(doc, "rewards", "mdp")
    reward = np.zeros(len(pairs))
    for key, value in rewards_doc.items():
        pair = _split_key(key, "rewards")
        if pair not in pair_pos:
            raise MdpFormatError(f"rewards: {key!r} is not an admissible pair")
        reward[pair_pos[pair]] = float(value)
    missing = [f"{s}|{a}" for s, a in pairs if _pair_key(s, a) not in rewards_doc]
    if missing:
        raise MdpFormatError(f"rewards: missing entry {missing[0]!r}")

    discount = None
    if "discount" in doc:
        d = doc["discount"]
        _reject_unknown(d, {"sigma", "gamma"}, "discount")
        try:
            discount = QhDiscount(float(_require(d, "sigma", "discount")), float(_require(d, "gamma", "discount")))
        except ValueError as exc:
            raise MdpFormatError(f"discount: {exc}") from None
    return FiniteMdp(tuple(states), tuple(actions), transition, reward, discount)


def dumps_mdp(mdp: FiniteMdp) -> str:
    return json.dumps(mdp_to_dict(mdp), indent=2) + "\n"


def save_mdp(mdp: FiniteMdp, path: str | Path):
    Path(path).write_text(dumps_mdp(mdp))


def load_mdp(path: str | Path) -> FiniteMdp:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MdpFormatError(f"{path}: invalid JSON ({exc})") from None
    return mdp_from_dict(doc)


def policy_to_dict(mdp: FiniteMdp, pi: np.ndarray) -> dict:
    return {"probs": {_pair_key(s, a): float(p) for (s, a), p in zip(mdp.pairs, pi)}}


def policy_from_dict(mdp: FiniteMdp, doc: Mapping) -> np.ndarray:
    if not isinstance(doc, Mapping):
        raise MdpFormatError("policy document must be a JSON object")
    _reject_unknown(doc, {"probs"}, "policy")
    probs = _require(doc, "probs", "policy")
    table = {}
    for key, value in probs.items():
        pair = _split_key(key, "policy.probs")
        if pair not in set(mdp.pairs):
            raise MdpFormatError(f"policy.probs: {key!r} is not an admissible pair")
        table[pair] = float(value)
    missing = [p for p in mdp.pairs if p not in table]
    if missing:
        raise MdpFormatError(f"policy.probs: missing entry '{missing[0][0]}|{missing[0][1]}'")
    pi = np.array([table[p] for p in mdp.pairs])
    try:
        return check_policy(mdp, pi)
    except ValueError as exc:
        raise MdpFormatError(f"policy.probs: {exc}") from None


def load_policy(mdp: FiniteMdp, path: str | Path) -> np.ndarray:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise MdpFormatError(f"{path}: invalid JSON ({exc})") from None
    return policy_from_dict(mdp, doc)


def table_csv(mdp: FiniteMdp, values: np.ndarray) -> str:
    """``state,action,value`` CSV with 12 significant digits."""
    lines = ["state,action,value"]
    lines += [f"{s},{a},{float(v):.12g}" for (s, a), v in zip(mdp.pairs, values)]
    return "\n".join(lines) + "\n"
