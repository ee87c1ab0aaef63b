"""Exact model-based evaluation under quasi-hyperbolic discounting."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .mdp import FiniteMdp, QhDiscount, check_policy, policy_support, softmax_policy

SUPPORT_TOL = 1e-6


def pair_chain(mdp: FiniteMdp, pi: np.ndarray) -> np.ndarray:
    """Pair-to-pair kernel: ``M[i, j] = P(s_j | i) * pi(j)``."""
    return mdp.transition @ mdp.policy_matrix(pi)


def state_chain(mdp: FiniteMdp, pi: np.ndarray) -> np.ndarray:
    """State-to-state kernel under ``pi``."""
    return mdp.policy_matrix(pi) @ mdp.transition


def eval_q_exp(mdp: FiniteMdp, pi: np.ndarray, gamma: float) -> np.ndarray:
    """Exponentially discounted Q-values by a direct linear solve."""
    if not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    a = np.eye(mdp.n_pairs) - gamma * pair_chain(mdp, pi)
    return np.linalg.solve(a, mdp.reward)


def eval_q_qh(mdp: FiniteMdp, pi: np.ndarray, disc: QhDiscount) -> np.ndarray:
    """QH Q-values: the immediate reward at full weight, every later one scaled by sigma."""
    q_exp = eval_q_exp(mdp, pi, disc.gamma)
    return (1.0 - disc.sigma) * mdp.reward + disc.sigma * q_exp


def state_average(mdp: FiniteMdp, q: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """``<pi(.|s), q(s, .)>`` per state."""
    return mdp.state_sum(pi * q)


def advantage(mdp: FiniteMdp, q: np.ndarray, pi: np.ndarray) -> np.ndarray:
    return q - state_average(mdp, q, pi)[mdp.pair_state]


def bellman_qh(mdp: FiniteMdp, pi: np.ndarray, disc: QhDiscount, w: np.ndarray) -> np.ndarray:
    """One application of the policy's QH Bellman operator to ``w``."""
    inner = w - (1.0 - disc.sigma) * mdp.reward
    return mdp.reward + disc.gamma * (pair_chain(mdp, pi) @ inner)


@dataclass(frozen=True)
class GreedySet:
    """Per-state argmax action sets of a Q-table, as pair indices."""

    argmax: tuple[tuple[int, ...], ...]
    tie_tol: float

    def actions(self, mdp: FiniteMdp) -> list[tuple[str, ...]]:
        return [tuple(mdp.pairs[k][1] for k in ks) for ks in self.argmax]

    def contains(self, k: int) -> bool:
        return any(k in ks for ks in self.argmax)


def greedy_set(mdp: FiniteMdp, w: np.ndarray, tie_tol: float = 0.0) -> GreedySet:
    if tie_tol < 0:
        raise ValueError("tie_tol must be non-negative")
    out = []
    for i in range(mdp.n_states):
        sl = mdp.state_slice(i)
        vals = w[sl]
        best = vals.max()
        out.append(tuple(int(sl.start + j) for j in np.flatnonzero(vals >= best - tie_tol)))
    return GreedySet(tuple(out), tie_tol)


def occupancy(mdp: FiniteMdp, pi: np.ndarray, gamma: float, mu: np.ndarray) -> np.ndarray:
    """Normalized discounted state occupancy ``(1 - gamma) sum_n gamma^n Pr(s_n = s)``."""
    mu = np.asarray(mu, dtype=float)
    a = np.eye(mdp.n_states) - gamma * state_chain(mdp, pi).T
    return np.linalg.solve(a, (1.0 - gamma) * mu)


def qh_objective(mdp: FiniteMdp, pi: np.ndarray, disc: QhDiscount, mu: np.ndarray) -> float:
    """``E_{s~mu, a~pi} Q^{sigma,gamma}_pi(s, a)``."""
    q = eval_q_qh(mdp, pi, disc)
    return float(np.dot(np.asarray(mu, dtype=float), state_average(mdp, q, pi)))


def qh_gradient_terms(
    mdp: FiniteMdp,
    pi: np.ndarray,
    disc: QhDiscount,
    mu: np.ndarray,
    adv_exp: np.ndarray,
) -> np.ndarray:
    """Assemble the softmax gradient from an exponential-discount advantage table.

    Shared by the exact gradient and the critic-based actor of the vanilla
    baseline, which plugs in its own advantage estimate.
    """
    mu = np.asarray(mu, dtype=float)
    sigma, gamma = disc.sigma, disc.gamma
    adv0 = advantage(mdp, mdp.reward, pi)
    d = occupancy(mdp, pi, gamma, mu)
    s = mdp.pair_state
    return (1.0 - sigma) * mu[s] * pi * adv0 + sigma / (1.0 - gamma) * d[s] * pi * adv_exp


def qh_value_gradient(mdp: FiniteMdp, theta: np.ndarray, disc: QhDiscount, mu: np.ndarray) -> np.ndarray:
    """Exact gradient of ``qh_objective`` with respect to softmax parameters."""
    pi = softmax_policy(mdp, theta)
    adv_exp = advantage(mdp, eval_q_exp(mdp, pi, disc.gamma), pi)
    return qh_gradient_terms(mdp, pi, disc, mu, adv_exp)


def default_tol(q: np.ndarray, rel: float = 1e-6) -> float:
    return rel * (1.0 + float(np.max(np.abs(q))))


@dataclass(frozen=True)
class MpeReport:
    verdict: bool
    margins: np.ndarray
    q: np.ndarray
    tol: float
    support: list[tuple[str, ...]]

    def deviating_states(self, mdp: FiniteMdp) -> list[str]:
        return [s for s, m in zip(mdp.states, self.margins) if m > self.tol]


def is_mpe(
    mdp: FiniteMdp,
    pi: np.ndarray,
    disc: QhDiscount,
    tol: float | None = None,
    support_tol: float = SUPPORT_TOL,
) -> MpeReport:
    """Check that every supported action is greedy for the policy's own QH Q-values.

    ``margins[s]`` is the best value at ``s`` minus the worst supported value;
    the verdict is true iff no margin exceeds ``tol`` (default
    ``1e-6 * (1 + max|Q|)``).
    """
    pi = check_policy(mdp, pi, tol=1e-6)
    q = eval_q_qh(mdp, pi, disc)
    if tol is None:
        tol = default_tol(q)
    margins = np.empty(mdp.n_states)
    for i in range(mdp.n_states):
        sl = mdp.state_slice(i)
        supported = q[sl][pi[sl] > support_tol]
        margins[i] = q[sl].max() - supported.min()
    verdict = bool(np.all(margins <= tol))
    return MpeReport(verdict, margins, q, float(tol), policy_support(mdp, pi, support_tol))


def naive_deviation(mdp: FiniteMdp, pi: np.ndarray, disc: QhDiscount, tie_tol: float = 1e-9) -> np.ndarray:
    """Deterministic policy greedy for ``pi``'s QH Q-values; ties go to the first action."""
    q = eval_q_qh(mdp, pi, disc)
    tol = tie_tol * (1.0 + float(np.max(np.abs(q))))
    out = np.zeros(mdp.n_pairs)
    for ks in greedy_set(mdp, q, tol).argmax:
        out[ks[0]] = 1.0
    return out


def vertex_selections(g: GreedySet, cap: int | None = None) -> tuple[list[tuple[int, ...]], bool]:
    """Deterministic selections from a greedy set, lexicographic, truncated at ``cap``."""
    it = itertools.product(*g.argmax)
    if cap is None:
        return list(it), False
    sels = list(itertools.islice(it, cap + 1))
    return sels[:cap], len(sels) > cap


def polish_mpe(
    mdp: FiniteMdp,
    pi: np.ndarray,
    disc: QhDiscount,
    support_tol: float = 1e-3,
) -> np.ndarray:
    """Nearby policy that makes each state's supported actions exactly indifferent.

    Keeps the support of ``pi`` and moves the mixing weights of states with
    more than one supported action, starting from ``pi`` (least squares on
    the indifference conditions).  Meant for turning rounded, printed
    equilibria back into exact ones.
    """
    pi = check_policy(mdp, pi, tol=1e-6)
    supports = [
        [k for k in range(sl.start, sl.stop) if pi[k] > support_tol]
        for sl in (mdp.state_slice(i) for i in range(mdp.n_states))
    ]
    free = [(i, sup) for i, sup in enumerate(supports) if len(sup) > 1]
    if not free:
        return pi.copy()

    def unpack(x):
        out = np.zeros(mdp.n_pairs)
        for i, sup in enumerate(supports):
            out[sup[0]] = 1.0 if len(sup) == 1 else 0.0
        j = 0
        for i, sup in free:
            head = x[j:j + len(sup) - 1]
            j += len(sup) - 1
            out[sup[:-1]] = head
            out[sup[-1]] = 1.0 - head.sum()
        return out

    def residual(x):
        q = eval_q_qh(mdp, unpack(x), disc)
        return np.concatenate([q[sup[:-1]] - q[sup[-1]] for _, sup in free])

    x0 = np.concatenate([pi[sup[:-1]] / pi[sup].sum() for _, sup in free])
    fit = least_squares(residual, x0, bounds=(0.0, 1.0), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    return unpack(fit.x)
