"""Critic-actor baseline whose actor ascends the QH value gradient.

The critic is the same sampled QH temporal-difference update as in
``learning``.  The actor step is the softmax gradient of
``E_{s~mu} V^{sigma,gamma}(s)`` assembled from the critic, with the
exponential-discount Q recovered as ``(W - (1 - sigma) r) / sigma`` and the
discounted occupancy solved exactly from the model.
"""
from __future__ import annotations

import numpy as np

from . import _kernels
from .learning import ActorCriticState, RunConfig, RunResult, StepsizeSchedule, _iterate, _single
from .mdp import THETA_CLIP, FiniteMdp, QhDiscount

# The gradient carries reward units (hundreds on the inventory instance), so a
# unit first step would saturate the softmax in one sweep.
DEFAULT_PG_BETA = StepsizeSchedule(3e-3, 0.6, 1.0)
DEFAULT_PG_CONFIG = RunConfig(beta=DEFAULT_PG_BETA, max_iters=1_000_000)


def _check(mdp: FiniteMdp, disc: QhDiscount, mu) -> np.ndarray:
    if disc.sigma == 0.0:
        raise ValueError("the gradient baseline needs sigma > 0 to recover Q^gamma from the critic")
    mu = np.full(mdp.n_states, 1.0 / mdp.n_states) if mu is None else np.asarray(mu, dtype=float)
    if mu.shape != (mdp.n_states,) or np.any(mu < 0) or abs(mu.sum() - 1.0) > 1e-9:
        raise ValueError("mu must be a probability vector over states")
    return mu


def pg_direction(mdp: FiniteMdp, disc: QhDiscount, w: np.ndarray, pi: np.ndarray, mu=None) -> np.ndarray:
    """Actor direction for critic ``w`` and policy ``pi`` (no step size)."""
    mu = _check(mdp, disc, mu)
    out = np.empty(mdp.n_pairs)
    _kernels._pg_direction(
        mdp.transition, mdp.reward, mdp.pair_state, mdp.state_start, mdp.state_stop,
        float(disc.sigma), float(disc.gamma), np.asarray(w, dtype=float),
        np.asarray(pi, dtype=float), mu, out,
    )
    return out


def pg_sweep_step(
    state: ActorCriticState,
    mdp: FiniteMdp,
    disc: QhDiscount,
    mu,
    alpha_n: float,
    beta_n: float,
    clip: float = THETA_CLIP,
) -> ActorCriticState:
    mu = _check(mdp, disc, mu)
    return _single(state, mdp, disc, alpha_n, beta_n, clip, _kernels.MODE_PG, mu)


def pg_run(mdp: FiniteMdp, disc: QhDiscount, mu=None, config: RunConfig = DEFAULT_PG_CONFIG) -> RunResult:
    """Same loop, stopping rule and verification as ``learning.run``; ``mu`` defaults to uniform."""
    mu = _check(mdp, disc, mu)
    return _iterate(mdp, disc, config, _kernels.MODE_PG, mu)
