"""Synchronous two-timescale critic-actor learning of Markov perfect equilibria.

Each sweep draws, for every admissible (s, a), a successor ``s'`` and a
next action ``a'`` from the current softmax policy, then moves the critic
``W`` along the sampled QH temporal difference (small steps ``alpha``) and
the actor ``theta`` along ``W(s, a) - <pi(.|s), W(s, .)>`` (larger steps
``beta``).
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .evaluation import MpeReport, advantage, default_tol, is_mpe
from .mdp import THETA_CLIP, FiniteMdp, QhDiscount, softmax_policy

log = logging.getLogger(__name__)

_NO_MU = np.zeros(1)


@dataclass(frozen=True)
class StepsizeSchedule:
    """``scale / (offset + n) ** exponent``."""

    scale: float = 1.0
    exponent: float = 1.0
    offset: float = 1.0

    def __post_init__(self):
        if self.scale <= 0 or self.exponent <= 0 or self.offset < 1:
            raise ValueError("need scale > 0, exponent > 0 and offset >= 1")

    def __call__(self, n):
        return self.scale / (self.offset + np.asarray(n, dtype=float)) ** self.exponent

    @classmethod
    def stretched(cls, exponent: float, horizon: float) -> StepsizeSchedule:
        """``(horizon / (horizon + n)) ** exponent``: starts at 1, decays after ``horizon`` sweeps."""
        return cls(scale=horizon**exponent, exponent=exponent, offset=horizon)


DEFAULT_ALPHA = StepsizeSchedule.stretched(1.0, 10.0)
DEFAULT_BETA = StepsizeSchedule(1.0, 0.7, 1.0)


def validate_schedules(alpha: StepsizeSchedule, beta: StepsizeSchedule) -> list[str]:
    """Violated stepsize conditions for the power family; empty when all hold."""
    out = []
    for name, sch in (("alpha", alpha), ("beta", beta)):
        first = float(sch(0))
        if first > 1.0:
            out.append(f"{name}: first value {first:.6g} exceeds 1")
        if sch.exponent > 1.0:
            out.append(f"{name}: not divergent (exponent {sch.exponent} > 1)")
        if sch.exponent <= 0.5:
            out.append(f"{name}: not square-summable (exponent {sch.exponent} <= 1/2)")
    if alpha.exponent <= beta.exponent:
        out.append(
            f"timescale separation: alpha/beta does not vanish "
            f"(alpha exponent {alpha.exponent} <= beta exponent {beta.exponent})"
        )
    return out


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ActorCriticState:
    """Critic ``w``, actor ``theta`` and the sweep counter.

    The random stream is counter based, so ``(seed, n)`` is its whole state.
    """

    w: np.ndarray
    theta: np.ndarray
    n: int = 0
    seed: int = 0

    @classmethod
    def initial(cls, mdp: FiniteMdp, seed: int, w0=None, theta0=None) -> ActorCriticState:
        w = np.zeros(mdp.n_pairs) if w0 is None else np.array(w0, dtype=float)
        theta = np.zeros(mdp.n_pairs) if theta0 is None else np.array(theta0, dtype=float)
        if w.shape != (mdp.n_pairs,) or theta.shape != (mdp.n_pairs,):
            raise ValueError("w0 and theta0 must have one entry per admissible pair")
        return cls(w, theta, 0, int(seed))

    def policy(self, mdp: FiniteMdp) -> np.ndarray:
        return softmax_policy(mdp, self.theta)


def sample_transition(mdp: FiniteMdp, s: str, a: str, rng: np.random.Generator) -> str:
    """Successor state by inverse CDF over the stored transition row."""
    row = mdp.transition[mdp.index(s, a)]
    return mdp.states[_kernels.inverse_cdf(row, 0, row.size, rng.random())]


def _advance(state, mdp, disc, n_sweeps, alpha, beta, clip, mode, mu):
    w = state.w.copy()
    theta = state.theta.copy()
    stats = _kernels.run_sweeps(
        mdp.transition, mdp.reward, mdp.pair_state, mdp.state_start, mdp.state_stop,
        float(disc.sigma), float(disc.gamma), w, theta, state.seed, state.n, n_sweeps,
        float(alpha.scale), float(alpha.offset), float(alpha.exponent),
        float(beta.scale), float(beta.offset), float(beta.exponent),
        float(clip), mode, mu,
    )
    return ActorCriticState(w, theta, state.n + n_sweeps, state.seed), stats


def sweep_step(
    state: ActorCriticState,
    mdp: FiniteMdp,
    disc: QhDiscount,
    alpha_n: float,
    beta_n: float,
    clip: float = THETA_CLIP,
) -> ActorCriticState:
    """One synchronous sweep with explicit stepsizes."""
    return _single(state, mdp, disc, alpha_n, beta_n, clip, _kernels.MODE_MPE, _NO_MU)


def _single(state, mdp, disc, alpha_n, beta_n, clip, mode, mu):
    if not (0 <= alpha_n <= 1 and 0 <= beta_n <= 1):
        raise ValueError("stepsizes must lie in [0, 1]")
    # scale / (offset + n) ** 0 is the constant step
    alpha = _Fixed(alpha_n)
    beta = _Fixed(beta_n)
    new, _ = _advance(state, mdp, disc, 1, alpha, beta, clip, mode, mu)
    return new


@dataclass(frozen=True)
class _Fixed:
    scale: float
    offset: float = 1.0
    exponent: float = 0.0


@dataclass(frozen=True)
class WindowStats:
    """Diagnostics for the window of sweeps ending at sweep ``n``.

    ``critic_drift``: stepsize-normalised mean critic increment over the
    window, relative to ``1 + max|W|``.  ``actor_shortfall``: largest
    ``pi(a|s) * (max_a' W(s, a') - W(s, a))``, same scaling; for the
    gradient baseline it is the largest component of the actor direction.
    """

    n: int
    critic_drift: float
    actor_shortfall: float
    w_sup: float
    clips: int


def actor_shortfall(mdp: FiniteMdp, w: np.ndarray, pi: np.ndarray) -> float:
    best = mdp.state_max(w)[mdp.pair_state]
    return float(np.max(pi * (best - w)))


def _actor_stat(mdp, disc, state, mode, mu):
    pi = state.policy(mdp)
    if mode == _kernels.MODE_MPE:
        return actor_shortfall(mdp, state.w, pi)
    out = np.empty(mdp.n_pairs)
    _kernels._pg_direction(
        mdp.transition, mdp.reward, mdp.pair_state, mdp.state_start, mdp.state_stop,
        float(disc.sigma), float(disc.gamma), state.w, pi, mu, out,
    )
    return float(np.max(np.abs(out)))


@dataclass(frozen=True)
class RunConfig:
    alpha: StepsizeSchedule = DEFAULT_ALPHA
    beta: StepsizeSchedule = DEFAULT_BETA
    max_iters: int = 200_000
    window: int = 20_000
    eps_conv: float = 2e-3
    eps_actor: float = 2e-4
    patience: int = 2
    seed: int = 0
    w0: np.ndarray | None = None
    theta0: np.ndarray | None = None
    clip: float = THETA_CLIP
    verify_rel_tol: float = 1e-3
    stop_on_convergence: bool = False
    log_every: int = 0


@dataclass(eq=False)
class RunResult:
    state: ActorCriticState
    converged: bool
    history: list[WindowStats]
    policy: np.ndarray
    verification: MpeReport
    iterations: int
    clips: int = 0
    w_sup: float = 0.0
    converged_at: int | None = None
    mode: str = "mpe"

    @property
    def w(self) -> np.ndarray:
        return self.state.w


def check_config(config: RunConfig):
    problems = validate_schedules(config.alpha, config.beta)
    if problems:
        raise ScheduleError("; ".join(problems))
    if config.window < 1 or config.patience < 1 or config.max_iters < 0:
        raise ValueError("window and patience must be positive, max_iters non-negative")


def _iterate(mdp, disc, config, mode, mu) -> RunResult:
    check_config(config)
    state = ActorCriticState.initial(mdp, config.seed, config.w0, config.theta0)
    history: list[WindowStats] = []
    clips = 0
    w_sup = float(np.max(np.abs(state.w))) if mdp.n_pairs else 0.0
    streak = 0
    converged_at = None
    while state.n < config.max_iters:
        k = min(config.window, config.max_iters - state.n)
        prev = state.w
        state, (sum_a, _, c, sup) = _advance(
            state, mdp, disc, k, config.alpha, config.beta, config.clip, mode, mu
        )
        clips += c
        w_sup = max(w_sup, sup)
        scale = 1.0 + float(np.max(np.abs(state.w)))
        drift = float(np.max(np.abs(state.w - prev))) / sum_a / scale
        short = _actor_stat(mdp, disc, state, mode, mu) / scale
        stats = WindowStats(state.n, drift, short, sup, c)
        history.append(stats)
        if config.log_every and len(history) % config.log_every == 0:
            log.info("n=%d critic_drift=%.3e actor_shortfall=%.3e clips=%d", state.n, drift, short, c)
        if k == config.window and drift <= config.eps_conv and short <= config.eps_actor:
            streak += 1
        else:
            streak = 0
        if streak == config.patience:
            converged_at = state.n
        elif streak == 0:
            converged_at = None
        if converged_at is not None and config.stop_on_convergence:
            break
    pi = state.policy(mdp)
    q_report = is_mpe(mdp, pi, disc, tol=0.0)
    report = is_mpe(mdp, pi, disc, tol=default_tol(q_report.q, config.verify_rel_tol))
    return RunResult(
        state=state,
        converged=converged_at is not None,
        history=history,
        policy=pi,
        verification=report,
        iterations=state.n,
        clips=clips,
        w_sup=w_sup,
        converged_at=converged_at,
        mode="mpe" if mode == _kernels.MODE_MPE else "pg",
    )


def run(mdp: FiniteMdp, disc: QhDiscount, config: RunConfig = RunConfig()) -> RunResult:
    """Iterate sweeps until convergence or ``max_iters``; verify the final policy exactly.

    A run counts as converged when the last ``patience`` windows of
    ``window`` sweeps all have ``critic_drift <= eps_conv`` and
    ``actor_shortfall <= eps_actor`` (see ``WindowStats``); ``converged_at`` is the sweep where that streak
    reached ``patience``.  With ``stop_on_convergence`` the run ends there.
    """
    return _iterate(mdp, disc, config, _kernels.MODE_MPE, _NO_MU)


def frozen_critic_run(
    mdp: FiniteMdp,
    w: np.ndarray,
    beta: StepsizeSchedule = DEFAULT_BETA,
    iters: int = 10_000,
    theta0: np.ndarray | None = None,
) -> np.ndarray:
    """Actor updates alone against a fixed critic ``w``; returns the final policy.

    No sampling is involved, so there is no seed.
    """
    w = np.asarray(w, dtype=float)
    theta = np.zeros(mdp.n_pairs) if theta0 is None else np.array(theta0, dtype=float)
    for n in range(iters):
        pi = softmax_policy(mdp, theta)
        theta = np.clip(theta + float(beta(n)) * advantage(mdp, w, pi), -THETA_CLIP, THETA_CLIP)
    return softmax_policy(mdp, theta)


@dataclass(eq=False)
class Equilibrium:
    policy: np.ndarray
    q: np.ndarray
    seeds: list[int] = field(default_factory=list)


@dataclass(eq=False)
class MultiRestartResult:
    seeds: list[int]
    runs: list[RunResult]
    equilibria: list[Equilibrium]


def distinct_equilibria(runs: list[RunResult], seeds: list[int], dedup_tol: float = 0.05) -> list[Equilibrium]:
    """Converged, verified policies grouped by max-norm distance."""
    out: list[Equilibrium] = []
    for seed, res in zip(seeds, runs):
        if not (res.converged and res.verification.verdict):
            continue
        for eq in out:
            if np.max(np.abs(eq.policy - res.policy)) <= dedup_tol:
                eq.seeds.append(seed)
                break
        else:
            out.append(Equilibrium(res.policy, res.verification.q, [seed]))
    return out


def _run_one(args):
    mdp, disc, config, mode, mu = args
    if mode == "pg":
        from .vanilla_pg import pg_run

        return pg_run(mdp, disc, mu, config)
    return run(mdp, disc, config)


MODES = ("mpe", "pg")


def multi_restart(
    mdp: FiniteMdp,
    disc: QhDiscount,
    config: RunConfig,
    seeds: list[int],
    jobs: int = 1,
    dedup_tol: float = 0.05,
    mode: str = "mpe",
    mu: np.ndarray | None = None,
) -> MultiRestartResult:
    """Independent runs, one per seed, returned in seed order.

    ``mode="pg"`` runs the gradient baseline instead (``mu`` is its start
    distribution).  ``jobs`` > 1 spreads seeds over processes; ``jobs=0``
    uses every core.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; expected one of {MODES}")
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    check_config(config)
    tasks = [(mdp, disc, replace(config, seed=s), mode, mu) for s in seeds]
    if jobs == 1:
        runs = [_run_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs or os.cpu_count()) as pool:
            runs = list(pool.map(_run_one, tasks))
    return MultiRestartResult(seeds, runs, distinct_equilibria(runs, seeds, dedup_tol))
