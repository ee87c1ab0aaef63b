"""Markov perfect equilibria under quasi-hyperbolic discounting, for tabular MDPs."""
from .mdp import FiniteMdp, QhDiscount, softmax_policy, validate_mdp
from .evaluation import eval_q_exp, eval_q_qh, is_mpe
from .learning import RunConfig, StepsizeSchedule, run

__all__ = [
    "FiniteMdp",
    "QhDiscount",
    "RunConfig",
    "StepsizeSchedule",
    "eval_q_exp",
    "eval_q_qh",
    "is_mpe",
    "run",
    "softmax_policy",
    "validate_mdp",
]
