"""Compiled inner loops for the synchronous critic-actor sweeps.

Randomness is counter based: the uniform used for draw ``k`` of pair ``i``
at sweep ``n`` is a hash of ``(seed, n, i, k)``, so every (s, a) owns an
independent sub-stream and the result does not depend on evaluation order.
"""
from __future__ import annotations

import numba as nb
import numpy as np

MODE_MPE = 0
MODE_PG = 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


@nb.njit(cache=True)
def _mix(x):
    # splitmix64 finaliser
    x = (x ^ (x >> np.uint64(30))) * _M1
    x = (x ^ (x >> np.uint64(27))) * _M2
    return x ^ (x >> np.uint64(31))


@nb.njit(cache=True)
def derived_uniform(seed, n, pair, draw):
    """Uniform in [0, 1) for ``(seed, sweep, pair, draw)``."""
    h = _mix(np.uint64(seed) + _GOLDEN)
    h = _mix(h ^ (np.uint64(n) + _GOLDEN))
    h = _mix(h ^ (np.uint64(pair) + _GOLDEN))
    h = _mix(h ^ (np.uint64(draw) + _GOLDEN))
    return (h >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@nb.njit(cache=True)
def inverse_cdf(probs, lo, hi, u):
    """Index in ``[lo, hi)`` drawn by inverse CDF; the last index absorbs rounding."""
    c = 0.0
    for j in range(lo, hi - 1):
        c += probs[j]
        if u < c:
            return j
    return hi - 1


@nb.njit(cache=True)
def _softmax_into(theta, start, stop, out):
    for s in range(start.shape[0]):
        m = -np.inf
        for i in range(start[s], stop[s]):
            if theta[i] > m:
                m = theta[i]
        z = 0.0
        for i in range(start[s], stop[s]):
            out[i] = np.exp(theta[i] - m)
            z += out[i]
        for i in range(start[s], stop[s]):
            out[i] /= z


@nb.njit(cache=True)
def _pg_direction(transition, reward, pair_state, start, stop, sigma, gamma, w, pi, mu, out):
    # Gradient assembled from the critic: exponential-discount Q recovered from
    # W = (1 - sigma) r + sigma Q^gamma, occupancy solved exactly from the model.
    n_states = start.shape[0]
    a = np.eye(n_states)
    for i in range(pi.shape[0]):
        s = pair_state[i]
        for s2 in range(n_states):
            a[s2, s] -= gamma * pi[i] * transition[i, s2]
    d = np.linalg.solve(a, (1.0 - gamma) * mu)
    for s in range(n_states):
        avg_r = 0.0
        avg_q = 0.0
        for i in range(start[s], stop[s]):
            q = (w[i] - (1.0 - sigma) * reward[i]) / sigma
            avg_r += pi[i] * reward[i]
            avg_q += pi[i] * q
        for i in range(start[s], stop[s]):
            q = (w[i] - (1.0 - sigma) * reward[i]) / sigma
            out[i] = ((1.0 - sigma) * mu[s] * pi[i] * (reward[i] - avg_r)
                      + sigma / (1.0 - gamma) * d[s] * pi[i] * (q - avg_q))


@nb.njit(cache=True)
def run_sweeps(transition, reward, pair_state, start, stop, sigma, gamma,
               w, theta, seed, n0, n_sweeps,
               a_scale, a_offset, a_exp, b_scale, b_offset, b_exp,
               clip, mode, mu):
    """Run ``n_sweeps`` synchronous sweeps in place on ``w`` and ``theta``.

    Returns (sum of alpha, sum of beta, clip events, max |W| seen).
    """
    n_pairs = w.shape[0]
    pi = np.empty(n_pairs)
    td = np.empty(n_pairs)
    step = np.empty(n_pairs)
    sum_a = 0.0
    sum_b = 0.0
    clips = 0
    w_sup = 0.0
    for i in range(n_pairs):
        w_sup = max(w_sup, abs(w[i]))
    for n in range(n0, n0 + n_sweeps):
        alpha = a_scale / (a_offset + n) ** a_exp
        beta = b_scale / (b_offset + n) ** b_exp
        sum_a += alpha
        sum_b += beta
        _softmax_into(theta, start, stop, pi)
        for i in range(n_pairs):
            s2 = inverse_cdf(transition[i], 0, transition.shape[1], derived_uniform(seed, n, i, 0))
            j = inverse_cdf(pi, start[s2], stop[s2], derived_uniform(seed, n, i, 1))
            td[i] = reward[i] - (1.0 - sigma) * gamma * reward[j] + gamma * w[j] - w[i]
        if mode == MODE_MPE:
            for s in range(start.shape[0]):
                avg = 0.0
                for i in range(start[s], stop[s]):
                    avg += pi[i] * w[i]
                for i in range(start[s], stop[s]):
                    step[i] = w[i] - avg
        else:
            _pg_direction(transition, reward, pair_state, start, stop, sigma, gamma, w, pi, mu, step)
        for i in range(n_pairs):
            t = theta[i] + beta * step[i]
            if t > clip:
                t = clip
                clips += 1
            elif t < -clip:
                t = -clip
                clips += 1
            theta[i] = t
            w[i] += alpha * td[i]
            w_sup = max(w_sup, abs(w[i]))
    return sum_a, sum_b, clips, w_sup
