"""Compiled event loop for the built-in scheduling policies.

Mirrors ``queuesim.simulate_path`` step for step on pre-drawn unit variates;
the pure-Python loop stays as the reference implementation.
"""
from __future__ import annotations

import math

import numba
import numpy as np

PROFILE_CODES = {"constant": 0, "ramp": 1, "step": 2, "sinusoidal": 3}
POLICY_CODES = {"gcmu": 0, "fifo": 1}

OK = 0
NEED_ARRIVALS = 1
NEED_SERVICES = 2


def pack_profile(p) -> np.ndarray:
    return np.array(
        [PROFILE_CODES[p.kind], p.r0, p.r1, p.t0, p.t1, p.amplitude, p.period], dtype=np.float64
    )


@numba.njit(cache=True)
def _rate(p, t):
    kind = int(p[0])
    if kind == 0:
        return p[1]
    if kind == 2:
        return p[1] if t < p[3] else p[2]
    if kind == 1:
        if t <= p[3]:
            return p[1]
        if t >= p[4]:
            return p[2]
        return p[1] + (p[2] - p[1]) * (t - p[3]) / (p[4] - p[3])
    return p[1] + p[5] * math.sin(2.0 * math.pi * t / p[6])


@numba.njit(cache=True)
def run_path(arr_u, svc_u, arr_p, svc_p, nom_p, weights, horizon, policy):
    k = weights.shape[0]
    la = arr_u.shape[1]
    ls = svc_u.shape[1]
    times = np.empty((k, la + 1))  # arrival epochs per class, FIFO order
    head = np.zeros(k, np.int64)
    tail = np.ones(k, np.int64)
    ai = np.zeros(k, np.int64)
    si = np.zeros(k, np.int64)
    next_arr = np.empty(k)
    completed = np.zeros(k, np.int64)
    soj_sum = np.zeros(k)
    for j in range(k):
        times[j, 0] = 0.0
        if arr_p[j, 0] == 0 and arr_p[j, 1] == 0.0:
            next_arr[j] = np.inf
        else:
            next_arr[j] = arr_u[j, 0] / _rate(arr_p[j], 0.0)
            ai[j] = 1
    cost = 0.0
    t = 0.0
    while t < horizon:
        for j in range(k):
            na = next_arr[j]
            while na <= t:
                if ai[j] >= la:
                    return NEED_ARRIVALS, cost, completed, soj_sum, tail
                times[j, tail[j]] = na
                tail[j] += 1
                na += arr_u[j, ai[j]] / _rate(arr_p[j], na)
                ai[j] += 1
            next_arr[j] = na
        best = -1
        if policy == 1:
            best_head = np.inf
            for j in range(k):
                if tail[j] > head[j] and times[j, head[j]] < best_head:
                    best = j
                    best_head = times[j, head[j]]
        else:
            best_val = -np.inf
            for j in range(k):
                if tail[j] > head[j]:
                    v = 2.0 * weights[j] * (t - times[j, head[j]]) * _rate(nom_p[j], t)
                    if v > best_val:
                        best = j
                        best_val = v
        if best < 0:
            t = np.min(next_arr)
            continue
        j = best
        if si[j] >= ls:
            return NEED_SERVICES, cost, completed, soj_sum, tail
        a = times[j, head[j]]
        head[j] += 1
        done = t + svc_u[j, si[j]] / _rate(svc_p[j], t)
        si[j] += 1
        if done <= horizon:
            soj = done - a
            cost += weights[j] * soj * soj
            completed[j] += 1
            soj_sum[j] += soj
        else:
            cost += weights[j] * (horizon - a) ** 2
        t = done
    for j in range(k):
        na = next_arr[j]
        while na <= horizon:
            if ai[j] >= la:
                return NEED_ARRIVALS, cost, completed, soj_sum, tail
            times[j, tail[j]] = na
            tail[j] += 1
            na += arr_u[j, ai[j]] / _rate(arr_p[j], na)
            ai[j] += 1
        for i in range(head[j], tail[j]):
            cost += weights[j] * (horizon - times[j, i]) ** 2
    return OK, cost, completed, soj_sum, tail
