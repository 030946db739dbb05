"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time from the ``CONSENSUS_DISPATCH_BACKEND``
environment variable (``numba`` or ``numpy``). When unset, numba is used if it
imports cleanly. Both implementations are always reachable through
``numpy_impl`` and ``numba_impl`` so tests and the benchmark can compare them.

Node arrays follow one convention throughout: ``is_gen`` flags generators,
``curv``/``icpt`` hold (alpha, beta) for generators and (sigma, omega) for
consumers, ``cap`` is the upper power bound.
"""

from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np

ENV_FLAG = "CONSENSUS_DISPATCH_BACKEND"

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


def _requested_backend() -> str:
    value = os.environ.get(ENV_FLAG, "").strip().lower()
    if value in ("", "auto"):
        return "numba" if HAS_NUMBA else "numpy"
    if value not in ("numba", "numpy"):
        raise ValueError(f"{ENV_FLAG} must be 'numba' or 'numpy', got {value!r}")
    if value == "numba" and not HAS_NUMBA:
        raise ImportError(f"{ENV_FLAG}=numba but numba is not installed")
    return value


BACKEND = _requested_backend()


# ---------------------------------------------------------------------------
# numpy fallback
# ---------------------------------------------------------------------------


def _np_best_response(is_gen, curv, icpt, cap, lam):
    lam = np.asarray(lam, dtype=np.float64)
    raw = np.where(is_gen, (lam - icpt) / (2.0 * curv), (icpt - lam) / (2.0 * curv))
    top = np.where(is_gen, cap, np.minimum(cap, icpt / (2.0 * curv)))
    return np.minimum(np.maximum(raw, 0.0), top)


def _np_balance(is_gen, curv, icpt, cap, lam):
    p = _np_best_response(is_gen, curv, icpt, cap, lam)
    return float(np.sum(np.where(is_gen, p, -p)))


def _np_bisect_zero_set(is_gen, curv, icpt, cap, lo, hi, rel_width):
    width_tol = rel_width * (hi - lo)

    # left edge: inf{lam : f(lam) >= 0}
    a, b = lo, hi
    while b - a > width_tol:
        mid = 0.5 * (a + b)
        if _np_balance(is_gen, curv, icpt, cap, mid) >= 0.0:
            b = mid
        else:
            a = mid
    left = 0.5 * (a + b)

    # right edge: sup{lam : f(lam) <= 0}
    a, b = lo, hi
    while b - a > width_tol:
        mid = 0.5 * (a + b)
        if _np_balance(is_gen, curv, icpt, cap, mid) <= 0.0:
            a = mid
        else:
            b = mid
    right = 0.5 * (a + b)
    return left, right


def _np_edge_quadform(ei, ej, ew, x):
    d = x[ej] - x[ei]
    return float(np.sum(ew * d * d))


def _np_potential_series(ei, ej, ew, rows):
    d = rows[:, ej] - rows[:, ei]
    return (d * d) @ ew


def _np_matrix_consensus(W, is_gen, curv, icpt, cap, lam0, p0, m0, eps,
                         max_iters, tol_lambda, tol_power):
    n = lam0.shape[0]
    lam_t = np.empty((max_iters + 1, n))
    pow_t = np.empty((max_iters + 1, n))
    mis_t = np.empty((max_iters + 1, n))
    lam, p, m = lam0.copy(), p0.copy(), m0.copy()
    lam_t[0], pow_t[0], mis_t[0] = lam, p, m
    sign = np.where(is_gen, -1.0, 1.0)
    k = 0
    converged = False
    while True:
        if np.max(np.abs(m)) <= tol_power and np.max(lam) - np.min(lam) <= tol_lambda:
            converged = True
            break
        if k >= max_iters:
            break
        lam_next = W @ lam + eps * m
        p_next = _np_best_response(is_gen, curv, icpt, cap, lam_next)
        m = W @ m + sign * (p_next - p)
        lam, p = lam_next, p_next
        k += 1
        lam_t[k], pow_t[k], mis_t[k] = lam, p, m
        if np.max(np.abs(lam)) > 1e9 or np.max(np.abs(m)) > 1e9:
            break
    return k, converged, lam_t[: k + 1], pow_t[: k + 1], mis_t[: k + 1]


numpy_impl = SimpleNamespace(
    name="numpy",
    best_response=_np_best_response,
    balance=_np_balance,
    bisect_zero_set=_np_bisect_zero_set,
    edge_quadform=_np_edge_quadform,
    potential_series=_np_potential_series,
    matrix_consensus=_np_matrix_consensus,
)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @numba.njit(cache=True)
    def _nb_response_one(is_gen, curv, icpt, cap, lam):
        if is_gen:
            p = (lam - icpt) / (2.0 * curv)
        else:
            p = (icpt - lam) / (2.0 * curv)
            # demand stops at satiation
            cap = min(cap, icpt / (2.0 * curv))
        if p < 0.0:
            return 0.0
        if p > cap:
            return cap
        return p

    @numba.njit(cache=True)
    def _nb_best_response_vec(is_gen, curv, icpt, cap, lam):
        n = curv.shape[0]
        out = np.empty(n)
        for i in range(n):
            out[i] = _nb_response_one(is_gen[i], curv[i], icpt[i], cap[i], lam[i])
        return out

    @numba.njit(cache=True)
    def _nb_balance(is_gen, curv, icpt, cap, lam):
        total = 0.0
        for i in range(curv.shape[0]):
            p = _nb_response_one(is_gen[i], curv[i], icpt[i], cap[i], lam)
            if is_gen[i]:
                total += p
            else:
                total -= p
        return total

    @numba.njit(cache=True)
    def _nb_bisect_zero_set(is_gen, curv, icpt, cap, lo, hi, rel_width):
        width_tol = rel_width * (hi - lo)
        a = lo
        b = hi
        while b - a > width_tol:
            mid = 0.5 * (a + b)
            if _nb_balance(is_gen, curv, icpt, cap, mid) >= 0.0:
                b = mid
            else:
                a = mid
        left = 0.5 * (a + b)
        a = lo
        b = hi
        while b - a > width_tol:
            mid = 0.5 * (a + b)
            if _nb_balance(is_gen, curv, icpt, cap, mid) <= 0.0:
                a = mid
            else:
                b = mid
        right = 0.5 * (a + b)
        return left, right

    @numba.njit(cache=True)
    def _nb_edge_quadform(ei, ej, ew, x):
        total = 0.0
        for e in range(ei.shape[0]):
            d = x[ej[e]] - x[ei[e]]
            total += ew[e] * d * d
        return total

    @numba.njit(cache=True)
    def _nb_potential_series(ei, ej, ew, rows):
        out = np.empty(rows.shape[0])
        for k in range(rows.shape[0]):
            out[k] = _nb_edge_quadform(ei, ej, ew, rows[k])
        return out

    @numba.njit(cache=True)
    def _nb_matrix_consensus(W, is_gen, curv, icpt, cap, lam0, p0, m0, eps,
                             max_iters, tol_lambda, tol_power):
        n = lam0.shape[0]
        lam_t = np.empty((max_iters + 1, n))
        pow_t = np.empty((max_iters + 1, n))
        mis_t = np.empty((max_iters + 1, n))
        lam = lam0.copy()
        p = p0.copy()
        m = m0.copy()
        lam_next = np.empty(n)
        m_next = np.empty(n)
        for i in range(n):
            lam_t[0, i] = lam[i]
            pow_t[0, i] = p[i]
            mis_t[0, i] = m[i]
        k = 0
        converged = False
        while True:
            spread_hi = lam[0]
            spread_lo = lam[0]
            worst = 0.0
            for i in range(n):
                spread_hi = max(spread_hi, lam[i])
                spread_lo = min(spread_lo, lam[i])
                worst = max(worst, abs(m[i]))
            if worst <= tol_power and spread_hi - spread_lo <= tol_lambda:
                converged = True
                break
            if k >= max_iters:
                break
            blown = False
            for i in range(n):
                acc_l = 0.0
                acc_m = 0.0
                for j in range(n):
                    w = W[i, j]
                    if w != 0.0:
                        acc_l += w * lam[j]
                        acc_m += w * m[j]
                lam_next[i] = acc_l + eps * m[i]
                m_next[i] = acc_m
            for i in range(n):
                p_new = _nb_response_one(is_gen[i], curv[i], icpt[i], cap[i], lam_next[i])
                if is_gen[i]:
                    m_next[i] -= p_new - p[i]
                else:
                    m_next[i] += p_new - p[i]
                p[i] = p_new
                lam[i] = lam_next[i]
                m[i] = m_next[i]
                if abs(lam[i]) > 1e9 or abs(m[i]) > 1e9:
                    blown = True
            k += 1
            for i in range(n):
                lam_t[k, i] = lam[i]
                pow_t[k, i] = p[i]
                mis_t[k, i] = m[i]
            if blown:
                break
        return k, converged, lam_t[: k + 1], pow_t[: k + 1], mis_t[: k + 1]

    def _nb_best_response(is_gen, curv, icpt, cap, lam):
        lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), curv.shape)
        return _nb_best_response_vec(is_gen, curv, icpt, cap, np.ascontiguousarray(lam))

    def _nb_bisect(is_gen, curv, icpt, cap, lo, hi, rel_width):
        return _nb_bisect_zero_set(is_gen, curv, icpt, cap, float(lo), float(hi), float(rel_width))

    def _nb_quadform(ei, ej, ew, x):
        return float(_nb_edge_quadform(ei, ej, ew, np.ascontiguousarray(x, dtype=np.float64)))

    def _nb_series(ei, ej, ew, rows):
        return _nb_potential_series(ei, ej, ew, np.ascontiguousarray(rows, dtype=np.float64))

    def _nb_consensus(W, is_gen, curv, icpt, cap, lam0, p0, m0, eps,
                      max_iters, tol_lambda, tol_power):
        return _nb_matrix_consensus(
            np.ascontiguousarray(W, dtype=np.float64), is_gen, curv, icpt, cap,
            lam0, p0, m0, float(eps), int(max_iters), float(tol_lambda), float(tol_power),
        )

    numba_impl = SimpleNamespace(
        name="numba",
        best_response=_nb_best_response,
        balance=lambda is_gen, curv, icpt, cap, lam: float(
            _nb_balance(is_gen, curv, icpt, cap, float(lam))
        ),
        bisect_zero_set=_nb_bisect,
        edge_quadform=_nb_quadform,
        potential_series=_nb_series,
        matrix_consensus=_nb_consensus,
    )
else:  # pragma: no cover
    numba_impl = None


active = numba_impl if BACKEND == "numba" else numpy_impl

best_response = active.best_response
balance = active.balance
bisect_zero_set = active.bisect_zero_set
edge_quadform = active.edge_quadform
potential_series = active.potential_series
matrix_consensus = active.matrix_consensus
