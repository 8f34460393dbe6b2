"""Hot contraction kernels over sorted multi-index tensors.

The landscape, its gradient and its Hessian are all single passes over the
flat array of symmetrized coefficients, one row of sorted indices per
coefficient. These passes dominate the runtime of every experiment, so they
come in two interchangeable flavours:

* numba ``@njit`` loops (default when numba imports cleanly), and
* vectorized pure-numpy fallbacks.

Set ``PSPIN_DISABLE_NUMBA=1`` in the environment to force the numpy path;
``USING_NUMBA`` records which one is active. ``benchmarks/kernel_bench.py``
times the two against each other. Both paths accumulate per coefficient row
in the same order, so results agree to floating-point roundoff.

Kernel contract: ``idx`` is (M, p) int32 with nondecreasing rows in
lexicographic order, ``coeff`` is the matching (M,) float64 coefficient
array, ``sigma`` is the point. Degree prefactors are applied by the caller.
"""

from __future__ import annotations

import math
import os
import warnings

import numpy as np

ENV_FLAG = "PSPIN_DISABLE_NUMBA"


def _numba_requested() -> bool:
    return os.environ.get(ENV_FLAG, "").strip().lower() not in ("1", "true", "yes")


# ---------------------------------------------------------------------------
# pure-numpy implementations
# ---------------------------------------------------------------------------


def energy_contract_numpy(idx: np.ndarray, coeff: np.ndarray, sigma: np.ndarray) -> float:
    """sum_rows coeff * prod_t sigma[idx[row, t]]."""
    return float(coeff @ np.prod(sigma[idx], axis=1))


def gradient_contract_numpy(
    idx: np.ndarray, coeff: np.ndarray, sigma: np.ndarray
) -> np.ndarray:
    """Accumulate coeff * (leave-one-out product) into each index position."""
    n = sigma.shape[0]
    m, p = idx.shape
    vals = sigma[idx]  # (M, p)
    grad = np.zeros(n)
    cols = np.arange(p)
    for s in range(p):
        loo = np.prod(vals[:, cols != s], axis=1) if p > 1 else np.ones(m)
        grad += np.bincount(idx[:, s], weights=coeff * loo, minlength=n)
    return grad


def hessian_contract_numpy(
    idx: np.ndarray, coeff: np.ndarray, sigma: np.ndarray
) -> np.ndarray:
    """Accumulate coeff * (leave-two-out product) over ordered position pairs."""
    n = sigma.shape[0]
    m, p = idx.shape
    hess = np.zeros(n * n)
    if p < 2:
        return hess.reshape(n, n)
    vals = sigma[idx]
    cols = np.arange(p)
    rows_i64 = idx.astype(np.int64)
    for s in range(p):
        for t in range(s + 1, p):
            keep = (cols != s) & (cols != t)
            w = coeff * (np.prod(vals[:, keep], axis=1) if p > 2 else 1.0)
            flat_st = rows_i64[:, s] * n + rows_i64[:, t]
            flat_ts = rows_i64[:, t] * n + rows_i64[:, s]
            hess += np.bincount(flat_st, weights=w, minlength=n * n)
            hess += np.bincount(flat_ts, weights=w, minlength=n * n)
    return hess.reshape(n, n)


def orderings_count_numpy(idx: np.ndarray) -> np.ndarray:
    """Number of distinct orderings p!/prod(multiplicity!) per sorted row.

    Uses the running-multiplicity trick: the product of the per-position
    multiplicity counters equals prod(run_length!).
    """
    m, p = idx.shape
    run = np.ones(m)
    fac_prod = np.ones(m)
    for t in range(1, p):
        run = np.where(idx[:, t] == idx[:, t - 1], run + 1.0, 1.0)
        fac_prod *= run
    return float(math.factorial(p)) / fac_prod


# ---------------------------------------------------------------------------
# numba implementations (same accumulation order as the numpy path)
# ---------------------------------------------------------------------------


def _energy_loop(idx, coeff, sigma):
    m, p = idx.shape
    total = 0.0
    for r in range(m):
        prod = 1.0
        for t in range(p):
            prod *= sigma[idx[r, t]]
        total += coeff[r] * prod
    return total


def _gradient_loop(idx, coeff, sigma):
    m, p = idx.shape
    n = sigma.shape[0]
    grad = np.zeros(n)
    pre = np.empty(p + 1)
    suf = np.empty(p + 1)
    for r in range(m):
        pre[0] = 1.0
        for t in range(p):
            pre[t + 1] = pre[t] * sigma[idx[r, t]]
        suf[p] = 1.0
        for t in range(p - 1, -1, -1):
            suf[t] = suf[t + 1] * sigma[idx[r, t]]
        c = coeff[r]
        for s in range(p):
            grad[idx[r, s]] += c * pre[s] * suf[s + 1]
    return grad


def _hessian_loop(idx, coeff, sigma):
    m, p = idx.shape
    n = sigma.shape[0]
    hess = np.zeros((n, n))
    for r in range(m):
        c = coeff[r]
        for s in range(p):
            for t in range(s + 1, p):
                prod = 1.0
                for u in range(p):
                    if u != s and u != t:
                        prod *= sigma[idx[r, u]]
                w = c * prod
                hess[idx[r, s], idx[r, t]] += w
                hess[idx[r, t], idx[r, s]] += w
    return hess


USING_NUMBA = False

if _numba_requested():
    try:
        from numba import njit

        energy_contract = njit(cache=True, nogil=True)(_energy_loop)
        gradient_contract = njit(cache=True, nogil=True)(_gradient_loop)
        hessian_contract = njit(cache=True, nogil=True)(_hessian_loop)
        USING_NUMBA = True
    except ImportError:
        warnings.warn(
            "numba unavailable; falling back to the pure-numpy kernels",
            stacklevel=2,
        )

if not USING_NUMBA:
    energy_contract = energy_contract_numpy
    gradient_contract = gradient_contract_numpy
    hessian_contract = hessian_contract_numpy

orderings_count = orderings_count_numpy
