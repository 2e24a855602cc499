"""(Cyclic) tridiagonal solves, single or batched along leading axes.

Band convention, arrays of length N along the last axis:
``lower[k] = A[k, k-1]``, ``diag[k] = A[k, k]``, ``upper[k] = A[k, k+1]``.
For periodic systems the corners are ``A[0, N-1] = lower[0]`` and
``A[N-1, 0] = upper[N-1]``; otherwise those two entries are ignored.

Matrices reaching here are column diagonally dominant M-matrices, so the
elimination runs without pivoting.
"""

import numpy as np
from scipy.linalg import solve_banded


def _banded_single(lower, diag, upper, rhs):
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def _thomas(lower, diag, upper, rhs):
    # node axis first: coefficients (N, B), rhs (N, B, K)
    n = diag.shape[0]
    cp = np.empty_like(diag)
    dp = np.empty_like(rhs)
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0][:, None]
    for i in range(1, n):
        m = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / m
        dp[i] = (rhs[i] - lower[i][:, None] * dp[i - 1]) / m[:, None]
    x = np.empty_like(rhs)
    x[-1] = dp[-1]
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i][:, None] * x[i + 1]
    return x


def solve(lower, diag, upper, rhs, periodic=False):
    """Solve A x = rhs for every leading index."""
    lower, diag, upper, rhs = (np.asarray(a, dtype=float) for a in (lower, diag, upper, rhs))
    batch_shape = diag.shape[:-1]
    n = diag.shape[-1]
    if periodic and n < 3:
        raise ValueError("cyclic tridiagonal systems need N >= 3")

    if periodic:
        alpha = lower[..., 0]
        beta = upper[..., -1]
        gamma = -diag[..., 0]
        diag = diag.copy()
        diag[..., 0] -= gamma
        diag[..., -1] -= alpha * beta / gamma
        u = np.zeros_like(rhs)
        u[..., 0] = gamma
        u[..., -1] = beta
        stacked = np.stack([rhs, u], axis=-1)
    else:
        stacked = rhs[..., None]

    if not batch_shape:
        sol = _banded_single(lower, diag, upper, stacked)
    else:
        b = int(np.prod(batch_shape))
        coef = [a.reshape(b, n).T for a in (lower, diag, upper)]
        r = np.moveaxis(stacked.reshape(b, n, -1), 1, 0)
        sol = np.moveaxis(_thomas(*coef, r), 0, 1).reshape(batch_shape + (n, -1))

    if not periodic:
        return sol[..., 0]
    y, z = sol[..., 0], sol[..., 1]
    v_last = alpha / gamma
    vy = y[..., 0] + v_last * y[..., -1]
    vz = z[..., 0] + v_last * z[..., -1]
    return y - (vy / (1.0 + vz))[..., None] * z
