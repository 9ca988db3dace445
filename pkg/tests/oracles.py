"""Brute-force reference implementations used only by the tests."""

import numpy as np


def gaussian_elimination(a, b):
    """Solve ``a x = b`` by elimination with partial pivoting, in plain Python loops."""
    a = [list(map(float, row)) for row in np.asarray(a)]
    b = list(map(float, np.asarray(b)))
    n = len(a)
    for col in range(n):
        pivot = max(range(col, n), key=lambda r: abs(a[r][col]))
        a[col], a[pivot] = a[pivot], a[col]
        b[col], b[pivot] = b[pivot], b[col]
        for r in range(col + 1, n):
            f = a[r][col] / a[col][col]
            for c in range(col, n):
                a[r][c] -= f * a[col][c]
            b[r] -= f * b[col]
    x = [0.0] * n
    for r in range(n - 1, -1, -1):
        x[r] = (b[r] - sum(a[r][c] * x[c] for c in range(r + 1, n))) / a[r][r]
    return np.array(x)


def gauss_jordan_inverse(a):
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    return np.column_stack([gaussian_elimination(a, e) for e in np.eye(n)])


def naive_matmul(a, b):
    a, b = np.asarray(a), np.asarray(b)
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for k in range(a.shape[1]):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out


def householder_orthogonal(n, rng):
    """Product of ``n`` random Householder reflections."""
    q = np.eye(n)
    for _ in range(n):
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        q = q @ (np.eye(n) - 2.0 * np.outer(v, v))
    return q


def random_spd(n, rng, shift=1.0):
    m = rng.standard_normal((n, n))
    return m @ m.T + shift * np.eye(n)


def central_difference(f, params, h=1e-4):
    """Central finite-difference gradient of scalar ``f()`` w.r.t. each array in ``params`` (mutated in place).

    ``h`` is a scalar or a list of per-entry step arrays shaped like ``params``.
    """
    steps = [np.full(p.shape, h) for p in params] if np.isscalar(h) else h
    grads = []
    for p, hs in zip(params, steps):
        g = np.zeros_like(p)
        flat, gflat, hflat = p.reshape(-1), g.reshape(-1), np.asarray(hs).reshape(-1)
        for i in range(flat.size):
            orig, step = flat[i], hflat[i]
            flat[i] = orig + step
            up = f()
            flat[i] = orig - step
            down = f()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * step)
        grads.append(g)
    return grads
