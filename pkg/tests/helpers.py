"""Independent oracles the tests check the library against.

Each oracle deliberately takes a different computational route than the
code under test: matmul gets a naive triple loop, the affine solver gets an
SVD pseudo-inverse on the augmented system, binary16 rounding goes through
struct's half-precision codec, and the scalar no-intercept slope gets a
grid scan refined by an exact three-point parabola vertex.
"""

from __future__ import annotations

import struct

import numpy as np


def matmul_triple_loop(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for l in range(k):
                acc += a[i, l] * b[l, j]
            out[i, j] = acc
    return out


def pinv_affine_fit(design: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares (W, b) via SVD pseudo-inverse of the augmented design."""
    n = design.shape[0]
    aug = np.hstack([design, np.ones((n, 1))])
    coef = np.linalg.pinv(aug) @ targets
    return coef[:-1].T, coef[-1]


def f16_roundtrip_struct(value: float) -> float:
    """Round one float to binary16 and back using struct's half codec."""
    return struct.unpack("<e", struct.pack("<e", value))[0]


def brute_force_slope(x: np.ndarray, r: np.ndarray, grid_points: int = 4001) -> float:
    """Minimize sum (r_i - w x_i)^2 over w by grid scan plus parabola vertex.

    The objective is exactly quadratic in w, so the vertex of the parabola
    through the best grid point and its neighbors is the exact minimizer.
    """

    def sse(w: float) -> float:
        return float(np.sum((r - w * x) ** 2))

    bound = 1.0 + float(np.sum(np.abs(x * r)) / np.sum(x**2))
    grid = np.linspace(-bound, bound, grid_points)
    values = np.array([sse(w) for w in grid])
    i = int(np.clip(np.argmin(values), 1, grid_points - 2))
    w0, w1, w2 = grid[i - 1], grid[i], grid[i + 1]
    y0, y1, y2 = values[i - 1], values[i], values[i + 1]
    denom = (w1 - w0) * (y1 - y2) - (w1 - w2) * (y1 - y0)
    if denom == 0.0:
        return float(w1)
    vertex = w1 - 0.5 * ((w1 - w0) ** 2 * (y1 - y2) - (w1 - w2) ** 2 * (y1 - y0)) / denom
    return float(vertex)


def exhaustive_grid_minimum(cfg, loss) -> float:
    """Evaluate the loss on every reachable grid point and return the argmin."""
    best_n, best = None, np.inf
    k = 0
    while cfg.n_init + k * cfg.step >= cfg.n_min:
        k -= 1
    lo = k + 1
    k = 0
    while cfg.n_init + k * cfg.step <= cfg.n_max:
        k += 1
    hi = k - 1
    for k in range(lo, hi + 1):
        n = cfg.n_init + k * cfg.step
        value = loss(n)
        if value < best:
            best, best_n = value, n
    return best_n
