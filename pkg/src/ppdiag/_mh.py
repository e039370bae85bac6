"""Compiled birth-death Metropolis-Hastings kernel.

Covers log-polynomial trends (cubic basis) with no interaction, Strauss,
Geyer saturation or soft core pair interaction.  Area interaction and
arbitrary trend callables go through the pure Python sampler instead.
"""

import numpy as np
from numba import njit

KIND_POISSON = 0
KIND_STRAUSS = 1
KIND_GEYER = 2
KIND_SOFTCORE = 3


@njit(cache=True)
def _poly(c, x, y):
    return (c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y
            + c[5] * y * y + c[6] * x * x * x + c[7] * x * x * y
            + c[8] * x * y * y + c[9] * y * y * y)


@njit(cache=True)
def bd_chain(seed, n_steps, p_birth, xs0, ys0,
             x_min, x_max, y_min, y_max, coef, kind, r, sat, phi, max_n):
    """Run one birth-death chain; returns (xs, ys, overflow_flag)."""
    np.random.seed(seed)
    xs = np.empty(max_n)
    ys = np.empty(max_n)
    tcnt = np.zeros(max_n, dtype=np.int64)
    n = xs0.shape[0]
    if n > max_n:
        return xs[:0], ys[:0], 1
    for i in range(n):
        xs[i] = xs0[i]
        ys[i] = ys0[i]
    area = (x_max - x_min) * (y_max - y_min)
    log_area = np.log(area)
    r2 = r * r
    if kind == KIND_GEYER:
        for i in range(n):
            c = 0
            for j in range(n):
                if j != i:
                    dx = xs[i] - xs[j]
                    dy = ys[i] - ys[j]
                    if dx * dx + dy * dy <= r2:
                        c += 1
            tcnt[i] = c
    overflow = 0
    for _ in range(n_steps):
        if np.random.random() < p_birth:
            ux = x_min + np.random.random() * (x_max - x_min)
            uy = y_min + np.random.random() * (y_max - y_min)
            delta = 0.0
            tu = 0
            if kind == KIND_STRAUSS:
                for j in range(n):
                    dx = ux - xs[j]
                    dy = uy - ys[j]
                    if dx * dx + dy * dy <= r2:
                        delta += 1.0
            elif kind == KIND_GEYER:
                extra = 0.0
                for j in range(n):
                    dx = ux - xs[j]
                    dy = uy - ys[j]
                    if dx * dx + dy * dy <= r2:
                        tu += 1
                        g = sat - tcnt[j]
                        if g > 1.0:
                            g = 1.0
                        if g > 0.0:
                            extra += g
                delta = min(sat, float(tu)) + extra
            elif kind == KIND_SOFTCORE:
                for j in range(n):
                    dx = ux - xs[j]
                    dy = uy - ys[j]
                    d2 = dx * dx + dy * dy
                    if d2 <= r2:
                        delta -= 1.0 / (d2 * d2)
            loglam = _poly(coef, ux, uy)
            if delta != 0.0:
                loglam += phi * delta
            lacc = loglam + log_area - np.log(n + 1.0)
            if np.log(np.random.random()) < lacc:
                if n >= max_n:
                    overflow = 1
                    break
                xs[n] = ux
                ys[n] = uy
                if kind == KIND_GEYER:
                    for j in range(n):
                        dx = ux - xs[j]
                        dy = uy - ys[j]
                        if dx * dx + dy * dy <= r2:
                            tcnt[j] += 1
                    tcnt[n] = tu
                n += 1
        else:
            if n == 0:
                continue
            i = np.random.randint(0, n)
            delta = 0.0
            if kind == KIND_STRAUSS:
                for j in range(n):
                    if j != i:
                        dx = xs[i] - xs[j]
                        dy = ys[i] - ys[j]
                        if dx * dx + dy * dy <= r2:
                            delta += 1.0
            elif kind == KIND_GEYER:
                delta = min(sat, float(tcnt[i]))
                for j in range(n):
                    if j != i:
                        dx = xs[i] - xs[j]
                        dy = ys[i] - ys[j]
                        if dx * dx + dy * dy <= r2:
                            g = sat - tcnt[j] + 1.0
                            if g > 1.0:
                                g = 1.0
                            if g > 0.0:
                                delta += g
            elif kind == KIND_SOFTCORE:
                for j in range(n):
                    if j != i:
                        dx = xs[i] - xs[j]
                        dy = ys[i] - ys[j]
                        d2 = dx * dx + dy * dy
                        if d2 <= r2:
                            delta -= 1.0 / (d2 * d2)
            loglam = _poly(coef, xs[i], ys[i])
            if delta != 0.0:
                loglam += phi * delta
            lacc = np.log(float(n)) - loglam - log_area
            if np.log(np.random.random()) < lacc:
                if kind == KIND_GEYER:
                    for j in range(n):
                        if j != i:
                            dx = xs[i] - xs[j]
                            dy = ys[i] - ys[j]
                            if dx * dx + dy * dy <= r2:
                                tcnt[j] -= 1
                    tcnt[i] = tcnt[n - 1]
                xs[i] = xs[n - 1]
                ys[i] = ys[n - 1]
                n -= 1
    return xs[:n].copy(), ys[:n].copy(), overflow
