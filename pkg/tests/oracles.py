"""Reference implementations used only by the tests.

None of these import the solver; they reach the same answers by other routes
(accelerated proximal gradient, sign-pattern enumeration, rejection sampling).
"""

from itertools import combinations, product

import numpy as np
from scipy.special import expit


def _soft(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def fista_gaussian(Z, y, lam, w, iters=200_000, tol=1e-15):
    """(1/2n)||y - b - Z beta||^2 + lam sum w|beta| with the intercept profiled out."""
    n = Z.shape[0]
    Zc = Z - Z.mean(axis=0)
    yc = y - y.mean()
    L = np.linalg.norm(Zc, 2) ** 2 / n
    beta = np.zeros(Z.shape[1])
    mom, t = beta.copy(), 1.0
    for _ in range(iters):
        grad = Zc.T @ (Zc @ mom - yc) / n
        new = _soft(mom - grad / L, lam * w / L)
        t_new = (1 + np.sqrt(1 + 4 * t * t)) / 2
        if (new - beta) @ (mom - new) > 0:  # gradient restart
            t_new, mom_next = 1.0, new
        else:
            mom_next = new + (t - 1) / t_new * (new - beta)
        done = np.max(np.abs(new - beta)) < tol
        beta, mom, t = new, mom_next, t_new
        if done:
            break
    return beta, float(y.mean() - Z.mean(axis=0) @ beta)


def fista_logistic(Z, y, lam, w, iters=500_000, tol=1e-14):
    """Mean logistic loss + lam sum w|beta|, unpenalized intercept."""
    n, q = Z.shape
    A = np.column_stack([np.ones(n), Z])
    L = np.linalg.norm(A, 2) ** 2 / (4 * n)
    thr = np.concatenate([[0.0], lam * np.asarray(w, float)]) / L
    x = np.zeros(q + 1)
    x[0] = np.log(y.mean() / (1 - y.mean()))
    mom, t = x.copy(), 1.0
    for _ in range(iters):
        grad = A.T @ (expit(A @ mom) - y) / n
        new = _soft(mom - grad / L, thr)
        t_new = (1 + np.sqrt(1 + 4 * t * t)) / 2
        if (new - x) @ (mom - new) > 0:
            t_new, mom_next = 1.0, new
        else:
            mom_next = new + (t - 1) / t_new * (new - x)
        done = np.max(np.abs(new - x)) < tol
        x, mom, t = new, mom_next, t_new
        if done:
            break
    return x[1:], float(x[0])


def enumerate_lasso(Z, y, lam, w):
    """Exact weighted-lasso solution by checking every support and sign pattern.

    Feasible only for small q (3**q linear solves).
    """
    n, q = Z.shape
    Zc = Z - Z.mean(axis=0)
    C = Zc.T @ Zc / n
    c = Zc.T @ (y - y.mean()) / n
    pen = lam * np.asarray(w, float)
    best = None
    for size in range(q + 1):
        for S in combinations(range(q), size):
            S = list(S)
            rest = [j for j in range(q) if j not in S]
            for signs in product((-1.0, 1.0), repeat=size):
                s = np.array(signs)
                beta = np.zeros(q)
                if size:
                    try:
                        beta[S] = np.linalg.solve(C[np.ix_(S, S)], c[S] - pen[S] * s)
                    except np.linalg.LinAlgError:
                        continue
                    if np.any(beta[S] * s <= 0):
                        continue
                g = c - C @ beta
                if np.all(np.abs(g[rest]) <= pen[rest] + 1e-12):
                    obj = 0.5 * beta @ C @ beta - c @ beta + pen @ np.abs(beta)
                    if best is None or obj < best[0]:
                        best = (obj, beta)
    beta = best[1]
    return beta, float(y.mean() - Z.mean(axis=0) @ beta)


def rejection_bin_sampler(bin_sizes, b, probs, rng):
    """Pick a bin by probs, redraw while it is exhausted; return bin labels drawn."""
    left = list(bin_sizes)
    labels = []
    for _ in range(b):
        while True:
            k = rng.choice(3, p=probs)
            if left[k] > 0:
                break
        left[k] -= 1
        labels.append(k)
    return labels
