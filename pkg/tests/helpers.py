"""Shared oracles and utilities for the test suite."""

import numpy as np

from forestvit.tensor import Tape, Tensor, backward, zero_grad


def rel_err(a, b):
    """Relative error with an absolute floor so near-zero values compare sanely."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom))


def matmul_oracle(a, b):
    """Triple-loop matrix product, independent of numpy's dot."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


def normal_cdf_series(x, terms=60):
    """Phi(x) from the Taylor series of erf; converges fast for |x| <= 3."""
    # erf(z) = 2/sqrt(pi) * sum_{n>=0} (-1)^n z^(2n+1) / (n! (2n+1))
    z = x / np.sqrt(2.0)
    total = 0.0
    term = z
    n = 0
    while n < terms:
        total += term / (2 * n + 1)
        n += 1
        term *= -z * z / n
    erf_z = 2.0 / np.sqrt(np.pi) * total
    return 0.5 * (1.0 + erf_z)


def fd_grad(f, x, h=1e-5):
    """Central finite-difference gradient of scalar f at array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g


def autodiff_grad(build, x):
    """Gradient of a tape-built scalar loss w.r.t. input array x.

    ``build`` maps a Tensor to a scalar-loss Tensor inside an active tape.
    """
    t = Tensor(np.array(x, dtype=np.float64), requires_grad=True)
    with Tape() as tape:
        loss = build(t)
    backward(tape, loss)
    g = t.grad.copy()
    zero_grad([t])
    return g


def check_grad(build, f, x, h=1e-5, tol=1e-4):
    """Compare backward() against central differences; return the max rel err."""
    g_ad = autodiff_grad(build, x)
    g_fd = fd_grad(f, x, h=h)
    return rel_err(g_ad, g_fd)


def auroc_pair_oracle(scores, positives):
    """Brute-force pair counting: P(random positive outranks random negative),
    ties counted one half."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    pos = scores[positives]
    neg = scores[~positives]
    wins = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                wins += 1.0
            elif sp == sn:
                wins += 0.5
    return wins / (pos.size * neg.size)


def auprc_threshold_oracle(scores, positives):
    """All-thresholds enumeration: step-wise precision-recall area with one
    threshold per distinct score, walked in descending order."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    area = 0.0
    r_prev = 0.0
    for th in np.unique(scores)[::-1]:
        sel = scores >= th
        tp = int((positives & sel).sum())
        r = tp / n_pos
        p = tp / int(sel.sum())
        area += (r - r_prev) * p
        r_prev = r
    return area
