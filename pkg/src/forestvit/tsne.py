"""t-SNE: 2-D embeddings of high-dimensional points by minimizing the
KL divergence C between input-space affinities P and a Student-t embedding
kernel Q, using gradient descent with momentum.

P rows use Gaussian conditionals whose bandwidths are bisected so each row's
entropy matches log2(perplexity); the symmetrized joint is (p + p^T)/(2n).
The update descends C: Y <- Y - eta * dC/dY + alpha(t) * (Y - Y_prev), with
alpha(t) = 0.5 before the momentum switch iteration and 0.8 after.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import List, Tuple

import numpy as np

from .errors import (ConfigError, ContractError, IterationError, NumericError,
                     ShapeError)
from .rng import SeededRng


@dataclass
class Affinities:
    """Symmetrized joint probabilities plus per-row search diagnostics."""

    P: np.ndarray  # n x n, zero diagonal, sums to 1
    conditional: np.ndarray  # row-stochastic p(j|i)
    betas: np.ndarray  # per-row precisions found by bisection
    degenerate_rows: List[int] = field(default_factory=list)


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float = 30.0
    eta: float = 100.0
    max_iters: int = 1000
    seed: int = 0
    early_exaggeration: bool = False
    exaggeration_factor: float = 4.0
    exaggeration_iters: int = 100
    momentum_early: float = 0.5
    momentum_late: float = 0.8
    momentum_switch: int = 250

    def __post_init__(self):
        if self.perplexity < 1.0:
            raise ConfigError("perplexity must be at least 1")
        if self.eta < 0.0:
            raise ConfigError("eta must be non-negative")
        if self.max_iters < 0:
            raise ConfigError("max_iters must be non-negative")
        for name in ("momentum_early", "momentum_late"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must be in [0,1)")

    def momentum(self, t: int) -> float:
        return self.momentum_early if t < self.momentum_switch else self.momentum_late


@dataclass
class EmbeddingState:
    y: np.ndarray  # n x 2
    y_prev: np.ndarray
    t: int
    config: TsneConfig


def _squared_distances(x: np.ndarray) -> np.ndarray:
    sq = (x * x).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.fill_diagonal(d2, 0.0)
    return np.maximum(d2, 0.0)


def _row_entropy_bits(p: np.ndarray) -> float:
    nz = p[p > 0.0]
    return float(-(nz * np.log2(nz)).sum())


def _bisect_row(d2_row: np.ndarray, target_bits: float,
                tol: float = 1e-5, max_steps: int = 50):
    """Find the precision beta with row entropy = target (bits) by bisection.

    Returns (beta, probabilities, converged).
    """
    beta = 1.0
    lo, hi = 0.0, np.inf
    p = np.full(d2_row.shape, 1.0 / d2_row.size)
    for _ in range(max_steps):
        logits = -beta * d2_row
        logits -= logits.max()
        e = np.exp(logits)
        p = e / e.sum()
        h = _row_entropy_bits(p)
        if abs(h - target_bits) < tol:
            return beta, p, True
        if h > target_bits:  # too flat: sharpen
            lo = beta
            beta = beta * 2.0 if np.isinf(hi) else 0.5 * (beta + hi)
        else:
            hi = beta
            beta = beta / 2.0 if lo == 0.0 else 0.5 * (beta + lo)
    return beta, p, False


def compute_p(points: np.ndarray, perplexity: float) -> Affinities:
    """Per-row Gaussian conditionals at the requested perplexity, symmetrized
    to a joint distribution. Rows whose bandwidth search cannot reach the
    target entropy (duplicate points) fall back to uniform and are reported."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 3:
        raise ContractError(f"need at least 3 points in a 2-D array, got {x.shape}")
    n = x.shape[0]
    if not 1.0 <= perplexity < n:
        raise ConfigError(f"perplexity must lie in [1, {n}), got {perplexity}")
    d2 = _squared_distances(x)
    target = float(np.log2(perplexity))
    others = ~np.eye(n, dtype=bool)
    cond = np.zeros((n, n))
    betas = np.ones(n)
    degenerate = []
    for i in range(n):
        beta, p, ok = _bisect_row(d2[i][others[i]], target)
        if not ok:
            warnings.warn(f"t-SNE bandwidth search did not converge for row {i}; "
                          f"falling back to uniform affinities")
            degenerate.append(i)
            p = np.full(n - 1, 1.0 / (n - 1))
        cond[i][others[i]] = p
        betas[i] = beta
    joint = (cond + cond.T) / (2.0 * n)
    np.fill_diagonal(joint, 0.0)
    return Affinities(P=joint, conditional=cond, betas=betas,
                      degenerate_rows=degenerate)


def compute_q(y: np.ndarray) -> np.ndarray:
    """Student-t kernel affinities of the embedding, normalized over all pairs."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] < 2:
        raise ContractError(f"need at least 2 embedded points, got {y.shape}")
    num = 1.0 / (1.0 + _squared_distances(y))
    np.fill_diagonal(num, 0.0)
    return num / num.sum()


def kl(p: np.ndarray, q: np.ndarray) -> float:
    """C = sum p log(p/q) with 0 log(0/q) = 0; q must support p."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeError(f"shape mismatch: {p.shape} vs {q.shape}")
    mask = p > 0.0
    if np.any(q[mask] <= 0.0):
        raise NumericError("q has zero mass where p is positive")
    return float((p[mask] * np.log(p[mask] / q[mask])).sum())


def tsne_grad(p: np.ndarray, y: np.ndarray) -> np.ndarray:
    """dC/dy_i = 4 sum_j (p_ij - q_ij) (y_i - y_j) / (1 + |y_i - y_j|^2)."""
    y = np.asarray(y, dtype=np.float64)
    diff = y[:, None, :] - y[None, :, :]
    num = 1.0 / (1.0 + (diff * diff).sum(axis=2))
    np.fill_diagonal(num, 0.0)
    q = num / num.sum()
    w = (np.asarray(p) - q) * num
    return 4.0 * (w[:, :, None] * diff).sum(axis=1)


def init_state(n: int, config: TsneConfig) -> EmbeddingState:
    """Y0 drawn from N(0, 1e-4); the previous iterate starts equal to Y0."""
    y0 = SeededRng(config.seed).normal(0.0, 1e-4, size=(n, 2))
    return EmbeddingState(y=y0, y_prev=y0.copy(), t=0, config=config)


def step(state: EmbeddingState, p: np.ndarray) -> EmbeddingState:
    """One descent-with-momentum update of the embedding."""
    grad = tsne_grad(p, state.y)
    alpha = state.config.momentum(state.t)
    y_new = state.y - state.config.eta * grad + alpha * (state.y - state.y_prev)
    if not np.isfinite(y_new).all():
        raise IterationError(f"embedding became non-finite at iteration {state.t}")
    return EmbeddingState(y=y_new, y_prev=state.y, t=state.t + 1, config=state.config)


def run_tsne(points: np.ndarray, config: TsneConfig) -> Tuple[np.ndarray, List[float]]:
    """Full optimization; returns the final embedding and the KL trace
    (cost before each step plus the final cost, all against the true P)."""
    aff = compute_p(points, config.perplexity)
    p = aff.P
    state = init_state(p.shape[0], config)
    trace = []
    for t in range(config.max_iters):
        trace.append(kl(p, compute_q(state.y)))
        exaggerating = config.early_exaggeration and t < config.exaggeration_iters
        state = step(state, p * config.exaggeration_factor if exaggerating else p)
    trace.append(kl(p, compute_q(state.y)))
    return state.y, trace
