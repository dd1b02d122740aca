"""Initialization, Adam fitting loop and a finite-difference gradient oracle."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .data import normalize
from .model import LatentState, ModelConfig, _check_supports, _objective, cost

logger = logging.getLogger(__name__)


class OptimizationError(RuntimeError):
    """The objective became non-finite during fitting."""


@dataclass(frozen=True)
class OptimConfig:
    max_iters: int = 2000
    step_size: float = 0.05
    moment_decay_1: float = 0.9
    moment_decay_2: float = 0.999
    grad_tol: float = 1e-5
    seed: int = 0
    init_scale: float = 1e-2
    eps: float = 1e-8

    def __post_init__(self):
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError("max_iters must be a positive integer")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        for name in ("moment_decay_1", "moment_decay_2"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not self.init_scale >= 0:
            raise ValueError("init_scale must be nonnegative")


@dataclass
class FitReport:
    cost_trace: list = field(default_factory=list)
    final_cost: float = float("nan")
    final_grad_norm: float = float("nan")
    iterations_run: int = 0
    converged: bool = False

    def to_dict(self):
        return {
            "cost_trace": [float(c) for c in self.cost_trace],
            "final_cost": float(self.final_cost),
            "final_grad_norm": float(self.final_grad_norm),
            "iterations_run": int(self.iterations_run),
            "converged": bool(self.converged),
        }


def init_state(n_items, config, optim):
    """Gaussian ``N(0, init_scale^2)`` coordinates and unit weights."""
    if n_items < 2:
        raise ValueError("need at least two items")
    rng = np.random.default_rng(optim.seed)
    Y = optim.init_scale * rng.standard_normal((n_items, config.K))
    ones = np.ones(config.K)
    return LatentState(Y, ones, ones.copy())


class _Adam:
    def __init__(self, shapes, optim):
        self.b1 = optim.moment_decay_1
        self.b2 = optim.moment_decay_2
        self.lr = optim.step_size
        self.eps = optim.eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            p -= (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)


def _nonfinite_block(value, grads):
    if not np.isfinite(value):
        return "cost"
    for name, g in zip(("Y", "wD", "wF"), grads):
        if not np.all(np.isfinite(g)):
            return name
    return None


def fit_distributions(d_tilde, f_tilde, config, optim, state=None):
    """Fit on already-normalized distributions (``f_tilde`` may be ``None``)."""
    if state is None:
        state = init_state(d_tilde.n_items, config, optim)
    state = state.copy()
    _check_supports(state, d_tilde, f_tilde)
    Y, wD, wF = state.Y, state.wD, state.wF
    # pinned weights are excluded from the parameter list by slicing views
    params = [Y, wD[2:], wF[2:]]
    adam = _Adam([p.shape for p in params], optim)
    report = FitReport()

    def evaluate(it):
        value, gY, gD, gF = _objective(Y, wD, wF, d_tilde, f_tilde, config)
        grads = (gY, gD, gF)
        bad = _nonfinite_block(value, grads)
        if bad is not None:
            raise OptimizationError(f"non-finite {bad} at iteration {it}")
        gmax = max(float(np.max(np.abs(g))) if g.size else 0.0 for g in grads)
        return value, grads, gmax

    for it in range(optim.max_iters):
        value, (gY, gD, gF), gmax = evaluate(it)
        report.cost_trace.append(value)
        report.final_cost, report.final_grad_norm = value, gmax
        if gmax <= optim.grad_tol:
            report.converged = True
            break
        adam.step(params, [gY, gD[2:], gF[2:]])
        report.iterations_run = it + 1
    else:
        value, _, gmax = evaluate(optim.max_iters)
        report.final_cost, report.final_grad_norm = value, gmax
        report.converged = gmax <= optim.grad_tol
    logger.debug("fit finished: %d steps, cost %.6g, max|grad| %.3g",
                 report.iterations_run, report.final_cost, report.final_grad_norm)
    return state, report


def fit(d, f, config, optim):
    """Fit the two-view model to count matrices ``d`` (primary) and ``f`` (user).

    ``d`` is completed to every pair (unlisted pairs count zero); ``f`` keeps
    its own observed set.  Pass ``f=None`` to fit the primary view alone.
    """
    if f is not None and f.n_items != d.n_items:
        raise ValueError(f"views disagree on n_items: {d.n_items} vs {f.n_items}")
    d_tilde = normalize(d.with_all_pairs())
    f_tilde = normalize(f) if f is not None else None
    return fit_distributions(d_tilde, f_tilde, config, optim)


def finite_diff_gradient(state, d_tilde, f_tilde, config, h=1e-5):
    """Central differences of :func:`cost` for every free parameter."""
    if not h > 0:
        raise ValueError("h must be positive")
    work = state.copy()

    def central(arr, idx):
        old = arr[idx]
        arr[idx] = old + h
        up = cost(work, d_tilde, f_tilde, config)
        arr[idx] = old - h
        down = cost(work, d_tilde, f_tilde, config)
        arr[idx] = old
        return (up - down) / (2 * h)

    gY = np.zeros_like(work.Y)
    for idx in np.ndindex(*gY.shape):
        gY[idx] = central(work.Y, idx)
    gD = np.zeros(work.K)
    gF = np.zeros(work.K)
    for k in range(2, work.K):
        gD[k] = central(work.wD, k)
        gF[k] = central(work.wF, k)
    return gY, gD, gF
