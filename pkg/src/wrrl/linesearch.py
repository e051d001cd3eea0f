"""Strong Wolfe line search for minimization along a ray.

Standard bracket-and-zoom procedure on callables ``f(alpha)`` and
``df(alpha)`` (value and directional derivative along the search
direction).  Built for noisy objectives: when no acceptable step is found
within the evaluation budget it falls back to the smallest probed step
that decreased the objective, flagging the failure instead of raising.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable


@dataclass(frozen=True)
class WolfeConfig:
    c1: float = 1e-4
    c2: float = 0.9
    alpha_init: float = 1.0
    alpha_max: float = 1.0
    alpha_min: float = 0.05
    max_iters: int = 8

    def __post_init__(self):
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise ValueError(f"need 0 < c1 < c2 < 1, got c1={self.c1}, c2={self.c2}")
        if self.alpha_init <= 0 or self.alpha_max < self.alpha_init:
            raise ValueError("need 0 < alpha_init <= alpha_max")
        if not 0.0 < self.alpha_min <= self.alpha_max:
            raise ValueError("need 0 < alpha_min <= alpha_max")


@dataclass(frozen=True)
class LineSearchResult:
    alpha: float
    f_alpha: float
    n_evals: int
    satisfied: bool  # both Wolfe conditions hold at alpha


def wolfe_search(f: Callable[[float], float], df: Callable[[float], float],
                 cfg: WolfeConfig = WolfeConfig()) -> LineSearchResult:
    """Find a step satisfying the strong Wolfe conditions for minimization.

    ``df(0)`` must be negative (descent direction; a non-negative slope
    returns alpha=0, signalling there is nothing to gain along the ray).
    ``satisfied=False`` marks the budget-exhausted fallback: the best
    decreasing step seen, or ``alpha_min`` if nothing decreased.
    """
    f0 = f(0.0)
    d0 = df(0.0)
    evals = [2]  # f0 and d0

    def fval(a: float) -> float:
        evals[0] += 1
        return f(a)

    def dval(a: float) -> float:
        evals[0] += 1
        return df(a)

    if d0 >= 0:
        return LineSearchResult(0.0, f0, evals[0], satisfied=False)

    def zoom(lo: float, f_lo: float, hi: float) -> LineSearchResult:
        for _ in range(cfg.max_iters):
            a = 0.5 * (lo + hi)
            fa = fval(a)
            if fa > f0 + cfg.c1 * a * d0 or fa >= f_lo:
                hi = a
                continue
            da = dval(a)
            if abs(da) <= -cfg.c2 * d0:
                return LineSearchResult(a, fa, evals[0], satisfied=True)
            if da * (hi - lo) >= 0:
                hi = lo
            lo, f_lo = a, fa
        return LineSearchResult(lo, f_lo, evals[0], satisfied=False)

    a_prev, f_prev = 0.0, f0
    a = min(cfg.alpha_init, cfg.alpha_max)
    best_a, best_f = None, f0
    for i in range(cfg.max_iters):
        fa = fval(a)
        if fa < best_f:
            best_a, best_f = a, fa
        if fa > f0 + cfg.c1 * a * d0 or (i > 0 and fa >= f_prev):
            return zoom(a_prev, f_prev, a)
        da = dval(a)
        if abs(da) <= -cfg.c2 * d0:
            return LineSearchResult(a, fa, evals[0], satisfied=True)
        if da >= 0:
            return zoom(a, fa, a_prev)
        if a >= cfg.alpha_max:
            # sufficient decrease holds at the cap; take it
            return LineSearchResult(a, fa, evals[0], satisfied=False)
        a_prev, f_prev = a, fa
        a = min(2.0 * a, cfg.alpha_max)
    if best_a is not None:
        return LineSearchResult(best_a, best_f, evals[0], satisfied=False)
    return LineSearchResult(cfg.alpha_min, fval(cfg.alpha_min), evals[0], satisfied=False)
