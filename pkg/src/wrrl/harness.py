"""Robustness evaluation: sweep dynamics parameters and score a policy.

Produces the data behind robustness curves: for every grid point the
dynamics parameters are set, a fixed number of episodes is rolled out, and
undiscounted returns are recorded.  Reports serialize to a flat CSV with
one ``param:<name>`` column per swept dimension.
"""

from __future__ import annotations

import csv
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .envs import ParamVector, make_env


@dataclass(frozen=True)
class EvalGrid:
    """Cartesian sweep over named parameter dimensions."""

    axes: tuple[tuple[str, tuple[float, ...]], ...]
    episodes_per_point: int = 20
    max_episode_len: int = 1000

    def __post_init__(self):
        if self.episodes_per_point < 1:
            raise ValueError(f"episodes_per_point must be >= 1, got {self.episodes_per_point}")
        if not self.axes:
            raise ValueError("grid needs at least one axis")
        axes = tuple((str(n), tuple(float(v) for v in vals)) for n, vals in self.axes)
        object.__setattr__(self, "axes", axes)

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.axes)

    def points(self) -> list[tuple[float, ...]]:
        return list(itertools.product(*(vals for _, vals in self.axes)))


def default_cartpole_grid(episodes_per_point: int = 20) -> EvalGrid:
    """28 pole lengths evenly spaced over [0.3, 3.0]."""
    values = tuple(np.linspace(0.3, 3.0, 28).tolist())
    return EvalGrid(axes=(("pole_length", values),),
                    episodes_per_point=episodes_per_point, max_episode_len=1000)


@dataclass(frozen=True)
class EvalRow:
    params: tuple[float, ...]
    return_mean: float
    return_std: float
    n_episodes: int
    failed: bool = False
    error: str = ""


@dataclass
class EvalReport:
    param_names: tuple[str, ...]
    rows: list[EvalRow]
    metadata: dict = field(default_factory=dict)

    def returns(self) -> np.ndarray:
        return np.array([r.return_mean for r in self.rows])

    def worst_case(self) -> float:
        ok = [r.return_mean for r in self.rows if not r.failed]
        if not ok:
            raise ValueError("report has no successful points")
        return float(min(ok))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as buf:
            writer = csv.writer(buf)
            writer.writerow([*(f"param:{n}" for n in self.param_names),
                             "return_mean", "return_std", "n_episodes"])
            for r in self.rows:
                writer.writerow([*(repr(float(v)) for v in r.params),
                                 repr(float(r.return_mean)),
                                 repr(float(r.return_std)), r.n_episodes])

    @classmethod
    def from_csv(cls, path) -> "EvalReport":
        with open(path, newline="") as buf:
            reader = csv.reader(buf)
            header = next(reader)
            names = tuple(h.split(":", 1)[1] for h in header if h.startswith("param:"))
            k = len(names)
            rows = []
            for line in reader:
                rows.append(EvalRow(
                    params=tuple(float(v) for v in line[:k]),
                    return_mean=float(line[k]),
                    return_std=float(line[k + 1]),
                    n_episodes=int(line[k + 2])))
        return cls(param_names=names, rows=rows)


def _episode_return(policy, env, rng, max_len: int, stochastic: bool) -> float:
    state = env.reset()
    total = 0.0
    for _ in range(max_len):
        if stochastic:
            action, _ = policy.act(state, rng)
        else:
            action = policy.mean_action(state)
        tr = env.step(action)
        total += tr.reward
        state = tr.next_state
        if tr.done:
            break
    return total


def _eval_point(args) -> EvalRow:
    (policy, family, base_params, names, point, episodes, max_len,
     stochastic, env_options, point_seed) = args
    values = base_params.values.copy()
    for name, v in zip(names, point):
        values[list(base_params.names).index(name)] = v
    try:
        params = base_params.with_values(values)
        env = make_env(family, params, seed=point_seed, **env_options)
        rng = np.random.default_rng(point_seed + 1)
        rets = [_episode_return(policy, env, rng, max_len, stochastic)
                for _ in range(episodes)]
        rets = np.asarray(rets)
        return EvalRow(params=tuple(point), return_mean=float(rets.mean()),
                       return_std=float(rets.std()), n_episodes=episodes)
    except Exception as exc:  # noqa: BLE001 - per-point failures are recorded
        return EvalRow(params=tuple(point), return_mean=float("nan"),
                       return_std=float("nan"), n_episodes=0,
                       failed=True, error=str(exc))


def evaluate_grid(policy, family: str, grid: EvalGrid, seed: int,
                  base_params: ParamVector, stochastic: bool = True,
                  env_options: dict | None = None, n_jobs: int = 1) -> EvalReport:
    """Score the policy at every grid point.

    Every swept name must be a dimension of ``base_params``; unswept
    dimensions keep their base values.  Point evaluations are independent
    (per-point seeds spawned by index) so the row order and values are the
    same for any ``n_jobs``.
    """
    env_options = dict(env_options or {})
    for name in grid.param_names:
        if name not in base_params.names:
            raise ValueError(f"grid axis {name!r} is not a parameter of {family}")
    points = grid.points()
    seeds = [int(s.generate_state(1)[0]) % (2 ** 62)
             for s in np.random.SeedSequence(seed).spawn(len(points))]
    tasks = [(policy, family, base_params, grid.param_names, point,
              grid.episodes_per_point, grid.max_episode_len, stochastic,
              env_options, pseed)
             for point, pseed in zip(points, seeds)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            rows = list(pool.map(_eval_point, tasks))
    else:
        rows = [_eval_point(t) for t in tasks]
    return EvalReport(param_names=grid.param_names, rows=rows,
                      metadata={"family": family, "seed": int(seed),
                                "stochastic": stochastic,
                                "episodes_per_point": grid.episodes_per_point})


def compare_policies(reports: list[EvalReport]) -> dict:
    """Per-point winners and summary statistics across reports on one grid.

    Returns a dict with ``winners`` (report index per point, None on ties),
    ``worst_case`` and ``area_under_curve`` per report.
    """
    if not reports:
        raise ValueError("need at least one report to compare")
    first = reports[0]
    for rep in reports[1:]:
        if rep.param_names != first.param_names or \
                [r.params for r in rep.rows] != [r.params for r in first.rows]:
            raise ValueError("reports were evaluated on different grids")
    returns = np.stack([rep.returns() for rep in reports])
    winners: list[int | None] = []
    for j in range(returns.shape[1]):
        col = returns[:, j]
        best = np.nanmax(col)
        idx = np.nonzero(col == best)[0]
        winners.append(int(idx[0]) if len(idx) == 1 else None)
    aucs = []
    for rep in reports:
        if len(rep.param_names) == 1 and len(rep.rows) > 1:
            xs = np.array([r.params[0] for r in rep.rows])
            aucs.append(float(np.trapz(rep.returns(), xs)))
        else:
            aucs.append(float(np.nanmean(rep.returns())))
    return {
        "winners": winners,
        "worst_case": [rep.worst_case() for rep in reports],
        "area_under_curve": aucs,
    }
