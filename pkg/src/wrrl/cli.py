"""Command-line entry point: train, estimate-hessian, eval, selftest.

Exit codes: 0 success, 1 runtime failure, 2 configuration error.  The
resolved configuration is written into every run directory so a run can be
reproduced byte-for-byte from its artifacts.  ``WRRL_OUT`` sets the root
for relative output directories.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from dataclasses import replace

import numpy as np

from .config import ConfigError, RunConfig
from .core import train
from .harness import evaluate_grid
from .persist import save_critic, save_hessian, save_policy, load_policy
from .selftest import run_selftest
from .wasserstein import build_bucket, default_n_next
from .envs import make_env
from .zo import estimate_w2_hessian


def _load_config(path: str | None) -> RunConfig:
    if path is None:
        raise ConfigError("--config is required for this command")
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    return RunConfig.load(path)


def _resolve_out(cfg: RunConfig, override: str | None) -> str:
    out = override if override is not None else cfg.out_dir
    root = os.environ.get("WRRL_OUT")
    if root and not os.path.isabs(out):
        out = os.path.join(root, out)
    os.makedirs(out, exist_ok=True)
    return out


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        cfg.raw["io"]["seed"] = int(args.seed)
    if getattr(args, "jobs", None) is not None:
        cfg.raw["io"]["jobs"] = int(args.jobs)
    return cfg


def cmd_train(args) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    wcfg = cfg.wr2l()
    phi0 = cfg.phi0()
    out = _resolve_out(cfg, args.out)
    with open(os.path.join(out, "resolved_config.yaml"), "w") as fh:
        fh.write(cfg.to_yaml())

    def progress(rec):
        print(f"[k={rec.k:3d}] return {rec.return_mean:9.2f}  "
              f"constraint {rec.constraint:.3e}  entropy {rec.entropy:7.4f}  "
              f"phi {np.array2string(rec.phi, precision=4)}", flush=True)

    result = train(wcfg, cfg.family, cfg.seed, phi0=phi0,
                   env_options=cfg.env_options(), on_iteration=progress)
    save_policy(os.path.join(out, "policy.ckpt"), result.policy,
                metadata={"seed": cfg.seed, "epsilon": wcfg.epsilon,
                          "family": cfg.family})
    save_critic(os.path.join(out, "critic.ckpt"), result.critic)
    result.report.to_csv(os.path.join(out, "train_report.csv"))
    with open(os.path.join(out, "run_meta.json"), "w") as fh:
        json.dump(result.report.metadata | {
            "phi_final": result.phi.values.tolist(),
            "param_names": list(result.phi.names),
        }, fh, indent=2, sort_keys=True)
    print(f"checkpoint and report written to {out}")
    return 0


def cmd_estimate_hessian(args) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    wcfg = cfg.wr2l()
    phi0 = cfg.phi0()
    out = _resolve_out(cfg, args.out)
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    bucket = build_bucket(cfg.family, phi0, wcfg.bucket_size,
                          seed=int(seeds[0].generate_state(1)[0]),
                          env_options=cfg.env_options())
    env = make_env(cfg.family, phi0, 0, **cfg.env_options())
    n_next = wcfg.n_next if wcfg.n_next is not None else default_n_next(env)
    zo_cfg = replace(wcfg.zo, n_samples=wcfg.hessian_samples,
                     sigma=wcfg.hessian_sigma or wcfg.zo.sigma,
                     antithetic=False,
                     seed=int(seeds[1].generate_state(1)[0]))
    est = estimate_w2_hessian(bucket, phi0, zo_cfg, n_next=n_next)
    path = os.path.join(out, "hessian.bin")
    save_hessian(path, est, sigma=zo_cfg.sigma, seed=cfg.seed,
                 metadata={"family": cfg.family, "bucket_size": len(bucket)})
    eigs = np.linalg.eigvalsh(est.matrix)
    print(f"estimated {len(phi0)}x{len(phi0)} distance Hessian "
          f"({zo_cfg.n_samples} perturbations, sigma {zo_cfg.sigma:g})")
    print(f"eigenvalues: {np.array2string(eigs, precision=5)}")
    print(f"eigenvalue floor applied: {est.regularized} (floor {est.min_eig_floor:g})")
    print(f"cached to {path}")
    return 0


def cmd_eval(args) -> int:
    cfg = _apply_overrides(_load_config(args.config), args)
    grid = cfg.eval_grid()
    out = _resolve_out(cfg, args.out)
    policy, meta = load_policy(args.checkpoint)
    report = evaluate_grid(policy, cfg.family, grid, seed=cfg.seed,
                           base_params=cfg.phi0(), stochastic=cfg.eval_stochastic,
                           env_options=cfg.env_options(), n_jobs=cfg.jobs)
    report.metadata["checkpoint"] = args.checkpoint
    report.metadata["trained_epsilon"] = meta.get("epsilon")
    path = os.path.join(out, "eval_report.csv")
    report.to_csv(path)
    failed = [r for r in report.rows if r.failed]
    print(f"evaluated {len(report.rows)} grid points "
          f"({grid.episodes_per_point} episodes each); "
          f"worst-case return {report.worst_case():.2f}")
    if failed:
        print(f"warning: {len(failed)} points failed", file=sys.stderr)
    print(f"report written to {path}")
    return 0


def cmd_selftest(args) -> int:
    results = run_selftest(quick=args.quick)
    width = max(len(r.name) for r in results)
    failures = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<{width}}  {r.detail}")
        failures += 0 if r.passed else 1
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wrrl",
        description="Robust policy training over a Wasserstein ball of dynamics")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="run configuration YAML")
        p.add_argument("--seed", type=int, default=None,
                       help="override io.seed from the config")
        p.add_argument("--jobs", type=int, default=None,
                       help="worker parallelism (1 = fully deterministic)")
        p.add_argument("--out", default=None, help="output directory")

    p_train = sub.add_parser("train", help="run robust training")
    common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_hess = sub.add_parser("estimate-hessian",
                            help="estimate and cache the distance Hessian at phi0")
    common(p_hess)
    p_hess.set_defaults(func=cmd_estimate_hessian)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint over a dynamics grid")
    common(p_eval)
    p_eval.add_argument("--checkpoint", required=True, help="policy checkpoint path")
    p_eval.set_defaults(func=cmd_eval)

    p_self = sub.add_parser("selftest", help="run the built-in oracle suite")
    p_self.add_argument("--quick", action="store_true", help="reduced budgets")
    p_self.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        traceback.print_exc()
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
