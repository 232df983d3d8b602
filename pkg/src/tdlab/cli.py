"""``tdlab`` command line: run, sweep, gaps, oracle, check.

Exit codes: 0 success, 2 config error, 3 assumption-check failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from tdlab.config import ExperimentConfig, load_config
from tdlab.envs import make_env
from tdlab.errors import AssumptionViolation, ConfigError, GenerationError, TdlabIOError
from tdlab.harness import SweepResult, gap_study, sweep, write_outputs
from tdlab.oracle import check_assumptions, compute_oracle
from tdlab.records import emit_csv
from tdlab.schedules import GapFn, LrSchedule, check_gap_assumption, skeleton

EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTION, EXIT_IO = 0, 2, 3, 4


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value experiment file (defaults apply when omitted)")
    p.add_argument("--seed", type=int, help="master seed (overrides the config)")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--serial", action="store_true", help="run cells in-process instead of a pool")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("run", "run every configured cell and write per-step traces"),
        ("sweep", "learning-rate sweep: traces, best-lr summaries and plot data"),
        ("gaps", "repeat the sweep once per gap function"),
        ("oracle", "exact A, b, C, w* and beta for each configured env"),
        ("check", "assumption checks for envs, gap function and step-size skeleton"),
    ):
        p = sub.add_parser(name, help=help_)
        _common(p)
        if name == "gaps":
            p.add_argument("--kinds", help="comma list, e.g. ln2,log:5,const:0 (default: config gaps)")
    return parser


def _load(args) -> ExperimentConfig:
    overrides = {"seed": args.seed, "out": args.out}
    if args.config:
        return load_config(args.config, **overrides)
    return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})


def _write_json(obj, path: Path) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(obj, indent=1) + "\n")
    except OSError as exc:
        raise TdlabIOError(f"cannot write {path}: {exc}") from exc
    return path


def _report(res: SweepResult) -> None:
    for s in sorted(res.summaries, key=lambda s: (s.env, s.algo, s.gap)):
        tag = "divergent" if s.divergent else f"final {s.final_mean:.6g}"
        extra = ""
        if s.within_assumption is False:
            extra = "  [gap outside Assumption 4]"
        print(f"{s.env:>10} {s.algo:>7} gap={s.gap:<8} best_lr={s.best_lr:<12g} {tag}{extra}")


def cmd_run(cfg: ExperimentConfig, args) -> int:
    res = sweep(cfg, serial=args.serial)
    print(emit_csv(res.records, Path(cfg.out) / "traces.csv"))
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    res = sweep(cfg, serial=args.serial)
    _report(res)
    for p in write_outputs(res, cfg.out):
        print(p)
    return EXIT_OK


def cmd_gaps(cfg: ExperimentConfig, args) -> int:
    kinds = [k.strip() for k in args.kinds.split(",")] if args.kinds else list(cfg.gaps)
    for k in kinds:
        GapFn.parse(k)
    by_kind = gap_study(cfg, kinds, serial=args.serial)
    summaries = [s for ss in by_kind.values() for s in ss]
    res = SweepResult(records=[], summaries=summaries)
    _report(res)
    for p in write_outputs(res, cfg.out, traces=False):
        print(p)
    return EXIT_OK


def cmd_oracle(cfg: ExperimentConfig, args) -> int:
    out = {}
    for env in cfg.env:
        inst = make_env(env)
        oq = compute_oracle(inst.mdp, inst.pi, inst.mu, inst.X)
        out[env] = {
            "d_mu": oq.d_mu.tolist(), "A": oq.A.tolist(), "b": oq.b.tolist(), "C": oq.C.tolist(),
            "w_star": oq.w_star.tolist(), "beta": oq.beta, "singular": oq.singular,
            "residual": float(np.linalg.norm(oq.A @ oq.w_star + oq.b)),
        }
        print(f"{env}: w* = {np.array2string(oq.w_star, precision=6)}  beta = {oq.beta:.6g}")
    print(_write_json(out, Path(cfg.out) / "oracle.json"))
    return EXIT_OK


def cmd_check(cfg: ExperimentConfig, args) -> int:
    failed = False
    out = {"envs": {}}
    for env in cfg.env:
        inst = make_env(env)
        rep = check_assumptions(inst.mdp, inst.pi, inst.mu, inst.X)
        tolerated = not rep.passed and inst.X.allow_rank_deficient and rep.irreducible \
            and rep.aperiodic and rep.coverage
        status = "PASS" if rep.passed else ("TOLERATED" if tolerated else "FAIL")
        failed |= status == "FAIL"
        out["envs"][env] = {**rep.as_dict(), "status": status}
        print(f"{env}: assumptions {status}" + "".join(f"\n  {n}" for n in rep.notes))

    nu = cfg.nu if cfg.nu is not None else cfg.check_nu
    sched = LrSchedule(cfg.c_alpha, nu)
    grep = check_gap_assumption(
        cfg.gap_fn(), sched, tau=cfg.tau, c_tau=cfg.c_tau, chi_grid=cfg.chi_grid, horizon=cfg.horizon,
    )
    failed |= not grep.within_assumption
    print(f"gap {grep.gap}: {grep.status} (C_tau needed {grep.c_tau_required_tail:.4g}, have {grep.c_tau:g})")
    for c in grep.chi:
        print(f"  chi={c.chi:g}: {c.verdict} (heuristic {c.heuristic}, analytic {c.analytic})")
    out["gap"] = {
        "gap": grep.gap, "status": grep.status, "monotone": grep.monotone, "bound_ok": grep.bound_ok,
        "bound_tail_ok": grep.bound_tail_ok, "c_tau_required": grep.c_tau_required_tail,
        "chi": [c.__dict__ for c in grep.chi],
    }

    sk = skeleton(sched, cfg.eta, cfg.m_max, tau=cfg.tau)
    failed |= not sk.ok
    print(f"skeleton eta={sk.eta:g} m<={cfg.m_max}: {'PASS' if sk.ok else 'FAIL'}")
    for v in sk.violations[:10]:
        print(f"  {v}")
    out["skeleton"] = {"eta": sk.eta, "n_marks": len(sk.t_marks), "ok": sk.ok, "violations": sk.violations}
    print(_write_json(out, Path(cfg.out) / "check.json"))
    return EXIT_ASSUMPTION if failed else EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "gaps": cmd_gaps, "oracle": cmd_oracle, "check": cmd_check}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _load(args)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, GenerationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionViolation as exc:
        print(f"assumption check failed: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (TdlabIOError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
