"""Experiment driver: cells, learning-rate sweeps, gap studies.

A cell is one (env, algo, lr, seed). Cells that share an (env, algo, gap)
are advanced together as rows of one array, each row reading the stream of
its own seed through a shared :class:`TransitionWindow`. All arithmetic is
row-wise, so a row's trace does not depend on which other rows ride along.
"""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from tdlab.config import ExperimentConfig
from tdlab.envs import ProblemInstance, make_env
from tdlab.errors import AssumptionViolation
from tdlab.learners import Sample, get_algo, project_ball, window_sample
from tdlab.mdp import chain_structure, induced_dynamics, make_rng, ratio_table, sample_trajectory
from tdlab.oracle import OracleQuantities, check_assumptions, compute_oracle
from tdlab.records import RMSPBE_CLAMP, RunRecord, Summary, emit_csv, emit_plot_data, summarize
from tdlab.schedules import GapFn, LrSchedule, check_gap_assumption
from tdlab.window import TransitionWindow

log = logging.getLogger(__name__)


def _matvec(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    # explicit broadcast-and-sum keeps each row's rounding independent of the batch
    return (v[..., None, :] * M).sum(-1)


def rowwise_rmspbe(W: np.ndarray, oq: OracleQuantities) -> np.ndarray:
    v = _matvec(oq.A, W) + oq.b
    q = (_matvec(oq.C_inv, v) * v).sum(-1)
    return np.sqrt(np.maximum(q, 0.0))


def require_runnable(inst: ProblemInstance) -> None:
    """Reject instances that break Assumption 1, or Assumption 2 where the
    instance does not declare its features rank deficient on purpose."""
    P_mu, _ = induced_dynamics(inst.mdp, inst.mu)
    irreducible, aperiodic = chain_structure(P_mu)
    if not (irreducible and aperiodic):
        raise AssumptionViolation(f"{inst.name}: behaviour chain not ergodic", assumption=1)
    ratio_table(inst.pi, inst.mu)
    if not inst.X.allow_rank_deficient:
        rep = check_assumptions(inst.mdp, inst.pi, inst.mu, inst.X)
        if not rep.passed:
            raise AssumptionViolation(f"{inst.name}: {'; '.join(rep.notes)}", assumption=2)


def env_stream(inst: ProblemInstance, master_seed: int, seed: int, n: int):
    """Behaviour trajectory for one seed; depends only on (master, env, seed)."""
    rng = make_rng(master_seed, "env", inst.name, seed)
    s0 = int(rng.choice(inst.mdp.n_states, p=inst.start))
    return sample_trajectory(inst.mdp, inst.mu, inst.pi, s0, n, rng)


def resolve_radius(cfg: ExperimentConfig, oq: OracleQuantities) -> float:
    kind, v = cfg.radius_factor()
    B = v * float(np.linalg.norm(oq.w_star)) if kind == "wstar" else v
    if B < np.linalg.norm(oq.w_star):
        warnings.warn(
            f"projection radius {B:.6g} below ||w*|| = {np.linalg.norm(oq.w_star):.6g}",
            stacklevel=2,
        )
    return B


@dataclass
class BatchResult:
    rmspbe: np.ndarray  # (rows, n_steps)
    w_norm: np.ndarray
    diverged: np.ndarray  # (rows,)
    final_w: np.ndarray  # (rows, K)
    w_at: dict[int, np.ndarray]  # requested snapshots, step -> (rows, K)


def simulate(
    inst: ProblemInstance,
    oq: OracleQuantities,
    algo_name: str,
    gap: GapFn,
    lrs,
    seeds,
    *,
    n_steps: int,
    master_seed: int,
    nu: float | None = None,
    radius: float = np.inf,
    guard: float = 1e8,
    snapshot_steps=(),
) -> BatchResult:
    """Advance every (lr, seed) row for ``n_steps`` updates.

    Rows are ordered lr-major: row ``i * len(seeds) + j`` is (lrs[i], seeds[j]).
    Gap methods issue update t only once the window holds time t+f(t)+1.
    """
    algo = get_algo(algo_name)
    lrs = np.asarray(lrs, dtype=float)
    seeds = list(seeds)
    n_seeds = len(seeds)
    row_seed = np.tile(np.arange(n_seeds), len(lrs))
    row_lr = np.repeat(lrs, n_seeds)
    n_rows = len(row_lr)
    K = inst.n_features
    gamma = inst.mdp.discount

    f = gap.values(n_steps) if algo.uses_gap else np.zeros(n_steps, dtype=np.int64)
    horizon = n_steps + int(f[-1]) + 2
    trajs = [env_stream(inst, master_seed, s, horizon) for s in seeds]
    states = np.stack([tr.states for tr in trajs])  # (seeds, horizon+1)
    rho = np.stack([tr.rho for tr in trajs])
    rew = np.stack([tr.rewards for tr in trajs])
    Phi = inst.X.X

    window = TransitionWindow(K, batch=(n_seeds,))

    def fill_to(time: int) -> None:
        while window.next_time <= time:
            tau = window.next_time
            window.push(Phi[states[:, tau]], rho[:, tau], rew[:, tau])

    w = np.tile(np.asarray(inst.w_init, dtype=float), (n_rows, 1))
    h = np.zeros((n_rows, K)) if algo.has_aux else None
    active = np.ones(n_rows, dtype=bool)
    diverged = np.zeros(n_rows, dtype=bool)
    out_e = np.empty((n_rows, n_steps))
    out_n = np.empty((n_rows, n_steps))
    snaps = {}
    snapshot_steps = set(snapshot_steps)
    if 0 in snapshot_steps:
        snaps[0] = w.copy()
    sched = None if nu is None else np.arange(1, n_steps + 1, dtype=float) ** nu

    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(n_steps):
            ft = int(f[t]) if algo.uses_gap else None
            fill_to(t + 1 + (ft or 0))
            s = window_sample(window, t, ft)
            s = Sample(*(None if a is None else a[row_seed] for a in s))
            alpha = row_lr if sched is None else row_lr / sched[t]
            w_new, h_new = algo.update(w, h, s, alpha, gamma)
            if algo.projected:
                w_new = project_ball(w_new, radius)
            if active.all():
                w, h = w_new, h_new
            else:
                w = np.where(active[:, None], w_new, w)
                if h is not None:
                    h = np.where(active[:, None], h_new, h)
            norms = np.sqrt((w * w).sum(-1))
            tripped = active & ~(norms <= guard)
            if tripped.any():
                diverged |= tripped
                active &= ~tripped
            e = rowwise_rmspbe(w, oq)
            out_e[:, t] = np.where(diverged, np.minimum(np.nan_to_num(e, nan=RMSPBE_CLAMP), RMSPBE_CLAMP), e)
            out_n[:, t] = norms
            window.evict_before(t + 1)
            if t + 1 in snapshot_steps:
                snaps[t + 1] = w.copy()
    return BatchResult(out_e, out_n, diverged, w, snaps)


def _records(inst, algo, lrs, seeds, res: BatchResult) -> list[RunRecord]:
    out = []
    n_seeds = len(seeds)
    for i, lr in enumerate(lrs):
        for j, seed in enumerate(seeds):
            r = i * n_seeds + j
            out.append(RunRecord(
                env=inst.name, algo=algo, lr=float(lr), seed=int(seed),
                rmspbe=res.rmspbe[r].copy(), w_norm=res.w_norm[r].copy(),
                diverged=bool(res.diverged[r]), final_w=res.final_w[r].copy(),
            ))
    return out


def _prepare(cfg: ExperimentConfig, env: str):
    inst = make_env(env)
    require_runnable(inst)
    oq = compute_oracle(inst.mdp, inst.pi, inst.mu, inst.X)
    return inst, oq


def run_group(cfg: ExperimentConfig, env: str, algo: str, gap: str, lrs=None, seeds=None):
    """All cells of one (env, algo, gap) in a single batch."""
    inst, oq = _prepare(cfg, env)
    lrs = list(cfg.lrs if lrs is None else lrs)
    seeds = list(range(cfg.n_seeds) if seeds is None else seeds)
    radius = resolve_radius(cfg, oq) if get_algo(algo).projected else np.inf
    res = simulate(
        inst, oq, algo, GapFn.parse(gap), lrs, seeds,
        n_steps=cfg.n_steps, master_seed=cfg.seed, nu=cfg.nu, radius=radius, guard=cfg.guard,
    )
    return _records(inst, algo, lrs, seeds, res)


def run_cell(cfg: ExperimentConfig, env: str, algo: str, lr: float, seed: int) -> RunRecord:
    return run_group(cfg, env, algo, cfg.gap, lrs=[lr], seeds=[seed])[0]


def _run_group_job(args):
    cfg, env, algo, gap = args
    return run_group(cfg, env, algo, gap)


def run_jobs(jobs, serial: bool = False) -> list[list[RunRecord]]:
    if serial or len(jobs) == 1:
        return [_run_group_job(j) for j in jobs]
    workers = max(1, min(len(jobs), os.cpu_count() or 1))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_group_job, jobs))


def _gap_label_ok(cfg: ExperimentConfig, gap: str) -> bool:
    sched = LrSchedule(cfg.c_alpha, cfg.nu if cfg.nu is not None else cfg.check_nu)
    rep = check_gap_assumption(
        GapFn.parse(gap), sched, tau=cfg.tau, c_tau=cfg.c_tau,
        chi_grid=cfg.chi_grid, horizon=max(cfg.horizon, 10**4),
    )
    return rep.within_assumption


@dataclass
class SweepResult:
    records: list[RunRecord]
    summaries: list[Summary]

    def summary(self, env: str, algo: str, gap: str | None = None) -> Summary:
        for s in self.summaries:
            if s.env == env and s.algo == algo and (gap is None or s.gap == gap):
                return s
        raise KeyError((env, algo, gap))


def sweep(cfg: ExperimentConfig, serial: bool = False, gaps=None) -> SweepResult:
    """Run every (env, algo, gap, lr, seed) cell and pick best lrs per (env, algo, gap)."""
    gaps = [cfg.gap] if gaps is None else list(gaps)
    jobs = []
    for env in cfg.env:
        for algo in cfg.algo:
            algo_gaps = gaps if get_algo(algo).uses_gap else gaps[:1]
            for g in algo_gaps:
                jobs.append((cfg, env, algo, g))
    for env in cfg.env:
        _prepare(cfg, env)  # surface config / assumption errors before stepping
    results = run_jobs(jobs, serial=serial)
    records, summaries = [], []
    for (_, env, algo, g), recs in zip(jobs, results):
        s = summarize(recs, g if get_algo(algo).uses_gap else "-")
        if get_algo(algo).uses_gap:
            s.within_assumption = _gap_label_ok(cfg, g)
        summaries.append(s)
        records.extend(recs)
        log.info("%s/%s gap=%s best lr %g final %.6g", env, algo, g, s.best_lr, s.final_mean)
    records.sort(key=lambda r: (r.cell_id, ))
    return SweepResult(records, summaries)


def gap_study(cfg: ExperimentConfig, gap_kinds, serial: bool = False) -> dict[str, list[Summary]]:
    """Same protocol once per gap kind; only gap-based algorithms are run."""
    kinds = [GapFn.parse(k).label for k in gap_kinds]
    algos = tuple(a for a in cfg.algo if get_algo(a).uses_gap) or ("attd",)
    res = sweep(cfg.with_(algo=algos), serial=serial, gaps=kinds)
    return {k: [s for s in res.summaries if s.gap == k] for k in kinds}


def write_outputs(res: SweepResult, out_dir: str | Path, traces: bool = True) -> list[Path]:
    out = Path(out_dir)
    paths = []
    if traces:
        paths.append(emit_csv(res.records, out / "traces.csv"))
    paths.append(emit_csv(res.summaries, out / "summary.csv"))
    paths.append(emit_plot_data(res.summaries, out / "plot_data.json"))
    return paths
