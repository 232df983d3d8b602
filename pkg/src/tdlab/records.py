"""Run records, seed aggregates and their CSV / plot-data codecs."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from tdlab.errors import ConfigError, TdlabIOError

TRACE_HEADER = ("env", "algo", "lr", "seed", "step", "rmspbe", "w_norm", "diverged")
SUMMARY_HEADER = ("env", "algo", "gap", "best_lr", "step", "mean_rmspbe", "stderr_rmspbe")
RMSPBE_CLAMP = 1e6


@dataclass(eq=False)
class RunRecord:
    """Trace of one (env, algo, lr, seed) cell.

    ``rmspbe[i]`` and ``w_norm[i]`` describe the weights after update i+1.
    ``final_w`` is not part of the CSV schema and does not take part in
    equality.
    """

    env: str
    algo: str
    lr: float
    seed: int
    rmspbe: np.ndarray
    w_norm: np.ndarray
    diverged: bool
    final_w: np.ndarray | None = None

    @property
    def cell_id(self) -> tuple:
        return (self.env, self.algo, self.lr, self.seed)

    @property
    def n_steps(self) -> int:
        return len(self.rmspbe)

    def __eq__(self, other) -> bool:
        if not isinstance(other, RunRecord):
            return NotImplemented
        return (
            self.cell_id == other.cell_id
            and self.diverged == other.diverged
            and np.array_equal(self.rmspbe, other.rmspbe)
            and np.array_equal(self.w_norm, other.w_norm)
        )


@dataclass(eq=False)
class Summary:
    """Seed aggregate of one (env, algo, gap) at its best learning rate."""

    env: str
    algo: str
    gap: str
    best_lr: float
    mean: np.ndarray
    stderr: np.ndarray
    divergent: bool
    n_seeds: int
    final_by_lr: dict[float, float]
    within_assumption: bool | None = None

    @property
    def final_mean(self) -> float:
        return float(self.mean[-1])


def seed_stats(traces: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error across the seed axis (axis 0)."""
    n = traces.shape[0]
    mean = traces.mean(axis=0)
    if n < 2:
        return mean, np.zeros_like(mean)
    return mean, traces.std(axis=0, ddof=1) / np.sqrt(n)


def summarize(records: list[RunRecord], gap: str) -> Summary:
    """Pick the lr with the lowest seed-mean final RMSPBE (ties to the smaller lr)."""
    if not records:
        raise ConfigError("no records to summarise")
    env, algo = records[0].env, records[0].algo
    by_lr: dict[float, list[RunRecord]] = {}
    for rec in records:
        if (rec.env, rec.algo) != (env, algo):
            raise ConfigError("summarise one (env, algo) at a time")
        by_lr.setdefault(rec.lr, []).append(rec)
    final = {lr: float(np.mean([r.rmspbe[-1] for r in recs])) for lr, recs in sorted(by_lr.items())}
    best = min(final, key=lambda lr: (final[lr], lr))
    best_recs = sorted(by_lr[best], key=lambda r: r.seed)
    mean, se = seed_stats(np.stack([r.rmspbe for r in best_recs]))
    return Summary(
        env=env, algo=algo, gap=gap, best_lr=best, mean=mean, stderr=se,
        divergent=all(r.diverged for r in records), n_seeds=len(best_recs), final_by_lr=final,
    )


def _open_for_write(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="")
    except OSError as exc:
        raise TdlabIOError(f"cannot write {path}: {exc}") from exc


def format_traces(records: list[RunRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_HEADER)
    for rec in sorted(records, key=lambda r: r.cell_id):
        d = int(rec.diverged)
        for i, (e, n) in enumerate(zip(rec.rmspbe.tolist(), rec.w_norm.tolist()), 1):
            w.writerow((rec.env, rec.algo, repr(rec.lr), rec.seed, i, repr(e), repr(n), d))
    return buf.getvalue()


def format_summaries(summaries: list[Summary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for s in sorted(summaries, key=lambda s: (s.env, s.algo, s.gap)):
        for i, (m, e) in enumerate(zip(s.mean.tolist(), s.stderr.tolist()), 1):
            w.writerow((s.env, s.algo, s.gap, repr(s.best_lr), i, repr(m), repr(e)))
    return buf.getvalue()


def emit_csv(items, path: str | Path) -> Path:
    """Write run records (trace schema) or summaries (summary schema)."""
    path = Path(path)
    items = list(items)
    text = format_summaries(items) if items and isinstance(items[0], Summary) else format_traces(items)
    with _open_for_write(path) as fh:
        fh.write(text)
    return path


def parse_traces(text: str) -> list[RunRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != TRACE_HEADER:
        raise ConfigError("not a trace CSV (header mismatch)")
    cells: dict[tuple, list] = {}
    for row in rows[1:]:
        env, algo, lr, seed, step, e, n, d = row
        key = (env, algo, float(lr), int(seed))
        cells.setdefault(key, []).append((int(step), float(e), float(n), d == "1"))
    out = []
    for (env, algo, lr, seed), vals in cells.items():
        vals.sort()
        out.append(RunRecord(
            env, algo, lr, seed,
            rmspbe=np.array([v[1] for v in vals]),
            w_norm=np.array([v[2] for v in vals]),
            diverged=vals[0][3],
        ))
    return out


def read_traces(path: str | Path) -> list[RunRecord]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise TdlabIOError(f"cannot read {path}: {exc}") from exc
    return parse_traces(text)


def emit_plot_data(summaries: list[Summary], path: str | Path) -> Path:
    """JSON series (mean +- stderr per step) ready for a line plot with bands."""
    path = Path(path)
    series = [
        {
            "env": s.env, "algo": s.algo, "gap": s.gap, "best_lr": s.best_lr,
            "divergent": s.divergent, "n_seeds": s.n_seeds,
            "within_assumption": s.within_assumption,
            "mean": s.mean.tolist(), "stderr": s.stderr.tolist(),
        }
        for s in sorted(summaries, key=lambda s: (s.env, s.algo, s.gap))
    ]
    with _open_for_write(path) as fh:
        json.dump({"series": series}, fh, indent=1)
        fh.write("\n")
    return path
