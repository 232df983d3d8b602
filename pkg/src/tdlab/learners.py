"""Per-step update rules for linear off-policy evaluation.

The ``*_update`` kernels work on plain arrays and broadcast over leading
batch axes, so the same arithmetic serves a single learner and a stack of
independent cells. Vectors have shape ``(..., K)``; per-row scalars such as
``alpha``, ``rho`` and ``r`` have shape ``(...)``.

The ``step_*`` functions wrap the kernels with the :class:`LearnerState`
bookkeeping (step counter, divergence guard).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from tdlab.errors import ConfigError
from tdlab.mdp import FeatureMap, Transition
from tdlab.window import TransitionWindow

DIVERGENCE_GUARD = 1e8
TDRC_REG = 1.0
VTRACE_CLIP = 1.0


def _dot(a, b):
    return (a * b).sum(-1)


def _col(s):
    """Per-row scalar -> broadcastable against (..., K)."""
    return np.asarray(s)[..., None]


class Sample(NamedTuple):
    """What one update may consume: the step at t and, for gap methods, the
    step at t + f(t). ``xk``/``xk1``/``rhok`` are None for the baselines."""

    x: np.ndarray
    r: np.ndarray
    xn: np.ndarray
    rho: np.ndarray
    xk: np.ndarray | None = None
    xk1: np.ndarray | None = None
    rhok: np.ndarray | None = None


def td_error(w, s: Sample, gamma: float):
    return s.r + gamma * _dot(s.xn, w) - _dot(s.x, w)


def td_update(w, h, s: Sample, alpha, gamma):
    delta = td_error(w, s, gamma)
    return w + _col(alpha) * (_col(s.rho * delta) * s.x), h


def vtrace_update(w, h, s: Sample, alpha, gamma, clip=VTRACE_CLIP):
    delta = td_error(w, s, gamma)
    return w + _col(alpha) * (_col(np.minimum(s.rho, clip) * delta) * s.x), h


def gtd_update(w, h, s: Sample, alpha, gamma):
    delta = td_error(w, s, gamma)
    a = _col(alpha)
    h_new = h + a * (_col(s.rho * delta) * s.x - h)
    # w uses the pre-update secondary weight
    w_new = w + a * (_col(s.rho * _dot(s.x, h)) * (s.x - gamma * s.xn))
    return w_new, h_new


def gtd2_update(w, h, s: Sample, alpha, gamma):
    delta = td_error(w, s, gamma)
    xh = _dot(s.x, h)
    a = _col(alpha)
    w_new = w + a * (_col(s.rho * xh) * (s.x - gamma * s.xn))
    h_new = h + a * (_col(s.rho * delta - xh) * s.x)
    return w_new, h_new


def tdc_update(w, h, s: Sample, alpha, gamma, reg=0.0):
    delta = td_error(w, s, gamma)
    xh = _dot(s.x, h)
    a = _col(alpha)
    w_new = w + a * (_col(s.rho * delta) * s.x - _col(s.rho * gamma * xh) * s.xn)
    h_new = h + a * (_col(s.rho * delta - xh) * s.x)
    if reg:
        h_new = h_new - a * (reg * h)
    return w_new, h_new


def tdrc_update(w, h, s: Sample, alpha, gamma, reg=TDRC_REG):
    return tdc_update(w, h, s, alpha, gamma, reg=reg)


def htd_update(w, h, s: Sample, alpha, gamma):
    delta = td_error(w, s, gamma)
    xh = _dot(s.x, h)
    a = _col(alpha)
    d = s.x - gamma * s.xn
    w_new = w + a * (_col(s.rho * delta) * s.x + d * _col((s.rho - 1.0) * xh))
    h_new = h + a * (_col(s.rho * delta) * s.x - d * _col(xh))
    return w_new, h_new


def attd_increment(w, s: Sample, gamma):
    """rho_k (x_k - gamma x_{k+1}) x_k^T rho_t delta_t x_t, evaluated right to left.

    Everything left of (x_k - gamma x_{k+1}) collapses to one scalar per row,
    so the cost is O(K) and no K x K matrix is formed.
    """
    delta = td_error(w, s, gamma)
    scale = s.rhok * s.rho * delta * _dot(s.xk, s.x)
    return _col(scale) * (s.xk - gamma * s.xk1)


def attd_update(w, h, s: Sample, alpha, gamma):
    return w + _col(alpha) * attd_increment(w, s, gamma), h


def project_ball(v, B: float):
    """Euclidean projection onto {||v|| <= B}; rows outside are rescaled."""
    if not B > 0:
        raise ConfigError(f"projection radius must be positive, got {B}")
    v = np.asarray(v, dtype=float)
    if np.isinf(B):
        return v
    norm = np.sqrt(_dot(v, v))
    scale = np.where(norm > B, B / np.where(norm > 0, norm, 1.0), 1.0)
    return v * _col(scale)


@dataclass(frozen=True)
class Algo:
    name: str
    update: object
    has_aux: bool
    uses_gap: bool
    projected: bool = False


ALGOS = {
    a.name: a
    for a in (
        Algo("td", td_update, False, False),
        Algo("vtrace", vtrace_update, False, False),
        Algo("gtd", gtd_update, True, False),
        Algo("gtd2", gtd2_update, True, False),
        Algo("tdc", tdc_update, True, False),
        Algo("tdrc", tdrc_update, True, False),
        Algo("htd", htd_update, True, False),
        Algo("attd", attd_update, False, True),
        Algo("pattd", attd_update, False, True, projected=True),
    )
}


def get_algo(name: str) -> Algo:
    try:
        return ALGOS[name]
    except KeyError:
        raise ConfigError(f"unknown algorithm {name!r}; known: {', '.join(ALGOS)}") from None


@dataclass
class LearnerState:
    w: np.ndarray
    nu_aux: np.ndarray | None = None
    t: int = 0
    diverged: bool = False
    guard: float = DIVERGENCE_GUARD

    @classmethod
    def zeros(cls, n_features: int, aux: bool = False, w_init=None) -> LearnerState:
        w = np.zeros(n_features) if w_init is None else np.array(w_init, dtype=float)
        if w.shape != (n_features,):
            raise ConfigError(f"w_init has shape {w.shape}, expected ({n_features},)")
        return cls(w=w, nu_aux=np.zeros(n_features) if aux else None)


def _advance(state: LearnerState, w, h) -> LearnerState:
    diverged = state.diverged or bool(np.linalg.norm(w) > state.guard)
    return replace(state, w=w, nu_aux=h, t=state.t + 1, diverged=diverged)


def _sample(tr: Transition, X: FeatureMap) -> Sample:
    return Sample(X.X[tr.s], np.float64(tr.r), X.X[tr.s_next], np.float64(tr.rho))


def _baseline_step(update, state, tr, alpha, X, gamma, needs_aux):
    if needs_aux and state.nu_aux is None:
        raise ConfigError("this learner needs a secondary weight vector")
    w, h = update(state.w, state.nu_aux, _sample(tr, X), alpha, gamma)
    return _advance(state, w, h)


def step_offpolicy_td(state: LearnerState, tr: Transition, alpha: float, X: FeatureMap, gamma: float):
    return _baseline_step(td_update, state, tr, alpha, X, gamma, False)


def step_gtd(state: LearnerState, tr: Transition, alpha: float, X: FeatureMap, gamma: float):
    return _baseline_step(gtd_update, state, tr, alpha, X, gamma, True)


def step_gtd2(state: LearnerState, tr: Transition, alpha: float, X: FeatureMap, gamma: float):
    return _baseline_step(gtd2_update, state, tr, alpha, X, gamma, True)


def step_tdc(state: LearnerState, tr: Transition, alpha: float, X: FeatureMap, gamma: float):
    return _baseline_step(tdc_update, state, tr, alpha, X, gamma, True)


def step_extended_baselines(
    kind: str, state: LearnerState, tr: Transition, alpha: float, X: FeatureMap, gamma: float,
    reg: float = TDRC_REG, clip: float = VTRACE_CLIP,
):
    """One step of HTD, Vtrace or TDRC (lambda = 0 forms)."""
    kind = kind.lower()
    if kind == "htd":
        return _baseline_step(htd_update, state, tr, alpha, X, gamma, True)
    if kind == "vtrace":
        upd = lambda w, h, s, a, g: vtrace_update(w, h, s, a, g, clip=clip)  # noqa: E731
        return _baseline_step(upd, state, tr, alpha, X, gamma, False)
    if kind == "tdrc":
        upd = lambda w, h, s, a, g: tdrc_update(w, h, s, a, g, reg=reg)  # noqa: E731
        return _baseline_step(upd, state, tr, alpha, X, gamma, True)
    raise ConfigError(f"unknown extended baseline {kind!r}")


def window_sample(window: TransitionWindow, t: int, gap_t: int | None = None) -> Sample:
    """Assemble the update inputs for step ``t`` from the window.

    Needs times t, t+1 and, with a gap, t+f(t) and t+f(t)+1 to be resident.
    """
    x, rho = window.at(t)
    xn, _ = window.at(t + 1)
    r = window.reward(t)
    if gap_t is None:
        return Sample(x, r, xn, rho)
    xk, rhok = window.at(t + gap_t)
    xk1, _ = window.at(t + gap_t + 1)
    return Sample(x, r, xn, rho, xk, xk1, rhok)


def step_attd(state: LearnerState, window: TransitionWindow, gap_t: int, alpha: float, gamma: float):
    """One update at time ``state.t`` using the window entries at t, t+1, t+f(t), t+f(t)+1."""
    s = window_sample(window, state.t, gap_t)
    w, _ = attd_update(state.w, None, s, alpha, gamma)
    return _advance(state, w, None)


def step_projected_attd(
    state: LearnerState, window: TransitionWindow, gap_t: int, alpha: float, gamma: float,
    B: float, w_star=None,
):
    if w_star is not None and np.linalg.norm(w_star) > B:
        warnings.warn(
            f"projection radius {B} is smaller than ||w*|| = {np.linalg.norm(w_star):.6g}",
            stacklevel=2,
        )
    s = window_sample(window, state.t, gap_t)
    w, _ = attd_update(state.w, None, s, alpha, gamma)
    return _advance(state, project_ball(w, B), None)


def attd_increment_counted(w, x, r, xn, rho, xk, xk1, rhok, gamma):
    """Scalar-loop version of :func:`attd_increment` that also counts
    multiply-accumulates. Used to audit the O(K) claim, not for speed."""
    macs = 0
    vx = vn = 0.0
    for i in range(len(w)):
        vx += x[i] * w[i]
        vn += xn[i] * w[i]
        macs += 2
    delta = r + gamma * vn - vx
    macs += 1
    kk = 0.0
    for i in range(len(w)):
        kk += xk[i] * x[i]
        macs += 1
    scale = rhok * rho * delta * kk
    macs += 3
    out = [0.0] * len(w)
    for i in range(len(w)):
        out[i] = scale * (xk[i] - gamma * xk1[i])
        macs += 2
    return np.array(out), macs


def attd_increment_naive_counted(w, x, r, xn, rho, xk, xk1, rhok, gamma):
    """Left-to-right evaluation that builds the K x K outer product first."""
    K = len(w)
    macs = 0
    vx = vn = 0.0
    for i in range(K):
        vx += x[i] * w[i]
        vn += xn[i] * w[i]
        macs += 2
    delta = r + gamma * vn - vx
    macs += 1
    M = [[0.0] * K for _ in range(K)]
    for i in range(K):
        for j in range(K):
            M[i][j] = rhok * (xk[i] - gamma * xk1[i]) * xk[j]
            macs += 2
    out = [0.0] * K
    c = rho * delta
    for i in range(K):
        acc = 0.0
        for j in range(K):
            acc += M[i][j] * x[j]
            macs += 1
        out[i] = acc * c
        macs += 1
    return np.array(out), macs
