"""Finite MDPs, policies, features, sampling and chain-level linear algebra."""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from functools import cached_property

import networkx as nx
import numpy as np

from tdlab.errors import AssumptionViolation, ConfigError, CoverageViolation

PROB_TOL = 1e-12


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


def _check_rows(probs: np.ndarray, what: str) -> None:
    if np.any(probs < 0):
        raise ConfigError(f"{what} has negative entries")
    dev = np.abs(probs.sum(axis=-1) - 1.0)
    if np.any(dev > PROB_TOL):
        raise ConfigError(f"{what} rows do not sum to 1 (max deviation {dev.max():.3g})")


def _cdf(probs: np.ndarray) -> np.ndarray:
    c = np.cumsum(probs, axis=-1)
    # pin the last entry at exactly 1 so u in [0, 1) never falls off the end
    return _frozen(c / c[..., -1:])


@dataclass(frozen=True, eq=False)
class Mdp:
    """Tabular MDP. ``transition[s, a, s']`` is p(s'|s, a), ``reward[s, a]`` is r(s, a)."""

    transition: np.ndarray
    reward: np.ndarray
    discount: float

    def __post_init__(self) -> None:
        p = _frozen(self.transition)
        r = _frozen(self.reward)
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise ConfigError(f"transition must have shape (S, A, S), got {p.shape}")
        if r.shape != p.shape[:2]:
            raise ConfigError(f"reward shape {r.shape} does not match transition {p.shape[:2]}")
        _check_rows(p, "transition")
        if not 0.0 <= self.discount < 1.0:
            raise ConfigError(f"discount must lie in [0, 1), got {self.discount}")
        object.__setattr__(self, "transition", p)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @cached_property
    def next_state_cdf(self) -> np.ndarray:
        return _cdf(self.transition)


@dataclass(frozen=True, eq=False)
class Policy:
    """Stochastic policy table, ``probs[s, a]`` = pi(a|s)."""

    probs: np.ndarray

    def __post_init__(self) -> None:
        p = _frozen(self.probs)
        if p.ndim != 2:
            raise ConfigError(f"policy table must be 2-d, got shape {p.shape}")
        _check_rows(p, "policy")
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> Policy:
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @cached_property
    def cdf(self) -> np.ndarray:
        return _cdf(self.probs)


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """State-feature matrix with one row x(s) per state.

    Full column rank is checked unless ``allow_rank_deficient`` is set, which
    only Baird's overparameterized features need.
    """

    X: np.ndarray
    allow_rank_deficient: bool = False

    def __post_init__(self) -> None:
        X = _frozen(self.X)
        if X.ndim != 2:
            raise ConfigError(f"feature matrix must be 2-d, got shape {X.shape}")
        object.__setattr__(self, "X", X)
        if not self.allow_rank_deficient and not self.full_rank:
            raise AssumptionViolation(
                f"feature matrix of shape {X.shape} is not full column rank", assumption=2
            )

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @cached_property
    def full_rank(self) -> bool:
        n, k = self.X.shape
        if k > n:
            return False
        sv = np.linalg.svd(self.X, compute_uv=False)
        return bool(sv[-1] > 1e-10 * max(sv[0], 1.0))


@dataclass(frozen=True)
class Transition:
    s: int
    a: int
    r: float
    s_next: int
    rho: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Arrays of a sampled stream; ``states`` has one more entry than the rest."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    rho: np.ndarray

    def __len__(self) -> int:
        return len(self.actions)

    def transition(self, t: int) -> Transition:
        return Transition(
            int(self.states[t]), int(self.actions[t]), float(self.rewards[t]),
            int(self.states[t + 1]), float(self.rho[t]),
        )


def _check_pair(mdp: Mdp, pi: Policy) -> None:
    if pi.probs.shape != (mdp.n_states, mdp.n_actions):
        raise ConfigError(
            f"policy shape {pi.probs.shape} does not match MDP ({mdp.n_states}, {mdp.n_actions})"
        )


def induced_dynamics(mdp: Mdp, pi: Policy) -> tuple[np.ndarray, np.ndarray]:
    """Return (P_pi, r_pi) for the chain obtained by following ``pi``."""
    _check_pair(mdp, pi)
    P = np.einsum("sa,sat->st", pi.probs, mdp.transition)
    r = np.einsum("sa,sa->s", pi.probs, mdp.reward)
    return P, r


def chain_structure(P: np.ndarray) -> tuple[bool, bool]:
    """(irreducible, aperiodic) read off the support graph of ``P``."""
    P = np.asarray(P)
    g = nx.DiGraph()
    g.add_nodes_from(range(P.shape[0]))
    g.add_edges_from(zip(*np.nonzero(P > 0)))
    irreducible = nx.is_strongly_connected(g)
    aperiodic = irreducible and nx.is_aperiodic(g)
    return irreducible, aperiodic


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Solve d^T P = d^T, sum(d) = 1 directly.

    The structure check runs first so a reducible or periodic chain raises
    instead of returning one of many solutions.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ConfigError(f"transition matrix must be square, got {P.shape}")
    _check_rows(P, "transition matrix")
    irreducible, aperiodic = chain_structure(P)
    if not irreducible:
        raise AssumptionViolation("chain is reducible", assumption=1)
    if not aperiodic:
        raise AssumptionViolation("chain is periodic", assumption=1)
    n = P.shape[0]
    M = P.T - np.eye(n)
    # the balance equations have rank n-1; swap one for the normalization row
    M[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        d = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise AssumptionViolation(f"stationary system is singular ({exc})", assumption=1) from exc
    return d


def importance_ratio(pi: Policy, mu: Policy, s: int, a: int) -> float:
    """pi(a|s) / mu(a|s); zero when neither policy takes the action."""
    p, m = pi.probs[s, a], mu.probs[s, a]
    if m == 0.0:
        if p > 0.0:
            raise CoverageViolation(f"mu(a={a}|s={s}) = 0 but pi(a|s) = {p}")
        return 0.0
    return float(p / m)


def ratio_table(pi: Policy, mu: Policy) -> np.ndarray:
    """All importance ratios at once, shape (S, A)."""
    uncovered = (mu.probs == 0) & (pi.probs > 0)
    if np.any(uncovered):
        s, a = np.argwhere(uncovered)[0]
        raise CoverageViolation(f"mu(a={a}|s={s}) = 0 but pi(a|s) = {pi.probs[s, a]}")
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(mu.probs > 0, pi.probs / np.where(mu.probs > 0, mu.probs, 1.0), 0.0)
    return rho


def _draw(cdf_row: np.ndarray, u: float) -> int:
    return int(np.searchsorted(cdf_row, u, side="right"))


def sample_step(mdp: Mdp, mu: Policy, pi: Policy, s: int, rng: np.random.Generator) -> Transition:
    """One behaviour-policy step from ``s``. Consumes exactly two uniforms."""
    if not 0 <= s < mdp.n_states:
        raise ConfigError(f"state {s} out of range")
    _check_pair(mdp, mu)
    u = rng.random(2)
    a = _draw(mu.cdf[s], u[0])
    s_next = _draw(mdp.next_state_cdf[s, a], u[1])
    return Transition(s, a, float(mdp.reward[s, a]), s_next, importance_ratio(pi, mu, s, a))


def sample_trajectory(
    mdp: Mdp, mu: Policy, pi: Policy, s0: int, n: int, rng: np.random.Generator
) -> Trajectory:
    """``n`` consecutive steps; identical to calling ``sample_step`` n times."""
    _check_pair(mdp, mu)
    _check_pair(mdp, pi)
    rho_tab = ratio_table(pi, mu)
    u = rng.random((n, 2))
    states = np.empty(n + 1, dtype=np.int64)
    actions = np.empty(n, dtype=np.int64)
    mu_cdf, p_cdf = mu.cdf, mdp.next_state_cdf
    s = states[0] = s0
    for t in range(n):
        a = actions[t] = _draw(mu_cdf[s], u[t, 0])
        s = states[t + 1] = _draw(p_cdf[s, a], u[t, 1])
    return Trajectory(
        states=states,
        actions=actions,
        rewards=mdp.reward[states[:-1], actions],
        rho=rho_tab[states[:-1], actions],
    )


def _tag(key: int | str) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode())
    return int(key)


def make_rng(master_seed: int, *keys: int | str) -> np.random.Generator:
    """Independent PCG64 stream for ``(master_seed, *keys)``.

    Distinct key tuples give statistically independent streams via
    SeedSequence spawn keys; string keys are hashed stably.
    """
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(_tag(k) for k in keys))
    return np.random.Generator(np.random.PCG64(ss))
