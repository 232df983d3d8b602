"""Benchmark problem instances: Boyan's chain, Baird's counterexample and
seeded random MDPs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from tdlab.errors import AssumptionViolation, ConfigError, GenerationError
from tdlab.mdp import FeatureMap, Mdp, Policy, make_rng
from tdlab.oracle import check_assumptions

BOYAN_STATES = 13
BOYAN_GAMMA = 0.99
BAIRD_GAMMA = 0.99


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    mdp: Mdp
    pi: Policy
    mu: Policy
    X: FeatureMap
    name: str
    w_init: np.ndarray
    canonical_gamma: float
    start: np.ndarray  # initial state distribution

    @property
    def n_features(self) -> int:
        return self.X.n_features


def make_boyan() -> ProblemInstance:
    """13-state chain: each step advances one or two states with reward -3, the
    second-to-last state steps to the end with reward -2, and the end state
    restarts the chain with reward 0. Features interpolate linearly between
    unit vectors at positions 0, 4, 8 and 12. Two actions with identical
    effects keep the instance in the common (S, A, S) layout; pi = mu.
    """
    n = BOYAN_STATES
    p = np.zeros((n, 2, n))
    r = np.zeros((n, 2))
    for s in range(n - 2):
        p[s, :, s + 1] = 0.5
        p[s, :, s + 2] = 0.5
        r[s, :] = -3.0
    p[n - 2, :, n - 1] = 1.0
    r[n - 2, :] = -2.0
    p[n - 1, :, 0] = 1.0
    X = np.zeros((n, 4))
    for s in range(n):
        lo, frac = divmod(s, 4)
        if lo == 3:
            X[s, 3] = 1.0
        else:
            X[s, lo] = 1.0 - frac / 4.0
            X[s, lo + 1] = frac / 4.0
    pol = Policy.uniform(n, 2)
    start = np.zeros(n)
    start[0] = 1.0
    return ProblemInstance(
        mdp=Mdp(p, r, BOYAN_GAMMA), pi=pol, mu=pol, X=FeatureMap(X), name="boyan",
        w_init=np.zeros(4), canonical_gamma=BOYAN_GAMMA, start=start,
    )


def make_baird() -> ProblemInstance:
    """Seven-state star. Action 0 jumps uniformly to one of the six upper
    states, action 1 jumps to the lower state. Behaviour picks them with
    probability 6/7 and 1/7, the target always picks action 1. Rewards are
    zero; features are the usual eight-dimensional overparameterized ones,
    which have rank 7.
    """
    n = 7
    p = np.zeros((n, 2, n))
    p[:, 0, :6] = 1.0 / 6.0
    p[:, 1, 6] = 1.0
    X = np.zeros((n, 8))
    for s in range(6):
        X[s, s] = 2.0
        X[s, 7] = 1.0
    X[6, 6] = 1.0
    X[6, 7] = 2.0
    mu = Policy(np.tile([6.0 / 7.0, 1.0 / 7.0], (n, 1)))
    pi = Policy(np.tile([0.0, 1.0], (n, 1)))
    return ProblemInstance(
        mdp=Mdp(p, np.zeros((n, 2)), BAIRD_GAMMA), pi=pi, mu=mu,
        X=FeatureMap(X, allow_rank_deficient=True), name="baird",
        w_init=np.array([1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 10.0, 1.0]),
        canonical_gamma=BAIRD_GAMMA, start=np.full(n, 1.0 / n),
    )


def make_random(seed: int, n_states: int, n_actions: int, K: int, gamma: float) -> ProblemInstance:
    """Dense random instance that satisfies Assumptions 1-2 (rejection sampled)."""
    if not 1 <= K <= n_states:
        raise ConfigError(f"need 1 <= K <= n_states, got K={K}, n_states={n_states}")
    if n_actions < 1:
        raise ConfigError("need at least one action")
    rng = make_rng(seed, "random-instance", n_states, n_actions, K)
    for _ in range(100):
        p = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
        r = rng.normal(size=(n_states, n_actions))
        X = rng.normal(size=(n_states, K))
        mu = 0.9 * rng.dirichlet(np.ones(n_actions), size=n_states) + 0.1 / n_actions
        pi = rng.dirichlet(np.ones(n_actions), size=n_states)
        try:
            inst = ProblemInstance(
                mdp=Mdp(p, r, gamma), pi=Policy(pi), mu=Policy(mu),
                X=FeatureMap(X), name=f"random:{seed}:{n_states}:{n_actions}:{K}:{gamma:g}",
                w_init=np.zeros(K), canonical_gamma=gamma,
                start=np.full(n_states, 1.0 / n_states),
            )
        except AssumptionViolation:
            continue
        if check_assumptions(inst.mdp, inst.pi, inst.mu, inst.X).passed:
            return inst
    raise GenerationError(f"no admissible instance after 100 draws (seed={seed})")


def make_env(name: str) -> ProblemInstance:
    """Resolve ``boyan``, ``baird`` or ``random:<seed>:<nS>:<nA>:<K>:<gamma>``."""
    name = name.strip()
    if name == "boyan":
        return make_boyan()
    if name == "baird":
        return make_baird()
    if name.startswith("random:"):
        parts = name.split(":")[1:]
        if len(parts) != 5:
            raise ConfigError(f"random env needs 5 fields, got {name!r}")
        try:
            seed, nS, nA, K = (int(v) for v in parts[:4])
            gamma = float(parts[4])
        except ValueError as exc:
            raise ConfigError(f"bad random env {name!r}: {exc}") from exc
        return make_random(seed, nS, nA, K, gamma)
    raise ConfigError(f"unknown environment {name!r}")
