"""Closed-form ground truth for a linear off-policy evaluation problem.

Everything here is exact dense linear algebra on the MDP tables; the only
Monte Carlo piece is :func:`mixing_check`, whose outputs are empirical
estimates and never used as ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from tdlab.errors import AssumptionViolation
from tdlab.mdp import (
    FeatureMap,
    Mdp,
    Policy,
    chain_structure,
    induced_dynamics,
    ratio_table,
    sample_trajectory,
    stationary_distribution,
)

SINGULAR_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class OracleQuantities:
    d_mu: np.ndarray
    D_mu: np.ndarray
    P_pi: np.ndarray
    r_pi: np.ndarray
    A: np.ndarray
    b: np.ndarray
    C: np.ndarray
    w_star: np.ndarray
    beta: float
    v_pi: np.ndarray
    # C^{-1}, or its pseudo-inverse for rank-deficient features
    C_inv: np.ndarray
    singular: bool = False


def _is_singular(M: np.ndarray) -> bool:
    sv = np.linalg.svd(M, compute_uv=False)
    return bool(sv[-1] <= SINGULAR_RTOL * max(sv[0], 1.0))


def compute_oracle(
    mdp: Mdp, pi: Policy, mu: Policy, X: FeatureMap, allow_singular: bool | None = None
) -> OracleQuantities:
    """A, b, C, the TD fixed point and friends for one problem instance.

    When A is singular the call raises, unless ``allow_singular`` (by default
    taken from ``X.allow_rank_deficient``) is set; then w* is the minimum-norm
    solution of Aw + b = 0 and C is pseudo-inverted.
    """
    if allow_singular is None:
        allow_singular = X.allow_rank_deficient
    ratio_table(pi, mu)  # coverage
    P_mu, _ = induced_dynamics(mdp, mu)
    d_mu = stationary_distribution(P_mu)
    P_pi, r_pi = induced_dynamics(mdp, pi)
    Phi = X.X
    if Phi.shape[0] != mdp.n_states:
        raise AssumptionViolation(
            f"feature matrix has {Phi.shape[0]} rows for {mdp.n_states} states", assumption=2
        )
    D = np.diag(d_mu)
    gamma = mdp.discount
    A = Phi.T @ D @ (gamma * P_pi - np.eye(mdp.n_states)) @ Phi
    b = Phi.T @ D @ r_pi
    C = Phi.T @ D @ Phi

    singular = _is_singular(A)
    if singular and not allow_singular:
        raise AssumptionViolation("matrix A is singular", assumption=2)
    if singular:
        w_star = -np.linalg.pinv(A, rcond=SINGULAR_RTOL) @ b
        C_inv = np.linalg.pinv(C, rcond=SINGULAR_RTOL, hermitian=True)
    else:
        w_star = np.linalg.solve(A, -b)
        if _is_singular(C):
            raise AssumptionViolation("matrix C = X^T D X is singular", assumption=2)
        C_inv = np.linalg.inv(C)
    beta = float(np.linalg.eigvalsh(A.T @ A)[0])
    v_pi = np.linalg.solve(np.eye(mdp.n_states) - gamma * P_pi, r_pi)
    return OracleQuantities(
        d_mu=d_mu, D_mu=D, P_pi=P_pi, r_pi=r_pi, A=A, b=b, C=C,
        w_star=w_star, beta=beta, v_pi=v_pi, C_inv=C_inv, singular=singular,
    )


def expected_update(w: np.ndarray, oq: OracleQuantities) -> np.ndarray:
    """Aw + b, vectorised over leading axes of ``w``."""
    return np.asarray(w) @ oq.A.T + oq.b


def neu(w: np.ndarray, oq: OracleQuantities):
    """Norm of the expected TD update, ||Aw + b||^2."""
    v = expected_update(w, oq)
    return np.einsum("...k,...k->...", v, v)


def rmspbe(w: np.ndarray, oq: OracleQuantities):
    """sqrt((Aw+b)^T C^{-1} (Aw+b)); works on a single w or a stack of them."""
    v = expected_update(w, oq)
    q = np.einsum("...k,kl,...l->...", v, oq.C_inv, v)
    return np.sqrt(np.maximum(q, 0.0))


@dataclass
class AssumptionReport:
    irreducible: bool
    aperiodic: bool
    coverage: bool
    full_rank: bool
    a_nonsingular: bool
    beta: float | None
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(
            (self.irreducible, self.aperiodic, self.coverage, self.full_rank, self.a_nonsingular)
        )

    def as_dict(self) -> dict:
        return {
            "irreducible": self.irreducible,
            "aperiodic": self.aperiodic,
            "coverage": self.coverage,
            "full_rank": self.full_rank,
            "a_nonsingular": self.a_nonsingular,
            "beta": self.beta,
            "passed": self.passed,
            "notes": list(self.notes),
        }


def check_assumptions(mdp: Mdp, pi: Policy, mu: Policy, X: FeatureMap) -> AssumptionReport:
    """Assumptions 1 and 2 as a report. Never raises on a violation."""
    notes: list[str] = []
    P_mu, _ = induced_dynamics(mdp, mu)
    irreducible, aperiodic = chain_structure(P_mu)
    coverage = not bool(np.any((mu.probs == 0) & (pi.probs > 0)))
    if not coverage:
        notes.append("behaviour policy does not cover the target policy")
    full_rank = X.full_rank
    if not full_rank:
        notes.append(f"feature matrix {X.X.shape} is not full column rank")
    a_nonsingular, beta = False, None
    if irreducible and aperiodic and coverage:
        oq = compute_oracle(mdp, pi, mu, X, allow_singular=True)
        a_nonsingular = not oq.singular
        beta = oq.beta
        if oq.singular:
            notes.append("matrix A is singular")
    else:
        notes.append("chain or coverage check failed; A not evaluated")
    return AssumptionReport(irreducible, aperiodic, coverage, full_rank, a_nonsingular, beta, notes)


@dataclass
class MixingReport:
    chi_hat: float
    c_hat: float
    residuals: list[tuple[int, float]]
    slope: float
    slope_stderr: float

    @property
    def decaying(self) -> bool:
        """Log-residual slope is negative by more than two standard errors."""
        return self.slope + 2.0 * self.slope_stderr < 0.0


def _lagged_products(traj, Phi: np.ndarray, gamma: float, lags, n: int) -> list[np.ndarray]:
    x = Phi[traj.states]
    y = gamma * x[1:] - x[:-1]  # y_t = gamma x_{t+1} - x_t
    rho = traj.rho
    out = []
    for k in lags:
        # hat A_{t+k}^T hat A_t = rho_{t+k} rho_t (x_{t+k} . x_t) y_{t+k} y_t^T
        c = rho[k:k + n] * rho[:n] * np.einsum("tk,tk->t", x[k:k + n], x[:n])
        out.append((y[k:k + n] * c[:, None]).T @ y[:n] / n)
    return out


def mixing_check(
    mdp: Mdp,
    pi: Policy,
    mu: Policy,
    X: FeatureMap,
    lags,
    n_samples: int,
    rng: np.random.Generator,
) -> MixingReport:
    """Estimate ||E[hat A_{t+k}^T hat A_t] - A^T A|| per lag from one stationary run.

    The chain starts from d_mu, and a log-linear fit of residual against lag
    gives the empirical geometric rate ``chi_hat`` and constant ``c_hat``.
    """
    lags = [int(k) for k in lags]
    oq = compute_oracle(mdp, pi, mu, X, allow_singular=True)
    AtA = oq.A.T @ oq.A
    s0 = int(rng.choice(mdp.n_states, p=oq.d_mu))
    traj = sample_trajectory(mdp, mu, pi, s0, n_samples + max(lags) + 1, rng)
    est = _lagged_products(traj, X.X, mdp.discount, lags, n_samples)
    residuals = [(k, float(np.linalg.norm(E - AtA, 2))) for k, E in zip(lags, est)]

    r = np.array([v for _, v in residuals])
    if len(lags) < 3 or np.any(r <= np.finfo(float).tiny):
        # nothing to fit: a zero residual means the estimate is exact
        return MixingReport(0.0, max(float(r.max()), np.finfo(float).tiny), residuals, 0.0, 0.0)
    fit = stats.linregress(lags, np.log(r))
    chi_hat = min(float(np.exp(fit.slope)), np.nextafter(1.0, 0.0))
    return MixingReport(
        chi_hat=chi_hat,
        c_hat=float(np.exp(fit.intercept)),
        residuals=residuals,
        slope=float(fit.slope),
        slope_stderr=float(fit.stderr),
    )
