"""Learning-rate and gap schedules, their assumption checkers, and the
skeleton-interval inspector used by the asymptotic analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath
import numpy as np

from tdlab.errors import AssumptionViolation, ConfigError

DEFAULT_TAU = 0.1
# sup_t ln^2(t+1) (t+1)^-0.1 is about 54.1, so anything below that fails the
# pointwise bound for the standard ln^2 gap at large t
DEFAULT_C_TAU = 100.0
DEFAULT_CHI_GRID = (0.5, 0.9, 0.99, 0.999)


@dataclass(frozen=True)
class LrSchedule:
    """alpha_t = c_alpha / (t + 1)^nu with nu in (2/3, 1]."""

    c_alpha: float
    nu: float

    def __post_init__(self) -> None:
        if not self.c_alpha > 0:
            raise ConfigError(f"c_alpha must be positive, got {self.c_alpha}")
        if not 2.0 / 3.0 < self.nu <= 1.0:
            raise ConfigError(f"nu must lie in (2/3, 1] (Assumption 3), got {self.nu}")

    def __call__(self, t: int) -> float:
        return self.c_alpha / (t + 1) ** self.nu

    def alphas(self, n: int) -> np.ndarray:
        return self.c_alpha / np.arange(1, n + 1, dtype=float) ** self.nu

    def log_alpha(self, t):
        """log alpha_t, safe for very large ``t`` (float or array)."""
        return math.log(self.c_alpha) - self.nu * np.log1p(np.asarray(t, dtype=float))


def lr(sched: LrSchedule, t: int) -> float:
    return sched(t)


# non-negative, nondecreasing, unbounded multipliers for the h*ln gap family
H_FUNCTIONS = {
    "ln": np.log1p,
    "sqrt_ln": lambda t: np.sqrt(np.log1p(t)),
    "lnln": lambda t: np.log1p(np.log1p(t)),
}

_KINDS = ("constant", "log", "ln_squared", "h_times_ln")


class GapFn:
    """Integer gap schedule f(t) separating the two samples in one update.

    Kinds: ``constant`` (f = c), ``log`` (floor(c ln(t+1))), ``ln_squared``
    (floor(ln^2(t+1))) and ``h_times_ln`` (floor(h(t) ln(t+1)) for a named h).
    Calls remember the last (t, f(t)) and raise if a later t ever maps lower.
    """

    def __init__(self, kind: str, param: float | str | None = None) -> None:
        if kind not in _KINDS:
            raise ConfigError(f"unknown gap kind {kind!r}")
        if kind == "constant":
            if param is None or int(param) != param or param < 0:
                raise ConfigError(f"constant gap needs a non-negative integer, got {param!r}")
            param = int(param)
        elif kind == "log":
            if param is None or not float(param) > 0:
                raise ConfigError(f"log gap needs a positive coefficient, got {param!r}")
            param = float(param)
        elif kind == "h_times_ln":
            if param not in H_FUNCTIONS:
                raise ConfigError(f"unknown h function {param!r}; known: {sorted(H_FUNCTIONS)}")
        else:
            param = None
        self.kind = kind
        self.param = param
        self._last: tuple[int, int] | None = None

    @classmethod
    def parse(cls, text: str) -> GapFn:
        """``ln2``, ``log:<c>``, ``const:<c>`` or ``hln:<h>``."""
        head, _, arg = text.strip().partition(":")
        try:
            if head in ("ln2", "ln_squared"):
                return cls("ln_squared")
            if head == "log":
                return cls("log", float(arg))
            if head in ("const", "constant"):
                return cls("constant", int(arg))
            if head in ("hln", "h_times_ln"):
                return cls("h_times_ln", arg)
        except ValueError as exc:
            raise ConfigError(f"bad gap {text!r}: {exc}") from exc
        raise ConfigError(f"bad gap {text!r}")

    @property
    def label(self) -> str:
        if self.kind == "ln_squared":
            return "ln2"
        if self.kind == "log":
            return f"log:{self.param:g}"
        if self.kind == "constant":
            return f"const:{self.param}"
        return f"hln:{self.param}"

    def __repr__(self) -> str:
        return f"GapFn({self.label})"

    def __eq__(self, other) -> bool:
        return isinstance(other, GapFn) and (self.kind, self.param) == (other.kind, other.param)

    def __hash__(self) -> int:
        return hash((self.kind, self.param))

    def _real(self, t):
        """The value inside the floor, on float input."""
        lt = np.log1p(t)
        if self.kind == "constant":
            return np.full_like(lt, float(self.param))
        if self.kind == "log":
            return self.param * lt
        if self.kind == "ln_squared":
            return lt * lt
        return H_FUNCTIONS[self.param](t) * lt

    def values(self, n: int) -> np.ndarray:
        """f(0), ..., f(n-1) as int64."""
        return np.floor(self._real(np.arange(n, dtype=float))).astype(np.int64)

    def __call__(self, t: int) -> int:
        if t < 0:
            raise ConfigError(f"gap evaluated at negative t={t}")
        if t < 2**53:
            v = int(np.floor(self._real(np.array([float(t)])))[0])
        else:
            # beyond exact float integers: log of the Python int is still accurate
            lt = math.log(t + 1)
            if self.kind == "constant":
                v = self.param
            elif self.kind == "log":
                v = math.floor(self.param * lt)
            elif self.kind == "ln_squared":
                v = math.floor(lt * lt)
            else:
                v = math.floor(float(H_FUNCTIONS[self.param](np.float64(t))) * lt)
        last = self._last
        if last is not None and t >= last[0] and v < last[1]:
            raise AssumptionViolation(f"gap {self.label} decreased at t={t}", assumption=4)
        self._last = (t, v)
        return v


def gap(g: GapFn, t: int) -> int:
    return g(t)


def gap_from_text(text: str) -> GapFn:
    return GapFn.parse(text)


@dataclass
class ChiVerdict:
    chi: float
    partial_sum: float
    tail_increment: float
    heuristic: str  # PASS / SLOW / FAIL, a finite-horizon proxy only
    analytic: str | None  # PASS / FAIL when decidable in closed form
    verdict: str


@dataclass
class GapReport:
    gap: str
    nu: float
    tau: float
    c_tau: float
    horizon: int
    monotone: bool
    bound_ok: bool
    c_tau_required: float
    bound_tail_ok: bool
    c_tau_required_tail: float
    chi: list[ChiVerdict] = field(default_factory=list)

    @property
    def summable(self) -> bool:
        return all(c.verdict == "PASS" for c in self.chi)

    @property
    def within_assumption(self) -> bool:
        return self.monotone and self.bound_ok and self.bound_tail_ok and self.summable

    @property
    def status(self) -> str:
        return "PASS" if self.within_assumption else "FAIL"


def _analytic_summability(g: GapFn, chi: float) -> str | None:
    if chi == 0.0:
        # 0^f(t) counts the t with f(t) = 0
        if g.kind == "constant":
            return "PASS" if g.param > 0 else "FAIL"
        return "PASS"
    if g.kind == "constant":
        return "FAIL"
    if g.kind == "log":
        # chi^{c ln t} = t^{-c ln(1/chi)}: a p-series
        return "PASS" if g.param * math.log(1.0 / chi) > 1.0 else "FAIL"
    # floor(h(t) ln(t+1)) with h increasing to infinity: summable for every chi
    return "PASS"


def check_gap_assumption(
    g: GapFn,
    sched: LrSchedule,
    tau: float = DEFAULT_TAU,
    c_tau: float = DEFAULT_C_TAU,
    chi_grid=DEFAULT_CHI_GRID,
    horizon: int = 10**5,
) -> GapReport:
    """Check a gap function against the schedule-coupled gap assumption.

    Monotonicity and the bound f(t) <= c_tau alpha_t^-tau are checked on every
    integer up to ``horizon``; the bound is also scanned on a log grid out to
    1e300. Summability of sum_t chi^f(t) is decided in closed form where the
    kind allows it, otherwise by a tail heuristic that is not a proof.
    """
    upper = (3 * sched.nu - 2) / (2 * sched.nu)
    if not 0.0 < tau < upper:
        raise ConfigError(f"tau={tau} outside (0, {upper:.6g}) required by Assumption 4")
    if horizon < 10**4:
        raise ConfigError(f"horizon must be at least 1e4, got {horizon}")

    f = g.values(horizon + 1)
    monotone = bool(np.all(np.diff(f) >= 0))
    t = np.arange(horizon + 1, dtype=float)
    # f(t) alpha_t^tau <= c_tau, evaluated in log space
    scaled = f * np.exp(tau * sched.log_alpha(t))
    c_req = float(scaled.max())

    grid = np.logspace(math.log10(horizon), 300, 4000)
    scaled_tail = np.floor(g._real(grid)) * np.exp(tau * sched.log_alpha(grid))
    c_req_tail = float(scaled_tail.max())

    verdicts = []
    lo = horizon // 10
    for chi in chi_grid:
        terms = np.power(float(chi), f.astype(float))
        partial = float(terms.sum())
        tail = float(terms[lo:].sum())
        prev = float(terms[lo // 10:lo].sum())
        if tail < 1e-6:
            heuristic = "PASS"
        elif prev > 0 and tail >= 0.5 * prev:
            heuristic = "FAIL"
        else:
            heuristic = "SLOW"
        analytic = _analytic_summability(g, float(chi))
        verdict = analytic if analytic is not None else heuristic
        verdicts.append(ChiVerdict(float(chi), partial, tail, heuristic, analytic, verdict))

    return GapReport(
        gap=g.label, nu=sched.nu, tau=tau, c_tau=c_tau, horizon=horizon,
        monotone=monotone,
        bound_ok=c_req <= c_tau, c_tau_required=c_req,
        bound_tail_ok=c_req_tail <= c_tau, c_tau_required_tail=c_req_tail,
        chi=verdicts,
    )


@dataclass
class SkeletonSchedule:
    eta: float
    big_t: list[float]
    t_marks: list[int]
    alpha_bars: list[float]
    step_ok: list[bool]
    mass_ok: list[bool]
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def eta_interval(nu: float, tau: float) -> tuple[float, float]:
    return 1.0 / (2.0 * (1.0 - tau)), nu / (2.0 - nu)


class _LrPartialSums:
    """G(n) = sum_{t<n} (t+1)^-nu in arbitrary precision.

    Uses the harmonic number for nu = 1 and Hurwitz zeta otherwise, so
    interval boundaries near t ~ 1e100 are found without enumerating steps.
    """

    def __init__(self, nu: float) -> None:
        self.nu = nu

    def __call__(self, n):
        if n == 0:
            return mpmath.mpf(0)
        if self.nu == 1.0:
            return mpmath.harmonic(n)
        s = mpmath.mpf(self.nu)
        return mpmath.zeta(s) - mpmath.zeta(s, n + 1)

    def guess(self, start: int, mass) -> mpmath.mpf:
        """Continuous estimate of where the partial sum from ``start`` reaches ``mass``."""
        if self.nu == 1.0:
            return (start + mpmath.mpf("0.5")) * mpmath.exp(mass) - mpmath.mpf("0.5")
        e = 1 - mpmath.mpf(self.nu)
        return ((start + 1) ** e + e * mass) ** (1 / e) - 1


def _next_mark(G: _LrPartialSums, start: int, mass) -> int:
    """min{k > start : G(k) - G(start) >= mass}."""
    target = G(start) + mass
    x = G.guess(start, mass)
    for _ in range(100):
        step = (G(x) - target) * (x + mpmath.mpf("0.5")) ** G.nu
        x -= step
        if abs(step) < mpmath.mpf("0.25"):
            break
    k = max(int(mpmath.ceil(x)), start + 1)
    while G(k) < target:
        k += 1
    while k - 1 > start and G(k - 1) >= target:
        k -= 1
    return k


def skeleton(sched: LrSchedule, eta: float, m_max: int, tau: float = DEFAULT_TAU) -> SkeletonSchedule:
    """Interval boundaries t_m with cumulative step size T_m, plus both interval checks.

    T_m = 16 max(C,1) / ((eta+1)(m+1)^eta); t_{m+1} is the first k with
    sum_{t_m <= t < k} alpha_t >= T_m. For every m <= m_max this records
    whether alpha_t <= T_m^2 at sampled t >= t_m and whether the realised
    interval mass lies in [T_m, 2 T_m].
    """
    lo, hi = eta_interval(sched.nu, tau)
    if not lo < hi:
        raise ConfigError(f"empty eta interval ({lo:.6g}, {hi:.6g}) for nu={sched.nu}, tau={tau}")
    if not lo < eta < hi:
        raise ConfigError(f"eta={eta} outside ({lo:.6g}, {hi:.6g})")
    if not 0 <= m_max <= 10**4:
        raise ConfigError(f"m_max must lie in [0, 1e4], got {m_max}")

    G = _LrPartialSums(sched.nu)
    c = sched.c_alpha
    big_t, marks, bars, l1, l2, bad = [], [0], [], [], [], []
    for m in range(m_max + 1):
        tm = marks[-1]
        with mpmath.workdps(len(str(tm)) + 50):
            Tm = 16 * mpmath.mpf(max(c, 1.0)) / ((eta + 1) * mpmath.mpf(m + 1) ** eta)
            nxt = _next_mark(G, tm, Tm / c)
            bar = c * (G(nxt) - G(tm))
            alpha = lambda t: c / mpmath.mpf(t + 1) ** sched.nu  # noqa: E731
            sampled = (tm, tm + 1, (tm + nxt) // 2, nxt, 10 * nxt + 7)
            ok1 = all(alpha(t) <= Tm**2 for t in sampled)
            ok2 = Tm <= bar <= 2 * Tm
            big_t.append(float(Tm))
            bars.append(float(bar))
        marks.append(nxt)
        l1.append(ok1)
        l2.append(ok2)
        if not ok1:
            bad.append(f"m={m}: alpha_t > T_m^2 for some sampled t >= t_m")
        if not ok2:
            bad.append(f"m={m}: interval mass {float(bar):.6g} outside [T_m, 2T_m], T_m={float(Tm):.6g}")
    return SkeletonSchedule(eta, big_t, marks, bars, l1, l2, bad)
