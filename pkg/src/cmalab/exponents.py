"""Closed-form exponent calculus for the interior-regularity bootstrap.

Everything here is scalar arithmetic on the exponent tuple
(n, alpha, beta, delta, gamma, mu, eps): the Holder threshold below which
the bootstrap cannot start, the improvement map delta -> phi(delta) whose
fixed point is that threshold, and the feasibility window for the
mollification exponent mu that makes the dyadic cascade decay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

from .errors import DomainError, InfeasibleError

__all__ = [
    "ExponentParams",
    "MuWindow",
    "DeltaSequence",
    "beta0",
    "phi",
    "delta_sequence",
    "mu_window",
    "feasibility_threshold",
    "plan_exponents",
    "decay_margins",
    "params_with_mu",
    "epsilon_interp",
    "variant_threshold",
]

#: deepest gamma = 1 - 2^-m probed before declaring the scan infeasible
_GAMMA_SCAN_DEPTH = 32


@dataclass(frozen=True)
class ExponentParams:
    """The exponent tuple threading the whole construction.

    n is the complex dimension, alpha the Holder exponent of the right-hand
    side, beta the assumed C^{1,beta} regularity of the solution, delta the
    improved gradient-Holder exponent targeted by one bootstrap step, gamma
    the interpolation exponent, mu the mollification-scale exponent and eps
    the resulting dyadic decay rate.
    """

    n: int
    alpha: float
    beta: float
    delta: float
    gamma: float
    mu: float
    eps: float

    def __post_init__(self):
        if self.n < 1 or int(self.n) != self.n:
            raise DomainError(f"n must be a positive integer, got {self.n}")
        if not 0.0 < self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in (0,1], got {self.alpha}")
        if not 0.0 < self.beta < 1.0:
            raise DomainError(f"beta must lie in (0,1), got {self.beta}")
        if not 0.0 < self.delta <= 1.0:
            raise DomainError(f"delta must lie in (0,1], got {self.delta}")
        if not 0.0 < self.gamma <= 1.0:
            raise DomainError(f"gamma must lie in (0,1], got {self.gamma}")
        if not self.mu > 1.0:
            raise DomainError(f"mu must be strictly greater than 1, got {self.mu}")
        if not self.eps > 0.0:
            raise DomainError(f"eps must be positive, got {self.eps}")


@dataclass(frozen=True)
class MuWindow:
    """Open interval of admissible mollification exponents mu.

    ``feasible`` is equivalent to: the lower-bound denominator is positive,
    lower < upper, and upper > 1 (some mu > 1 exists).  ``upper`` is +inf in
    the degenerate beta = 1 case.
    """

    lower: float
    upper: float
    feasible: bool


class DeltaSequence(NamedTuple):
    """Iterates of the improvement map, plus a convergence flag."""

    values: list
    converged: bool


def _check_n_alpha(n, alpha):
    if n < 1 or int(n) != n:
        raise DomainError(f"n must be a positive integer, got {n}")
    if not 0.0 < alpha <= 1.0:
        raise DomainError(f"alpha must lie in (0,1], got {alpha}")


def beta0(n: int, alpha: float) -> float:
    """Threshold Holder exponent 1 - alpha / (n(2+alpha) - 1).

    Gradient regularity above this threshold bootstraps to C^{1,1}; it is
    the fixed point of the improvement map ``phi``.
    """
    _check_n_alpha(n, alpha)
    return 1.0 - alpha / (n * (2.0 + alpha) - 1.0)


def phi(n: int, alpha: float, delta: float) -> float:
    """One-step improvement map: the beta needed to reach C^{1,delta}.

    phi(delta) = 1 - 2A / ((2+alpha)(1+delta)(n+1) + A) with
    A = (2+alpha)(2-delta) - (1+delta).  Defined for delta in (beta0, 1];
    strictly increasing there, with phi(delta) < delta and fixed point beta0.
    """
    _check_n_alpha(n, alpha)
    b0 = beta0(n, alpha)
    # the closed endpoint delta = beta0 is the fixed point itself
    if not b0 <= delta <= 1.0:
        raise DomainError(f"delta must lie in [beta0, 1] = [{b0}, 1], got {delta}")
    a = (2.0 + alpha) * (2.0 - delta) - (1.0 + delta)
    return 1.0 - 2.0 * a / ((2.0 + alpha) * (1.0 + delta) * (n + 1) + a)


def delta_sequence(n: int, alpha: float, tol: float = 1e-8,
                   max_iter: int = 200) -> DeltaSequence:
    """Iterate delta_1 = phi(1), delta_{i+1} = phi(delta_i) down to beta0.

    Stops when |delta_i - beta0| < tol or after ``max_iter`` iterations;
    the flag reports which happened.
    """
    if tol <= 0.0:
        raise DomainError(f"tol must be positive, got {tol}")
    b0 = beta0(n, alpha)
    values = []
    d = 1.0
    converged = False
    for _ in range(max_iter):
        d = phi(n, alpha, d)
        values.append(d)
        if abs(d - b0) < tol:
            converged = True
            break
    return DeltaSequence(values, converged)


def feasibility_threshold(n: int, alpha: float, delta: float, gamma: float) -> float:
    """Smallest beta for which the mu-window opens, at this gamma.

    Equals 1 - 2B / ((2+alpha)(1+delta)(n+1) + B) with
    B = (2+alpha)(1+gamma-delta) - (1+delta); at gamma = 1 this reproduces
    ``phi`` exactly.
    """
    _check_n_alpha(n, alpha)
    if not 0.0 < delta <= 1.0:
        raise DomainError(f"delta must lie in (0,1], got {delta}")
    if not 0.0 < gamma <= 1.0:
        raise DomainError(f"gamma must lie in (0,1], got {gamma}")
    b = (2.0 + alpha) * (1.0 + gamma - delta) - (1.0 + delta)
    return 1.0 - 2.0 * b / ((2.0 + alpha) * (1.0 + delta) * (n + 1) + b)


def mu_window(n: int, alpha: float, beta: float, delta: float,
              gamma: float) -> MuWindow:
    """Admissible interval for the mollification exponent mu.

    lower = gamma(1+delta) / ((1+gamma-beta)(1+beta) - (1+delta)(1-beta)(n+1)),
    upper = ((1+gamma-delta)(2+alpha) - gamma(1+delta)) / ((1+delta)(1-beta)(n+1)).

    A non-positive lower denominator is reported as infeasible, not an
    error.  beta = 1 degenerates to an unbounded-above feasible window.
    """
    _check_n_alpha(n, alpha)
    if not 0.0 < beta <= 1.0:
        raise DomainError(f"beta must lie in (0,1], got {beta}")
    if not 0.0 < delta <= 1.0:
        raise DomainError(f"delta must lie in (0,1], got {delta}")
    if not 0.0 < gamma <= 1.0:
        raise DomainError(f"gamma must lie in (0,1], got {gamma}")
    low_den = (1.0 + gamma - beta) * (1.0 + beta) \
        - (1.0 + delta) * (1.0 - beta) * (n + 1)
    up_num = (1.0 + gamma - delta) * (2.0 + alpha) - gamma * (1.0 + delta)
    up_den = (1.0 + delta) * (1.0 - beta) * (n + 1)
    if low_den <= 0.0:
        return MuWindow(lower=math.inf, upper=up_num / up_den if up_den > 0 else math.inf,
                        feasible=False)
    lower = gamma * (1.0 + delta) / low_den
    if up_den == 0.0:
        # beta = 1: the (1-beta) factors vanish and any mu > max(lower, 1) works
        return MuWindow(lower=lower, upper=math.inf, feasible=True)
    upper = up_num / up_den
    return MuWindow(lower=lower, upper=upper,
                    feasible=(lower < upper and upper > 1.0))


def decay_margins(params: ExponentParams) -> tuple:
    """Left-hand sides (E1, E2) of the two strict decay inequalities.

    E1 = (1+g-d)/(2+g) * mu(1+b) + (1+d)/(2+g) * (mu(b-1)(n+1)+2) - (1+d)
    E2 = same with mu(1+b) replaced by (2+alpha).
    Both must be positive for the cascade increments to decay like t^eps.
    """
    n, a = params.n, params.alpha
    b, d, g, mu = params.beta, params.delta, params.gamma, params.mu
    common = (1.0 + d) / (2.0 + g) * (mu * (b - 1.0) * (n + 1) + 2.0) - (1.0 + d)
    e1 = (1.0 + g - d) / (2.0 + g) * mu * (1.0 + b) + common
    e2 = (1.0 + g - d) / (2.0 + g) * (2.0 + a) + common
    return e1, e2


def plan_exponents(n: int, alpha: float, beta: float, delta: float) -> ExponentParams:
    """Pick an admissible (gamma, mu, eps) for the given (n, alpha, beta, delta).

    gamma is the first value of the deterministic scan 1 - 2^-m admitting a
    feasible mu-window, mu the geometric mean of that window clipped to
    (max(1, lower), upper), and eps = 0.99 * min(E1, E2) of the resulting
    decay margins.  Raises InfeasibleError when beta <= phi(delta) (no gamma
    can work) or the scan is exhausted.
    """
    _check_n_alpha(n, alpha)
    b0 = beta0(n, alpha)
    if not b0 < delta <= 1.0:
        raise DomainError(f"delta must lie in (beta0, 1] = ({b0}, 1], got {delta}")
    if not 0.0 < beta < 1.0:
        raise DomainError(f"beta must lie in (0,1), got {beta}")
    if beta <= phi(n, alpha, delta):
        raise InfeasibleError(
            f"beta = {beta} is not above phi(delta) = {phi(n, alpha, delta)}; "
            "no interpolation exponent gamma can open the mu-window")
    gamma = None
    for m in range(1, _GAMMA_SCAN_DEPTH + 1):
        g = 1.0 - 2.0 ** (-m)
        if beta > feasibility_threshold(n, alpha, delta, g):
            gamma = g
            break
    if gamma is None:
        raise InfeasibleError(
            f"gamma scan exhausted at 1 - 2^-{_GAMMA_SCAN_DEPTH} "
            f"for (n={n}, alpha={alpha}, beta={beta}, delta={delta})")
    window = mu_window(n, alpha, beta, delta, gamma)
    assert window.feasible, "threshold test passed but window infeasible"
    lo = max(1.0, window.lower)
    mu = math.sqrt(lo * window.upper)
    params = ExponentParams(n=n, alpha=alpha, beta=beta, delta=delta,
                            gamma=gamma, mu=mu, eps=1.0)
    e1, e2 = decay_margins(params)
    eps = 0.99 * min(e1, e2)
    assert eps > 0.0, "interior mu produced a non-positive decay margin"
    return replace(params, eps=eps)


def params_with_mu(params: ExponentParams, mu: float) -> ExponentParams:
    """Replace mu by another in-window value, recomputing eps.

    Validates that the new mu stays inside the feasibility window for the
    tuple's (beta, delta, gamma) and that both decay margins stay positive.
    """
    window = mu_window(params.n, params.alpha, params.beta, params.delta,
                       params.gamma)
    if not (window.feasible and max(1.0, window.lower) < mu < window.upper):
        raise DomainError(
            f"mu = {mu} lies outside the admissible window "
            f"({max(1.0, window.lower)}, {window.upper})")
    candidate = replace(params, mu=mu)
    e1, e2 = decay_margins(candidate)
    eps = 0.99 * min(e1, e2)
    if eps <= 0.0:
        raise DomainError(f"mu = {mu} gives non-positive decay margin")
    return replace(candidate, eps=eps)


def _interp_raw(t: float, a: float, b: float, c: float, gamma: float) -> float:
    return ((t ** a + t ** b) / (2.0 * t ** c)) ** (1.0 / (2.0 + gamma))


def epsilon_interp(t: float, params: ExponentParams) -> float:
    """Interpolation weight balancing sup-norm against second-derivative growth.

    Returns min(1, [(t^{mu(1+beta)} + t^{2+alpha}) / (2 t^{(n+1)mu(beta-1)+2})]
    ^{1/(2+gamma)}); the clip keeps it inside the (0,1] range the
    interpolation inequality requires.
    """
    if not 0.0 < t <= 0.5:
        raise DomainError(f"t must lie in (0, 1/2], got {t}")
    a = params.mu * (1.0 + params.beta)
    b = 2.0 + params.alpha
    c = (params.n + 1) * params.mu * (params.beta - 1.0) + 2.0
    return min(1.0, _interp_raw(t, a, b, c, params.gamma))


def variant_threshold(n: int, tau: float) -> float:
    """beta threshold when the right-hand side has C^{k,alpha} regularity.

    For tau = k + alpha in (1, 3) returns 1 - tau/(n(2+tau)-2); at tau = 3
    (the C^{2,1} endpoint) returns 1 - 1/n.
    """
    if n < 1 or int(n) != n:
        raise DomainError(f"n must be a positive integer, got {n}")
    if not 1.0 < tau <= 3.0:
        raise DomainError(f"tau must lie in (1, 3], got {tau}")
    if tau == 3.0:
        return 1.0 - 1.0 / n
    return 1.0 - tau / (n * (2.0 + tau) - 2.0)
