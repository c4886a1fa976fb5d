"""Independent numeric verification of the closed-form optimality results.

The simplex oracle minimizes the weighted-log loss over the probability
simplex by projected gradient descent and must land on the closed forms:
uniform 1/K for plain supervised contrast, and
(alpha/(1+alpha*K), 1/(1+alpha*K)) once a unit-weight center term joins.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .losses import CenterBank
from .numerics import as_vector

_STATIONARITY_PROBE = 1e-3


def supcon_optimum(k_y: float) -> float:
    """Optimal true-positive-pair probability with k_y expected positives: 1/k_y."""
    if k_y < 1:
        raise ContractViolation(f"k_y must be >= 1, got {k_y}")
    return 1.0 / k_y


def paco_optimum(alpha: float, k_y: float) -> tuple[float, float]:
    """Closed-form optima (pair probability, own-center probability).

    With k_y = 0 the pair value is vacuous (no positives exist); the center
    probability is 1.
    """
    if not (0.0 < alpha <= 1.0):
        raise ContractViolation(f"alpha must lie in (0, 1], got {alpha}")
    if k_y < 0:
        raise ContractViolation(f"k_y must be nonnegative, got {k_y}")
    denom = 1.0 + alpha * k_y
    return alpha / denom, 1.0 / denom


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum(x) = 1} (sort-and-threshold)."""
    v = as_vector(v)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    js = np.arange(1, v.size + 1)
    rho = js[u + (1.0 - css) / js > 0][-1]
    theta = (1.0 - css[rho - 1]) / rho
    return np.maximum(v + theta, 0.0)


@dataclass
class SimplexSolution:
    probs: np.ndarray          # pair coordinates first; center coordinate last when present
    has_center: bool
    converged: bool
    iterations: int
    objective: float

    @property
    def pair_probs(self) -> np.ndarray:
        return self.probs[:-1] if self.has_center else self.probs

    @property
    def center_prob(self) -> float | None:
        return float(self.probs[-1]) if self.has_center else None


def _minimize_weighted_log(weights: np.ndarray, max_iters: int, tol: float) -> tuple[np.ndarray, int, bool]:
    """Minimize -sum(w_i log p_i) on the simplex; returns (point, iterations, converged)."""
    n = weights.size
    if n == 1:
        return np.ones(1), 0, True
    # deterministic skewed start so convergence is a genuine test, never an identity
    raw = np.linspace(1.0, 2.0, n)
    p = raw / raw.sum()

    def objective(q):
        return -float(np.sum(weights * np.log(q)))

    # phase 1: Armijo-backtracked projected gradient until the iterates settle
    step = 0.1
    f = objective(p)
    it1 = 0
    for it1 in range(1, max_iters + 1):
        g = -weights / p
        while True:
            q = project_simplex(p - step * g)
            if np.all(q > 0):
                fq = objective(q)
                if fq <= f + float(g @ (q - p)) + 0.5 / step * float((q - p) @ (q - p)) + 1e-18:
                    break
            step *= 0.5
            if step < 1e-18:
                q, fq = p, f
                break
        move = float(np.max(np.abs(q - p)))
        p, f = q, fq
        step = min(step * 1.6, 100.0)
        if move < 1e-8:
            break
    # phase 2: fixed-step contraction polish; free of objective-evaluation noise,
    # so the iterates reach the fixed point to near machine precision
    for it2 in range(1, max_iters + 1):
        g = -weights / p
        eta = 0.9 * float(np.min(p * p / weights))  # ~1/L, L = max w_i / p_i^2
        q = project_simplex(p - eta * g)
        move = float(np.max(np.abs(q - p)))
        p = q
        if move < tol:
            return p, it1 + it2, True
    return p, it1 + max_iters, False


def simplex_oracle(k_y: float, alpha: float, include_center: bool = True,
                   max_iters: int = 20000, tol: float = 1e-13) -> SimplexSolution:
    """Numeric minimizer of -log(p_c) - alpha * sum(log p_i) over the simplex.

    Fractional k_y is rounded to the nearest integer coordinate count. With
    include_center=False the objective drops the center term and weights all
    coordinates equally (the plain supervised-contrast problem).
    Non-convergence is reported through the `converged` flag, never silently.
    """
    k = int(round(k_y))
    if k < 0:
        raise ContractViolation(f"k_y must be nonnegative, got {k_y}")
    if include_center:
        if not (0.0 < alpha <= 1.0):
            raise ContractViolation(f"alpha must lie in (0, 1], got {alpha}")
        weights = np.concatenate([np.full(k, alpha), [1.0]])
    else:
        if k < 1:
            raise ContractViolation("the center-free problem needs at least one coordinate")
        weights = np.ones(k)
    p, iters, ok = _minimize_weighted_log(weights, max_iters, tol)
    obj = -float(np.sum(weights * np.log(np.maximum(p, 1e-300))))
    return SimplexSolution(p, include_center, ok, iters, obj)


@dataclass
class OptimaReport:
    k_y: float
    alpha: float
    closed_pair_prob: float
    closed_center_prob: float
    numeric_pair_prob: float
    numeric_center_prob: float
    gap: float
    converged: bool


def paco_optimum_report(alpha: float, k_y: float, **oracle_kwargs) -> OptimaReport:
    """Compare the closed forms against the simplex oracle at the rounded count."""
    k = int(round(k_y))
    closed_pair, closed_center = paco_optimum(alpha, k)
    sol = simplex_oracle(k, alpha, include_center=True, **oracle_kwargs)
    numeric_center = sol.center_prob
    numeric_pair = float(np.mean(sol.pair_probs)) if k > 0 else math.nan
    gaps = [abs(numeric_center - closed_center)]
    if k > 0:
        gaps.append(float(np.max(np.abs(sol.pair_probs - closed_pair))))
    return OptimaReport(
        k_y=float(k_y),
        alpha=float(alpha),
        closed_pair_prob=closed_pair,
        closed_center_prob=closed_center,
        numeric_pair_prob=numeric_pair,
        numeric_center_prob=numeric_center,
        gap=float(max(gaps)),
        converged=sol.converged,
    )


def optima_sweep(alpha_grid, k_grid, **oracle_kwargs) -> list[OptimaReport]:
    return [paco_optimum_report(a, k, **oracle_kwargs) for a in alpha_grid for k in k_grid]


def extra_loss(p_sup: float, alpha: float, k_star: float) -> float:
    """Residual coupling term -log(p) - alpha*k_star*log(1-p); convex on (0, 1)."""
    if not (0.0 <= p_sup <= 1.0):
        raise ContractViolation(f"p_sup must lie in [0, 1], got {p_sup}")
    ak = alpha * k_star
    if p_sup == 0.0:
        return math.inf
    if p_sup == 1.0:
        return 0.0 if ak == 0.0 else math.inf
    return -math.log(p_sup) - ak * math.log(1.0 - p_sup)


def extra_loss_minimizer(alpha: float, k_star: float) -> float:
    """Closed-form argmin of extra_loss: 1/(1 + alpha*k_star)."""
    return 1.0 / (1.0 + alpha * k_star)


def golden_section_minimize(f, lo: float, hi: float, tol: float = 1e-10,
                            max_iters: int = 200) -> float:
    """Derivative-free 1-D minimizer for unimodal f on (lo, hi)."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iters):
        if abs(b - a) < tol:
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (a + b) / 2.0


@dataclass
class ExtraLossCurve:
    p_sup: np.ndarray
    values: np.ndarray
    minimizer: float  # grid argmin

    def points(self):
        return list(zip(self.p_sup.tolist(), self.values.tolist()))


def extra_loss_curve(alpha: float, k_star: float, grid_points: int) -> ExtraLossCurve:
    """Sample extra_loss on an open uniform grid; the grid argmin sits within one
    step of the closed-form minimizer."""
    if grid_points < 3:
        raise ContractViolation(f"need at least 3 grid points, got {grid_points}")
    p = np.arange(1, grid_points + 1) / (grid_points + 1)
    ak = alpha * k_star
    vals = -np.log(p) - ak * np.log(1.0 - p)
    return ExtraLossCurve(p, vals, float(p[int(np.argmin(vals))]))


def supcon_intensity(p_sup: float, alpha: float, k_star: float) -> float:
    """Contrast-term value needed at the optimum once center mass reaches p_sup.

    Equals -k_star * log(pair_optimum / (1 - p_sup)); strictly decreasing in
    p_sup, hitting zero at p_sup = 1 - pair_optimum.
    """
    if not (0.0 <= p_sup <= 1.0):
        raise ContractViolation(f"p_sup must lie in [0, 1], got {p_sup}")
    pair_opt, _ = paco_optimum(alpha, k_star)
    if p_sup == 1.0:
        return -math.inf
    return -k_star * math.log(pair_opt / (1.0 - p_sup))


def center_gradient_formula(anchor_pre, bank: CenterBank, label: int, alpha: float,
                             k_star: float, p_c) -> np.ndarray:
    """Closed-form per-center gradient of the unscaled loss under the
    equal-positives assumption.

    Row k is (alpha*k_star + 1) * p_c[k] * x, minus x on the own-class row.
    Own-row coefficient crosses zero exactly at p_c = 1/(1 + alpha*k_star).
    """
    x = as_vector(anchor_pre)
    p_c = as_vector(p_c)
    if p_c.shape[0] != bank.n_classes:
        raise ContractViolation("p_c length must match number of classes")
    if np.any(p_c < 0) or abs(float(np.sum(p_c))) > 1.0 + 1e-9:
        raise ContractViolation("p_c must be a (sub)probability vector")
    if not (0 <= label < bank.n_classes):
        raise ContractViolation(f"label {label} out of range")
    coeff = (alpha * k_star + 1.0) * p_c
    coeff[label] -= 1.0
    return np.outer(coeff, x)


def supcon_optimum_spread(k_head: float, k_tail: float) -> float:
    """Tail-to-head ratio of optimal pair probabilities under plain supervised contrast."""
    return k_head / k_tail


def paco_optimum_spread(alpha: float, k_head: float, k_tail: float) -> float:
    """Same ratio once centers are present: (1/alpha + k_head) / (1/alpha + k_tail)."""
    return (1.0 / alpha + k_head) / (1.0 / alpha + k_tail)


def write_optima_csv(reports: list[OptimaReport], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("alpha,k,closed_pair,closed_center,numeric_pair,numeric_center,gap\n")
        for r in reports:
            fh.write(
                f"{r.alpha!r},{r.k_y!r},{r.closed_pair_prob!r},{r.closed_center_prob!r},"
                f"{r.numeric_pair_prob!r},{r.numeric_center_prob!r},{r.gap!r}\n"
            )


def write_curve_csv(curve: ExtraLossCurve, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("p_sup,l_extra\n")
        for p, v in zip(curve.p_sup, curve.values):
            fh.write(f"{p!r},{v!r}\n")
