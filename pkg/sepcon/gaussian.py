"""
Two-subsystem Gaussian example: horizon 4, sharing delay 2.

Only u_2^2 (a function of x_0^2) and u_3^1 (a function of x_0^1, x_0^2) are
free; the objective is ½E[(S − u_2 − u_3)² + u_3²] with S = x_0^1 + x_0^2.
All expectations are second-moment algebra on the initial Gaussian; sampling
is used only as a cross-check.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from sepcon.constants import EXAMPLE_GAIN_GRID, EXAMPLE_RHO, EXAMPLE_SAMPLES, REFERENCE_GAIN_U2
from sepcon.errors import ValidationError
from sepcon.utils import standard_error

# tracking and control weights of the stage-3 objective
TRACK_WEIGHT = 1.0
CONTROL_WEIGHT = 1.0


@dataclass(frozen=True)
class GaussianInit:
    """Law of (x_0^1, x_0^2): given mean, variances and covariance."""

    rho: float = EXAMPLE_RHO
    mean: Tuple[float, float] = (0.0, 0.0)
    variances: Tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        if len(self.mean) != 2 or len(self.variances) != 2:
            raise ValidationError("mean and variances must have two entries", "init")
        if min(self.variances) < 0:
            raise ValidationError("variances must be nonnegative", "init.variances")
        if abs(self.rho) > np.sqrt(self.variances[0] * self.variances[1]) + 1e-12:
            raise ValidationError(
                f"covariance {self.rho} exceeds what the variances allow", "init.rho"
            )

    @property
    def covariance(self) -> np.ndarray:
        v1, v2 = self.variances
        return np.array([[v1, self.rho], [self.rho, v2]])

    @property
    def second_moment(self) -> np.ndarray:
        """E[X Xᵀ] = Σ + μμᵀ."""
        mu = np.asarray(self.mean, dtype=float)
        return self.covariance + np.outer(mu, mu)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.multivariate_normal(self.mean, self.covariance, size=size, method="eigh")


@dataclass(frozen=True)
class ExampleStrategy:
    """u_2^2 = a·x^2, u_3^1 = b·(x^1 + x^2) + c·x^2."""

    gain_u2: float
    gain_u3_sum: float
    gain_u3_x2: float

    def __post_init__(self):
        if not np.all(np.isfinite([self.gain_u2, self.gain_u3_sum, self.gain_u3_x2])):
            raise ValidationError("gains must be finite", "strategy")

    @property
    def gains(self) -> Tuple[float, float, float]:
        return (self.gain_u2, self.gain_u3_sum, self.gain_u3_x2)

    def controls(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(u_2^2, u_3^1) at initial states x of shape (..., 2)."""
        x = np.asarray(x, dtype=float)
        u2 = self.gain_u2 * x[..., 1]
        u3 = self.gain_u3_sum * (x[..., 0] + x[..., 1]) + self.gain_u3_x2 * x[..., 1]
        return u2, u3


def closed_form_controls(x0: Sequence[float]) -> Tuple[float, float]:
    """The published controls: u_2^2 = ½x^2, u_3^1 = ½(x^1 + x^2) − ¼x^2."""
    x1, x2 = float(x0[0]), float(x0[1])
    return 0.5 * x2, 0.5 * (x1 + x2) - 0.25 * x2


def _weights(strategy: ExampleStrategy) -> Tuple[np.ndarray, np.ndarray]:
    """Linear forms r, v with S − u_2 − u_3 = rᵀx and u_3 = vᵀx."""
    a, b, c = strategy.gains
    return np.array([1.0 - b, 1.0 - a - b - c]), np.array([b, b + c])


def expected_cost(strategy: ExampleStrategy, init: GaussianInit) -> float:
    """½E[(S − u_2 − u_3)² + u_3²], exact from the second-moment matrix."""
    r, v = _weights(strategy)
    m = init.second_moment
    return 0.5 * float(r @ m @ r + v @ m @ v)


def sampled_cost(
    strategy: ExampleStrategy, init: GaussianInit, samples: int, seed: int = 0
) -> Tuple[float, float]:
    """Sample mean and standard error of the example objective."""
    x = init.sample(np.random.default_rng(seed), samples)
    u2, u3 = strategy.controls(x)
    s = x[:, 0] + x[:, 1]
    cost = 0.5 * ((s - u2 - u3) ** 2 + u3**2)
    return float(cost.mean()), standard_error(cost)


def mismatched_cost(strategy: ExampleStrategy, init: GaussianInit) -> float:
    """
    Actual objective when controls are computed from an independent model draw.

    The model initial state x_0 and the actual x̂_0 share the law `init` but
    are drawn independently, so only the mean couples them.
    """
    r, v = _weights(strategy)
    mu = np.asarray(init.mean, dtype=float)
    m = init.second_moment
    ones = np.ones(2)
    track = ones - r  # u_2 + u_3 as a form in the model draw
    cross = 2.0 * float(ones @ mu) * float(track @ mu)
    return 0.5 * float(ones @ m @ ones - cross + track @ m @ track + v @ m @ v)


def optimal_linear_gains(init: GaussianInit) -> ExampleStrategy:
    """
    (a, b, c) = (E[S·x^2]/E[(x^2)²], ½, −a/2).

    Stage 3 gives u_3 = ½(S − u_2); stage 2 then estimates S from x^2 alone.

    Raises:
        ValueError: If x^2 is degenerate (zero second moment).
    """
    m = init.second_moment
    denom = m[1, 1]
    if denom <= 0.0:
        raise ValueError("x_0^2 has zero second moment; the estimate of S is undefined")
    a = (m[0, 1] + m[1, 1]) / denom
    b = TRACK_WEIGHT / (TRACK_WEIGHT + CONTROL_WEIGHT)
    return ExampleStrategy(a, b, -b * a)


def grid_search_gains(
    init: GaussianInit,
    grid: Tuple[float, float, float] = EXAMPLE_GAIN_GRID,
    samples: int = 0,
    seed: int = 0,
) -> ExampleStrategy:
    """
    Exhaustive search of (a, b, c) over a regular grid.

    Uses the exact objective when samples is 0, otherwise the empirical
    second-moment matrix of that many draws.
    """
    lo, hi, step = grid
    axis = np.round(np.arange(lo, hi + step / 2, step), 10)
    if samples > 0:
        x = init.sample(np.random.default_rng(seed), samples)
        m = x.T @ x / samples
    else:
        m = init.second_moment
    b = axis[:, None]
    c = axis[None, :]
    v1, v2 = b, b + c
    control = m[0, 0] * v1**2 + 2 * m[0, 1] * v1 * v2 + m[1, 1] * v2**2
    best, best_cost = (0.0, 0.0, 0.0), np.inf
    for a in axis:
        r1, r2 = 1.0 - b, 1.0 - a - b - c
        cost = 0.5 * (m[0, 0] * r1**2 + 2 * m[0, 1] * r1 * r2 + m[1, 1] * r2**2 + control)
        i, j = np.unravel_index(np.argmin(cost), cost.shape)
        if cost[i, j] < best_cost:
            best_cost = cost[i, j]
            best = (float(a), float(axis[i]), float(axis[j]))
    return ExampleStrategy(*best)


@dataclass(frozen=True)
class BinnedCheck:
    """Held-out comparison of the linear optimum against a binned conditional-mean u_2."""

    linear_cost: float
    binned_cost: float
    difference_stderr: float

    @property
    def nonlinear_wins(self) -> bool:
        return self.binned_cost < self.linear_cost - 3.0 * self.difference_stderr


def binned_strategy_check(
    init: GaussianInit, samples: int = 10**5, bins: int = 50, seed: int = 0
) -> BinnedCheck:
    """
    Fit u_2 = E[S | x^2] by quantile-binned means on one half of the draws and
    score it (with u_3 = ½(S − u_2)) against the linear optimum on the other half.
    """
    x = init.sample(np.random.default_rng(seed), samples)
    fit, test = x[: samples // 2], x[samples // 2 :]
    edges = np.quantile(fit[:, 1], np.linspace(0.0, 1.0, bins + 1))[1:-1]
    fit_bin = np.searchsorted(edges, fit[:, 1])
    s_fit = fit[:, 0] + fit[:, 1]
    sums = np.bincount(fit_bin, weights=s_fit, minlength=bins)
    counts = np.bincount(fit_bin, minlength=bins)
    means = np.divide(sums, counts, out=np.zeros(bins), where=counts > 0)

    s = test[:, 0] + test[:, 1]
    u2_binned = means[np.searchsorted(edges, test[:, 1])]
    binned = 0.25 * (s - u2_binned) ** 2
    u2, u3 = optimal_linear_gains(init).controls(test)
    linear = 0.5 * ((s - u2 - u3) ** 2 + u3**2)
    return BinnedCheck(float(linear.mean()), float(binned.mean()), standard_error(binned - linear))


@dataclass(frozen=True)
class WalkthroughRecord:
    step: str
    formula: str
    coefficients: Dict[str, float]


def dp_walkthrough(init: GaussianInit, beta: float = 1.0) -> List[WalkthroughRecord]:
    """Stage-by-stage records of the backward recursion on the example."""
    share = TRACK_WEIGHT / (TRACK_WEIGHT + CONTROL_WEIGHT)
    value_factor = 0.5 * TRACK_WEIGHT * CONTROL_WEIGHT / (TRACK_WEIGHT + CONTROL_WEIGHT)
    m = init.second_moment
    var_s = float(np.ones(2) @ init.covariance @ np.ones(2))
    # independent model/actual draws: E|S − Ŝ|² = 2 Var(S)
    mismatch = 2.0 * var_s
    opt = optimal_linear_gains(init)
    a, b, c = opt.gains
    return [
        WalkthroughRecord(
            "stage3_control",
            "u3 = k_S*S + k_u2*u2",
            {"S": share, "u2": -share},
        ),
        WalkthroughRecord(
            "stage3_value",
            "V3 = k*E[(S - u2)^2] + k_m*E|S - S_hat|^2",
            {"(S-u2)^2": value_factor, "mismatch": 0.5 * beta, "mismatch_terms": 1.0},
        ),
        WalkthroughRecord(
            "stage2_value",
            "V2 = k*E[(S - u2)^2] + k_m*E|S - S_hat|^2",
            {"(S-u2)^2": value_factor, "mismatch": 0.5 * beta * 2.0, "mismatch_terms": 2.0},
        ),
        WalkthroughRecord(
            "stage2_control",
            "u2 = a*x2, a = E[S*x2]/E[x2^2]",
            {"x2": a, "E[S*x2]": float(m[0, 1] + m[1, 1]), "E[x2^2]": float(m[1, 1])},
        ),
        WalkthroughRecord(
            "final_controls",
            "u2 = a*x2; u3 = b*S + c*x2",
            {"a": a, "b": b, "c": c, "published_a": REFERENCE_GAIN_U2, "published_c": -REFERENCE_GAIN_U2 / 2},
        ),
        WalkthroughRecord(
            "true_value_substitution",
            "x0 := x0_hat",
            {
                "expected_mismatch": beta * mismatch,
                "cost_with_model_draw": mismatched_cost(opt, init),
                "cost_with_true_values": expected_cost(opt, init),
            },
        ),
    ]


@dataclass
class ExampleReport:
    rho: float
    optimal: ExampleStrategy
    grid: ExampleStrategy
    published: ExampleStrategy
    optimal_cost: float
    grid_cost: float
    published_cost: float
    sampled_cost: float
    sampled_stderr: float
    walkthrough: List[WalkthroughRecord] = field(default_factory=list)

    @property
    def discrepancy(self) -> bool:
        """True when the computed u_2 gain differs from the published ½."""
        return abs(self.optimal.gain_u2 - REFERENCE_GAIN_U2) > 0.01

    @property
    def consistent_rho(self) -> float:
        """Covariance under which the published gain is optimal (unit variances)."""
        return REFERENCE_GAIN_U2 - 1.0

    def rows(self) -> List[Dict[str, Any]]:
        """One row per quantity with optimal, grid-search and published columns."""
        columns = (self.optimal, self.grid, self.published)
        names = ("gain_u2", "gain_u3_sum", "gain_u3_x2")
        rows = [
            {"quantity": name, "optimal": o, "grid": g, "published": p}
            for name, o, g, p in zip(names, *(s.gains for s in columns))
        ]
        rows.append(
            {
                "quantity": "expected_cost",
                "optimal": self.optimal_cost,
                "grid": self.grid_cost,
                "published": self.published_cost,
            }
        )
        return rows


def example_report(
    rho: float = EXAMPLE_RHO,
    samples: int = EXAMPLE_SAMPLES,
    seed: int = 0,
    grid: Optional[Tuple[float, float, float]] = None,
) -> ExampleReport:
    """Gains, costs and walkthrough for one covariance value."""
    init = GaussianInit(rho)
    optimal = optimal_linear_gains(init)
    published = ExampleStrategy(REFERENCE_GAIN_U2, 0.5, -REFERENCE_GAIN_U2 / 2)
    found = grid_search_gains(init, grid or EXAMPLE_GAIN_GRID)
    mean, se = sampled_cost(optimal, init, samples, seed) if samples > 0 else (float("nan"), 0.0)
    return ExampleReport(
        rho=rho,
        optimal=optimal,
        grid=found,
        published=published,
        optimal_cost=expected_cost(optimal, init),
        grid_cost=expected_cost(found, init),
        published_cost=expected_cost(published, init),
        sampled_cost=mean,
        sampled_stderr=se,
        walkthrough=dp_walkthrough(init),
    )
