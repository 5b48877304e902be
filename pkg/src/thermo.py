"""Pressure, Lyapunov spectrum and rate function of the Gauss map from transfer operators.

The beta-weighted Gauss transfer operator

    (L g)(x) = sum_{k >= 1} (k + x)^(-2 beta) g(1 / (k + x))

is discretized by polynomial collocation on [0, 1]. Branches k <= K0 are
summed directly; for k > K0 every Lagrange basis function is expanded in
powers of u = 1 / (k + x), which turns the remaining sum into Hurwitz zeta
values. P(beta) is the log of the leading eigenvalue.
"""

from __future__ import annotations

import functools
import logging
import math
from typing import TYPE_CHECKING

import numpy as np
from numpy.polynomial import polynomial
from scipy import integrate, interpolate, linalg, optimize, special

from src.exceptions import ConsistencyError, ConvexityError, DomainError, RangeError, SolverError
from src.interval_maps import GAUSS_LYAPUNOV, GOLDEN_LYAPUNOV, LEVY_CONSTANT, GaussMap, IntervalMap
from src.models import (
    PressureDiagnostics,
    PressureTable,
    RateSummary,
    SolverConfig,
    SpectrumPoint,
    TailCorrection,
)

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

logger = logging.getLogger(__name__)

BETA_MARGIN = 0.02
IMAGINARY_TOLERANCE = 1e-10
ROOT_TOLERANCE = 1e-10
BRENTQ_XTOL = 1e-14
RATE_STEP = 0.05
CONSISTENCY_LIMIT = 0.05
INTEGRAL_BLOCK = 4096
LEFT_SPECTRUM_END = GOLDEN_LYAPUNOV


def chebyshev_nodes(degree: int) -> np.ndarray:
    """Chebyshev points of the second kind mapped to [0, 1], increasing."""
    return 0.5 * (1.0 - np.cos(np.pi * np.arange(degree + 1) / degree))


class CollocationOperator:
    """Lagrange collocation of transfer operators on Chebyshev nodes of [0, 1]."""

    def __init__(self, degree: int) -> None:
        """Build the nodes, the basis evaluator and the basis power coefficients.

        Args:
            degree: Polynomial degree; the space has ``degree + 1`` nodes.

        """
        self.degree = degree
        self.nodes = chebyshev_nodes(degree)
        self._basis = interpolate.BarycentricInterpolator(self.nodes, np.eye(degree + 1))
        self.power_coefficients = self._power_coefficients()

    def _power_coefficients(self) -> np.ndarray:
        """Row j holds the monomial coefficients of the j-th Lagrange basis polynomial.

        The nodes are non-negative, so multiplying out the linear factors
        never cancels and every coefficient keeps full relative accuracy.
        """
        size = self.degree + 1
        coefficients = np.empty((size, size))
        for j in range(size):
            others = np.delete(self.nodes, j)
            coefficients[j] = polynomial.polyfromroots(others) / np.prod(self.nodes[j] - others)
        return coefficients

    def basis(self, points: np.ndarray) -> np.ndarray:
        """Values of every basis polynomial at the points, shape ``points.shape + (degree + 1,)``."""
        return self._basis(points)

    def gauss_matrix(self, beta: float, branch_truncation: int, k_max: int, tail: TailCorrection) -> np.ndarray:
        """Collocation matrix of the beta-weighted Gauss operator.

        Args:
            beta: Weight exponent, above 1/2.
            branch_truncation: Branches summed directly under the Hurwitz tail.
            k_max: Branches summed directly under the integral tail.
            tail: How the remaining branches are handled.

        Returns:
            Matrix A with (L g)(x_i) = sum_j A_ij g(x_j) for g in the polynomial space.

        """
        direct = branch_truncation if tail is TailCorrection.HURWITZ else k_max
        x = self.nodes[:, None]
        matrix = np.zeros((self.degree + 1, self.degree + 1))
        for start in range(1, direct + 1, INTEGRAL_BLOCK):
            k = np.arange(start, min(start + INTEGRAL_BLOCK, direct + 1), dtype=np.float64)[None, :]
            weights = (k + x) ** (-2.0 * beta)
            matrix += np.einsum("ik,ikj->ij", weights, self.basis(1.0 / (k + x)))

        m = np.arange(self.degree + 1, dtype=np.float64)
        if tail is TailCorrection.HURWITZ:
            zeta = special.zeta(2.0 * beta + m[None, :], direct + 1.0 + x)
            matrix += zeta @ self.power_coefficients.T
        else:
            # midpoint rule: the sum over k > k_max is the integral from k_max + 1/2
            u0 = 1.0 / (direct + 0.5 + x)
            exponent = 2.0 * beta - 1.0 + m[None, :]
            matrix += (u0**exponent / exponent) @ self.power_coefficients.T
        return matrix

    def branch_matrix(self, interval_map: IntervalMap, beta: float) -> np.ndarray:
        """Collocation matrix of sum over branches of |psi_a'|^beta g(psi_a) for a finite map."""
        x = self.nodes
        matrix = np.zeros((self.degree + 1, self.degree + 1))
        for branch in interval_map.branches():
            weights = np.abs(branch.inverse_derivative(x)) ** beta
            matrix += weights[:, None] * self.basis(branch.inverse(x))
        return matrix


@functools.lru_cache(maxsize=8)
def collocation(degree: int) -> CollocationOperator:
    """Shared collocation operator for a degree."""
    return CollocationOperator(degree)


def leading_eigenvalue(matrix: np.ndarray) -> tuple[float, float]:
    """Eigenvalue of largest real part and its imaginary part.

    Raises:
        SolverError: If the eigenvalue is not real and positive.

    """
    eigenvalues = linalg.eigvals(matrix)
    leading = eigenvalues[int(np.argmax(eigenvalues.real))]
    if abs(leading.imag) > IMAGINARY_TOLERANCE * max(abs(leading), 1.0) or not leading.real > 0:
        msg = f"leading eigenvalue {leading} is not real and positive"
        raise SolverError(msg)
    return float(leading.real), float(leading.imag)


def _check_beta(beta: float) -> None:
    if not (math.isfinite(beta) and beta > 0.5 + BETA_MARGIN):  # noqa: PLR2004
        msg = f"beta must exceed 1/2 + {BETA_MARGIN}, got {beta}; the operator diverges at 1/2"
        raise DomainError(msg)


def _gauss_eigenvalue(beta: float, degree: int, solver: SolverConfig) -> tuple[float, float]:
    operator = collocation(degree)
    return leading_eigenvalue(operator.gauss_matrix(beta, solver.branch_truncation, solver.k_max, solver.tail))


@functools.lru_cache(maxsize=4096)
def pressure_value(beta: float, solver: SolverConfig) -> float:
    """P(beta) at the configured degree, without the refinement check."""
    _check_beta(beta)
    eigenvalue, _ = _gauss_eigenvalue(beta, solver.degree, solver)
    return math.log(eigenvalue)


def pressure(beta: float, solver: SolverConfig | None = None) -> tuple[float, PressureDiagnostics]:
    """Compute the Gauss-map pressure with a degree-refinement check.

    Args:
        beta: Exponent above 1/2.
        solver: Solver parameters.

    Returns:
        P(beta) and its diagnostics.

    Raises:
        DomainError: If beta is too close to 1/2.
        SolverError: If the eigensolve fails or raising the degree by 2
            moves P by more than ``solver.refine_tol``.

    """
    settings = solver or SolverConfig()
    _check_beta(beta)
    eigenvalue, imaginary = _gauss_eigenvalue(beta, settings.degree, settings)
    value = math.log(eigenvalue)
    refined = math.log(_gauss_eigenvalue(beta, settings.degree + 2, settings)[0])
    change = abs(refined - value)
    diagnostics = PressureDiagnostics(
        beta=beta,
        value=value,
        degree=settings.degree,
        branch_truncation=settings.branch_truncation,
        tail_correction=settings.tail,
        imaginary_part=imaginary,
        refined_value=refined,
        refinement_change=change,
    )
    logger.debug("P(%s) = %.15g (refinement change %.2e)", beta, value, change)
    if change > settings.refine_tol:
        msg = f"P({beta}) moved by {change:.3e} when the degree was raised to {settings.degree + 2}"
        raise SolverError(msg)
    return value, diagnostics


def _richardson(estimate: Callable[[float], float], step: float, levels: int) -> float:
    """Richardson extrapolation of an even-error difference quotient over halved steps."""
    table = [estimate(step / 2**level) for level in range(levels)]
    for order in range(1, levels):
        factor = 4.0**order
        table = [(factor * fine - coarse) / (factor - 1.0) for coarse, fine in zip(table, table[1:], strict=False)]
    return table[0]


@functools.lru_cache(maxsize=4096)
def pressure_derivatives(beta: float, solver: SolverConfig | None = None) -> tuple[float, float]:
    """P'(beta) and P''(beta) by Richardson-extrapolated central differences.

    Args:
        beta: Exponent with ``beta - solver.step`` above 1/2.
        solver: Solver parameters.

    Returns:
        ``(P1, P2)``.

    Raises:
        ConvexityError: If P2 is not positive.

    """
    settings = solver or SolverConfig()
    _check_beta(beta - settings.step)

    def p(b: float) -> float:
        return pressure_value(b, settings)

    first = _richardson(lambda h: (p(beta + h) - p(beta - h)) / (2.0 * h), settings.step, settings.richardson_levels)
    second = _richardson(
        lambda h: (p(beta + h) - 2.0 * p(beta) + p(beta - h)) / (h * h), settings.step, settings.richardson_levels,
    )
    if not second > 0:
        msg = f"P''({beta}) = {second} is not positive; the discretization is not resolving the pressure"
        raise ConvexityError(msg)
    return first, second


def alpha_window(solver: SolverConfig | None = None) -> tuple[float, float]:
    """Range of -P'(beta) over the solver's beta window."""
    settings = solver or SolverConfig()
    return -pressure_derivatives(settings.beta_max, settings)[0], -pressure_derivatives(settings.beta_min, settings)[0]


@functools.lru_cache(maxsize=4096)
def beta_of_alpha(alpha: float, solver: SolverConfig | None = None) -> float:
    """Solve P'(beta) + alpha = 0 by bracketing.

    Args:
        alpha: Lyapunov exponent.
        solver: Solver parameters.

    Returns:
        beta(alpha), strictly decreasing in alpha.

    Raises:
        RangeError: If alpha is outside the window reachable from [beta_min, beta_max].
        SolverError: If the residual at the root exceeds ``ROOT_TOLERANCE``.

    """
    settings = solver or SolverConfig()
    window = alpha_window(settings)
    if not window[0] < alpha < window[1]:
        msg = f"alpha={alpha} is outside the computable window ({window[0]:.6g}, {window[1]:.6g})"
        raise RangeError(msg, window)

    def residual(beta: float) -> float:
        return pressure_derivatives(beta, settings)[0] + alpha

    root = optimize.brentq(residual, settings.beta_min, settings.beta_max, xtol=BRENTQ_XTOL)
    if abs(residual(root)) > ROOT_TOLERANCE:
        msg = f"beta({alpha}) = {root} leaves a residual of {residual(root):.3e}"
        raise SolverError(msg)
    return float(root)


def spectrum_b(alpha: float, solver: SolverConfig | None = None) -> SpectrumPoint:
    """Lyapunov spectrum b(alpha) = (P(beta(alpha)) + alpha beta(alpha)) / alpha."""
    settings = solver or SolverConfig()
    beta = beta_of_alpha(alpha, settings)
    b = (pressure_value(beta, settings) + alpha * beta) / alpha
    return SpectrumPoint(alpha=alpha, beta_of_alpha=beta, b=b)


def rate_function(eps: float, solver: SolverConfig | None = None) -> float:
    """I(eps) = (eps + 2 gamma)(1 - b(eps + 2 gamma)).

    Raises:
        RangeError: If eps + 2 gamma is outside the computable window.

    """
    settings = solver or SolverConfig()
    alpha = eps + GAUSS_LYAPUNOV
    beta = beta_of_alpha(alpha, settings)
    return alpha * (1.0 - beta) - pressure_value(beta, settings)


def rate_derivative(eps: float, solver: SolverConfig | None = None) -> float:
    """I'(eps) = 1 - beta(eps + 2 gamma)."""
    return 1.0 - beta_of_alpha(eps + GAUSS_LYAPUNOV, solver or SolverConfig())


def rate_second_derivative_at_0(solver: SolverConfig | None = None) -> RateSummary:
    """I''(0) by second differences of I and by the chain -2 b''(2 gamma) gamma.

    b''(alpha) = beta'(alpha) / alpha + 2 P(beta(alpha)) / alpha^3 with
    beta' = -1 / P''(beta).

    Returns:
        Both values, their relative gap and I(0), I'(0).

    Raises:
        ConvexityError: If either value is not positive.
        ConsistencyError: If the two routes differ by more than 5%.

    """
    settings = solver or SolverConfig()
    alpha = GAUSS_LYAPUNOV
    beta = beta_of_alpha(alpha, settings)
    beta_prime = -1.0 / pressure_derivatives(beta, settings)[1]
    b_second = beta_prime / alpha + 2.0 * pressure_value(beta, settings) / alpha**3
    chain = -2.0 * b_second * LEVY_CONSTANT

    def rate(eps: float) -> float:
        return rate_function(eps, settings)

    at_zero = rate(0.0)
    direct = _richardson(
        lambda h: (rate(h) - 2.0 * at_zero + rate(-h)) / (h * h), RATE_STEP, settings.richardson_levels,
    )
    if not (chain > 0 and direct > 0):
        msg = f"I''(0) is not positive: chain {chain}, direct {direct}"
        raise ConvexityError(msg)
    gap = abs(direct - chain) / chain
    if gap > CONSISTENCY_LIMIT:
        msg = f"I''(0) routes disagree: direct {direct:.6g} vs chain {chain:.6g} ({gap:.1%})"
        raise ConsistencyError(msg)
    window = alpha_window(settings)
    return RateSummary(
        eps_domain=(window[0] - alpha, window[1] - alpha),
        value_at_0=at_zero,
        derivative_at_0=1.0 - beta,
        second_deriv_at_0=chain,
        second_deriv_direct=direct,
        relative_gap=gap,
    )


class RateFunction:
    """The Gauss-map rate function I on its computable eps domain."""

    def __init__(self, solver: SolverConfig | None = None) -> None:
        """Bind the rate function to solver parameters."""
        self.solver = solver or SolverConfig()

    @property
    def eps_domain(self) -> tuple[float, float]:
        """Open interval of eps where I can be evaluated."""
        low, high = alpha_window(self.solver)
        return low - GAUSS_LYAPUNOV, high - GAUSS_LYAPUNOV

    def __call__(self, eps: float) -> float:
        """Return I(eps)."""
        return rate_function(eps, self.solver)

    def derivative(self, eps: float) -> float:
        """Return I'(eps)."""
        return rate_derivative(eps, self.solver)

    @functools.cached_property
    def second_deriv_at_0(self) -> float:
        """I''(0) from the closed chain, cross-checked against second differences."""
        return rate_second_derivative_at_0(self.solver).second_deriv_at_0


def equilibrium_variance(solver: SolverConfig | None = None) -> float:
    """P''(1), the asymptotic variance of log|G'| under the Gauss measure."""
    return pressure_derivatives(1.0, solver or SolverConfig())[1]


def transfer_apply(
    beta: float, g: Callable[[np.ndarray], np.ndarray], points: Sequence[float], k_max: int = 100_000,
) -> np.ndarray:
    """Apply the beta-weighted Gauss operator to a function by direct summation.

    Branches k <= k_max are summed; the rest is the integral from k_max + 1/2,
    which in u = 1 / (k + x) is the integral of u^(2 beta - 2) g(u) over
    [0, 1 / (k_max + 1/2 + x)].

    Args:
        beta: Exponent above 1/2.
        g: Vectorized function on [0, 1].
        points: Evaluation points in [0, 1].
        k_max: Branches summed directly.

    Returns:
        (L g)(x) at every point.

    """
    _check_beta(beta)
    k = np.arange(1, k_max + 1, dtype=np.float64)
    values = []
    for x in points:
        shifted = k + x
        direct = math.fsum(shifted ** (-2.0 * beta) * g(1.0 / shifted))
        upper = 1.0 / (k_max + 0.5 + x)
        tail = integrate.quad(lambda u: u ** (2.0 * beta - 2.0) * float(g(np.array([u]))[0]), 0.0, upper)[0]
        values.append(direct + tail)
    return np.array(values)


def map_pressure(interval_map: IntervalMap, beta: float, solver: SolverConfig | None = None) -> float:
    """Pressure of the potential -beta log|T'| for a supported map.

    Finite-branch maps use the branch-sum operator; for the doubling map
    this gives (1 - beta) log 2.

    Raises:
        DomainError: If the map has infinitely many branches other than Gauss.

    """
    settings = solver or SolverConfig()
    if isinstance(interval_map, GaussMap):
        return pressure_value(beta, settings)
    if interval_map.branch_count is None:
        msg = f"no transfer-operator discretization for the infinite-branch map '{interval_map.id}'"
        raise DomainError(msg)
    eigenvalue, _ = leading_eigenvalue(collocation(settings.degree).branch_matrix(interval_map, beta))
    return math.log(eigenvalue)


def pressure_table(beta_grid: Sequence[float], solver: SolverConfig | None = None) -> PressureTable:
    """Tabulate P, P' and P'' on an increasing beta grid.

    Raises:
        DomainError: If the grid is not strictly increasing.
        ConvexityError: If P' fails to increase strictly.

    """
    settings = solver or SolverConfig()
    grid = tuple(float(beta) for beta in beta_grid)
    if any(b <= a for a, b in zip(grid, grid[1:], strict=False)):
        msg = f"beta grid must be strictly increasing, got {list(grid)}"
        raise DomainError(msg)
    values = tuple(pressure_value(beta, settings) for beta in grid)
    derivatives = [pressure_derivatives(beta, settings) for beta in grid]
    first = tuple(d[0] for d in derivatives)
    if any(b <= a for a, b in zip(first, first[1:], strict=False)):
        msg = "P' is not strictly increasing on the beta grid"
        raise ConvexityError(msg)
    return PressureTable(
        beta_grid=grid,
        P=values,
        P1=first,
        P2=tuple(d[1] for d in derivatives),
        collocation_degree=settings.degree,
        branch_truncation=settings.branch_truncation if settings.tail is TailCorrection.HURWITZ else settings.k_max,
        tail_correction=settings.tail,
    )


def spectrum_table(alpha_grid: Sequence[float], solver: SolverConfig | None = None) -> list[SpectrumPoint]:
    """Spectrum points over an alpha grid."""
    settings = solver or SolverConfig()
    return [spectrum_b(float(alpha), settings) for alpha in alpha_grid]
