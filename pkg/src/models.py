"""Data models for experiment configuration and results."""

from __future__ import annotations

import math
from datetime import datetime  # noqa: TC003
from enum import StrEnum

import msgspec

from src.exceptions import ConfigError

MIN_SAMPLES = 1000
MIN_COLLOCATION_DEGREE = 4
FINITE_BRANCH_KINDS = ("affine", "affine-reversed", "mobius")


class Method(StrEnum):
    """How deviation probabilities are obtained."""

    MONTE_CARLO = "monte-carlo"
    EXACT = "exact"


class FitModel(StrEnum):
    """Extrapolation model used for the small-epsilon limit."""

    LINEAR = "linear"
    QUADRATIC = "quadratic"


class TailCorrection(StrEnum):
    """Treatment of the transfer-operator branches beyond the direct sum."""

    HURWITZ = "hurwitz"
    INTEGRAL = "integral"


class VarianceMethod(StrEnum):
    """Supported variance estimators."""

    BATCH_MEANS = "batch-means"
    AUTOCOVARIANCE = "autocovariance"


class LDParams(msgspec.Struct, frozen=True, forbid_unknown_fields=True):
    """Large-deviation constants used to certify series tails."""

    constant: float = msgspec.field(default=1.0, name="C")
    delta: float = 1.0
    M: float = 1.0  # noqa: N815
    rate: str = "auto"

    def __post_init__(self) -> None:
        """Validate the constants.

        Raises:
            ConfigError: If a constant is not positive.

        """
        for label, value in (("C", self.constant), ("delta", self.delta), ("M", self.M)):
            if not value > 0:
                msg = f"ld.{label} must be positive, got {value}"
                raise ConfigError(msg)


class FiniteMapDefinition(msgspec.Struct, frozen=True, forbid_unknown_fields=True):
    """A finite full-branch map declared in the config file."""

    name: str
    endpoints: tuple[float, ...]
    kinds: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        """Validate the partition and the branch formulas.

        Raises:
            ConfigError: If the endpoints or kinds are malformed.

        """
        points = self.endpoints
        if len(points) < 3 or points[0] != 0.0 or points[-1] != 1.0:  # noqa: PLR2004
            msg = f"map '{self.name}': endpoints must start at 0, end at 1 and define at least two branches"
            raise ConfigError(msg)
        if any(b <= a for a, b in zip(points, points[1:], strict=False)):
            msg = f"map '{self.name}': endpoints must be strictly increasing"
            raise ConfigError(msg)
        if self.kinds and len(self.kinds) != len(points) - 1:
            msg = f"map '{self.name}': expected {len(points) - 1} branch kinds, got {len(self.kinds)}"
            raise ConfigError(msg)
        for kind in self.kinds:
            base, _, parameter = kind.partition(":")
            if base not in FINITE_BRANCH_KINDS:
                msg = f"map '{self.name}': unknown branch kind '{kind}'"
                raise ConfigError(msg)
            if base == "mobius":
                try:
                    value = float(parameter)
                except ValueError:
                    msg = f"map '{self.name}': mobius branches need a numeric parameter, got '{kind}'"
                    raise ConfigError(msg) from None
                if not value > -1:
                    msg = f"map '{self.name}': mobius parameter must exceed -1, got {value}"
                    raise ConfigError(msg)


class ExperimentConfig(msgspec.Struct, frozen=True, forbid_unknown_fields=True):
    """Everything that determines a deviation experiment's numbers."""

    map_id: str = "gauss"
    observable_id: str = "log-derivative"
    mean: float | None = None
    eps_grid: tuple[float, ...] = (0.4, 0.3, 0.2)
    n_max: int = 2000
    samples: int = 100_000
    seed: int = 0
    ld: LDParams = msgspec.field(default_factory=LDParams)
    method: Method = Method.MONTE_CARLO
    fit: FitModel = FitModel.LINEAR
    n_cal: tuple[int, ...] = (500, 1000, 2000)
    ks_n: tuple[int, ...] = (100, 1000)
    max_lag: int = 64
    maps: tuple[FiniteMapDefinition, ...] = ()

    def __post_init__(self) -> None:
        """Check the invariants the estimators rely on.

        Raises:
            ConfigError: If any invariant is violated.

        """
        grid = self.eps_grid
        if not grid:
            msg = "eps_grid must not be empty"
            raise ConfigError(msg)
        if any(not (eps > 0 and math.isfinite(eps)) for eps in grid):
            msg = f"eps_grid values must be positive and finite, got {list(grid)}"
            raise ConfigError(msg)
        if any(b >= a for a, b in zip(grid, grid[1:], strict=False)):
            msg = f"eps_grid must be strictly decreasing, got {list(grid)}"
            raise ConfigError(msg)
        if grid[0] >= self.ld.delta:
            msg = f"every eps must be below ld.delta={self.ld.delta}, got {grid[0]}"
            raise ConfigError(msg)
        if self.samples < MIN_SAMPLES:
            msg = f"samples must be at least {MIN_SAMPLES}, got {self.samples}"
            raise ConfigError(msg)
        if self.n_max < 1:
            msg = f"n_max must be positive, got {self.n_max}"
            raise ConfigError(msg)
        if not 0 <= self.seed < 2**64:
            msg = f"seed must be a 64-bit unsigned integer, got {self.seed}"
            raise ConfigError(msg)
        for label, values in (("n_cal", self.n_cal), ("ks_n", self.ks_n)):
            if any(not 1 <= n <= self.n_max for n in values):
                msg = f"{label} values must lie in [1, n_max={self.n_max}], got {list(values)}"
                raise ConfigError(msg)
        if self.max_lag < 1:
            msg = f"max_lag must be positive, got {self.max_lag}"
            raise ConfigError(msg)

    def map_definition(self, name: str) -> FiniteMapDefinition | None:
        """Look up a finite map declared in the config.

        Args:
            name: The map name.

        Returns:
            The definition, or None if no map has that name.

        """
        return next((definition for definition in self.maps if definition.name == name), None)


class SolverConfig(msgspec.Struct, frozen=True, forbid_unknown_fields=True):
    """Numerical parameters of the transfer-operator solver."""

    degree: int = 40
    branch_truncation: int = 32
    k_max: int = 100_000
    tail: TailCorrection = TailCorrection.HURWITZ
    beta_min: float = 0.6
    beta_max: float = 4.0
    step: float = 0.05
    richardson_levels: int = 3
    refine_tol: float = 1e-7

    def __post_init__(self) -> None:
        """Validate the solver window and discretization.

        Raises:
            ConfigError: If a parameter is out of range.

        """
        if self.degree < MIN_COLLOCATION_DEGREE:
            msg = f"solver.degree must be at least {MIN_COLLOCATION_DEGREE}, got {self.degree}"
            raise ConfigError(msg)
        if self.branch_truncation < 1 or self.k_max < self.branch_truncation:
            msg = "solver.branch_truncation must be positive and not exceed solver.k_max"
            raise ConfigError(msg)
        if not 0.5 < self.beta_min < self.beta_max:  # noqa: PLR2004
            msg = f"solver beta window must satisfy 1/2 < beta_min < beta_max, got [{self.beta_min}, {self.beta_max}]"
            raise ConfigError(msg)
        if self.beta_min - self.step <= 0.5:  # noqa: PLR2004
            msg = "solver.step is too large for beta_min: differences would cross beta = 1/2"
            raise ConfigError(msg)
        if self.step <= 0 or self.richardson_levels < 1 or self.refine_tol <= 0:
            msg = "solver.step, solver.richardson_levels and solver.refine_tol must be positive"
            raise ConfigError(msg)


class ConfigFile(msgspec.Struct, frozen=True, forbid_unknown_fields=True):
    """Top-level layout of a config file."""

    experiment: ExperimentConfig = msgspec.field(default_factory=ExperimentConfig)
    solver: SolverConfig = msgspec.field(default_factory=SolverConfig)


class RunManifest(msgspec.Struct, frozen=True):
    """Provenance record written next to every run's artifacts."""

    config_hash: str
    generated_at: datetime
    tool_version: str
    subcommand: str
    output_paths: tuple[str, ...]
    schema_version: int = 1


# Results


class GaussianSumReport(msgspec.Struct, frozen=True):
    """A Gaussian series together with its certified truncation remainder."""

    rho: float
    value: float
    scaled: float
    truncation_n: int
    tail_bound: float
    start: int = 0


class ConditionReport(msgspec.Struct, frozen=True):
    """Outcome of probing the expanding Markov conditions of a map."""

    map_id: str
    expansion_power: int
    expansion_constant: float
    min_expansion: float
    renyi_bound: float
    max_distortion: float
    markov: bool
    partition_defect: float
    partition_ok: bool
    expansion_ok: bool
    distortion_ok: bool

    @property
    def passed(self) -> bool:
        """Whether every condition holds on the probe grid."""
        return self.partition_ok and self.expansion_ok and self.distortion_ok and self.markov


class CFExpansion(msgspec.Struct, frozen=True):
    """Continued-fraction digits of a number in (0, 1)."""

    digits: tuple[int, ...]
    source: str
    exact: bool
    terminated: bool = False


class ConvergentPair(msgspec.Struct, frozen=True):
    """The n-th convergent p/q."""

    p: int
    q: int
    index: int

    def to_builtins(self) -> dict[str, object]:
        """Return a JSON-safe mapping with the integers as decimal strings."""
        return {"index": self.index, "p": str(self.p), "q": str(self.q)}


class IntegrityReport(msgspec.Struct, frozen=True):
    """Exact integrity checks on a list of convergents."""

    count: int
    coprime: bool
    determinant: bool
    increasing: bool
    reevaluation: bool

    @property
    def passed(self) -> bool:
        """Whether every check held."""
        return self.coprime and self.determinant and self.increasing and self.reevaluation


class DiophantineEntry(msgspec.Struct, frozen=True):
    """One index of the two-sided convergent approximation check."""

    index: int
    error: float
    lower: float | None
    upper: float
    passed: bool
    terminal: bool = False


class DiophantineReport(msgspec.Struct, frozen=True):
    """All entries of a Diophantine check for one number."""

    entries: tuple[DiophantineEntry, ...]
    terminal_index: int | None = None

    @property
    def passed(self) -> bool:
        """Whether every entry passed."""
        return all(entry.passed for entry in self.entries)


class DiophantineBatch(msgspec.Struct, frozen=True):
    """Summary of the Diophantine and integrity checks over random seeds."""

    count: int
    n: int
    bits: int
    passed: int
    integrity_passed: int
    terminated_early: int


class LevyBatch(msgspec.Struct, frozen=True):
    """Mean of log q_n / n over random seeds, next to the Levy constant."""

    count: int
    n: int
    bits: int
    mean: float
    stderr: float
    gamma: float

    @property
    def relative_error(self) -> float:
        """Relative distance of the mean from the Levy constant."""
        return abs(self.mean - self.gamma) / self.gamma


class LambdaEstimate(msgspec.Struct, frozen=True):
    """Deviation probabilities above and below at one (n, eps)."""

    n: int
    eps: float
    plus: float
    minus: float
    stderr_plus: float = 0.0
    stderr_minus: float = 0.0
    samples: int = 0


class DeviationSeries(msgspec.Struct, frozen=True):
    """Truncated deviation series at one eps with its certified tail."""

    eps: float
    per_n: tuple[LambdaEstimate, ...]
    truncation_n: int
    tail_remainder: float
    value: float
    stderr: float
    weighted_value: float
    weighted_stderr: float
    rate_plus: float
    rate_minus: float
    certified: bool


class HeydePoint(msgspec.Struct, frozen=True):
    """eps^2 times the deviation series at one eps."""

    eps: float
    scaled: float
    stderr: float


class HeydeEstimate(msgspec.Struct, frozen=True):
    """The scaled series over the grid and its extrapolation to eps -> 0."""

    points: tuple[HeydePoint, ...]
    fit: FitModel
    limit: float
    limit_stderr: float
    smallest_eps_value: float


class SpataruPoint(msgspec.Struct, frozen=True):
    """The log-weighted series normalized by -log eps, with a reference bracket."""

    eps: float
    normalized: float
    stderr: float
    reference: float | None = None
    bracket_low: float | None = None
    bracket_high: float | None = None


class SpataruEstimate(msgspec.Struct, frozen=True):
    """Normalized log-weighted sums over the grid with a trend flag."""

    points: tuple[SpataruPoint, ...]
    trend_monotone: bool


class VarianceEstimate(msgspec.Struct, frozen=True):
    """Asymptotic variance of the Birkhoff sum."""

    sigma2: float
    method: VarianceMethod
    n_used: int
    stderr: float
    autocov_sigma2: float | None = None
    autocov_stderr: float | None = None
    lag_cutoff: int | None = None
    methods_agree: bool | None = None


class KSReport(msgspec.Struct, frozen=True):
    """Kolmogorov distance between the normalized sum and the standard normal."""

    n: int
    delta_n: float
    samples: int = 0
    critical: float = 0.0


class LevyCoupling(msgspec.Struct, frozen=True):
    """Denominator deviations next to derivative deviations at doubled eps."""

    n: int
    eps: float
    gamma_plus: float
    gamma_minus: float
    lambda_plus: float
    lambda_minus: float
    stderr: float
    sandwich_min: float
    sandwich_max: float
    samples: int

    @property
    def difference(self) -> float:
        """Largest gap between the two deviation estimates."""
        return max(abs(self.gamma_plus - self.lambda_plus), abs(self.gamma_minus - self.lambda_minus))


class PrefixCoupling(msgspec.Struct, frozen=True):
    """Gap between the deviation prefix and the Gaussian prefix, scaled by eps^2."""

    eps: float
    K: float  # noqa: N815
    prefix_n: int
    gap: float
    bound: float


class MeanEstimate(msgspec.Struct, frozen=True):
    """Ergodic-average estimate of a centering constant."""

    mean: float
    stderr: float
    n: int
    samples: int
    certified: bool = False


class PressureTable(msgspec.Struct, frozen=True):
    """Pressure and its first two derivatives on a beta grid."""

    beta_grid: tuple[float, ...]
    P: tuple[float, ...]  # noqa: N815
    P1: tuple[float, ...]  # noqa: N815
    P2: tuple[float, ...]  # noqa: N815
    collocation_degree: int
    branch_truncation: int
    tail_correction: TailCorrection


class SpectrumPoint(msgspec.Struct, frozen=True):
    """Lyapunov spectrum value b(alpha) and the conjugate beta."""

    alpha: float
    beta_of_alpha: float
    b: float


class RateSummary(msgspec.Struct, frozen=True):
    """Numbers characterizing the rate function near zero."""

    eps_domain: tuple[float, float]
    value_at_0: float
    derivative_at_0: float
    second_deriv_at_0: float
    second_deriv_direct: float
    relative_gap: float


class PressureDiagnostics(msgspec.Struct, frozen=True):
    """How a pressure value was obtained and how far refinement moved it."""

    beta: float
    value: float
    degree: int
    branch_truncation: int
    tail_correction: TailCorrection
    imaginary_part: float
    refined_value: float | None = None
    refinement_change: float | None = None
