"""Expanding Markov interval maps, observables and Birkhoff sums."""

from __future__ import annotations

import logging
import math
from fractions import Fraction
from typing import TYPE_CHECKING, Any, TypeAlias

import msgspec
import numpy as np

from src.exceptions import ConfigError, DomainError, OrbitTerminatedError, PartialOrbitError, PreconditionError
from src.models import ConditionReport, FiniteMapDefinition

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

logger = logging.getLogger(__name__)

LN2 = math.log(2.0)
LEVY_CONSTANT = math.pi**2 / (12.0 * LN2)
GAUSS_LYAPUNOV = 2.0 * LEVY_CONSTANT
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
GOLDEN_LYAPUNOV = 2.0 * math.log((math.sqrt(5.0) + 1.0) / 2.0)
DEFAULT_TRUNCATION = 64
ENDPOINT_OFFSET = 1e-9
CHECK_TOLERANCE = 1e-9

Point: TypeAlias = float | Fraction


def log_positive(x: Point) -> float:
    """Natural log of a positive float or exact rational without overflow."""
    if isinstance(x, Fraction):
        return math.log(x.numerator) - math.log(x.denominator)
    return math.log(x)


class Branch(msgspec.Struct, frozen=True):
    """One monotone full branch of an interval map."""

    index: int
    left: float
    right: float
    forward: Callable[[Any], Any]
    derivative: Callable[[Any], Any]
    second_derivative: Callable[[Any], Any]
    inverse: Callable[[Any], Any]
    inverse_derivative: Callable[[Any], Any]
    closed_left: bool = False
    closed_right: bool = False

    @property
    def length(self) -> float:
        """Length of the branch domain."""
        return self.right - self.left

    def probes(self, count: int) -> np.ndarray:
        """Interior probe points: cell midpoints plus two points next to the ends."""
        cells = self.left + self.length * (np.arange(count) + 0.5) / count
        near = np.array([self.left + self.length * ENDPOINT_OFFSET, self.right - self.length * ENDPOINT_OFFSET])
        return np.concatenate([cells, near])


class IntervalMap:
    """Base class for expanding Markov maps of the unit interval."""

    id: str = ""
    expansion_power: int = 1
    expansion_constant: float = 1.0
    renyi_bound: float = 0.0
    markov: bool = True
    branch_count: int | None = None
    truncation: int = DEFAULT_TRUNCATION

    def branch(self, index: int) -> Branch:
        """Return the branch with the given index."""
        raise NotImplementedError

    def branches(self, limit: int | None = None) -> list[Branch]:
        """Enumerate branches, truncated for infinite families.

        Args:
            limit: Maximum number of branches; defaults to the map's truncation.

        Returns:
            The branches in index order.

        """
        count = self.branch_count if self.branch_count is not None else (limit or self.truncation)
        if limit is not None:
            count = min(count, limit)
        return [self.branch(index) for index in range(1, count + 1)]

    def tail_length(self, limit: int) -> float:  # noqa: ARG002, PLR6301
        """Total length of the branch domains beyond the first ``limit``."""
        return 0.0

    def branch_index(self, x: Point) -> int:
        """Index of the branch whose domain contains x."""
        raise NotImplementedError

    def locate(self, x: Point) -> Branch:
        """Return the branch containing x.

        Raises:
            OrbitTerminatedError: If x lies outside (0, 1).

        """
        if not 0 < x < 1:
            msg = f"{self.id}: point {x} lies outside (0, 1)"
            raise OrbitTerminatedError(msg)
        return self.branch(self.branch_index(x))

    def apply(self, x: Point) -> Point:
        """Apply the map; exact for rational input.

        Raises:
            OrbitTerminatedError: If x or its image leaves (0, 1).

        """
        image = self.locate(x).forward(x)
        if not 0 < image < 1:
            msg = f"{self.id}: the orbit of {x} terminates (image {image})"
            raise OrbitTerminatedError(msg)
        return image

    def log_abs_derivative(self, x: Any) -> Any:
        """log|T'(x)|, vectorized over numpy arrays."""
        raise NotImplementedError

    def apply_array(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Apply the map to an array of points.

        Returns:
            The images and a mask of the points whose image stays in (0, 1).

        """
        raise NotImplementedError

    def invariant_density(self, x: Any) -> Any | None:  # noqa: ARG002, PLR6301
        """Density of the absolutely continuous invariant measure, when known."""
        return None

    @property
    def lyapunov_exponent(self) -> float | None:
        """Integral of log|T'| against the invariant measure, when known."""
        return None

    def invariant_mass(self, a: float, b: float) -> float | None:  # noqa: ARG002, PLR6301
        """Invariant measure of [a, b], when known."""
        return None


class GaussMap(IntervalMap):
    """G(x) = 1/x - floor(1/x), with branches (1/(k+1), 1/k] for k >= 1."""

    id = "gauss"
    expansion_power = 2
    expansion_constant = 4.0
    renyi_bound = 2.0

    def branch(self, index: int) -> Branch:  # noqa: PLR6301
        """Return the branch for continued-fraction digit ``index``."""
        k = index
        return Branch(
            index=k,
            left=1.0 / (k + 1),
            right=1.0 / k,
            forward=lambda x: 1 / x - k,
            derivative=lambda x: -1 / (x * x),
            second_derivative=lambda x: 2 / (x * x * x),
            inverse=lambda y: 1 / (k + y),
            inverse_derivative=lambda y: -1 / ((k + y) * (k + y)),
            closed_right=True,
        )

    def tail_length(self, limit: int) -> float:  # noqa: PLR6301
        """Length of the union of the branches with digit above ``limit``."""
        return 1.0 / (limit + 1)

    def branch_index(self, x: Point) -> int:  # noqa: PLR6301
        """Continued-fraction digit floor(1/x)."""
        if isinstance(x, Fraction):
            return x.denominator // x.numerator
        return math.floor(1.0 / x)

    def apply(self, x: Point) -> Point:
        """Apply G; rationals are handled with exact integer division.

        Raises:
            OrbitTerminatedError: If x is outside (0, 1) or equals 1/k.

        """
        if not 0 < x < 1:
            msg = f"gauss: point {x} lies outside (0, 1)"
            raise OrbitTerminatedError(msg)
        if isinstance(x, Fraction):
            _, remainder = divmod(x.denominator, x.numerator)
            image: Point = Fraction(remainder, x.numerator)
        else:
            inverse = 1.0 / x
            image = inverse - math.floor(inverse)
        if image == 0:
            msg = f"gauss: {x} is a branch endpoint, its orbit terminates"
            raise OrbitTerminatedError(msg)
        return image

    def log_abs_derivative(self, x: Any) -> Any:  # noqa: PLR6301
        """-2 log x."""
        if isinstance(x, Fraction):
            return -2.0 * log_positive(x)
        return -2.0 * np.log(x)

    def apply_array(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:  # noqa: PLR6301
        """Vectorized Gauss map."""
        with np.errstate(divide="ignore", invalid="ignore"):
            inverse = 1 / xs
            images = inverse - np.floor(inverse)
        valid = (xs > 0) & (xs < 1) & (images > 0) & (images < 1)
        return images, valid

    def invariant_density(self, x: Any) -> Any:  # noqa: PLR6301
        """Gauss density 1 / ((1 + x) log 2)."""
        return 1 / ((1 + x) * LN2)

    @property
    def lyapunov_exponent(self) -> float:
        """pi^2 / (6 log 2), twice the Levy constant."""
        return GAUSS_LYAPUNOV

    def invariant_mass(self, a: float, b: float) -> float:  # noqa: PLR6301
        """Gauss measure of [a, b]."""
        return (math.log1p(b) - math.log1p(a)) / LN2


class BinaryMap(IntervalMap):
    """Doubling map x -> 2x mod 1."""

    id = "binary"
    expansion_power = 1
    expansion_constant = 2.0
    renyi_bound = 0.0
    branch_count = 2

    def branch(self, index: int) -> Branch:  # noqa: PLR6301
        """Return the lower (1) or upper (2) half."""
        shift = index - 1
        return Branch(
            index=index,
            left=0.5 * shift,
            right=0.5 * (shift + 1),
            forward=lambda x: 2 * x - shift,
            derivative=lambda x: 2 + 0 * x,
            second_derivative=lambda x: 0 * x,
            inverse=lambda y: (y + shift) / 2,
            inverse_derivative=lambda y: 0.5 + 0 * y,
            closed_left=True,
        )

    def branch_index(self, x: Point) -> int:  # noqa: PLR6301
        """1 on [0, 1/2), 2 on [1/2, 1)."""
        return 1 if 2 * x < 1 else 2

    def log_abs_derivative(self, x: Any) -> Any:  # noqa: PLR6301
        """log 2 everywhere."""
        if isinstance(x, np.ndarray):
            return np.full(x.shape, LN2, dtype=x.dtype)
        return LN2

    def apply_array(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:  # noqa: PLR6301
        """Vectorized doubling."""
        doubled = 2 * xs
        images = np.where(doubled < 1, doubled, doubled - 1)
        valid = (xs > 0) & (xs < 1) & (images > 0)
        return images, valid

    def invariant_density(self, x: Any) -> Any:  # noqa: PLR6301
        """Lebesgue measure is invariant."""
        return 1 + 0 * x

    @property
    def lyapunov_exponent(self) -> float:
        """log 2."""
        return LN2

    def invariant_mass(self, a: float, b: float) -> float:  # noqa: PLR6301
        """Length of [a, b]."""
        return b - a


def _branch_shape(kind: str) -> tuple[str, float]:
    base, _, parameter = kind.partition(":")
    return base, float(parameter) if parameter else 0.0


class FiniteMap(IntervalMap):
    """Full-branch map over a finite partition with affine or Mobius branches.

    On a cell [l, r) with local coordinate u = (x - l) / (r - l), the branch
    is h(u) = u (``affine``), 1 - u (``affine-reversed``) or
    (1 + c) u / (1 + c u) (``mobius:<c>``, c > -1).
    """

    def __init__(self, name: str, endpoints: Sequence[float], kinds: Sequence[str] = ()) -> None:
        """Initialize the map.

        Args:
            name: Registry id of the map.
            endpoints: Increasing partition points from 0 to 1.
            kinds: One branch kind per cell, affine by default.

        """
        FiniteMapDefinition(name=name, endpoints=tuple(endpoints), kinds=tuple(kinds))
        self.id = name
        self.endpoints = np.asarray(endpoints, dtype=np.float64)
        self.kinds = tuple(kinds) or ("affine",) * (len(endpoints) - 1)
        self.branch_count = len(self.kinds)
        shapes = [_branch_shape(kind) for kind in self.kinds]
        self._codes = np.array([("affine", "affine-reversed", "mobius").index(base) for base, _ in shapes])
        self._params = np.array([parameter for _, parameter in shapes])
        self._lengths = np.diff(self.endpoints)
        self.expansion_power = 1
        self.expansion_constant = float(min(self._min_slope(i) for i in range(self.branch_count)))
        self.renyi_bound = float(max(self._max_distortion(i) for i in range(self.branch_count)))

    def _min_slope(self, i: int) -> float:
        slope = 1.0 / self._lengths[i]
        if self._codes[i] == 2:  # noqa: PLR2004
            c = self._params[i]
            slope *= min(1 + c, 1 / (1 + c))
        return slope

    def _max_distortion(self, i: int) -> float:
        if self._codes[i] != 2:  # noqa: PLR2004
            return 0.0
        c = self._params[i]
        return 2 * abs(c) * max(1.0, 1 + c) / (1 + c)

    def branch(self, index: int) -> Branch:
        """Return branch ``index`` (1-based, left to right)."""
        i = index - 1
        left, right = float(self.endpoints[i]), float(self.endpoints[i + 1])
        width = right - left
        code, c = int(self._codes[i]), float(self._params[i])

        def local(x: Any) -> Any:
            return (x - left) / width

        if code == 0:
            shape = (lambda u: u, lambda u: 1 + 0 * u, lambda u: 0 * u, lambda v: v, lambda v: 1 + 0 * v)
        elif code == 1:
            shape = (lambda u: 1 - u, lambda u: -1 + 0 * u, lambda u: 0 * u, lambda v: 1 - v, lambda v: -1 + 0 * v)
        else:
            shape = (
                lambda u: (1 + c) * u / (1 + c * u),
                lambda u: (1 + c) / (1 + c * u) ** 2,
                lambda u: -2 * c * (1 + c) / (1 + c * u) ** 3,
                lambda v: v / (1 + c - c * v),
                lambda v: (1 + c) / (1 + c - c * v) ** 2,
            )
        h, dh, ddh, h_inv, dh_inv = shape
        return Branch(
            index=index,
            left=left,
            right=right,
            forward=lambda x: h(local(x)),
            derivative=lambda x: dh(local(x)) / width,
            second_derivative=lambda x: ddh(local(x)) / (width * width),
            inverse=lambda y: left + width * h_inv(y),
            inverse_derivative=lambda y: width * dh_inv(y),
            closed_left=True,
        )

    def branch_index(self, x: Point) -> int:
        """1-based index of the cell [l, r) containing x."""
        return int(np.searchsorted(self.endpoints, float(x), side="right"))

    def _local(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        cells = np.clip(np.searchsorted(self.endpoints, xs, side="right") - 1, 0, self.branch_count - 1)
        u = (xs - self.endpoints[cells]) / self._lengths[cells]
        return cells, u

    def apply_array(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized branch evaluation."""
        cells, u = self._local(xs)
        codes, c = self._codes[cells], self._params[cells]
        images = np.where(codes == 0, u, np.where(codes == 1, 1 - u, (1 + c) * u / (1 + c * u)))
        valid = (xs > 0) & (xs < 1) & (images > 0) & (images < 1)
        return images, valid

    def log_abs_derivative(self, x: Any) -> Any:
        """log|T'(x)|."""
        xs = np.asarray(x, dtype=np.float64 if not isinstance(x, np.ndarray) else x.dtype)
        cells, u = self._local(xs)
        codes, c = self._codes[cells], self._params[cells]
        slope = np.where(codes == 2, (1 + c) / (1 + c * u) ** 2, 1.0) / self._lengths[cells]  # noqa: PLR2004
        result = np.log(slope)
        return result if isinstance(x, np.ndarray) else float(result)

    @property
    def _lebesgue_invariant(self) -> bool:
        return bool(np.all(self._codes != 2))  # noqa: PLR2004

    def invariant_density(self, x: Any) -> Any | None:
        """Lebesgue density when every branch is affine."""
        return 1 + 0 * x if self._lebesgue_invariant else None

    @property
    def lyapunov_exponent(self) -> float | None:
        """Sum over cells of |cell| log(1/|cell|) when Lebesgue is invariant."""
        if not self._lebesgue_invariant:
            return None
        return float(-np.sum(self._lengths * np.log(self._lengths)))

    def invariant_mass(self, a: float, b: float) -> float | None:
        """Length of [a, b] when Lebesgue is invariant."""
        return b - a if self._lebesgue_invariant else None


def build_map(map_id: str, definitions: Sequence[FiniteMapDefinition] = ()) -> IntervalMap:
    """Build a map from its registry id.

    Args:
        map_id: ``gauss``, ``binary``, ``finite:<e0>,...,<ek>`` or a name in ``definitions``.
        definitions: Finite maps declared in the config file.

    Returns:
        The map.

    Raises:
        ConfigError: If the id is unknown or malformed.

    """
    if map_id == "gauss":
        return GaussMap()
    if map_id == "binary":
        return BinaryMap()
    if map_id.startswith("finite:"):
        try:
            endpoints = tuple(float(part) for part in map_id.removeprefix("finite:").split(","))
        except ValueError:
            msg = f"malformed finite map id '{map_id}'"
            raise ConfigError(msg) from None
        return FiniteMap(map_id, endpoints)
    for definition in definitions:
        if definition.name == map_id:
            return FiniteMap(definition.name, definition.endpoints, definition.kinds)
    msg = f"unknown map '{map_id}'"
    raise ConfigError(msg)


class Observable(msgspec.Struct, frozen=True):
    """A real function on (0, 1) together with its reference mean.

    ``exact`` evaluates the observable at a rational point without rounding it
    to a float first; observables without one are evaluated at ``float(x)``.
    """

    name: str
    eval: Callable[[Any], Any]
    mean: float | None = None
    pointwise: bool = True
    exact: Callable[[Fraction], float] | None = None


def _lower_half(x: Any) -> Any:
    if isinstance(x, np.ndarray):
        return np.where(x < 0.5, 1.0, 0.0)  # noqa: PLR2004
    return float(x < 0.5)  # noqa: PLR2004


def _not_pointwise(name: str) -> Callable[[Any], Any]:
    def evaluate(x: Any) -> Any:  # noqa: ARG001
        msg = f"observable '{name}' is a statistic of the whole orbit, not a function of a point"
        raise PreconditionError(msg)

    return evaluate


def build_observable(observable_id: str, interval_map: IntervalMap) -> Observable:
    """Build an observable from its registry id.

    Args:
        observable_id: One of ``zero``, ``constant:<c>``, ``log-derivative``,
            ``half-indicator``, ``identity`` or ``log-denominator``.
        interval_map: The map the observable is evaluated along.

    Returns:
        The observable; ``mean`` is None when the invariant density is unknown.

    Raises:
        ConfigError: If the id is unknown or does not apply to the map.

    """
    if observable_id == "zero":
        return Observable(name="zero", eval=lambda x: 0.0 * x, mean=0.0)
    if observable_id.startswith("constant:"):
        try:
            value = float(observable_id.removeprefix("constant:"))
        except ValueError:
            msg = f"malformed constant observable '{observable_id}'"
            raise ConfigError(msg) from None
        return Observable(name=observable_id, eval=lambda x: 0.0 * x + value, mean=value)
    if observable_id == "log-derivative":
        return Observable(
            name="log-derivative",
            eval=interval_map.log_abs_derivative,
            mean=interval_map.lyapunov_exponent,
            exact=lambda x: float(interval_map.log_abs_derivative(x)),
        )
    if observable_id == "half-indicator":
        return Observable(
            name="half-indicator",
            eval=_lower_half,
            mean=interval_map.invariant_mass(0.0, 0.5),
        )
    if observable_id == "identity":
        mean = None
        if isinstance(interval_map, GaussMap):
            mean = (1.0 - LN2) / LN2
        elif interval_map.invariant_density(0.5) is not None:
            mean = 0.5
        return Observable(name="identity", eval=lambda x: x if isinstance(x, np.ndarray) else float(x), mean=mean)
    if observable_id == "log-denominator":
        if not isinstance(interval_map, GaussMap):
            msg = "the log-denominator statistic is only defined for the gauss map"
            raise ConfigError(msg)
        return Observable(
            name="log-denominator",
            eval=_not_pointwise("log-denominator"),
            mean=LEVY_CONSTANT,
            pointwise=False,
        )
    msg = f"unknown observable '{observable_id}'"
    raise ConfigError(msg)


def apply(interval_map: IntervalMap, x: Point) -> Point:
    """Apply the map to a point; see :meth:`IntervalMap.apply`."""
    return interval_map.apply(x)


def log_derivative(interval_map: IntervalMap, x: Point) -> float:
    """Return log|T'(x)|.

    Branch endpoints are accepted and give the one-sided limit.

    Raises:
        OrbitTerminatedError: If x lies outside (0, 1).

    """
    if not 0 < x < 1:
        msg = f"{interval_map.id}: point {x} lies outside (0, 1)"
        raise OrbitTerminatedError(msg)
    return float(interval_map.log_abs_derivative(x))


def orbit(interval_map: IntervalMap, x: Point, n: int) -> list[Point]:
    """Return the first n orbit points x, Tx, ..., T^(n-1)x.

    Raises:
        DomainError: If n is negative.
        PartialOrbitError: If the orbit terminates first.

    """
    if n < 0:
        msg = f"orbit length must be non-negative, got {n}"
        raise DomainError(msg)
    points: list[Point] = []
    current = x
    for k in range(n):
        if not 0 < current < 1:
            msg = f"{interval_map.id}: the orbit of {x} leaves (0, 1) after {k} points"
            raise PartialOrbitError(msg, length=k)
        points.append(current)
        if k < n - 1:
            try:
                current = interval_map.apply(current)
            except OrbitTerminatedError as exc:
                msg = f"{interval_map.id}: the orbit of {x} terminates after {k + 1} points"
                raise PartialOrbitError(msg, length=k + 1) from exc
    return points


def birkhoff_sum(interval_map: IntervalMap, f: Observable, x: Point, n: int) -> float:
    """Return f(x) + f(Tx) + ... + f(T^(n-1)x).

    Args:
        interval_map: The map.
        f: A pointwise observable.
        x: Starting point; rationals are iterated exactly.
        n: Number of terms.

    Returns:
        The Birkhoff sum, 0 for n = 0.

    Raises:
        PreconditionError: If f is not a pointwise observable.
        PartialOrbitError: If the orbit terminates before n points.

    """
    if not f.pointwise:
        msg = f"observable '{f.name}' cannot be summed pointwise along an orbit"
        raise PreconditionError(msg)
    terms = []
    for point in orbit(interval_map, x, n):
        if isinstance(point, Fraction) and f.exact is not None:
            terms.append(f.exact(point))
        else:
            terms.append(float(f.eval(float(point))))
    return math.fsum(terms)


def orbit_log_derivative(interval_map: IntervalMap, x: Point, n: int) -> float:
    """Return log|(T^n)'(x)| from the product of the derivatives along the orbit.

    Rational points multiply the derivatives exactly before taking one log.
    """
    points = orbit(interval_map, x, n)
    if points and all(isinstance(point, Fraction) for point in points):
        product = Fraction(1)
        for point in points:
            product *= Fraction(interval_map.locate(point).derivative(point))
        return log_positive(abs(product))
    return math.fsum(float(interval_map.log_abs_derivative(float(point))) for point in points)


def verify_conditions(interval_map: IntervalMap, probe_count: int, power: int | None = None) -> ConditionReport:
    """Probe the partition, expansion, Renyi and Markov conditions.

    Args:
        interval_map: The map to check.
        probe_count: Probe points per branch.
        power: Iterate whose derivative must exceed the expansion constant;
            the map's declared power by default.

    Returns:
        The report; failures are entries, never exceptions.

    Raises:
        DomainError: If probe_count is not positive.

    """
    if probe_count < 1:
        msg = f"probe_count must be positive, got {probe_count}"
        raise DomainError(msg)
    p = power or interval_map.expansion_power
    branches = interval_map.branches()

    ordered = sorted(branches, key=lambda branch: branch.left)
    overlap = any(b.left < a.right - CHECK_TOLERANCE for a, b in zip(ordered, ordered[1:], strict=False))
    covered = math.fsum(branch.length for branch in branches) + interval_map.tail_length(len(branches))
    defect = abs(covered - 1.0)

    min_expansion = math.inf
    max_distortion = 0.0
    markov = True
    for branch in branches:
        points = branch.probes(probe_count)
        first = np.abs(branch.derivative(points))
        max_distortion = max(max_distortion, float(np.max(np.abs(branch.second_derivative(points)) / first**2)))
        product = first.copy()
        current, valid = interval_map.apply_array(points)
        for _ in range(p - 1):
            product *= np.exp(np.where(valid, interval_map.log_abs_derivative(np.where(valid, current, 0.5)), 0.0))
            current, still = interval_map.apply_array(np.where(valid, current, 0.5))
            valid &= still
        if np.any(valid):
            min_expansion = min(min_expansion, float(np.min(product[valid])))
        image = sorted((float(branch.forward(branch.left)), float(branch.forward(branch.right))))
        markov &= image[0] <= CHECK_TOLERANCE and image[1] >= 1.0 - CHECK_TOLERANCE

    lam = interval_map.expansion_constant
    return ConditionReport(
        map_id=interval_map.id,
        expansion_power=p,
        expansion_constant=lam,
        min_expansion=min_expansion,
        renyi_bound=interval_map.renyi_bound,
        max_distortion=max_distortion,
        markov=markov,
        partition_defect=defect,
        partition_ok=not overlap and defect <= CHECK_TOLERANCE,
        expansion_ok=lam > 1 and min_expansion >= lam * (1.0 - CHECK_TOLERANCE),
        distortion_ok=max_distortion <= interval_map.renyi_bound * (1.0 + CHECK_TOLERANCE) + CHECK_TOLERANCE,
    )
