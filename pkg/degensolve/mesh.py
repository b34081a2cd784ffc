"""Transformed coordinates, graded grids and discrete weighted norms"""

from dataclasses import dataclass, field
import math
from typing import Optional, Tuple, Union

import numpy as np

from degensolve.basics import ValidationError

# Lower end of the exponent window is 1 + 1/p, upper (p - 1)/2, window nonempty iff p > (3 + sqrt(17))/2
MIN_WINDOW_P = (3.0 + math.sqrt(17.0)) / 2.0

# Decay target for the default truncation depth
DEPTH_DECAY = 1e-10

# Floor of the default truncation depth
MIN_DEPTH = 12.0


@dataclass(frozen=True)
class Exponents:
    """Degeneracy and integrability exponents"""
    alpha: float
    beta: float
    p: float
    q: float = 2.0

    def window(self) -> Tuple[float, float]:
        """Open interval allowed for degeneracy exponents"""
        return 1.0 + 1.0 / self.p, (self.p - 1.0) / 2.0

    def check_indices(self, key_path: str = ""):
        """Check p and q in (1, inf)"""
        for n, v in (("p", self.p), ("q", self.q)):
            if not 1.0 < v < math.inf:
                raise ValidationError(f"index {n}={v} outside (1, inf)", _join(key_path, n))

    def check_window(self, key_path: str = "", names: Tuple[str, ...] = ("alpha", "beta")):
        """Check the coercivity window for the named exponents"""
        self.check_indices(key_path)
        low, high = self.window()
        if self.p <= MIN_WINDOW_P:
            raise ValidationError(f"exponent outside coercivity window: p={self.p} gives empty window "
                                  f"({low:.6g}, {high:.6g})", _join(key_path, "p"))
        for n in names:
            v = getattr(self, n)
            if not low < v < high:
                raise ValidationError(f"exponent outside coercivity window: {n}={v} not in "
                                      f"({low:.6g}, {high:.6g})", _join(key_path, n))


def _join(key_path: str, name: str) -> str:
    return f"{key_path}.{name}" if key_path else name


@dataclass(frozen=True)
class TransformMap:
    """Coordinate change y = int_a^x z^-gamma dz, maps (0, a] onto (-inf, 0]"""
    gamma: float
    a: float

    def forward(self, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """Transformed coordinate of x"""
        g1 = 1.0 - self.gamma
        return (np.power(x, g1) - self.a ** g1) / g1

    def inverse(self, y: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """Physical coordinate of y"""
        g1 = 1.0 - self.gamma
        return np.power(self.a ** g1 + g1 * np.asarray(y, dtype=float), 1.0 / g1)

    def jacobian(self, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """dx/dy at x"""
        return np.power(x, self.gamma)

    def scaled(self, a: float) -> 'TransformMap':
        """Same exponent, other basepoint"""
        return TransformMap(self.gamma, a)


def build_transform(gamma: float, a: float) -> TransformMap:
    """Build the transform, singular exponents only"""
    if not gamma > 1.0:
        raise ValidationError(f"transform exponent {gamma} must be > 1")
    if not a > 0.0:
        raise ValidationError(f"basepoint {a} must be > 0")
    return TransformMap(float(gamma), float(a))


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Uniform grid in the transformed coordinate, graded in x"""
    transform: TransformMap
    depth: float
    y_nodes: np.ndarray
    x_nodes: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        """Node count"""
        return len(self.y_nodes)

    @property
    def h(self) -> float:
        """Transformed mesh width"""
        return self.depth / (self.n - 1)

    @property
    def a(self) -> float:
        """Right endpoint"""
        return self.transform.a

    @property
    def gamma(self) -> float:
        """Transform exponent"""
        return self.transform.gamma

    def measure(self) -> float:
        """Length of the covered x-interval"""
        return float(self.a - self.x_nodes[0])

    def __repr__(self):
        return f"Grid1D(n={self.n}, depth={self.depth:.6g}, gamma={self.gamma}, a={self.a})"


def build_grid(t: TransformMap, n: int, depth: float) -> Grid1D:
    """Build grid of n nodes on y in [-depth, 0]"""
    if n < 2:
        raise ValidationError(f"node count {n} must be >= 2")
    if not depth > 0.0:
        raise ValidationError(f"depth {depth} must be > 0")
    y = np.linspace(-depth, 0.0, n)
    y[-1] = 0.0
    x = t.inverse(y)
    x[-1] = t.a
    # dual cell edges, the node weight is the exact x-measure of its cell
    h = depth / (n - 1)
    edges = np.concatenate(([-depth], y[:-1] + h / 2, [0.0]))
    xe = t.inverse(edges)
    xe[0] = x[0]
    xe[-1] = t.a
    w = np.diff(xe)
    assert np.all(np.diff(x) > 0) and np.all(x > 0), "grid nodes not increasing"
    assert np.all(w > 0), "non-positive quadrature weight"
    return Grid1D(t, float(depth), y, x, w)


@dataclass(frozen=True, eq=False)
class Grid2D:
    """Tensor grid on (0, a) x (0, b)"""
    gx: Grid1D
    gy: Grid1D

    @property
    def shape(self) -> Tuple[int, int]:
        """Node counts per direction"""
        return self.gx.n, self.gy.n

    @property
    def weights(self) -> np.ndarray:
        """Tensor quadrature weights"""
        return np.outer(self.gx.weights, self.gy.weights)

    def axis(self, axis: int) -> Grid1D:
        """Grid of the given direction"""
        return self.gx if axis == 0 else self.gy

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        """Physical node coordinates, x and y arrays of the grid shape"""
        return np.meshgrid(self.gx.x_nodes, self.gy.x_nodes, indexing="ij")

    def __repr__(self):
        return f"Grid2D({self.gx!r}, {self.gy!r})"


Grid = Union[Grid1D, Grid2D]


def default_depth(d_min: float, lambda_real: float = 0.0) -> float:
    """Truncation depth so that decaying modes fall below DEPTH_DECAY"""
    rate = math.sqrt(max(d_min + max(lambda_real, 0.0), 1e-300))
    return max(MIN_DEPTH, math.log(1.0 / DEPTH_DECAY) / rate)


@dataclass(frozen=True, eq=False)
class DiscreteField:
    """Grid samples of a component-valued function, shape (nodes..., dim_e)"""
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        shape = (self.grid.n,) if isinstance(self.grid, Grid1D) else self.grid.shape
        if self.values.ndim != len(shape) + 1 or self.values.shape[:-1] != shape:
            raise ValidationError(f"field shape {self.values.shape} does not match grid {shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValidationError("field has non-finite values")

    @property
    def dim_e(self) -> int:
        """Component count"""
        return self.values.shape[-1]

    @classmethod
    def zeros(cls, grid: Grid, dim_e: int = 1, dtype=float) -> 'DiscreteField':
        """Zero field"""
        shape = (grid.n,) if isinstance(grid, Grid1D) else grid.shape
        return DiscreteField(np.zeros(shape + (dim_e,), dtype=dtype), grid)

    @classmethod
    def of(cls, values: np.ndarray, grid: Grid) -> 'DiscreteField':
        """Field from array, scalar fields may omit the component axis"""
        v = np.asarray(values)
        shape = (grid.n,) if isinstance(grid, Grid1D) else grid.shape
        if v.shape == shape:
            v = v[..., np.newaxis]
        return DiscreteField(v, grid)

    def component(self, m: int) -> np.ndarray:
        """Values of one component"""
        return self.values[..., m]

    def __add__(self, other: 'DiscreteField') -> 'DiscreteField':
        return DiscreteField(self.values + other.values, self.grid)

    def __sub__(self, other: 'DiscreteField') -> 'DiscreteField':
        return DiscreteField(self.values - other.values, self.grid)

    def scale(self, c: Union[complex, float]) -> 'DiscreteField':
        """Multiply by a constant"""
        return DiscreteField(self.values * c, self.grid)


def first_difference(v: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Second order d/dy, central inside and one-sided at the ends"""
    return np.gradient(v, h, axis=axis, edge_order=2)


def second_difference(v: np.ndarray, h: float, axis: int = 0) -> np.ndarray:
    """Second order d2/dy2, central inside and one-sided 4-point at the ends"""
    w = np.moveaxis(v, axis, 0)
    if w.shape[0] < 4:
        raise ValidationError(f"second difference needs >= 4 nodes, got {w.shape[0]}")
    r = np.empty_like(w)
    r[1:-1] = (w[2:] - 2 * w[1:-1] + w[:-2]) / h ** 2
    r[0] = (2 * w[0] - 5 * w[1] + 4 * w[2] - w[3]) / h ** 2
    r[-1] = (2 * w[-1] - 5 * w[-2] + 4 * w[-3] - w[-4]) / h ** 2
    return np.moveaxis(r, 0, axis)


def _along(x: np.ndarray, ndim: int, axis: int) -> np.ndarray:
    """Reshape node coordinate array to broadcast along axis of a field"""
    shape = [1] * ndim
    shape[axis] = len(x)
    return x.reshape(shape)


def reg_derivative(u: DiscreteField, g: Optional[Grid1D], alpha: float, order: int,
                   axis: int = 0) -> DiscreteField:
    """Regularized derivative (x^alpha d/dx)^order along an axis"""
    if order not in (1, 2):
        raise ValidationError(f"derivative order {order} not 1 or 2")
    if g is None:
        assert isinstance(u.grid, Grid2D), "axis grid needed"
        g = u.grid.axis(axis)
    grid = u.grid if isinstance(u.grid, Grid1D) else u.grid.axis(axis)
    if grid is not g and (grid.n != g.n or not np.array_equal(grid.y_nodes, g.y_nodes)):
        raise ValidationError("field does not live on the grid")
    if g.n < 4:
        raise ValidationError(f"regularized derivative needs >= 4 nodes, got {g.n}")
    v = u.values
    d1 = first_difference(v, g.h, axis)
    shift = alpha - g.gamma
    if shift == 0.0:
        r = d1 if order == 1 else second_difference(v, g.h, axis)
        return DiscreteField(r, u.grid)
    x = _along(g.x_nodes, v.ndim, axis)
    if order == 1:
        return DiscreteField(np.power(x, shift) * d1, u.grid)
    # x^s d/dy (x^s u_y) with d(x^s)/dy = s x^(alpha - 1)
    d2 = second_difference(v, g.h, axis)
    r = np.power(x, 2 * shift) * d2 + shift * np.power(x, 2 * alpha - g.gamma - 1) * d1
    return DiscreteField(r, u.grid)


@dataclass(frozen=True)
class ComponentNorm:
    """l_q norm over components, optionally weighted by d_m"""
    q: float = 2.0
    weights: Optional[Tuple[float, ...]] = field(default=None)

    def of(self, values: np.ndarray) -> np.ndarray:
        """Norms over the last axis"""
        v = np.abs(values)
        if self.weights is not None:
            v = v * np.asarray(self.weights, dtype=float)
        if v.shape[-1] == 1:
            return v[..., 0]
        if math.isinf(self.q):
            return np.max(v, axis=-1)
        return np.power(np.sum(np.power(v, self.q), axis=-1), 1.0 / self.q)


def weighted_lp_norm(u: Union[DiscreteField, np.ndarray], g: Grid, p: float,
                     enorm: Optional[ComponentNorm] = None) -> float:
    """Discrete L_p norm of component-normed values"""
    if not 1.0 < p < math.inf:
        raise ValidationError(f"index p={p} outside (1, inf)")
    values = u.values if isinstance(u, DiscreteField) else np.asarray(u)
    if not np.all(np.isfinite(values)):
        raise ValidationError("field has non-finite values")
    e = (enorm or ComponentNorm()).of(values)
    w = g.weights
    mx = float(np.max(e)) if e.size else 0.0
    if mx == 0.0:
        return 0.0
    # scaled to avoid overflow of e^p
    s = float(np.sum(w * np.power(e / mx, p)))
    return mx * s ** (1.0 / p)
