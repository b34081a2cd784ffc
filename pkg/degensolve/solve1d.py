"""One-dimensional degenerate boundary value problems"""

from dataclasses import dataclass, field, replace
import logging
from typing import List, Optional, Tuple, Union

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from degensolve.basics import Closure, ProblemKind, SolverError, ValidationError
from degensolve.funcdsl import Expression
from degensolve.mesh import DiscreteField, Grid1D, build_grid, build_transform, default_depth, \
    reg_derivative
from degensolve.opspace import OperatorSpec, apply, sigma

# Relative residual accepted from the direct solver
RESIDUAL_TOLERANCE = 1e-10

# Smallest node count for the solvers
MIN_SOLVE_NODES = 8

Source = Union[Expression, DiscreteField, np.ndarray, None]


@dataclass(frozen=True)
class BoundarySpec:
    """Boundary functional sum_i delta_i u^[i](a) = data at the nondegenerate end"""
    m: int = 0
    delta: Tuple[complex, ...] = (1.0,)
    data: Union[np.ndarray, Expression, None] = None    # component vector or law, zero when absent
    t_scaling: bool = False

    def __post_init__(self):
        if self.m not in (0, 1):
            raise ValidationError(f"boundary order m={self.m} not 0 or 1", "m")
        if len(self.delta) != self.m + 1:
            raise ValidationError(f"boundary needs {self.m + 1} coefficients, got {len(self.delta)}", "delta")
        if self.delta[self.m] == 0:
            raise ValidationError(f"leading boundary coefficient delta_{self.m} is zero", "delta")

    def coefficients(self, t: float = 1.0, gamma: float = 2.0, p: float = 4.0) -> Tuple[complex, complex]:
        """Coefficients (c0, c1) of u and u^[1], scaled by t^sigma_i when requested"""
        c = [complex(d) for d in self.delta] + [0j] * (1 - self.m)
        if self.t_scaling:
            c = [c[i] * t ** sigma(i, gamma, p) for i in range(2)]
        return c[0], c[1]

    def data_vector(self, dim_e: int, bindings=None) -> np.ndarray:
        """Data as component vector"""
        return self.edge_values(dim_e, 1, bindings or {})[0]

    def edge_values(self, dim_e: int, count: int, bindings) -> np.ndarray:
        """Data along an edge, shape (count, dim_e), laws bound to edge coordinates and m"""
        if self.data is None:
            return np.zeros((count, dim_e))
        if isinstance(self.data, Expression):
            b = {"m": np.arange(1, dim_e + 1, dtype=float)[np.newaxis, :]}
            b.update({k: (v[:, np.newaxis] if np.ndim(v) == 1 else v) for k, v in bindings.items()})
            return self.data.evaluate_on((count, dim_e), b)
        d = np.atleast_1d(np.asarray(self.data))
        if d.shape != (dim_e,):
            raise ValidationError(f"boundary data dimension {d.shape} does not match {dim_e}", "data")
        return np.broadcast_to(d, (count, dim_e)).copy()


class AxisStencil:
    """Finite differences on the interior nodes of a transformed axis, end conditions eliminated"""
    def __init__(self, grid: Grid1D, closure: Closure, c0: complex, c1: complex, derivative_scale: float = 1.0):
        if grid.n < 4:
            raise ValidationError(f"axis needs >= 4 nodes, got {grid.n}")
        self.grid = grid
        self.closure = closure
        self.size = grid.n - 2
        h = grid.h
        # u^[1](a) = derivative_scale * u_y(0)
        c1 = c1 * derivative_scale
        den = c0 + 3.0 * c1 / (2.0 * h)
        if abs(den) < 1e-300:
            raise SolverError("boundary functional is singular on this grid")
        # u_N = e1 u_(N-1) + e2 u_(N-2) + e0 g
        e = [complex(v) for v in (1.0 / den, 2.0 * c1 / (h * den), -c1 / (2.0 * h * den))]
        self.complex = any(v.imag != 0 for v in e)
        dtype = complex if self.complex else float
        e0, e1, e2 = e if self.complex else [v.real for v in e]
        self.e0, self.e1, self.e2 = e0, e1, e2

        n = self.size
        one = np.ones(n)
        second = scipy.sparse.lil_matrix(scipy.sparse.diags([-one[1:], 2 * one, -one[1:]], [-1, 0, 1],
                                                            shape=(n, n), dtype=dtype))
        first = scipy.sparse.lil_matrix(scipy.sparse.diags([-one[1:], one[1:]], [-1, 1], shape=(n, n),
                                                           dtype=dtype))
        if closure == Closure.NEUMANN:
            # u_0 = (4 u_1 - u_2)/3
            second[0, 0] = 2.0 / 3.0
            second[0, 1] = -2.0 / 3.0
            first[0, 0] = -4.0 / 3.0
            first[0, 1] = 4.0 / 3.0
        second[n - 1, n - 1] = 2.0 - e1
        second[n - 1, n - 2] = -1.0 - e2
        first[n - 1, n - 1] = e1
        first[n - 1, n - 2] = e2 - 1.0
        self.second = (second / h ** 2).tocsr()    # -D2
        self.first = (first / (2.0 * h)).tocsr()   # D1

    def lift_second(self) -> float:
        """Coefficient of g moved to the right-hand side of the last -D2 row"""
        return self.e0 / self.grid.h ** 2

    def lift_first(self) -> float:
        """Coefficient of g in the last D1 row"""
        return self.e0 / (2.0 * self.grid.h)

    def reconstruct(self, interior: np.ndarray, g: Union[np.ndarray, complex, float], axis: int = 0) -> np.ndarray:
        """Add end nodes to interior values along axis"""
        w = np.moveaxis(np.asarray(interior), axis, 0)
        g = np.asarray(g)
        last = self.e1 * w[-1] + self.e2 * w[-2] + self.e0 * g
        if self.closure == Closure.NEUMANN:
            first = (4.0 * w[0] - w[1]) / 3.0
        else:
            first = np.zeros_like(w[0])
        dtype = np.result_type(w, last, first)
        r = np.concatenate((first[np.newaxis], w, last[np.newaxis])).astype(dtype)
        return np.moveaxis(r, 0, axis)


def solve_sparse(matrix: scipy.sparse.spmatrix, rhs: np.ndarray,
                 tolerance: float = RESIDUAL_TOLERANCE) -> Tuple[np.ndarray, float]:
    """Direct sparse solve, complex systems through the real block form, returns solution and residual"""
    rhs = np.asarray(rhs)
    is_complex = np.iscomplexobj(matrix) or np.iscomplexobj(rhs)
    if is_complex:
        m = matrix.tocsr()
        block = scipy.sparse.bmat([[m.real, -m.imag], [m.imag, m.real]]).tocsc()
        b = np.concatenate((rhs.real, rhs.imag))
    else:
        block = matrix.tocsc()
        b = rhs
    try:
        lu = scipy.sparse.linalg.splu(block)
    except RuntimeError as e:
        raise SolverError(f"singular system: {e}") from e
    x = lu.solve(b)
    if is_complex:
        n = matrix.shape[0]
        x = x[:n] + 1j * x[n:]
    if not np.all(np.isfinite(x)):
        raise SolverError("singular system: non-finite solution")
    residual = relative_residual(matrix, x, rhs)
    if residual > tolerance:
        raise SolverError(f"residual {residual:.3g} above tolerance {tolerance:.3g}")
    return x, residual


def condition_estimate(matrix: scipy.sparse.spmatrix) -> float:
    """1-norm condition number estimate"""
    m = matrix.tocsr()
    if np.iscomplexobj(m):
        m = scipy.sparse.bmat([[m.real, -m.imag], [m.imag, m.real]]).tocsr()
    try:
        lu = scipy.sparse.linalg.splu(m.tocsc())
    except RuntimeError:
        return float("inf")
    inverse = scipy.sparse.linalg.LinearOperator(
        m.shape, matvec=lu.solve, rmatvec=lambda v: lu.solve(v, trans="T"), dtype=float)
    return float(scipy.sparse.linalg.onenormest(m) * scipy.sparse.linalg.onenormest(inverse))


def relative_residual(matrix: scipy.sparse.spmatrix, x: np.ndarray, rhs: np.ndarray) -> float:
    """||M x - b|| / ||b||, zero for zero system"""
    r = np.linalg.norm(matrix @ x - rhs)
    nb = np.linalg.norm(rhs)
    if nb == 0:
        return float(r)
    return float(r / nb)


def drift_coefficient(x: np.ndarray, alpha: float) -> np.ndarray:
    """Coefficient alpha x^(alpha - 1) of u^[1] in the plain form"""
    return alpha * np.power(x, alpha - 1.0)


def make_grid(alpha: float, a: float, n: int, operator: OperatorSpec, lam: complex,
              depth: Optional[float] = None) -> Grid1D:
    """Grid transformed with gamma = alpha, default depth from the decay rule"""
    if depth is None:
        depth = default_depth(operator.smallest(), complex(lam).real)
    return build_grid(build_transform(alpha, a), n, depth)


def source_values(rhs: Source, x: np.ndarray, z: np.ndarray, dim_e: int, **extra) -> np.ndarray:
    """Right-hand side sampled at nodes, shape (nodes, dim_e)"""
    if rhs is None:
        return np.zeros((len(x), dim_e))
    if isinstance(rhs, DiscreteField):
        v = rhs.values
    elif isinstance(rhs, Expression):
        m = np.arange(1, dim_e + 1, dtype=float)[np.newaxis, :]
        bindings = {"x": x[:, np.newaxis], "X": z[:, np.newaxis], "m": m}
        bindings.update(extra)
        v = rhs.evaluate_on((len(x), dim_e), bindings)
    else:
        v = np.asarray(rhs)
        if v.ndim == 1:
            v = v[:, np.newaxis]
    if v.shape != (len(x), dim_e):
        raise ValidationError(f"right-hand side shape {v.shape} does not match {(len(x), dim_e)}", "rhs")
    return v


@dataclass
class Problem1D:
    """Degenerate problem on (0, a) with operator coefficient A"""
    kind: ProblemKind
    alpha: float
    a: float
    operator: OperatorSpec
    grid: Grid1D
    lam: complex = 1e3
    t: float = 1.0
    p: float = 4.0
    bc: BoundarySpec = field(default_factory=BoundarySpec)
    rhs: Source = None
    closure: Closure = Closure.DIRICHLET
    q: float = 2.0

    @classmethod
    def build(cls, kind: ProblemKind, alpha: float, operator: OperatorSpec, n: int = 257, a: float = 1.0,
              lam: complex = 1e3, depth: Optional[float] = None, **kwargs) -> 'Problem1D':
        """Build problem with its grid"""
        grid = make_grid(alpha, a, n, operator, lam, depth)
        return cls(kind, alpha, a, operator, grid, lam=lam, **kwargs)

    def validate(self):
        """Check problem invariants"""
        if self.grid.n < MIN_SOLVE_NODES:
            raise ValidationError(f"node count {self.grid.n} below {MIN_SOLVE_NODES}", "mesh.n")
        if not self.alpha > 1.0 + 1.0 / self.p:
            raise ValidationError(f"exponent {self.alpha} not above 1 + 1/p", "alpha")
        if abs(self.grid.gamma - self.alpha) > 1e-14 or abs(self.grid.a - self.a) > 1e-14:
            raise ValidationError("grid transform does not match the problem exponent and endpoint", "mesh")
        if not 0.0 < self.t <= 1.0:
            raise ValidationError(f"parameter t={self.t} outside (0, 1]", "t")
        if self.kind != ProblemKind.PARAMETRIC and self.t != 1.0:
            raise ValidationError("parameter t is only for the parametric problem", "t")
        if not 1.0 < self.q:
            raise ValidationError(f"component index q={self.q} not above 1", "q")

    def with_rhs(self, rhs: Source, data: Optional[np.ndarray] = None) -> 'Problem1D':
        """Copy with other data"""
        return replace(self, rhs=rhs, bc=replace(self.bc, data=data) if data is not None else self.bc)

    def source(self) -> np.ndarray:
        """Right-hand side at all nodes"""
        g = self.grid
        return source_values(self.rhs, g.x_nodes, g.y_nodes, self.operator.dim_e, t=self.t)

    def boundary_data(self) -> np.ndarray:
        """Boundary data vector at x = a"""
        return self.bc.data_vector(self.operator.dim_e, {"x": self.a, "X": 0.0, "t": self.t})

    def boundary_coefficients(self) -> Tuple[complex, complex]:
        """Boundary functional coefficients with scaling"""
        return self.bc.coefficients(self.t, self.alpha, self.p)


@dataclass
class LinearSystem:
    """Assembled system over interior nodes x components"""
    matrix: scipy.sparse.csr_matrix
    rhs: np.ndarray
    stencil: AxisStencil
    dim_e: int


def operator_block(operator: OperatorSpec, lam: complex) -> scipy.sparse.csr_matrix:
    """A + lambda I"""
    lam = complex(lam)
    m = operator.to_sparse()
    if lam.imag != 0:
        m = m.astype(complex)
        return (m + lam * scipy.sparse.identity(operator.dim_e, dtype=complex)).tocsr()
    return (m + lam.real * scipy.sparse.identity(operator.dim_e)).tocsr()


def assemble_1d(p: Problem1D) -> LinearSystem:
    """Assemble the problem in the transformed coordinate"""
    p.validate()
    g = p.grid
    dim_e = p.operator.dim_e
    c0, c1 = p.boundary_coefficients()
    stencil = AxisStencil(g, p.closure, c0, c1)
    ident_e = scipy.sparse.identity(dim_e)
    t = p.t if p.kind == ProblemKind.PARAMETRIC else 1.0
    m = t * scipy.sparse.kron(stencil.second, ident_e)
    f = p.source()[1:-1].astype(complex if stencil.complex or complex(p.lam).imag != 0 else float)
    data = p.boundary_data()
    f[-1] = f[-1] + t * stencil.lift_second() * data
    if p.kind == ProblemKind.PLAIN:
        drift = drift_coefficient(g.x_nodes[1:-1], p.alpha)
        m = m + scipy.sparse.kron(scipy.sparse.diags(drift) @ stencil.first, ident_e)
        f[-1] = f[-1] - drift[-1] * stencil.lift_first() * data
    m = m + scipy.sparse.kron(scipy.sparse.identity(stencil.size), operator_block(p.operator, p.lam))
    if np.iscomplexobj(m) and not np.iscomplexobj(f):
        f = f.astype(complex)
    return LinearSystem(m.tocsr(), f.ravel(), stencil, dim_e)


@dataclass
class Solution1D:
    """Solution with its regularized derivatives"""
    u: DiscreteField
    u1: DiscreteField
    u2: DiscreteField
    au: DiscreteField
    residual_norm: float
    flags: List[str] = field(default_factory=list)


def solve_1d(p: Problem1D) -> Solution1D:
    """Assemble and solve directly"""
    logger = logging.getLogger("solve1d")
    system = assemble_1d(p)
    x, residual = solve_sparse(system.matrix, system.rhs)
    interior = x.reshape((system.stencil.size, system.dim_e))
    full = system.stencil.reconstruct(interior, p.boundary_data())
    flags = []
    if p.bc.t_scaling and sigma(0, p.alpha, p.p) < 0:
        flags.append("negative_sigma_0")
    logger.debug("solved %s n=%d lambda=%s t=%s residual=%.3g", p.kind.value, p.grid.n, p.lam, p.t, residual)
    return make_solution(full, p.grid, p.alpha, p.operator, residual, flags)


def make_solution(values: np.ndarray, grid: Grid1D, alpha: float, operator: OperatorSpec, residual: float,
                  flags: Optional[List[str]] = None) -> Solution1D:
    """Solution record with derivatives from nodal values"""
    u = DiscreteField(values, grid)
    return Solution1D(u, reg_derivative(u, grid, alpha, 1), reg_derivative(u, grid, alpha, 2),
                      DiscreteField(apply(operator, values), grid), residual, flags or [])


def solve_1d_physical(p: Problem1D) -> Solution1D:
    """Plain form -x^2a u'' + (A + lambda)u = f by differences on the graded physical nodes"""
    p.validate()
    if p.kind != ProblemKind.PLAIN:
        raise ValidationError("physical coordinate solve is for the plain form only", "kind")
    if p.closure == Closure.NEUMANN:
        raise ValidationError("physical coordinate solve supports the dirichlet closure only", "closure")
    g = p.grid
    x = g.x_nodes
    n = g.n - 2
    dim_e = p.operator.dim_e
    hm = x[1:-1] - x[:-2]
    hp = x[2:] - x[1:-1]
    coef = np.power(x[1:-1], 2 * p.alpha)
    # -x^2a u'' with the three point nonuniform stencil
    lower = -2.0 * coef / (hm * (hm + hp))
    upper = -2.0 * coef / (hp * (hm + hp))
    diag = 2.0 * coef / (hm * hp)
    # one-sided u'(a) from the last three nodes
    h1 = x[-1] - x[-2]
    h2 = x[-1] - x[-3]
    w_n = (h1 + h2) / (h1 * h2)
    w_1 = -h2 / (h1 * (h2 - h1))
    w_2 = h1 / (h2 * (h2 - h1))
    c0, c1 = p.boundary_coefficients()
    c1 = c1 * p.a ** p.alpha
    den = c0 + c1 * w_n
    if abs(den) < 1e-300:
        raise SolverError("boundary functional is singular on this grid")
    e1, e2, e0 = -c1 * w_1 / den, -c1 * w_2 / den, 1.0 / den
    cplx = any(complex(v).imag != 0 for v in (e0, e1, e2, p.lam))
    dtype = complex if cplx else float
    if not cplx:
        e0, e1, e2 = (complex(v).real for v in (e0, e1, e2))
    diag = diag.astype(dtype)
    lower = lower.astype(dtype)
    diag[-1] += upper[-1] * e1
    lower[-1] += upper[-1] * e2
    t = scipy.sparse.diags([lower[1:], diag, upper[:-1]], [-1, 0, 1], shape=(n, n), dtype=dtype)
    m = scipy.sparse.kron(t, scipy.sparse.identity(dim_e)) + \
        scipy.sparse.kron(scipy.sparse.identity(n), operator_block(p.operator, p.lam))
    data = p.boundary_data()
    f = p.source()[1:-1].astype(dtype)
    f[-1] = f[-1] - upper[-1] * e0 * data
    sol, residual = solve_sparse(m.tocsr(), f.ravel())
    interior = sol.reshape((n, dim_e))
    last = e1 * interior[-1] + e2 * interior[-2] + e0 * data
    full = np.concatenate((np.zeros((1, dim_e), dtype=interior.dtype), interior, last[np.newaxis]))
    return make_solution(full, g, p.alpha, p.operator, residual)
