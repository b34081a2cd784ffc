"""Two-dimensional degenerate problems on rectangles and moving domains"""

from dataclasses import dataclass, field, replace
import logging
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse

from degensolve.basics import Closure, PrincipalForm, ValidationError, OperatorError
from degensolve.funcdsl import Expression
from degensolve.mesh import DiscreteField, Exponents, Grid2D, build_grid, build_transform, \
    default_depth, reg_derivative, ComponentNorm, weighted_lp_norm
from degensolve.opspace import OperatorSpec, apply, fractional_power
from degensolve.solve1d import AxisStencil, BoundarySpec, Source, condition_estimate, drift_coefficient, \
    operator_block, solve_sparse, MIN_SOLVE_NODES

# Default bound for sup ||A_i A^-(1/2 - mu)||
COEFFICIENT_BOUND = 1e6

# Largest eigenvector condition number for the reduced solve, direct solve above it
MAX_REDUCTION_CONDITION = 1e8


@dataclass(frozen=True)
class CoefficientLaw:
    """Operator valued coefficient, a fixed matrix times a scalar law or a law for the entries (m, j)"""
    matrix: Optional[np.ndarray] = None
    scale: Optional[Expression] = None
    entries: Optional[Expression] = None

    def __post_init__(self):
        if (self.entries is None) == (self.matrix is None):
            raise ValidationError("coefficient law needs either a matrix or an entry law")

    def values(self, x: np.ndarray, y: np.ndarray, dim_e: int) -> np.ndarray:
        """Coefficient matrices at points, shape (points, dim_e, dim_e)"""
        x = np.ravel(x)
        y = np.ravel(y)
        if self.entries is not None:
            m = np.arange(1, dim_e + 1, dtype=float)
            b = {"x": x[:, None, None], "y": y[:, None, None], "m": m[None, :, None], "j": m[None, None, :]}
            return self.entries.evaluate_on((len(x), dim_e, dim_e), b)
        mat = np.asarray(self.matrix, dtype=float)
        if mat.shape != (dim_e, dim_e):
            raise ValidationError(f"coefficient matrix shape {mat.shape} does not match {dim_e}")
        s = self.scale_values(x, y)
        return s[:, None, None] * mat[None, :, :]

    def scale_values(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Scalar law at points"""
        if self.scale is None:
            return np.ones(len(x))
        return self.scale.evaluate_on((len(x),), {"x": x, "y": y})

    def block(self, x: np.ndarray, y: np.ndarray, dim_e: int) -> scipy.sparse.csr_matrix:
        """Block diagonal matrix of the coefficients at points"""
        if self.entries is None:
            return scipy.sparse.kron(scipy.sparse.diags(self.scale_values(np.ravel(x), np.ravel(y))),
                                     scipy.sparse.csr_matrix(np.asarray(self.matrix, dtype=float))).tocsr()
        v = self.values(x, y, dim_e)
        k = v.shape[0]
        base = (np.arange(k) * dim_e)[:, None, None]
        rows = np.broadcast_to(base + np.arange(dim_e)[None, :, None], v.shape)
        cols = np.broadcast_to(base + np.arange(dim_e)[None, None, :], v.shape)
        nz = v != 0
        return scipy.sparse.csr_matrix((v[nz], (rows[nz], cols[nz])), shape=(k * dim_e, k * dim_e))

    def bound(self, x: np.ndarray, y: np.ndarray, negative_power: np.ndarray) -> float:
        """max over points of ||A_i(x, y) A^-(1/2 - mu)||_2"""
        dim_e = negative_power.shape[0]
        if self.entries is None:
            base = float(np.linalg.norm(np.asarray(self.matrix, dtype=float) @ negative_power, 2))
            return base * float(np.max(np.abs(self.scale_values(np.ravel(x), np.ravel(y)))))
        v = self.values(x, y, dim_e) @ negative_power
        return float(np.max(np.linalg.norm(v, 2, axis=(1, 2))))


@dataclass(frozen=True)
class MovingSpec:
    """Moving domain (0, a(s)) x (0, b(s))"""
    a_law: Expression
    b_law: Expression
    s: float

    def extents(self) -> Tuple[float, float]:
        """a(s), b(s)"""
        a = float(self.a_law.evaluate({"s": self.s}))
        b = float(self.b_law.evaluate({"s": self.s}))
        if not a > 0 or not b > 0:
            raise ValidationError(f"moving domain extents must be positive, got a(s)={a:.6g} b(s)={b:.6g}",
                                  "moving")
        return a, b


@dataclass
class Problem2D:
    """Degenerate problem on (0, a) x (0, b)"""
    exponents: Exponents
    a: float
    b: float
    operator: OperatorSpec
    grid: Grid2D
    lam: complex = 1e3
    t1: float = 1.0
    t2: float = 1.0
    bc_x: BoundarySpec = field(default_factory=BoundarySpec)
    bc_y: BoundarySpec = field(default_factory=BoundarySpec)
    rhs: Source = None
    form: PrincipalForm = PrincipalForm.PLAIN
    closure_x: Closure = Closure.DIRICHLET
    closure_y: Closure = Closure.DIRICHLET
    a1_law: Optional[CoefficientLaw] = None
    a2_law: Optional[CoefficientLaw] = None
    mu: float = 0.25
    coefficient_bound: float = COEFFICIENT_BOUND
    moving: Optional[MovingSpec] = None

    @classmethod
    def build(cls, exponents: Exponents, operator: OperatorSpec, n: int = 65, a: float = 1.0, b: float = 1.0,
              lam: complex = 1e3, depth: Optional[float] = None, ny: Optional[int] = None,
              **kwargs) -> 'Problem2D':
        """Build problem with its grid"""
        grid = make_grid_2d(exponents, a, b, n, ny or n, operator, lam, depth)
        return cls(exponents, a, b, operator, grid, lam=lam, **kwargs)

    @property
    def dim_e(self) -> int:
        """Component count"""
        return self.operator.dim_e

    def validate(self):
        """Check problem invariants"""
        e = self.exponents
        e.check_indices("exponents")
        for n, v in (("alpha", e.alpha), ("beta", e.beta)):
            if not v > 1.0 + 1.0 / e.p:
                raise ValidationError(f"exponent {v} not above 1 + 1/p", f"exponents.{n}")
        gx, gy = self.grid.gx, self.grid.gy
        if min(gx.n, gy.n) < MIN_SOLVE_NODES:
            raise ValidationError(f"node count below {MIN_SOLVE_NODES}", "mesh.n")
        if abs(gx.gamma - e.alpha) > 1e-14 or abs(gy.gamma - e.beta) > 1e-14 \
                or abs(gx.a - self.a) > 1e-14 or abs(gy.a - self.b) > 1e-14:
            raise ValidationError("grid transforms do not match the problem exponents and domain", "mesh")
        for n, v in (("t1", self.t1), ("t2", self.t2)):
            if not 0.0 < v <= 1.0:
                raise ValidationError(f"parameter {n}={v} outside (0, 1]", n)
        if not 0.0 < self.mu < 0.5:
            raise ValidationError(f"mu={self.mu} outside (0, 1/2)", "mu")

    def has_lower_order(self) -> bool:
        """A1 or A2 given"""
        return self.a1_law is not None or self.a2_law is not None

    def interior_points(self) -> Tuple[np.ndarray, np.ndarray]:
        """Physical coordinates of interior nodes, raveled in lexicographic order"""
        x, y = np.meshgrid(self.grid.gx.x_nodes[1:-1], self.grid.gy.x_nodes[1:-1], indexing="ij")
        return x.ravel(), y.ravel()

    def source(self) -> np.ndarray:
        """Right-hand side at all nodes, shape (nx, ny, dim_e)"""
        g = self.grid
        shape = g.shape + (self.dim_e,)
        if self.rhs is None:
            return np.zeros(shape)
        if isinstance(self.rhs, DiscreteField):
            v = self.rhs.values
        elif isinstance(self.rhs, Expression):
            x, y = g.mesh()
            zx, zy = np.meshgrid(g.gx.y_nodes, g.gy.y_nodes, indexing="ij")
            m = np.arange(1, self.dim_e + 1, dtype=float)
            v = self.rhs.evaluate_on(shape, {
                "x": x[..., None], "y": y[..., None], "X": zx[..., None], "Y": zy[..., None],
                "m": m[None, None, :], "t1": self.t1, "t2": self.t2})
        else:
            v = np.asarray(self.rhs)
            if v.ndim == 2:
                v = v[..., None]
        if v.shape != shape:
            raise ValidationError(f"right-hand side shape {v.shape} does not match {shape}", "rhs")
        return v

    def edge_data(self) -> Tuple[np.ndarray, np.ndarray]:
        """Data on x = a along all y nodes and on y = b along all x nodes"""
        gx, gy = self.grid.gx, self.grid.gy
        dx = self.bc_x.edge_values(self.dim_e, gy.n, {"y": gy.x_nodes, "Y": gy.y_nodes, "x": self.a, "X": 0.0})
        dy = self.bc_y.edge_values(self.dim_e, gx.n, {"x": gx.x_nodes, "X": gx.y_nodes, "y": self.b, "Y": 0.0})
        return dx, dy

    def stencils(self) -> Tuple[AxisStencil, AxisStencil]:
        """Axis stencils with eliminated end conditions"""
        e = self.exponents
        cx = self.bc_x.coefficients(self.t1, e.alpha, e.p)
        cy = self.bc_y.coefficients(self.t2, e.beta, e.p)
        return AxisStencil(self.grid.gx, self.closure_x, *cx), AxisStencil(self.grid.gy, self.closure_y, *cy)


def make_grid_2d(exponents: Exponents, a: float, b: float, nx: int, ny: int, operator: OperatorSpec,
                 lam: complex, depth: Optional[float] = None) -> Grid2D:
    """Grids transformed with alpha and beta"""
    if depth is None:
        depth = default_depth(operator.smallest(), complex(lam).real)
    return Grid2D(build_grid(build_transform(exponents.alpha, a), nx, depth),
                  build_grid(build_transform(exponents.beta, b), ny, depth))


@dataclass
class Solution2D:
    """Solution with derivative terms of the coercive estimate"""
    u: DiscreteField
    u1x: DiscreteField      # x^alpha u_x
    u1y: DiscreteField      # y^beta u_y
    u2x: DiscreteField      # u^[2] in x
    u2y: DiscreteField      # u^[2] in y
    ux2: DiscreteField      # x^2alpha u_xx
    uy2: DiscreteField      # y^2beta u_yy
    au: DiscreteField
    residual_norm: float
    lower_order_norm: float = 0.0
    coefficient_bound: Optional[float] = None
    flags: List[str] = field(default_factory=list)
    condition: Optional[float] = None


def _principal(stencil: AxisStencil, form: PrincipalForm, alpha: float) -> scipy.sparse.csr_matrix:
    """Axis matrix of the principal part on interior nodes"""
    if form == PrincipalForm.REGULARIZED:
        return stencil.second
    drift = drift_coefficient(stencil.grid.x_nodes[1:-1], alpha)
    return (stencil.second + scipy.sparse.diags(drift) @ stencil.first).tocsr()


@dataclass
class Assembly2D:
    """Assembled 2D system"""
    matrix: scipy.sparse.csr_matrix
    rhs: np.ndarray
    sx: AxisStencil
    sy: AxisStencil
    edge_x: np.ndarray
    edge_y: np.ndarray


def _lifts(p: Problem2D, sx: AxisStencil, sy: AxisStencil, edge_x: np.ndarray, edge_y: np.ndarray,
           weights: Tuple[float, float]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Known boundary parts: principal lift, and first difference lifts in x and y, shape (nx-2, ny-2, E)"""
    e = p.exponents
    w1, w2 = weights
    nx, ny = sx.size, sy.size
    dtype = np.result_type(complex(sx.e0) if sx.complex else 0.0, complex(sy.e0) if sy.complex else 0.0,
                           edge_x, edge_y)
    principal = np.zeros((nx, ny, p.dim_e), dtype=dtype)
    first_x = np.zeros_like(principal)
    first_y = np.zeros_like(principal)
    gx_int = edge_x[1:-1]
    gy_int = edge_y[1:-1]
    first_x[-1, :, :] = sx.lift_first() * gx_int
    first_y[:, -1, :] = sy.lift_first() * gy_int
    principal[-1, :, :] += w1 * sx.lift_second() * gx_int
    principal[:, -1, :] += w2 * sy.lift_second() * gy_int
    if p.form == PrincipalForm.PLAIN:
        dx = drift_coefficient(sx.grid.x_nodes[1:-1], e.alpha)
        dy = drift_coefficient(sy.grid.x_nodes[1:-1], e.beta)
        principal -= w1 * dx[:, None, None] * first_x
        principal -= w2 * dy[None, :, None] * first_y
    return principal, first_x, first_y


def assemble_2d(p: Problem2D, weights: Optional[Tuple[float, float]] = None,
                edges: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> Assembly2D:
    """Kronecker assembly in (x, y, component) order, principal weights default to (t1, t2)"""
    p.validate()
    e = p.exponents
    w1, w2 = weights or (p.t1, p.t2)
    sx, sy = p.stencils()
    edge_x, edge_y = edges or p.edge_data()
    ix = scipy.sparse.identity(sx.size)
    iy = scipy.sparse.identity(sy.size)
    ie = scipy.sparse.identity(p.dim_e)
    tx = _principal(sx, p.form, e.alpha)
    ty = _principal(sy, p.form, e.beta)
    m = w1 * scipy.sparse.kron(scipy.sparse.kron(tx, iy), ie) \
        + w2 * scipy.sparse.kron(scipy.sparse.kron(ix, ty), ie) \
        + scipy.sparse.kron(scipy.sparse.kron(ix, iy), operator_block(p.operator, p.lam))
    principal, first_x, first_y = _lifts(p, sx, sy, edge_x, edge_y, (w1, w2))
    f = (p.source()[1:-1, 1:-1] + principal).ravel()
    if p.has_lower_order():
        x, y = p.interior_points()
        for law, stencil, lift, axis in ((p.a1_law, sx, first_x, 0), (p.a2_law, sy, first_y, 1)):
            if law is None:
                continue
            blk = law.block(x, y, p.dim_e)
            d = scipy.sparse.kron(scipy.sparse.kron(stencil.first, iy), ie) if axis == 0 \
                else scipy.sparse.kron(scipy.sparse.kron(ix, stencil.first), ie)
            m = m + blk @ d
            f = f - blk @ lift.ravel()
    return Assembly2D(m.tocsr(), f, sx, sy, edge_x, edge_y)


def reconstruct_2d(interior: np.ndarray, sx: AxisStencil, sy: AxisStencil,
                   edge_x: np.ndarray, edge_y: np.ndarray) -> np.ndarray:
    """Full nodal values, y = b edge first, then x = a edge including corners"""
    v = sy.reconstruct(interior, edge_y[1:-1], axis=1)
    return sx.reconstruct(v, edge_x, axis=0)


def _coefficient_check(p: Problem2D, logger: logging.Logger) -> Tuple[Optional[float], List[str]]:
    """Evaluate sup ||A_i A^-(1/2 - mu)|| on the grid"""
    if not p.has_lower_order():
        return None, []
    neg = fractional_power(p.operator, -(0.5 - p.mu)).to_dense()
    x, y = p.grid.mesh()
    value = max(law.bound(x, y, neg) for law in (p.a1_law, p.a2_law) if law is not None)
    flags = []
    if not value <= p.coefficient_bound:
        logger.warning("coefficient bound %.6g exceeds %.6g, coercivity not claimed", value, p.coefficient_bound)
        flags.append("coefficient_bound_exceeded")
    return value, flags


def make_solution_2d(p: Problem2D, values: np.ndarray, residual: float) -> Solution2D:
    """Solution record from nodal values"""
    g = p.grid
    e = p.exponents
    u = DiscreteField(values, g)
    u1x = reg_derivative(u, g.gx, e.alpha, 1, axis=0)
    u1y = reg_derivative(u, g.gy, e.beta, 1, axis=1)
    u2x = reg_derivative(u, g.gx, e.alpha, 2, axis=0)
    u2y = reg_derivative(u, g.gy, e.beta, 2, axis=1)
    dx = drift_coefficient(g.gx.x_nodes, e.alpha)[:, None, None]
    dy = drift_coefficient(g.gy.x_nodes, e.beta)[None, :, None]
    ux2 = DiscreteField(u2x.values - dx * u1x.values, g)
    uy2 = DiscreteField(u2y.values - dy * u1y.values, g)
    au = DiscreteField(apply(p.operator, values), g)
    lower = 0.0
    if p.has_lower_order():
        x, y = g.mesh()
        for law, d in ((p.a1_law, u1x), (p.a2_law, u1y)):
            if law is None:
                continue
            c = law.values(x, y, p.dim_e)
            term = np.einsum("kmj,kj->km", c, d.values.reshape(-1, p.dim_e)).reshape(d.values.shape)
            lower += weighted_lp_norm(term, g, e.p, ComponentNorm(e.q))
    return Solution2D(u, u1x, u1y, u2x, u2y, ux2, uy2, au, residual, lower_order_norm=lower)


def solve_2d_direct(p: Problem2D) -> Solution2D:
    """Sparse direct solve of the assembled system"""
    logger = logging.getLogger("solve2d")
    if p.moving is not None:
        raise ValidationError("moving domain problem, use solve_moving", "moving")
    bound, flags = _coefficient_check(p, logger)
    asm = assemble_2d(p)
    x, residual = solve_sparse(asm.matrix, asm.rhs)
    interior = x.reshape((asm.sx.size, asm.sy.size, p.dim_e))
    values = reconstruct_2d(interior, asm.sx, asm.sy, asm.edge_x, asm.edge_y)
    logger.info("direct solve %dx%dx%d lambda=%s residual=%.3g", asm.sx.size, asm.sy.size, p.dim_e, p.lam,
                residual)
    s = make_solution_2d(p, values, residual)
    s.coefficient_bound = bound
    s.flags.extend(flags)
    return s


def solve_2d_reduced(p: Problem2D) -> Solution2D:
    """Solve by diagonalizing A and the y-direction operator, one x-problem per eigenvalue"""
    logger = logging.getLogger("solve2d")
    if p.moving is not None:
        raise ValidationError("moving domain problem, use solve_moving", "moving")
    if p.has_lower_order():
        raise ValidationError("reduced solve needs A1 = A2 = 0", "a1")
    if not p.operator.is_diagonal():
        raise OperatorError("reduced solve needs a scalar or diagonal operator")
    p.validate()
    e = p.exponents
    sx, sy = p.stencils()
    edge_x, edge_y = p.edge_data()
    tx = (p.t1 * _principal(sx, p.form, e.alpha)).tocsc()
    ty = (p.t2 * _principal(sy, p.form, e.beta)).toarray()
    w, v = scipy.linalg.eig(ty)
    if np.linalg.cond(v) > MAX_REDUCTION_CONDITION:
        logger.info("y-operator eigenvectors ill conditioned, reduced solve falls back to direct")
        return solve_2d_direct(p)
    if np.max(np.abs(w.imag)) == 0 and np.max(np.abs(v.imag)) == 0:
        w, v = w.real, v.real
    lam = complex(p.lam) if complex(p.lam).imag else complex(p.lam).real
    vi_t = np.linalg.inv(v).T
    principal, _, _ = _lifts(p, sx, sy, edge_x, edge_y, (p.t1, p.t2))
    f = p.source()[1:-1, 1:-1] + principal
    d = p.operator.diagonal_values()
    out = None
    ix = scipy.sparse.identity(sx.size, format="csc")
    residual = 0.0
    for m in range(p.dim_e):
        # U K_y^T = U V^-T W V^T, so columns of U V^-T decouple
        fh = f[:, :, m] @ vi_t
        cols = []
        for k in range(sy.size):
            col, res = solve_sparse(tx + (w[k] + d[m] + lam) * ix, fh[:, k])
            cols.append(col)
            residual = max(residual, res)
        um = np.stack(cols, axis=1) @ v.T
        if out is None:
            out = np.zeros((sx.size, sy.size, p.dim_e), dtype=um.dtype)
        out[:, :, m] = um
    if np.iscomplexobj(out) and not np.iscomplexobj(f) and not isinstance(lam, complex):
        out = out.real
    values = reconstruct_2d(out, sx, sy, edge_x, edge_y)
    logger.info("reduced solve %d y-modes x %d components lambda=%s", sy.size, p.dim_e, p.lam)
    return make_solution_2d(p, values, residual)


def principal_factor(multiplier: float, exponent: float) -> float:
    """Coefficient k^(2(1 - exponent)) of the principal term after the substitution xi = k x"""
    return multiplier ** (2.0 * (1.0 - exponent))


def boundary_factor(multiplier: float, exponent: float, i: int) -> float:
    """Factor k^(i(1 - exponent)) of u^[i] after the substitution xi = k x"""
    return multiplier ** (i * (1.0 - exponent))


@dataclass
class Rescaled:
    """Moving domain problem carried to the fixed domain"""
    fixed: Problem2D
    physical: Problem2D
    weights: Tuple[float, float]
    multipliers: Tuple[float, float]


def rescale(p: Problem2D) -> Rescaled:
    """Fixed domain problem of a moving problem, grids with coinciding nodes"""
    if p.moving is None:
        raise ValidationError("no moving domain law given", "moving")
    if p.has_lower_order():
        raise ValidationError("moving domain problems take no lower order terms", "a1")
    e = p.exponents
    a_s, b_s = p.moving.extents()
    kx, ky = p.a / a_s, p.b / b_s
    gx, gy = p.grid.gx, p.grid.gy
    moving_grid = Grid2D(
        build_grid(build_transform(e.alpha, a_s), gx.n, gx.depth / boundary_factor(kx, e.alpha, 1)),
        build_grid(build_transform(e.beta, b_s), gy.n, gy.depth / boundary_factor(ky, e.beta, 1)))
    physical = replace(p, a=a_s, b=b_s, grid=moving_grid, moving=None)

    def scaled(bc: BoundarySpec, k: float, exponent: float) -> BoundarySpec:
        return replace(bc, delta=tuple(d * boundary_factor(k, exponent, i) for i, d in enumerate(bc.delta)))

    fixed = replace(p, rhs=DiscreteField(physical.source(), p.grid), moving=None,
                    bc_x=scaled(p.bc_x, kx, e.alpha), bc_y=scaled(p.bc_y, ky, e.beta))
    weights = (p.t1 * principal_factor(kx, e.alpha), p.t2 * principal_factor(ky, e.beta))
    return Rescaled(fixed, physical, weights, (kx, ky))


def solve_moving(p: Problem2D) -> Solution2D:
    """Solve on (0, a(s)) x (0, b(s)) through the fixed domain and map back"""
    logger = logging.getLogger("solve2d")
    r = rescale(p)
    # edge data is sampled at the moving domain nodes, they map one to one
    edges = r.physical.edge_data()
    asm = assemble_2d(r.fixed, weights=r.weights, edges=edges)
    x, residual = solve_sparse(asm.matrix, asm.rhs)
    interior = x.reshape((asm.sx.size, asm.sy.size, p.dim_e))
    values = reconstruct_2d(interior, asm.sx, asm.sy, asm.edge_x, asm.edge_y)
    s = make_solution_2d(r.physical, values, residual)
    s.condition = condition_estimate(asm.matrix)
    logger.info("moving domain s=%s extents (%.6g, %.6g) multipliers (%.6g, %.6g) condition %.3g",
                p.moving.s, r.physical.a, r.physical.b, r.multipliers[0], r.multipliers[1], s.condition)
    return s
