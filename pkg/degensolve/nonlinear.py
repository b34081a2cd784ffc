"""Picard iteration for nonlinear degenerate problems"""

from dataclasses import dataclass, field, replace
import logging
import math
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse.linalg

from degensolve.basics import DivergenceError, SolverError, ValidationError
from degensolve.funcdsl import Expression
from degensolve.mesh import ComponentNorm, weighted_lp_norm
from degensolve.opspace import SectorSpec, positivity_probe
from degensolve.solve1d import relative_residual, RESIDUAL_TOLERANCE
from degensolve.solve2d import Problem2D, Solution2D, assemble_2d, make_grid_2d, make_solution_2d, \
    reconstruct_2d

# Consecutive contraction estimates above one that abort the iteration
DIVERGENCE_COUNT = 3

# Largest number of domain halvings after divergence
MAX_SHRINK = 4

# Sector used to check the frozen operator
FROZEN_SECTOR = SectorSpec.symmetric(math.pi / 2, (1.0, 1e2, 1e4))

# Fewest iterates for a geometric fit
MIN_FIT_POINTS = 5

# CSV columns of an iteration trace
TRACE_COLUMNS = ["iteration", "delta", "residual", "ratio", "in_ball"]


@dataclass
class NonlinearSpec:
    """Problem sum_k -t_k x^2a u_xx + a(U) u = F(x, y, U), U = (u, u^[1]_x, u^[1]_y), a(U) = A_Phi + g(U)"""
    base: Problem2D                         # template, its operator is A_Phi
    f_law: Expression
    g_law: Optional[Expression] = None      # scalar perturbation g(U), zero when absent
    mu_r: float = 1.0
    radius: float = 1.0
    seed: int = 0

    def validate(self):
        """Check spec invariants"""
        if not self.mu_r > 0:
            raise ValidationError(f"Lipschitz constant {self.mu_r} must be > 0", "mu_r")
        if not self.radius > 0:
            raise ValidationError(f"ball radius {self.radius} must be > 0", "radius")
        if complex(self.base.lam).imag != 0:
            raise ValidationError("nonlinear iteration needs a real lambda", "lambda")
        if self.base.moving is not None:
            raise ValidationError("nonlinear iteration on a moving domain is not supported", "moving")
        self.base.validate()

    def effective(self, bindings: Dict[str, Any], u: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        """Iterated right-hand side F(U) + (A_Phi - a(U)) u"""
        f = self.f_law.evaluate_on(shape, bindings)
        if self.g_law is None:
            return f
        return f - self.g_law.evaluate_on(shape, bindings) * u


@dataclass
class IterationStep:
    """One Picard step"""
    iteration: int
    delta: float        # ||u_n - u_(n-1)||_Y
    residual: float
    ratio: Optional[float]
    in_ball: bool

    def row(self) -> Dict[str, Any]:
        """CSV row"""
        return {"iteration": self.iteration, "delta": self.delta, "residual": self.residual,
                "ratio": "" if self.ratio is None else self.ratio, "in_ball": str(self.in_ball).lower()}


@dataclass
class IterationTrace:
    """Picard iteration record, step 0 is the frozen linear solution w"""
    steps: List[IterationStep] = field(default_factory=list)
    w_norm: float = 0.0         # ||w||_Y
    f_norm: float = 0.0         # ||F(., 0)||_X
    converged: bool = False
    shrink: int = 0
    extent: Tuple[float, float] = (1.0, 1.0)

    @property
    def iterations(self) -> int:
        """Iterations after the linear solve"""
        return max(len(self.steps) - 1, 0)

    def contraction_estimates(self) -> List[float]:
        """Successive difference ratios"""
        return [s.ratio for s in self.steps if s.ratio is not None]

    def final_residual(self) -> float:
        """Nonlinear residual of the last iterate"""
        return self.steps[-1].residual if self.steps else math.inf

    def stayed_in_ball(self) -> bool:
        """All iterates within the ball around w"""
        return all(s.in_ball for s in self.steps)

    def geometric_fit(self, start: int = 1) -> Optional[Tuple[float, float]]:
        """Rate and R^2 of a line fit to log delta against iteration, None below MIN_FIT_POINTS iterates"""
        pts = [(s.iteration, math.log(s.delta)) for s in self.steps[start:] if s.delta > 0]
        if len(pts) < MIN_FIT_POINTS:
            return None
        xs, ys = np.array(pts).T
        slope, icept = np.polyfit(xs, ys, 1)
        fit = slope * xs + icept
        ss_tot = float(np.sum((ys - np.mean(ys)) ** 2))
        r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum((ys - fit) ** 2)) / ss_tot
        return math.exp(slope), r2

    def ratio_spread(self, start: int = 2) -> Optional[float]:
        """max/min of the contraction estimates after iteration start"""
        ratios = [s.ratio for s in self.steps if s.iteration > start and s.ratio]
        if len(ratios) < 2:
            return None
        return max(ratios) / min(ratios)

    def get_json(self) -> Dict[str, Any]:
        """Get as JSON, fit values null when undetermined"""
        fit = self.geometric_fit()
        rate, r2 = fit if fit is not None else (None, None)
        return {"iterations": self.iterations, "converged": self.converged, "w_norm": self.w_norm,
                "f_norm": self.f_norm, "final_residual": self.final_residual(),
                "stayed_in_ball": self.stayed_in_ball(), "shrink": self.shrink, "extent": list(self.extent),
                "contraction_estimates": self.contraction_estimates(), "rate": rate, "r2": r2,
                "ratio_spread": self.ratio_spread()}


class PicardSolver:
    """Repeated solves with the operator frozen at A_Phi"""
    def __init__(self, spec: NonlinearSpec):
        self.logger = logging.getLogger("nonlinear")
        spec.validate()
        self.spec = spec
        p = spec.base
        self.problem = p
        probe = positivity_probe(p.operator, FROZEN_SECTOR)
        self.logger.debug("frozen operator %s positivity bound %.6g", p.operator, probe.m_hat)
        self.assembly = assemble_2d(replace(p, rhs=None))
        self.lift = self.assembly.rhs
        m = self.assembly.matrix
        if np.iscomplexobj(m):
            raise ValidationError("nonlinear iteration needs real boundary coefficients", "bc")
        try:
            self.lu = scipy.sparse.linalg.splu(m.tocsc())
        except RuntimeError as e:
            raise SolverError(f"singular frozen system: {e}") from e
        g = p.grid
        x, y = g.mesh()
        zx, zy = np.meshgrid(g.gx.y_nodes, g.gy.y_nodes, indexing="ij")
        self.shape = g.shape + (p.dim_e,)
        self.coordinates = {
            "x": x[..., None], "y": y[..., None], "X": zx[..., None], "Y": zy[..., None],
            "m": np.arange(1, p.dim_e + 1, dtype=float)[None, None, :], "t1": p.t1, "t2": p.t2}
        self.norm = ComponentNorm(p.exponents.q)

    def state(self, s: Solution2D) -> Dict[str, Any]:
        """Bindings of U = (u, u^[1]_x, u^[1]_y) at all nodes"""
        b = dict(self.coordinates)
        b.update({"u": s.u.values, "ux": s.u1x.values, "uy": s.u1y.values})
        return b

    def zero_state(self) -> Dict[str, Any]:
        """Bindings of U = 0"""
        b = dict(self.coordinates)
        z = np.zeros(self.shape)
        b.update({"u": z, "ux": z, "uy": z})
        return b

    def rhs(self, values: np.ndarray) -> np.ndarray:
        """Assembled right-hand side for source values at all nodes"""
        return values[1:-1, 1:-1].ravel() + self.lift

    def source_of(self, s: Optional[Solution2D]) -> np.ndarray:
        """Iterated source at a state, None for U = 0"""
        if s is None:
            return self.spec.effective(self.zero_state(), np.zeros(self.shape), self.shape)
        return self.spec.effective(self.state(s), s.u.values, self.shape)

    def linear_solve(self, source: np.ndarray) -> Solution2D:
        """Frozen linear solve"""
        b = self.rhs(source)
        x = self.lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise SolverError("frozen solve produced non-finite values")
        residual = relative_residual(self.assembly.matrix, x, b)
        if residual > RESIDUAL_TOLERANCE:
            raise SolverError(f"residual {residual:.3g} above tolerance {RESIDUAL_TOLERANCE:.3g}")
        a = self.assembly
        interior = x.reshape((a.sx.size, a.sy.size, self.problem.dim_e))
        values = reconstruct_2d(interior, a.sx, a.sy, a.edge_x, a.edge_y)
        return make_solution_2d(self.problem, values, residual)

    def y_norm(self, values: np.ndarray) -> float:
        """||u^[2]_x|| + ||u^[2]_y|| + ||Au|| + ||u||"""
        s = make_solution_2d(self.problem, values, 0.0)
        g = self.problem.grid
        p = self.problem.exponents.p
        return sum(weighted_lp_norm(f, g, p, self.norm) for f in (s.u2x, s.u2y, s.au, s.u))

    def x_norm(self, values: np.ndarray) -> float:
        """Discrete L_p norm"""
        return weighted_lp_norm(values, self.problem.grid, self.problem.exponents.p, self.norm)

    def residual(self, s: Solution2D) -> float:
        """Nonlinear residual by substitution into the discrete equation"""
        a = self.assembly
        r = a.matrix @ s.u.values[1:-1, 1:-1].ravel() - self.rhs(self.source_of(s))
        full = np.zeros(self.shape)
        full[1:-1, 1:-1] = r.reshape((a.sx.size, a.sy.size, self.problem.dim_e))
        return self.x_norm(full)

    def iterate(self, tol: float, max_iter: int) -> Tuple[Solution2D, IterationTrace, Solution2D]:
        """Iterate from w, returns last iterate, trace and w"""
        spec = self.spec
        trace = IterationTrace(extent=(self.problem.a, self.problem.b))
        f0 = self.source_of(None)
        w = self.linear_solve(f0)
        trace.f_norm = self.x_norm(f0)
        trace.w_norm = self.y_norm(w.u.values)
        trace.steps.append(IterationStep(0, trace.w_norm, self.residual(w), None, True))
        self.logger.info("linear solve: ||w||_Y=%.6g ||F(0)||=%.6g", trace.w_norm, trace.f_norm)
        u = w
        above = 0
        # w = 0 is already the fixed point
        first = 1 if trace.w_norm > tol else max_iter + 1
        for n in range(first, max_iter + 1):
            try:
                nxt = self.linear_solve(self.source_of(u))
                delta = self.y_norm(nxt.u.values - u.u.values)
                distance = self.y_norm(nxt.u.values - w.u.values)
                residual = self.residual(nxt)
            except ValidationError as e:
                raise DivergenceError(f"iterate {n} not finite: {e}", trace) from e
            prev = trace.steps[-1].delta
            ratio = delta / prev if prev > 0 else None
            in_ball = distance <= spec.radius
            trace.steps.append(IterationStep(n, delta, residual, ratio, in_ball))
            self.logger.debug("iteration %d: delta=%.6g ratio=%s residual=%.3g", n, delta, ratio, residual)
            if not in_ball:
                self.logger.warning("iterate %d left the ball, distance %.6g > %.6g", n, distance, spec.radius)
            above = above + 1 if ratio is not None and ratio > 1.0 else 0
            if above >= DIVERGENCE_COUNT:
                raise DivergenceError(f"{DIVERGENCE_COUNT} consecutive contraction estimates above 1", trace)
            u = nxt
            if delta <= tol:
                break
        trace.converged = trace.steps[-1].delta <= tol
        return u, trace, w


def _shrunk(p: Problem2D) -> Problem2D:
    """Same problem on (0, a/2) x (0, b/2), same nodes and depth"""
    g = p.grid
    grid = make_grid_2d(p.exponents, p.a / 2, p.b / 2, g.gx.n, g.gy.n, p.operator, p.lam, g.gx.depth)
    return replace(p, a=p.a / 2, b=p.b / 2, grid=grid)


def picard_solve(spec: NonlinearSpec, tol: float = 1e-10, max_iter: int = 30,
                 shrink: int = 0) -> Tuple[Solution2D, IterationTrace]:
    """Contraction iteration u_(n+1) = Q(u_n), with optional domain halving retries on divergence"""
    logger = logging.getLogger("nonlinear")
    if not tol > 0:
        raise ValidationError(f"tolerance {tol} must be > 0", "tol")
    if max_iter < 0:
        raise ValidationError(f"iteration limit {max_iter} must be >= 0", "max_iter")
    if not 0 <= shrink <= MAX_SHRINK:
        raise ValidationError(f"shrink retries {shrink} outside [0, {MAX_SHRINK}]", "shrink")
    current = spec
    attempt = 0
    while True:
        try:
            u, trace, _ = PicardSolver(current).iterate(tol, max_iter)
            trace.shrink = attempt
            logger.info("picard: %d iterations, converged %s, residual %.3g", trace.iterations, trace.converged,
                        trace.final_residual())
            return u, trace
        except DivergenceError as e:
            e.trace.shrink = attempt
            if attempt >= shrink:
                raise
            attempt += 1
            current = replace(current, base=_shrunk(current.base))
            logger.warning("picard diverged, retry on (0, %.6g) x (0, %.6g)", current.base.a, current.base.b)


@dataclass
class LipschitzReport:
    """Sampled Lipschitz constant of the iterated right-hand side"""
    mu_hat: float
    mu_r: float
    samples: int
    skipped: int

    def get_json(self) -> Dict[str, Any]:
        """Get as JSON"""
        return {"mu_hat": self.mu_hat, "mu_r": self.mu_r, "samples": self.samples, "skipped": self.skipped}


def lipschitz_probe(spec: NonlinearSpec, sample_count: int = 64) -> LipschitzReport:
    """Largest difference quotient of F(U) + (A_Phi - a(U)) u over state pairs near w"""
    logger = logging.getLogger("nonlinear")
    if sample_count < 2:
        raise ValidationError(f"sample count {sample_count} below 2", "samples")
    solver = PicardSolver(spec)
    w = solver.linear_solve(solver.source_of(None))
    rng = np.random.default_rng(spec.seed)
    dim_e = spec.base.dim_e
    nodes = w.u.values.reshape(-1, dim_e).shape[0]
    idx = rng.integers(0, nodes, size=sample_count)
    coords = {k: (np.broadcast_to(v, solver.shape).reshape(-1, dim_e)[idx] if np.ndim(v) else v)
              for k, v in solver.coordinates.items()}
    base = [f.values.reshape(-1, dim_e)[idx] for f in (w.u, w.u1x, w.u1y)]
    # pairs move u, ux, uy alone or all together
    mask = np.zeros((sample_count, 3))
    for k in range(sample_count):
        j = k % 4
        mask[k] = 1.0 if j == 3 else np.eye(3)[j]
    states = []
    for _ in range(2):
        states.append([b + spec.radius * mask[:, i:i + 1] * rng.uniform(-1, 1, size=b.shape)
                       for i, b in enumerate(base)])
    en = ComponentNorm(spec.base.exponents.q)
    values = []
    for u, ux, uy in states:
        b = dict(coords)
        b.update({"u": u, "ux": ux, "uy": uy})
        values.append(spec.effective(b, u, (sample_count, dim_e)))
    du = sum(en.of(s1 - s2) for s1, s2 in zip(states[0], states[1]))
    dg = en.of(values[0] - values[1])
    good = du > 0
    mu_hat = float(np.max(dg[good] / du[good])) if np.any(good) else 0.0
    skipped = int(sample_count - np.count_nonzero(good))
    logger.info("lipschitz probe: mu_hat=%.6g (configured %.6g) over %d samples, %d skipped", mu_hat, spec.mu_r,
                sample_count, skipped)
    return LipschitzReport(mu_hat, spec.mu_r, sample_count, skipped)


@dataclass
class BallReport:
    """Contraction conditions evaluated on a run"""
    stayed_in_ball: bool
    implied_r: float            # state radius r + ||w||_Y
    contraction_bound: float    # C0 mu_hat
    c0: float
    mu_hat: float

    def contraction(self) -> bool:
        """Sufficient condition C0 mu_hat < 1"""
        return self.contraction_bound < 1.0

    def get_json(self) -> Dict[str, Any]:
        """Get as JSON"""
        return {"stayed_in_ball": self.stayed_in_ball, "implied_R": self.implied_r,
                "contraction_bound": self.contraction_bound, "contraction": self.contraction(), "c0": self.c0,
                "mu_hat": self.mu_hat}


def ball_check(trace: IterationTrace, radius: float, mu_hat: float, c0: Optional[float] = None) -> BallReport:
    """Ball invariance and contraction of the iteration map, C0 defaults to ||w||_Y / ||F(0)||"""
    if c0 is None:
        c0 = trace.w_norm / trace.f_norm if trace.f_norm > 0 else 0.0
    return BallReport(trace.stayed_in_ball(), radius + trace.w_norm, c0 * mu_hat, c0, mu_hat)
