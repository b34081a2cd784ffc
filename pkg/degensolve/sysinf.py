"""Truncated infinite systems of degenerate problems"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import logging
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from degensolve.basics import ValidationError
from degensolve.funcdsl import Expression
from degensolve.mesh import ComponentNorm, DiscreteField, weighted_lp_norm
from degensolve.opspace import OperatorSpec
from degensolve.solve2d import CoefficientLaw, Problem2D, Solution2D, make_solution_2d, solve_2d_direct
from degensolve.verify import CoercivityReport, coercivity_report

# Largest relative increase of the partial sums from N to 2N for a finite sup
DECAY_STABLE = 0.01

# Coefficient values evaluated per chunk of grid points
CHUNK_VALUES = 4_000_000

# Slack of the monotone difference check
MONOTONE_SLACK = 1e-14

# CSV columns of a truncation study
STUDY_COLUMNS = ["n", "difference", "relative", "decay_finite"]


@dataclass
class SystemSpec:
    """Coupled system with A = diag(d_m) and lower order couplings x^a a_mj D_x u_j + y^b b_mj D_y u_j"""
    d_law: Expression                           # d_m
    base: Problem2D                             # geometry, boundary conditions, lambda, rhs law in m
    a_law: Optional[Expression] = None          # a_mj(x, y)
    b_law: Optional[Expression] = None          # b_mj(x, y)
    mu: float = 0.25
    n: int = 8
    support: Optional[int] = None               # f_m = 0 for m > support

    def validate(self):
        """Check spec invariants"""
        if not 0.0 < self.mu < 0.5:
            raise ValidationError(f"mu={self.mu} outside (0, 1/2)", "mu")
        if self.n < 1:
            raise ValidationError(f"truncation size {self.n} below 1", "n")
        if self.support is not None and self.support < 1:
            raise ValidationError(f"forcing support {self.support} below 1", "support")

    def coupled(self) -> bool:
        """Any coupling law given"""
        return self.a_law is not None or self.b_law is not None

    def diagonal(self, n: int) -> np.ndarray:
        """d_1..d_n, positive and nondecreasing"""
        m = np.arange(1, n + 1, dtype=float)
        d = self.d_law.evaluate_on((n,), {"m": m})
        bad = np.nonzero(~(d > 0))[0]
        if len(bad):
            raise ValidationError(f"d_m={d[bad[0]]:.6g} not positive at m={bad[0] + 1}", "d")
        if np.any(np.diff(d) < 0):
            raise ValidationError("d_m is not nondecreasing", "d")
        return d

    def problem(self, n: int) -> Problem2D:
        """Truncated problem with n components"""
        p = self.base
        operator = OperatorSpec.of_diagonal(self.diagonal(n))
        q = replace(p, operator=operator, mu=self.mu,
                    a1_law=CoefficientLaw(entries=self.a_law) if self.a_law is not None else None,
                    a2_law=CoefficientLaw(entries=self.b_law) if self.b_law is not None else None)
        f = q.source()
        if self.support is not None:
            f = f.copy()
            f[..., self.support:] = 0.0
        return replace(q, rhs=DiscreteField(f, p.grid))


@dataclass
class DecayReport:
    """Suprema of sum_j |a_mj| d_j^-(1/2 - mu) and the b analog"""
    sup_a: float = 0.0
    sup_b: float = 0.0
    finite: bool = True
    growth_vs_n: List[Tuple[int, float, float]] = field(default_factory=list)

    def get_json(self) -> Dict[str, Any]:
        """Get as JSON"""
        return {"sup_a": self.sup_a, "sup_b": self.sup_b, "finite": self.finite,
                "growth_vs_n": [{"n": n, "sup_a": a, "sup_b": b} for n, a, b in self.growth_vs_n]}


def _partial_sup(law: Optional[Expression], x: np.ndarray, y: np.ndarray, weights: np.ndarray) -> float:
    """max over points and m of sum_j |c_mj(x, y)| w_j"""
    if law is None:
        return 0.0
    n = len(weights)
    c = CoefficientLaw(entries=law)
    step = max(1, CHUNK_VALUES // (n * n))
    best = 0.0
    for k in range(0, len(x), step):
        v = np.abs(c.values(x[k:k + step], y[k:k + step], n))
        best = max(best, float(np.max(v @ weights)))
    return best


def _increase(small: float, large: float) -> float:
    if large == small:
        return 0.0
    return (large - small) / max(abs(small), 1e-300)


def decay_condition_check(spec: SystemSpec, n_list: Sequence[int]) -> DecayReport:
    """Evaluate the coupling decay condition at the grid nodes for each N and 2 N_last"""
    logger = logging.getLogger("sysinf")
    spec.validate()
    n_list = list(n_list)
    if not n_list or any(b <= a for a, b in zip(n_list, n_list[1:])) or n_list[0] < 1:
        raise ValidationError("truncation sizes must be positive and increasing", "n_list")
    x, y = spec.base.grid.mesh()
    x, y = x.ravel(), y.ravel()
    r = DecayReport()
    for n in n_list + [2 * n_list[-1]]:
        w = np.power(spec.diagonal(n), -(0.5 - spec.mu))
        r.growth_vs_n.append((n, _partial_sup(spec.a_law, x, y, w), _partial_sup(spec.b_law, x, y, w)))
    (_, a1, b1), (_, a2, b2) = r.growth_vs_n[-2], r.growth_vs_n[-1]
    r.sup_a, r.sup_b = a2, b2
    r.finite = _increase(a1, a2) <= DECAY_STABLE and _increase(b1, b2) <= DECAY_STABLE
    if not r.finite:
        logger.warning("coupling decay condition not satisfied: sup_a %.6g -> %.6g, sup_b %.6g -> %.6g", a1, a2,
                       b1, b2)
    logger.info("decay check: sup_a=%.6g sup_b=%.6g finite %s", r.sup_a, r.sup_b, r.finite)
    return r


@dataclass
class SystemResult:
    """Truncated solve with its coercivity report"""
    n: int
    problem: Problem2D
    solution: Solution2D
    report: CoercivityReport
    decay: DecayReport

    def lqd_norm(self) -> float:
        """||Du|| in L_p(G; l_q)"""
        e = self.problem.exponents
        d = self.problem.operator.diagonal_values()
        return weighted_lp_norm(self.solution.u, self.solution.u.grid, e.p, ComponentNorm(e.q, tuple(d)))

    def get_json(self) -> Dict[str, Any]:
        """Get as JSON"""
        return {"n": self.n, "lqd_norm": self.lqd_norm(), "report": self.report.get_json(),
                "decay": self.decay.get_json()}


def _solve_decoupled(p: Problem2D) -> Solution2D:
    """Component by component scalar solves"""
    d = p.operator.diagonal_values()
    f = p.source()
    parts = []
    residual = 0.0
    for m in range(p.dim_e):
        q = replace(p, operator=OperatorSpec.of_scalar(d[m]), rhs=DiscreteField(f[..., m:m + 1], p.grid))
        s = solve_2d_direct(q)
        parts.append(s.u.values)
        residual = max(residual, s.residual_norm)
    return make_solution_2d(p, np.concatenate(parts, axis=-1), residual)


def solve_system(p: Problem2D, coupled: bool) -> Solution2D:
    """Solve a truncated system, decoupled systems with zero edge data component by component"""
    if coupled or p.bc_x.data is not None or p.bc_y.data is not None:
        return solve_2d_direct(p)
    return _solve_decoupled(p)


def truncate_and_solve(spec: SystemSpec, n: Optional[int] = None) -> SystemResult:
    """Solve the system truncated to n components, report in l_q(D)"""
    logger = logging.getLogger("sysinf")
    spec.validate()
    n = n or spec.n
    decay = decay_condition_check(spec, [n])
    p = spec.problem(n)
    s = solve_system(p, spec.coupled())
    if not decay.finite:
        s.flags.append("decay_condition_failed")
    logger.info("truncated system N=%d unknowns %d", n, p.grid.shape[0] * p.grid.shape[1] * n)
    return SystemResult(n, p, s, coercivity_report(p, s), decay)


@dataclass
class StudyRow:
    """Self-convergence row"""
    n: int
    difference: float
    relative: float
    decay_finite: bool

    def row(self) -> Dict[str, Any]:
        """CSV row"""
        return {"n": self.n, "difference": self.difference, "relative": self.relative,
                "decay_finite": str(self.decay_finite).lower()}


@dataclass
class StudyTable:
    """Truncation self-convergence table"""
    reference_n: int
    rows: List[StudyRow]
    decay: DecayReport

    def monotone(self) -> bool:
        """Differences do not increase with N"""
        d = [r.difference for r in self.rows]
        return all(b <= a + MONOTONE_SLACK for a, b in zip(d, d[1:]))

    def contraction(self) -> float:
        """Last over first difference"""
        first = self.rows[0].difference
        return self.rows[-1].difference / first if first > 0 else 0.0

    def get_json(self) -> Dict[str, Any]:
        """Get as JSON"""
        return {"reference_n": self.reference_n, "rows": [r.row() for r in self.rows], "monotone": self.monotone(),
                "contraction": self.contraction(), "decay": self.decay.get_json()}


def truncation_study(spec: SystemSpec, n_list: Sequence[int], threads: int = 1) -> StudyTable:
    """Differences ||u^(N) - P_N u^(2 N_max)|| in L_p(G; l_q) against N"""
    logger = logging.getLogger("sysinf")
    spec.validate()
    decay = decay_condition_check(spec, n_list)
    ref_n = 2 * max(n_list)
    sizes = list(n_list) + [ref_n]
    coupled = spec.coupled()

    def run(n: int) -> Solution2D:
        return solve_system(spec.problem(n), coupled)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            solutions = list(pool.map(run, sizes))
    else:
        solutions = [run(n) for n in sizes]
    ref = solutions[-1]
    e = spec.base.exponents
    norm = ComponentNorm(e.q)
    rows = []
    for n, s in zip(n_list, solutions):
        projected = ref.u.values[..., :n]
        diff = weighted_lp_norm(s.u.values - projected, s.u.grid, e.p, norm)
        scale = weighted_lp_norm(projected, s.u.grid, e.p, norm)
        rows.append(StudyRow(n, diff, diff / scale if scale > 0 else 0.0, decay.finite))
        logger.info("truncation N=%d difference %.6g", n, diff)
    return StudyTable(ref_n, rows, decay)
