"""Abstract operator A, component norms, resolvent probes and interpolation norms"""

from dataclasses import dataclass, field
import logging
import math
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse

from degensolve.basics import OperatorError, OperatorVariant, ValidationError, NormMethod

# Largest eigenvector condition number accepted for dense functional calculus
MAX_EIGEN_CONDITION = 1e12

# Power iteration effort for l_q operator norms, q not in 1, 2, inf
POWER_ITERATIONS = 50
POWER_RESTARTS = 5


@dataclass(frozen=True, eq=False)
class OperatorSpec:
    """Operator A on the component space E"""
    variant: OperatorVariant
    scalar: float = 1.0
    matrix: Optional[np.ndarray] = None
    diagonal: Optional[np.ndarray] = None

    @classmethod
    def of_scalar(cls, c: float) -> 'OperatorSpec':
        """Scalar c > 0, E one-dimensional"""
        if not c > 0:
            raise ValidationError(f"scalar operator {c} must be > 0")
        return OperatorSpec(OperatorVariant.SCALAR, scalar=float(c))

    @classmethod
    def of_dense(cls, matrix) -> 'OperatorSpec':
        """Dense square matrix"""
        m = np.array(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise ValidationError(f"dense operator must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValidationError("dense operator has non-finite entries")
        return OperatorSpec(OperatorVariant.DENSE, matrix=m)

    @classmethod
    def of_diagonal(cls, d) -> 'OperatorSpec':
        """Diagonal family d_m > 0"""
        v = np.array(d, dtype=float).ravel()
        if v.size == 0 or not np.all(v > 0) or not np.all(np.isfinite(v)):
            raise ValidationError("diagonal operator entries must be finite and > 0")
        return OperatorSpec(OperatorVariant.DIAGONAL, diagonal=v)

    @property
    def dim_e(self) -> int:
        """Component space dimension"""
        if self.variant == OperatorVariant.SCALAR:
            return 1
        if self.variant == OperatorVariant.DIAGONAL:
            return len(self.diagonal)
        return self.matrix.shape[0]

    def is_diagonal(self) -> bool:
        """Scalar or diagonal"""
        return self.variant != OperatorVariant.DENSE

    def diagonal_values(self) -> np.ndarray:
        """Diagonal entries, scalar or diagonal variants"""
        if self.variant == OperatorVariant.SCALAR:
            return np.array([self.scalar])
        if self.variant == OperatorVariant.DIAGONAL:
            return self.diagonal
        raise OperatorError("dense operator has no diagonal representation")

    def to_dense(self) -> np.ndarray:
        """Dense matrix"""
        if self.variant == OperatorVariant.DENSE:
            return self.matrix
        return np.diag(self.diagonal_values())

    def to_sparse(self) -> scipy.sparse.csr_matrix:
        """Sparse matrix"""
        if self.variant == OperatorVariant.DENSE:
            return scipy.sparse.csr_matrix(self.matrix)
        return scipy.sparse.diags(self.diagonal_values()).tocsr()

    def smallest(self) -> float:
        """Smallest real part of the spectrum"""
        if self.is_diagonal():
            return float(np.min(self.diagonal_values()))
        return float(np.min(np.linalg.eigvals(self.matrix).real))

    def __repr__(self):
        if self.variant == OperatorVariant.SCALAR:
            return f"Scalar({self.scalar})"
        if self.variant == OperatorVariant.DIAGONAL:
            return f"Diagonal({list(self.diagonal)})"
        return f"Dense({self.matrix.shape[0]}x{self.matrix.shape[1]})"


def apply(a: OperatorSpec, v: np.ndarray) -> np.ndarray:
    """Apply A to component vectors, last axis is the component"""
    v = np.asarray(v)
    if v.shape[-1] != a.dim_e:
        raise ValidationError(f"vector dimension {v.shape[-1]} does not match operator dimension {a.dim_e}")
    if a.variant == OperatorVariant.SCALAR:
        return a.scalar * v
    if a.variant == OperatorVariant.DIAGONAL:
        return a.diagonal * v
    return v @ a.matrix.T


def _eigen(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Eigen decomposition with positive real spectrum, returns values, V, V^-1"""
    w, v = scipy.linalg.eig(matrix)
    scale = max(1.0, float(np.max(np.abs(w))))
    if np.max(np.abs(w.imag)) > 1e-10 * scale:
        raise OperatorError("operator spectrum is not real")
    if np.min(w.real) <= 0:
        raise OperatorError(f"operator spectrum is not positive, smallest eigenvalue {np.min(w.real):.6g}")
    if np.linalg.cond(v) > MAX_EIGEN_CONDITION:
        raise OperatorError("operator is not diagonalizable")
    return w.real, v, np.linalg.inv(v)


def fractional_power(a: OperatorSpec, s: float) -> OperatorSpec:
    """A^s by the diagonal or eigen closed form"""
    if a.variant == OperatorVariant.SCALAR:
        return OperatorSpec.of_scalar(a.scalar ** s)
    if a.variant == OperatorVariant.DIAGONAL:
        return OperatorSpec.of_diagonal(np.power(a.diagonal, s))
    w, v, vi = _eigen(a.matrix)
    r = (v * np.power(w, s)) @ vi
    return OperatorSpec.of_dense(np.real_if_close(r, tol=1e6).real)


@dataclass(frozen=True)
class SectorSpec:
    """Sample of the sector |arg lambda| <= phi"""
    phi: float
    moduli: Tuple[float, ...]
    args: Tuple[float, ...]

    def __post_init__(self):
        if not 0.0 <= self.phi < math.pi:
            raise ValidationError(f"sector angle {self.phi} outside [0, pi)")
        if not self.moduli or not self.args:
            raise ValidationError("sector grid is empty")
        if any(r <= 0 for r in self.moduli) or any(b <= a for a, b in zip(self.moduli, self.moduli[1:])):
            raise ValidationError("sector moduli must be positive and strictly increasing")
        for g in self.args:
            if abs(g) > self.phi + 1e-15:
                raise ValidationError(f"sector argument {g} outside [-{self.phi}, {self.phi}]")

    @classmethod
    def symmetric(cls, phi: float, moduli, fractions=(0.0, 0.5, 1.0)) -> 'SectorSpec':
        """Arguments 0, +-f*phi for the given fractions"""
        args: List[float] = []
        for f in fractions:
            args.extend([0.0] if f == 0 else [-f * phi, f * phi])
        return SectorSpec(phi, tuple(float(r) for r in moduli), tuple(sorted(args)))

    def samples(self) -> List[complex]:
        """Sample points, modulus major order"""
        return [r * complex(math.cos(g), math.sin(g)) for r in self.moduli for g in self.args]


@dataclass
class ProbeReport:
    """Resolvent bound over a sector sample"""
    m_hat: float
    table: List[Tuple[complex, float]] = field(default_factory=list)

    def get_json(self) -> dict:
        """Get as JSON"""
        return {
            "m_hat": self.m_hat,
            "table": [{"lambda_re": lam.real, "lambda_im": lam.imag, "value": v} for lam, v in self.table],
        }


def _psi(y: np.ndarray, q: float) -> np.ndarray:
    """Dual vector of y in l_q, unit l_q' norm"""
    a = np.abs(y)
    nz = a > 0
    r = np.zeros_like(y)
    r[nz] = (y[nz] / a[nz]) * np.power(a[nz], q - 1)
    n = np.linalg.norm(y, q) ** (q - 1)
    return r / n if n > 0 else r


def operator_norm(b: np.ndarray, q: float, rng: Optional[np.random.Generator] = None) -> float:
    """Induced l_q norm, exact for q in 1, 2, inf, otherwise a power iteration lower bound"""
    if q == 2:
        return float(np.linalg.norm(b, 2))
    if q == 1:
        return float(np.linalg.norm(b, 1))
    if math.isinf(q):
        return float(np.linalg.norm(b, np.inf))
    rng = rng or np.random.default_rng(0)
    qd = q / (q - 1)
    best = 0.0
    n = b.shape[1]
    for _ in range(POWER_RESTARTS):
        x = rng.standard_normal(n).astype(b.dtype)
        x /= np.linalg.norm(x, q)
        for _ in range(POWER_ITERATIONS):
            y = b @ x
            ny = np.linalg.norm(y, q)
            best = max(best, float(ny))
            if ny == 0:
                break
            z = b.conj().T @ _psi(y, q)
            x = _psi(z, qd)
            nx = np.linalg.norm(x, q)
            if nx == 0:
                break
            x /= nx
    return best


def resolvent_norm(a: OperatorSpec, lam: complex, q: float = 2.0,
                   rng: Optional[np.random.Generator] = None) -> float:
    """Norm of (A + lambda)^-1 in l_q"""
    if a.is_diagonal():
        s = np.abs(a.diagonal_values() + lam)
        if np.min(s) <= 1e-14 * max(1.0, abs(lam)):
            raise OperatorError(f"A + lambda singular at lambda={lam}")
        return float(np.max(1.0 / s))
    m = a.matrix + lam * np.eye(a.dim_e)
    if np.linalg.cond(m) > 1e14:
        raise OperatorError(f"A + lambda singular at lambda={lam}")
    return operator_norm(np.linalg.inv(m), q, rng)


def positivity_probe(a: OperatorSpec, sector: SectorSpec, q: float = 2.0, seed: int = 0) -> ProbeReport:
    """Sampled sup of (1 + |lambda|) ||(A + lambda)^-1||"""
    logger = logging.getLogger("opspace")
    rng = np.random.default_rng(seed)
    table = []
    for lam in sector.samples():
        v = (1.0 + abs(lam)) * resolvent_norm(a, lam, q, rng)
        table.append((lam, v))
    m_hat = max(v for _, v in table)
    logger.debug("positivity probe %s over %d samples: M_hat=%.6g", a, len(table), m_hat)
    return ProbeReport(m_hat, table)


@dataclass(frozen=True)
class InterpParams:
    """Interpolation parameter theta and index q"""
    theta: float
    q: float

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValidationError(f"interpolation parameter theta={self.theta} outside (0, 1)")
        if not 1.0 < self.q < math.inf:
            raise ValidationError(f"interpolation index q={self.q} outside (1, inf)")

    @classmethod
    def boundary(cls, alpha: float, p: float, q: float) -> 'InterpParams':
        """theta = (1 + 1/((1 - alpha) p))/2, boundary data space"""
        return InterpParams(boundary_theta(alpha, p), q)

    @classmethod
    def trace(cls, alpha: float, p: float, i: int, q: float) -> 'InterpParams':
        """theta_i = (p (1 - alpha) i + 1)/(2 p (1 - alpha)), trace space of the i-th derivative"""
        return InterpParams(trace_theta(alpha, p, i), q)


def boundary_theta(alpha: float, p: float) -> float:
    """theta for the inhomogeneous boundary data"""
    return 0.5 * (1.0 + 1.0 / ((1.0 - alpha) * p))


def trace_theta(alpha: float, p: float, i: int) -> float:
    """theta_i for traces of u^[i]"""
    return (p * (1.0 - alpha) * i + 1.0) / (2.0 * p * (1.0 - alpha))


def sigma(i: int, gamma: float, p: float) -> float:
    """Exponent sigma_i of the small parameter in the boundary functional"""
    return i / 2.0 + 1.0 / (2.0 * (1.0 - gamma) * p)


def _kfunctional(d: np.ndarray, u: np.ndarray, theta: float, q: float) -> float:
    """(int_0^inf (t^-theta K(t, u))^q dt/t)^(1/q), integrated exactly between breakpoints d_m"""
    order = np.argsort(d)
    d = d[order]
    uq = np.power(np.abs(u[order]), q)
    # on (d_(k-1), d_(k)): K^q = low[k] + t^q high[k]
    low = np.concatenate(([0.0], np.cumsum(np.power(d, q) * uq)))
    high = np.concatenate((np.cumsum(uq[::-1])[::-1], [0.0]))
    edges = np.concatenate(([0.0], d, [math.inf]))
    e1 = theta * q
    e2 = q * (1.0 - theta)
    total = 0.0
    for k in range(len(d) + 1):
        lo, hi = edges[k], edges[k + 1]
        if hi <= lo:
            continue
        if low[k] > 0:
            total += low[k] * (lo ** -e1 - (0.0 if math.isinf(hi) else hi ** -e1)) / e1
        if high[k] > 0:
            total += high[k] * (hi ** e2 - lo ** e2) / e2
    return total ** (1.0 / q)


def interp_norm(u: np.ndarray, d: OperatorSpec, ip: InterpParams,
                method: NormMethod = NormMethod.CLOSED) -> float:
    """Norm in the interpolation space between D(A) and E"""
    u = np.asarray(u).ravel()
    if d.is_diagonal():
        values = d.diagonal_values()
        coords = u
    else:
        values, _, vi = _eigen(d.matrix)
        coords = vi @ u
    if len(coords) != len(values):
        raise ValidationError(f"vector dimension {len(coords)} does not match operator dimension {len(values)}")
    if method == NormMethod.CLOSED:
        return float(np.linalg.norm(np.power(values, 1.0 - ip.theta) * np.abs(coords), ip.q))
    return _kfunctional(values, coords, ip.theta, ip.q)
