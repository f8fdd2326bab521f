"""Steady states of the alignment dynamics and their stability.

Steady states are ``rho M_J`` with ``J = rho J[M_J]``.  Up to rotations the
solutions are ``J = 0``, ``J = alpha A0`` with ``alpha = rho c1(alpha)`` and
``J = alpha sqrt(3) a (x) b`` with ``alpha = rho c2(alpha)``.  Their nature is
read from the Hessian of ``V(J) = |J|^2 / 2 - rho ln Z(J)`` restricted to
diagonal matrices.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq, minimize_scalar

from . import so3
from . import von_mises as vm
from .errors import DomainError, EnvelopeError

RHO_C = 6.0
ALPHA_MAX = 50.0
QUAD_EPSREL = 1e-12
ROOT_XTOL = 1e-12
GOLDEN_TOL = 1e-10
SMALL_ALPHA = 1e-6
ZERO_EIGENVALUE = 1e-9

SQRT3 = math.sqrt(3.0)
_EYE = np.eye(3)
# Rows give A_ii as a combination of (w^2, x^2, y^2, z^2) for A = Phi(q).
_DIAG_SIGNS = np.array([[1.0, 1.0, -1.0, -1.0], [1.0, -1.0, 1.0, -1.0], [1.0, -1.0, -1.0, 1.0]])


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not abs(alpha) <= ALPHA_MAX:
        raise EnvelopeError(f"|alpha| = {abs(alpha):.3g} exceeds {ALPHA_MAX}")
    return alpha


def _integrate(f) -> float:
    with warnings.catch_warnings():
        # The c1 numerator vanishes at alpha = 0; roundoff warnings there are expected.
        warnings.simplefilter("ignore", IntegrationWarning)
        val, _ = quad(f, 0.0, math.pi, epsabs=1e-300, epsrel=QUAD_EPSREL, limit=200)
    return val


@lru_cache(maxsize=65536)
def c1(alpha: float) -> float:
    """Coefficient with ``J[M_{alpha A0}] = c1(alpha) A0``.

    Ratio of the angle integrals with weights ``(2 cos t + 1) sin^2(t/2) e^{alpha cos t} / 3``
    and ``sin^2(t/2) e^{alpha cos t}`` over ``[0, pi]``.
    """
    alpha = _check_alpha(alpha)
    if alpha == 0.0:
        return 0.0
    shift = abs(alpha)

    def weight(t):
        return math.sin(0.5 * t) ** 2 * math.exp(alpha * math.cos(t) - shift)

    den = _integrate(weight)
    num = _integrate(lambda t: (2.0 * math.cos(t) + 1.0) / 3.0 * weight(t))
    return num / den


@lru_cache(maxsize=65536)
def c2(alpha: float) -> float:
    """Coefficient of the rank-one branch, an odd function with limit ``1/sqrt(3)``."""
    alpha = _check_alpha(alpha)
    if alpha == 0.0:
        return 0.0
    k = 0.5 * SQRT3 * alpha
    shift = abs(k)
    den = _integrate(lambda p: math.sin(p) * math.exp(k * math.cos(p) - shift))
    num = _integrate(lambda p: math.cos(p) * math.sin(p) * math.exp(k * math.cos(p) - shift))
    return num / (SQRT3 * den)


def c1_inverse(c: float) -> float:
    """``alpha`` with ``c1(alpha) = c``; ``c1`` increases from ``-1/3`` to ``1``."""
    c = float(c)
    if not -1.0 / 3.0 < c < 1.0:
        raise DomainError(f"c1 takes values in (-1/3, 1), got {c}")
    if c == 0.0:
        return 0.0
    f = lambda a: c1(a) - c  # noqa: E731
    if f(-ALPHA_MAX) > 0 or f(ALPHA_MAX) < 0:
        raise EnvelopeError(f"c1^-1({c}) lies outside |alpha| <= {ALPHA_MAX}")
    return float(brentq(f, -ALPHA_MAX, ALPHA_MAX, xtol=ROOT_XTOL))


def rho1(alpha: float) -> float:
    """``alpha / c1(alpha)``, continued by ``6 - 3 alpha / 2`` near zero."""
    if abs(alpha) < SMALL_ALPHA:
        return RHO_C - 1.5 * alpha
    return alpha / c1(alpha)


def rho2(alpha: float) -> float:
    """``alpha / c2(alpha)``, continued by ``6 + 3 alpha^2 / 10`` near zero."""
    if abs(alpha) < SMALL_ALPHA:
        return RHO_C + 0.3 * alpha * alpha
    return alpha / c2(alpha)


# --------------------------------------------------------------------------
# Thresholds and branches
# --------------------------------------------------------------------------


class Family(str, enum.Enum):
    UNIFORM = "Uniform"
    AXIAL_UP = "AxialUp"
    AXIAL_DOWN = "AxialDown"
    RANK1 = "Rank1"


@dataclass(frozen=True)
class BranchTables:
    alpha_star: float
    rho_star: float
    c_star: float
    rho_c: float = RHO_C
    quad_epsrel: float = QUAD_EPSREL
    root_xtol: float = ROOT_XTOL
    golden_tol: float = GOLDEN_TOL

    def alpha_up(self, rho: float) -> float:
        return solve_branch(Family.AXIAL_UP, rho)

    def alpha_down(self, rho: float) -> float:
        return solve_branch(Family.AXIAL_DOWN, rho)

    def alpha_rank1(self, rho: float) -> float:
        return solve_branch(Family.RANK1, rho)

    def c1_up(self, rho: float) -> float:
        return c1(self.alpha_up(rho))

    def c1_down(self, rho: float) -> float:
        return c1(self.alpha_down(rho))

    def c2_tilde(self, rho: float) -> float:
        return c2(self.alpha_rank1(rho))


@lru_cache(maxsize=1)
def find_thresholds() -> BranchTables:
    """Locate ``alpha* = argmin rho1`` by golden-section search; ``rho_c = 6``."""
    res = minimize_scalar(rho1, bracket=(1e-3, 2.0, ALPHA_MAX), method="golden", tol=GOLDEN_TOL)
    a = float(res.x)
    return BranchTables(alpha_star=a, rho_star=rho1(a), c_star=c1(a))


def solve_branch(branch: Family | str, rho: float) -> float:
    """Signed ``alpha`` of the requested branch at density ``rho``.

    ``AxialUp`` roots lie in ``[alpha*, 50]``, ``AxialDown`` roots in
    ``[-50, alpha*]`` (positive below 6, zero at 6, negative above) and
    ``Rank1`` roots in ``[0, 50]``.
    """
    branch = Family(branch)
    rho = float(rho)
    tab = find_thresholds()
    if branch is Family.UNIFORM:
        return 0.0
    if branch is Family.RANK1:
        if rho < RHO_C:
            raise DomainError(f"Rank1 branch needs rho >= {RHO_C}, got {rho}")
        if rho == RHO_C:
            return 0.0
        lo, hi = 0.0, ALPHA_MAX
        f = lambda a: rho2(a) - rho  # noqa: E731
    else:
        if rho < tab.rho_star - 1e-12:
            raise DomainError(f"axial branches need rho >= rho* = {tab.rho_star:.6f}, got {rho}")
        if rho1(tab.alpha_star) >= rho:
            return tab.alpha_star
        if branch is Family.AXIAL_DOWN and rho == RHO_C:
            return 0.0
        if branch is Family.AXIAL_UP:
            lo, hi = tab.alpha_star, ALPHA_MAX
        else:
            lo, hi = -ALPHA_MAX, tab.alpha_star
        f = lambda a: rho1(a) - rho  # noqa: E731
    flo, fhi = f(lo), f(hi)
    if flo * fhi > 0:
        raise EnvelopeError(f"no {branch.value} root with |alpha| <= {ALPHA_MAX} at rho={rho}")
    return float(brentq(f, lo, hi, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps, maxiter=500))


# --------------------------------------------------------------------------
# Potential, gradient, Hessian, free energy
# --------------------------------------------------------------------------


def potential_v(rho: float, j) -> float:
    """``V(J) = |J|^2 / 2 - rho ln Z(J)``."""
    j = np.asarray(j, dtype=float)
    return float(0.5 * so3.half_trace_inner(j, j) - rho * vm.log_partition(j))


def gradient_v(rho: float, j) -> np.ndarray:
    """Gradient of ``V`` for the half-trace metric: ``J - rho J[M_J]``."""
    j = np.asarray(j, dtype=float)
    return j - rho * vm.mean_flux(j)


def diagonal_covariance(d) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of ``(A_11, A_22, A_33)`` under ``M_diag(d)``."""
    mom = vm.diagonal_moments(d)
    mean = _DIAG_SIGNS @ mom.m2
    cov = _DIAG_SIGNS @ mom.m4 @ _DIAG_SIGNS.T - np.outer(mean, mean)
    return mean, cov


def hessian_vbar(rho: float, d) -> np.ndarray:
    """Hessian of ``V`` restricted to diagonal matrices at ``diag(d)``.

    Returned as the bilinear form on the basis ``E_11, E_22, E_33``:
    ``H(E_i, E_j) = <E_i, E_j> - rho Cov(A . E_i, A . E_j)``.  The basis has
    Gram matrix ``I/2`` for the half-trace metric; see :func:`metric_eigenvalues`.
    """
    d = np.asarray(d, dtype=float)
    vm._check(np.diag(d))
    _, cov = diagonal_covariance(d)
    return 0.5 * _EYE - 0.25 * rho * cov


def metric_eigenvalues(form: np.ndarray) -> np.ndarray:
    """Eigenvalues of a bilinear form on the diagonal basis relative to its Gram matrix."""
    return np.linalg.eigvalsh(2.0 * np.asarray(form))


def free_energy_w(rho: float, j) -> float:
    """``W(J) = F[rho M_J] = V(J) - |grad V(J)|^2 / 2 + rho ln rho``."""
    if rho <= 0:
        raise DomainError("rho must be positive")
    j = np.asarray(j, dtype=float)
    g = gradient_v(rho, j)
    return float(potential_v(rho, j) - 0.5 * so3.half_trace_inner(g, g) + rho * math.log(rho))


# --------------------------------------------------------------------------
# Equilibrium families and their stability
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EquilibriumClass:
    """A steady state ``rho M_J`` named by its family.

    ``frame`` is the rotation ``A0`` of the axial families; ``vectors`` is the
    unit pair ``(a0, b0)`` of the rank-one family.
    """

    tag: Family
    alpha: float = 0.0
    frame: np.ndarray | None = None
    vectors: tuple[np.ndarray, np.ndarray] | None = None

    def flux_matrix(self) -> np.ndarray:
        if self.tag is Family.UNIFORM:
            return np.zeros((3, 3))
        if self.tag is Family.RANK1:
            a, b = self.vectors
            return self.alpha * SQRT3 * np.outer(a, b)
        return self.alpha * self.frame


@dataclass(frozen=True)
class SignatureReport:
    point: np.ndarray
    eigenvalues: np.ndarray
    signature: str
    is_local_min: bool
    radial: np.ndarray | None = field(default=None, repr=False)


def canonical_point(rho: float, tag: Family | str, alpha: float | None = None) -> np.ndarray:
    """Diagonal representative (as a 3-vector) of a family at ``rho``."""
    tag = Family(tag)
    if tag is Family.UNIFORM:
        return np.zeros(3)
    if alpha is None:
        alpha = solve_branch(tag, rho)
    if tag is Family.AXIAL_UP:
        return alpha * np.ones(3)
    if tag is Family.AXIAL_DOWN:
        return alpha * (np.ones(3) if alpha >= 0 else np.array([-1.0, -1.0, 1.0]))
    return alpha * np.array([SQRT3, 0.0, 0.0])


def _signature(d: np.ndarray, form: np.ndarray) -> tuple[np.ndarray, str]:
    """Metric eigenvalues with the radial direction first, the rest descending."""
    vals, vecs = np.linalg.eigh(2.0 * form)
    if np.linalg.norm(d) > 0:
        radial = int(np.argmax(np.abs(vecs.T @ (d / np.linalg.norm(d)))))
        rest = sorted((v for i, v in enumerate(vals) if i != radial), reverse=True)
        ordered = np.array([vals[radial]] + rest)
    else:
        ordered = np.sort(vals)[::-1]
    sig = "".join("0" if abs(v) < ZERO_EIGENVALUE else ("+" if v > 0 else "-") for v in ordered)
    return ordered, f"({sig})"


def signature_report(rho: float, eq: EquilibriumClass | Family | str) -> SignatureReport:
    """Hessian signature of ``V`` restricted to diagonals at the family's canonical point."""
    tag = eq.tag if isinstance(eq, EquilibriumClass) else Family(eq)
    alpha = eq.alpha if isinstance(eq, EquilibriumClass) else None
    if tag is Family.RANK1 and rho <= RHO_C:
        raise DomainError("the rank-one family exists only for rho > 6")
    d = canonical_point(rho, tag, alpha)
    form = hessian_vbar(rho, d)
    ordered, sig = _signature(d, form)
    return SignatureReport(
        point=np.diag(d),
        eigenvalues=ordered,
        signature=sig,
        is_local_min=bool(np.all(ordered > ZERO_EIGENVALUE)),
        radial=d,
    )


@dataclass(frozen=True)
class ClassifiedEquilibrium:
    equilibrium: EquilibriumClass
    report: SignatureReport
    stable: bool
    order_parameter: float
    residual: float

    @property
    def label(self) -> str:
        return "stable" if self.stable else "unstable"


def compatibility_residual(rho: float, j) -> float:
    """``|J - rho J[M_J]|``; zero exactly at steady states."""
    g = gradient_v(rho, j)
    return float(so3.norm(g))


def families_at(rho: float) -> list[Family]:
    tab = find_thresholds()
    fams = [Family.UNIFORM]
    if rho >= tab.rho_star:
        fams += [Family.AXIAL_UP, Family.AXIAL_DOWN]
    if rho > RHO_C:
        fams.append(Family.RANK1)
    return fams


def classify_all(rho: float) -> list[ClassifiedEquilibrium]:
    """Every family of steady states at ``rho`` with its stability.

    A family is labelled stable when its restricted Hessian is positive
    definite; degenerate (critical) cases count as unstable.
    """
    if rho <= 0:
        raise DomainError("rho must be positive")
    out = []
    e1 = np.array([1.0, 0.0, 0.0])
    for fam in families_at(rho):
        if fam is Family.UNIFORM:
            eq = EquilibriumClass(fam)
        elif fam is Family.RANK1:
            eq = EquilibriumClass(fam, solve_branch(fam, rho), vectors=(e1, e1))
        else:
            eq = EquilibriumClass(fam, solve_branch(fam, rho), frame=np.eye(3))
        rep = signature_report(rho, eq)
        out.append(
            ClassifiedEquilibrium(
                equilibrium=eq,
                report=rep,
                stable=rep.is_local_min,
                order_parameter=abs(eq.alpha) / rho,
                residual=compatibility_residual(rho, eq.flux_matrix()),
            )
        )
    return out
