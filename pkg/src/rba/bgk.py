"""Flux dynamics of the BGK model, ``dJ/dt = rho J[M_J] - J``.

The flow is the gradient flow of ``V`` and preserves the special singular
value decomposition: writing ``J(t) = P0 diag(d(t)) Q0`` only the diagonal
``d`` moves.  With ``Vbar(d) = V(diag(d))`` one has
``d'(t) = -2 grad_d Vbar(d)``, the factor 2 coming from the half-trace metric
(the basis ``E_11, E_22, E_33`` has squared norm 1/2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import so3
from . import von_mises as vm
from .equilibria import RHO_C, EquilibriumClass, Family, find_thresholds, solve_branch
from .errors import ConvergenceError, DomainError, InvalidInputError

BGK_DT = 0.01
RHS_TOL = 1e-10
MATCH_TOL = 1e-5
ORDER_TOL = 1e-9
MONOTONE_TOL = 1e-10
CRITICAL_TOL = 1e-9
SQRT3 = math.sqrt(3.0)


def _moments(rho: float, d: np.ndarray) -> tuple[np.ndarray, float]:
    vm._check(np.diag(d))
    mom = vm.diagonal_moments(d, fourth=False)
    rhs = rho * vm.diagonal_flux_entries(mom) - d
    v = 0.25 * float(d @ d) - rho * mom.log_z
    return rhs, v


def bgk_rhs(rho: float, d) -> np.ndarray:
    """Diagonal of ``rho J[M_diag(d)] - diag(d)``."""
    d = np.asarray(d, dtype=float)
    if d.shape != (3,):
        raise InvalidInputError("expected a 3-vector")
    return _moments(rho, d)[0]


def potential_vbar(rho: float, d) -> float:
    """``V(diag(d)) = |d|^2 / 4 - rho ln Z(diag(d))``."""
    d = np.asarray(d, dtype=float)
    return _moments(rho, d)[1]


def rhs_norm(r: np.ndarray) -> float:
    """Half-trace norm of ``diag(r)``."""
    return math.sqrt(0.5 * float(r @ r))


def is_ordered(d, tol: float = ORDER_TOL) -> bool:
    return bool(d[0] >= d[1] - tol and d[1] >= abs(d[2]) - tol)


@dataclass(frozen=True)
class BgkTrajectory:
    rho: float
    times: np.ndarray
    d_values: np.ndarray
    v_values: np.ndarray
    rhs_norms: np.ndarray
    converged: bool

    @property
    def status(self) -> str:
        return "converged" if self.converged else "not_converged"

    @property
    def limit(self) -> np.ndarray:
        return self.d_values[-1]

    def ordering_preserved(self, tol: float = ORDER_TOL) -> bool:
        return all(is_ordered(d, tol) for d in self.d_values)

    def v_monotone(self, tol: float = MONOTONE_TOL) -> bool:
        return bool(np.all(np.diff(self.v_values) <= tol))


def integrate(
    rho: float,
    d0,
    t_max: float = 200.0,
    dt: float = BGK_DT,
    tol: float = RHS_TOL,
    require_ordered: bool = True,
) -> BgkTrajectory:
    """Classical RK4 for the diagonal flow, stopping once ``|rhs| < tol``.

    Every step is stored.  A trajectory that reaches ``t_max`` is returned
    with ``converged=False``.
    """
    d = np.array(d0, dtype=float)
    if d.shape != (3,):
        raise InvalidInputError("expected a 3-vector")
    if require_ordered and not is_ordered(d):
        raise InvalidInputError("initial diagonal must satisfy d1 >= d2 >= |d3|")
    if rho < 0:
        raise DomainError("rho must be non-negative")
    n_max = int(math.ceil(t_max / dt - 1e-9))
    times, ds, vs, norms = [], [], [], []
    k1, v = _moments(rho, d)
    converged = False
    for n in range(n_max + 1):
        times.append(n * dt)
        ds.append(d.copy())
        vs.append(v)
        norms.append(rhs_norm(k1))
        if norms[-1] < tol:
            converged = True
            break
        if n == n_max:
            break
        k2 = _moments(rho, d + 0.5 * dt * k1)[0]
        k3 = _moments(rho, d + 0.5 * dt * k2)[0]
        k4 = _moments(rho, d + dt * k3)[0]
        d = d + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        k1, v = _moments(rho, d)
    return BgkTrajectory(
        rho=float(rho),
        times=np.array(times),
        d_values=np.array(ds),
        v_values=np.array(vs),
        rhs_norms=np.array(norms),
        converged=converged,
    )


# --------------------------------------------------------------------------
# Limits
# --------------------------------------------------------------------------


def candidate_limits(rho: float) -> list[tuple[Family, float, np.ndarray]]:
    """Diagonal steady states in the ordered cone: ``(family, alpha, d)``."""
    tab = find_thresholds()
    out = [(Family.UNIFORM, 0.0, np.zeros(3))]
    if rho >= tab.rho_star:
        up = solve_branch(Family.AXIAL_UP, rho)
        down = solve_branch(Family.AXIAL_DOWN, rho)
        out.append((Family.AXIAL_UP, up, up * np.ones(3)))
        if rho <= RHO_C:
            out.append((Family.AXIAL_DOWN, down, down * np.ones(3)))
        else:
            out.append((Family.AXIAL_DOWN, down, down * np.array([-1.0, -1.0, 1.0])))
    if rho > RHO_C:
        a2 = solve_branch(Family.RANK1, rho)
        out.append((Family.RANK1, a2, a2 * np.array([SQRT3, 0.0, 0.0])))
    return out


@dataclass(frozen=True)
class LimitClassification:
    """Outcome of following the flow from ``j0``.

    ``equilibrium`` is ``None`` when the limit matches no known family.
    """

    equilibrium: EquilibriumClass | None
    j_limit: np.ndarray
    d_limit: np.ndarray
    trajectory: BgkTrajectory
    p0: np.ndarray
    q0: np.ndarray
    critical: bool
    distance: float

    @property
    def tag(self) -> str:
        return self.equilibrium.tag.value if self.equilibrium else "Unclassified"

    @property
    def status(self) -> str:
        if not self.trajectory.converged:
            return "not_converged"
        return "classified" if self.equilibrium else "unclassified"


def is_critical(rho: float) -> bool:
    tab = find_thresholds()
    return abs(rho - tab.rho_star) < CRITICAL_TOL or abs(rho - RHO_C) < CRITICAL_TOL


def classify_limit(rho: float, j0, t_max: float = 400.0, match_tol: float = MATCH_TOL) -> LimitClassification:
    """Follow the flow from ``j0`` and name its limit.

    ``j0 = P0 diag(d0) Q0`` is decomposed once; the diagonal flow is integrated
    from ``d0`` and the limit ``d_inf`` compared with the steady states of
    :func:`candidate_limits`.  Frames: ``A0 = P0 Q0`` for the axial families,
    ``(a0, b0) = (P0 e1, Q0^T e1)`` for the rank-one family.
    """
    j0 = np.asarray(j0, dtype=float)
    vm._check(j0)
    dec = so3.ssvd(j0)
    traj = integrate(rho, dec.d, t_max=t_max)
    # Rounding can push a flow started on an unstable boundary of the ordered
    # cone across it; the SSVD of the limit restores the canonical form.
    lim = so3.ssvd(np.diag(traj.limit))
    p0, q0 = dec.p @ lim.p, lim.q @ dec.q
    d_inf = lim.d
    best, dist = None, math.inf
    for fam, alpha, d in candidate_limits(rho):
        gap = float(np.max(np.abs(d_inf - d)))
        if gap < dist:
            best, dist = (fam, alpha), gap
    eq = None
    if best is not None and dist < match_tol:
        fam, alpha = best
        if fam is Family.UNIFORM:
            eq = EquilibriumClass(fam)
        elif fam is Family.RANK1:
            eq = EquilibriumClass(fam, alpha, vectors=(p0[:, 0].copy(), q0[0, :].copy()))
        else:
            eq = EquilibriumClass(fam, alpha, frame=p0 @ q0)
    return LimitClassification(
        equilibrium=eq,
        j_limit=(p0 * d_inf) @ q0,
        d_limit=d_inf,
        trajectory=traj,
        p0=p0,
        q0=q0,
        critical=is_critical(rho),
        distance=dist,
    )


# --------------------------------------------------------------------------
# Exponential decay
# --------------------------------------------------------------------------


class FitError(ConvergenceError):
    """Raised when a decay rate cannot be fitted."""


def decay_rate_fit(traj: BgkTrajectory, decades: float = 1.0, floor_rel: float = 1e-11) -> float:
    """Exponential rate of ``V(t) - V_inf`` near the end of a converged trajectory.

    ``V_inf`` is the last stored value.  Differences below
    ``floor_rel * max(1, |V_inf|)`` are rounding noise; the rate is the
    negated least-squares slope of ``ln(V - V_inf)`` over the ``decades``
    just above that floor.
    """
    if not traj.converged:
        raise FitError("trajectory did not converge")
    v_inf = traj.v_values[-1]
    gap = traj.v_values - v_inf
    floor = floor_rel * max(1.0, abs(v_inf))
    hi = floor * 10.0**decades
    above = np.nonzero(gap > floor)[0]
    if above.size == 0:
        raise FitError("trajectory starts at its limit")
    last = above[-1]
    first = np.nonzero(gap[: last + 1] > hi)[0]
    start = first[-1] + 1 if first.size else 0
    window = slice(start, last + 1)
    t, g = traj.times[window], gap[window]
    if t.size < 3:
        raise FitError("too few points in the fitting window")
    if np.any(np.diff(g) > 0):
        raise FitError("V is not monotone in the fitting window")
    slope = np.polyfit(t, np.log(g), 1)[0]
    rate = -float(slope)
    if not rate > 0:
        raise FitError(f"non-positive decay rate {rate:g}")
    return rate


def linearized_rate(rho: float, d) -> float:
    """Rate ``2 lambda_min`` predicted by the restricted Hessian at a stable point."""
    from .equilibria import hessian_vbar, metric_eigenvalues

    return 2.0 * float(np.min(metric_eigenvalues(hessian_vbar(rho, d))))
