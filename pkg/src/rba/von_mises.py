"""Generalised von Mises laws ``M_J(A) = exp(J . A) / Z(J)`` on SO(3).

Every quantity is reduced to the SSVD diagonal ``d`` of ``J``.  Pulled back
to unit quaternions, ``J . Phi(q) = 1/2 sum_k lam_k q_k^2`` with

    lam = (d1 + d2 + d3, d1 - d2 - d3, -d1 + d2 - d3, -d1 - d2 + d3),

so the law of ``q`` is a Bingham distribution on S^3.  In Hopf coordinates
``q = (sqrt(u) e^{i chi}, sqrt(1-u) e^{i phi})`` the uniform measure is
``du dchi dphi / (4 pi^2)`` and both angular integrals are modified Bessel
functions, leaving a one-dimensional integral over ``u in [0, 1]`` that is
evaluated by Gauss-Legendre rules doubled until they agree.

A direct hyperspherical product rule on S^3 is kept as a second, independent
route (``method="hyperspherical"``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import i0e, i1e, ive

from . import so3
from .errors import ConvergenceError, EnvelopeError, InvalidInputError
from .quaternion import iso_phi, phi_map_batch

NORM_ENVELOPE = 50.0
QUAD_RTOL = 1e-10
MIN_ACCEPTANCE = 1e-6

_BASE_NODES = 32
_MAX_NODES = 1 << 14
HYPERSPHERICAL_GRID = (64, 32, 32)


def bingham_weights(d) -> np.ndarray:
    """Coefficients ``lam`` with ``diag(d) . Phi(q) = sum(lam * q**2) / 2``."""
    d1, d2, d3 = np.asarray(d, dtype=float)
    return np.array([d1 + d2 + d3, d1 - d2 - d3, -d1 + d2 - d3, -d1 - d2 + d3])


@dataclass(frozen=True)
class DiagonalMoments:
    """Bingham moments of the quaternion law attached to ``diag(d)``.

    ``m2[k] = E[q_k^2]``; ``m4[k, l] = E[q_k^2 q_l^2]`` (None when not requested).
    """

    log_z: float
    m2: np.ndarray
    m4: np.ndarray | None
    nodes: int = 0


@lru_cache(maxsize=None)
def _hopf_nodes(n: int):
    x, w = leggauss(n)
    u = 0.5 * (x + 1.0)
    v = 1.0 - u
    return u, v, 0.5 * w, u * u, v * v, u * v


def _hopf_rule(lam: np.ndarray, n: int, fourth: bool = True) -> DiagonalMoments:
    u, v, w, uu, vv, uv = _hopf_nodes(n)
    a1 = 0.25 * (lam[0] - lam[1]) * u
    a2 = 0.25 * (lam[2] - lam[3]) * v
    # exp(b u) I0(a u) = exp(b u + |a u|) i0e(a u); the exponent is affine in u.
    expo = 0.25 * (lam[0] + lam[1]) * u + np.abs(a1) + 0.25 * (lam[2] + lam[3]) * v + np.abs(a2)
    top = max(0.5 * max(lam[0], lam[1]), 0.5 * max(lam[2], lam[3]))
    i0a, i0b = i0e(a1), i0e(a2)
    f = w * np.exp(expo - top) * i0a * i0b
    z = f.sum()
    # Averages over chi (resp. phi) of cos^2, cos^4, ... under exp(a cos 2chi) / I0(a).
    r1a, r1b = i1e(a1) / i0a, i1e(a2) / i0b
    c2a, s2a = 0.5 * (1.0 + r1a), 0.5 * (1.0 - r1a)
    c2b, s2b = 0.5 * (1.0 + r1b), 0.5 * (1.0 - r1b)
    if not fourth:
        rows = np.stack([u * c2a, u * s2a, v * c2b, v * s2b])
        m2 = rows @ f / z
        return DiagonalMoments(float(np.log(z) + top), m2, None, n)
    r2a, r2b = ive(2, a1) / i0a, ive(2, a2) / i0b
    qa, qb = 0.5 * (1.0 + r2a), 0.5 * (1.0 + r2b)
    rows = np.stack(
        [
            u * c2a, u * s2a, v * c2b, v * s2b,
            uu * 0.25 * (1.0 + 2.0 * r1a + qa), uu * 0.25 * (1.0 - 2.0 * r1a + qa), uu * 0.125 * (1.0 - r2a),
            vv * 0.25 * (1.0 + 2.0 * r1b + qb), vv * 0.25 * (1.0 - 2.0 * r1b + qb), vv * 0.125 * (1.0 - r2b),
            uv * c2a * c2b, uv * c2a * s2b, uv * s2a * c2b, uv * s2a * s2b,
        ]
    )
    e = rows @ f / z
    m4 = np.array(
        [
            [e[4], e[6], e[10], e[11]],
            [e[6], e[5], e[12], e[13]],
            [e[10], e[12], e[7], e[9]],
            [e[11], e[13], e[9], e[8]],
        ]
    )
    return DiagonalMoments(float(np.log(z) + top), e[:4], m4, n)


def _changed(a: DiagonalMoments, b: DiagonalMoments) -> float:
    diff = max(abs(a.log_z - b.log_z), float(np.max(np.abs(a.m2 - b.m2))))
    if a.m4 is not None:
        diff = max(diff, float(np.max(np.abs(a.m4 - b.m4))))
    return diff


@lru_cache(maxsize=4096)
def _hopf_cached(lam: tuple[float, float, float, float], fourth: bool) -> DiagonalMoments:
    lam_arr = np.array(lam)
    n = _BASE_NODES
    prev = _hopf_rule(lam_arr, n, fourth)
    while n < _MAX_NODES:
        n *= 2
        cur = _hopf_rule(lam_arr, n, fourth)
        if _changed(prev, cur) < QUAD_RTOL:
            return cur
        prev = cur
    raise ConvergenceError(f"quadrature did not settle for lam={lam}")


@lru_cache(maxsize=8)
def _hyperspherical_grid(n_psi: int, n_theta: int, n_phi: int):
    def gl(n, lo, hi):
        x, w = leggauss(n)
        return 0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * (hi - lo) * w

    ps, pw = gl(n_psi, 0.0, np.pi)
    ts, tw = gl(n_theta, 0.0, np.pi)
    fs, fw = gl(n_phi, 0.0, 2.0 * np.pi)
    p, t, f = np.meshgrid(ps, ts, fs, indexing="ij")
    weight = np.einsum("i,j,k->ijk", pw * np.sin(ps) ** 2, tw * np.sin(ts), fw) / (2.0 * np.pi**2)
    q = np.stack(
        [np.cos(p), np.sin(p) * np.cos(t), np.sin(p) * np.sin(t) * np.cos(f), np.sin(p) * np.sin(t) * np.sin(f)]
    )
    return (q**2).reshape(4, -1), weight.ravel()


def _hyperspherical_rule(lam: np.ndarray, grid: tuple[int, int, int]) -> DiagonalMoments:
    q2, w = _hyperspherical_grid(*grid)
    top = 0.5 * lam.max()
    f = w * np.exp(0.5 * (lam @ q2) - top)
    z = f.sum()
    f = f / z
    m2 = q2 @ f
    m4 = (q2 * f) @ q2.T
    return DiagonalMoments(float(np.log(z) + top), m2, m4, q2.shape[1])


def hyperspherical_moments(
    d, grid: tuple[int, int, int] = HYPERSPHERICAL_GRID, max_doublings: int = 2
) -> DiagonalMoments:
    """Moments from a Gauss-Legendre product rule in hyperspherical angles.

    Coordinates ``(psi, theta, phi)`` with weight ``sin^2 psi sin theta / (2 pi^2)``.
    Starting from ``grid``, the angular node counts are doubled until the
    moments change by less than ``QUAD_RTOL`` or ``max_doublings`` is used up.
    """
    lam = bingham_weights(d)
    prev = _hyperspherical_rule(lam, grid)
    for _ in range(max_doublings):
        grid = (grid[0], 2 * grid[1], 2 * grid[2])
        cur = _hyperspherical_rule(lam, grid)
        if _changed(prev, cur) < QUAD_RTOL:
            return cur
        prev = cur
    return prev


def diagonal_moments(d, method: str = "hopf", fourth: bool = True) -> DiagonalMoments:
    """Bingham moments for ``diag(d)``; ``fourth=False`` skips ``m4`` (Hopf route only)."""
    d = np.asarray(d, dtype=float)
    if method == "hopf":
        lam = bingham_weights(d) + 0.0
        return _hopf_cached(tuple(float(x) for x in lam), fourth)
    if method == "hyperspherical":
        return hyperspherical_moments(d)
    raise InvalidInputError(f"unknown quadrature method {method!r}")


def diagonal_flux_entries(mom: DiagonalMoments) -> np.ndarray:
    """Diagonal of ``E[Phi(q)]``; equals ``phi^-1(diag(m2) - I/4)``."""
    w, x, y, z = mom.m2
    return np.array([w + x - y - z, w - x + y - z, w - x - y + z])


def diagonal_flux(mom: DiagonalMoments) -> np.ndarray:
    return np.diag(diagonal_flux_entries(mom))


def _quartic_expectation(mom: DiagonalMoments, s: np.ndarray, t: np.ndarray) -> float:
    """``E[(q.s q)(q.t q)]`` for symmetric ``s, t`` under a diagonal Bingham law."""
    sd, td = np.diag(s), np.diag(t)
    off = s * t * mom.m4
    return float(sd @ mom.m4 @ td + 2.0 * (off.sum() - np.trace(off)))


# --------------------------------------------------------------------------
# Public operations on a general parameter J
# --------------------------------------------------------------------------


def _check(j) -> np.ndarray:
    j = np.asarray(j, dtype=float)
    if j.shape != (3, 3):
        raise InvalidInputError("expected a 3x3 matrix")
    if not np.all(np.isfinite(j)):
        raise InvalidInputError("non-finite matrix entries")
    if so3.norm(j) > NORM_ENVELOPE:
        raise EnvelopeError(f"|J| = {so3.norm(j):.3g} exceeds the quadrature envelope {NORM_ENVELOPE}")
    return j


def log_partition(j, method: str = "hopf") -> float:
    """``ln Z(J)`` with ``Z(J) = int exp(J . A) dA`` over Haar measure."""
    j = _check(j)
    return diagonal_moments(so3.ssvd(j).d, method, fourth=False).log_z


def mean_flux(j, method: str = "hopf") -> np.ndarray:
    """``J[M_J] = int A M_J(A) dA``; equivariant: ``J[M_{PJQ}] = P J[M_J] Q``."""
    j = _check(j)
    s = so3.ssvd(j)
    return s.p @ diagonal_flux(diagonal_moments(s.d, method, fourth=False)) @ s.q


def cross_moment(j, h1, h2, method: str = "hopf") -> float:
    """``int (A . h1)(A . h2) M_J(A) dA`` (raw, not centred)."""
    j = _check(j)
    s = so3.ssvd(j)
    mom = diagonal_moments(s.d, method)
    # A . H = A' . (P^T H Q^T) with A' ~ M_diag(d), and A' . H' = 2 q . phi(H') q.
    s1 = iso_phi(s.p.T @ np.asarray(h1, dtype=float) @ s.q.T)
    s2 = iso_phi(s.p.T @ np.asarray(h2, dtype=float) @ s.q.T)
    return 4.0 * _quartic_expectation(mom, s1, s2)


def second_moment(j, h, method: str = "hopf") -> float:
    """``int (A . h)^2 M_J(A) dA``."""
    return cross_moment(j, h, h, method)


@dataclass(frozen=True)
class MomentReport:
    flux: np.ndarray
    second_moment_form: Callable[[np.ndarray], float] = field(repr=False)


def moment_report(j) -> MomentReport:
    j = _check(j)
    return MomentReport(mean_flux(j), lambda h: second_moment(j, h))


@dataclass(frozen=True)
class VonMises:
    """A von Mises law with its SSVD and log-partition cached."""

    j: np.ndarray
    svd: so3.Ssvd = field(init=False, repr=False)
    log_z: float = field(init=False)

    def __post_init__(self):
        j = _check(self.j)
        object.__setattr__(self, "j", j)
        s = so3.ssvd(j)
        object.__setattr__(self, "svd", s)
        object.__setattr__(self, "log_z", diagonal_moments(s.d).log_z)

    def density(self, a) -> np.ndarray:
        """Density with respect to Haar measure; ``a`` may be a stack."""
        return np.exp(so3.half_trace_inner(self.j, a) - self.log_z)

    @property
    def flux(self) -> np.ndarray:
        return self.svd.p @ diagonal_flux(diagonal_moments(self.svd.d)) @ self.svd.q

    def second_moment(self, h) -> float:
        return second_moment(self.j, h)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return sample(self.j, rng, n)


def acceptance_rate(j) -> float:
    """Expected acceptance of the Haar-proposal rejection sampler, ``Z / exp(max J.A)``."""
    j = _check(j)
    d = so3.ssvd(j).d
    return float(np.exp(diagonal_moments(d).log_z - 0.5 * d.sum()))


def sample(j, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Exact draws from ``M_J`` by rejection from Haar proposals.

    A Haar proposal ``A`` is accepted with probability
    ``exp(J . A - max J . A)``; the maximum over SO(3) is ``(d1 + d2 + d3) / 2``.
    Returns one rotation when ``n`` is None, else an ``(n, 3, 3)`` stack.
    """
    j = _check(j)
    s = so3.ssvd(j)
    lam = bingham_weights(s.d)
    rate = float(np.exp(diagonal_moments(s.d).log_z - 0.5 * lam.max()))
    if rate < MIN_ACCEPTANCE:
        raise EnvelopeError(f"rejection sampler acceptance {rate:.2e} below {MIN_ACCEPTANCE:g}")
    want = 1 if n is None else int(n)
    out = []
    have = 0
    while have < want:
        batch = max(64, int(1.2 * (want - have) / rate))
        q = rng.standard_normal((batch, 4))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        log_acc = 0.5 * ((q * q) @ lam - lam.max())
        keep = np.log(rng.random(batch)) < log_acc
        out.append(q[keep])
        have += int(keep.sum())
    q = np.concatenate(out)[:want]
    a = s.p @ phi_map_batch(q) @ s.q
    return a[0] if n is None else a


def empirical_flux(rotations) -> np.ndarray:
    """Mean ``(1/N) sum A_k`` of a stack of rotations."""
    r = np.asarray(rotations, dtype=float)
    if r.ndim != 3 or r.shape[1:] != (3, 3):
        raise InvalidInputError("expected an (N, 3, 3) stack")
    if r.shape[0] == 0:
        raise InvalidInputError("empty ensemble")
    return r.mean(axis=0)


def kl_von_mises(rho: float, j1, j2) -> float:
    """Relative entropy ``H(rho M_J1 | rho M_J2)``.

    Equal to ``rho [J[M_J1] . (J1 - J2) + ln Z(J2) - ln Z(J1)]``.
    """
    if rho <= 0:
        raise InvalidInputError("rho must be positive")
    j1, j2 = _check(j1), _check(j2)
    val = so3.half_trace_inner(mean_flux(j1), j1 - j2) + log_partition(j2) - log_partition(j1)
    return float(rho * val)
