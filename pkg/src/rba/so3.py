"""Geometry of SO(3) under the half-trace metric ``A . B = Tr(A B^T) / 2``.

Rotations, generic 3x3 matrices and vectors are plain ``numpy`` arrays.
Functions whose name does not say otherwise act on a single matrix; the
``*_batch`` helpers and :func:`exp_so3` accept leading batch dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

ROTATION_TOL = 1e-9

_EYE = np.eye(3)


def hat(u) -> np.ndarray:
    """Return the antisymmetric matrix ``[u]_x`` with ``hat(u) @ v == cross(u, v)``.

    Works on arrays of shape ``(..., 3)``.
    """
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape[:-1] + (3, 3))
    out[..., 0, 1] = -u[..., 2]
    out[..., 0, 2] = u[..., 1]
    out[..., 1, 0] = u[..., 2]
    out[..., 1, 2] = -u[..., 0]
    out[..., 2, 0] = -u[..., 1]
    out[..., 2, 1] = u[..., 0]
    return out


def vee(m) -> np.ndarray:
    """Inverse of :func:`hat` applied to the antisymmetric part of ``m``."""
    m = np.asarray(m, dtype=float)
    return 0.5 * np.stack(
        [m[..., 2, 1] - m[..., 1, 2], m[..., 0, 2] - m[..., 2, 0], m[..., 1, 0] - m[..., 0, 1]],
        axis=-1,
    )


def half_trace_inner(a, b) -> float | np.ndarray:
    """``a . b = Tr(a b^T) / 2``; broadcasts over leading dimensions."""
    return 0.5 * np.einsum("...ij,...ij->...", np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def norm(a) -> float | np.ndarray:
    """Norm induced by :func:`half_trace_inner`."""
    return np.sqrt(half_trace_inner(a, a))


def tangent_project(a, h) -> np.ndarray:
    """Orthogonal projection of ``h`` on the tangent space of SO(3) at ``a``.

    ``P(h) = (h - a h^T a) / 2``. The gradient of ``A -> A . A0`` at ``A`` is
    ``tangent_project(A, A0)``.
    """
    a = np.asarray(a, dtype=float)
    h = np.asarray(h, dtype=float)
    return 0.5 * (h - a @ np.swapaxes(h, -1, -2) @ a)


def is_rotation(r, tol: float = ROTATION_TOL) -> bool:
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        return False
    return bool(np.linalg.norm(r @ r.T - _EYE) < tol and abs(np.linalg.det(r) - 1.0) < tol)


def orthogonality_defect(r) -> np.ndarray:
    """Frobenius norm of ``R R^T - I`` for a stack of matrices."""
    r = np.asarray(r, dtype=float)
    return np.linalg.norm(r @ np.swapaxes(r, -1, -2) - _EYE, axis=(-2, -1))


# --------------------------------------------------------------------------
# Axis-angle and exponential map
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AxisAngle:
    theta: float
    axis: np.ndarray

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        if axis.shape != (3,):
            raise InvalidInputError("axis must be a 3-vector")
        if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise InvalidInputError("axis must have unit norm")
        if not (0.0 <= self.theta <= np.pi):
            raise InvalidInputError("theta must lie in [0, pi]")
        object.__setattr__(self, "axis", axis)


def rodrigues(aa: AxisAngle) -> np.ndarray:
    """Rotation of angle ``aa.theta`` about ``aa.axis``."""
    n = aa.axis
    c, s = np.cos(aa.theta), np.sin(aa.theta)
    return c * _EYE + s * hat(n) + (1.0 - c) * np.outer(n, n)


def exp_so3(omega) -> np.ndarray:
    """Matrix exponential of ``hat(omega)``, vectorised over ``(..., 3)``.

    Uses the closed form ``I + a hat + b hat^2`` with series coefficients
    for small angles.
    """
    omega = np.asarray(omega, dtype=float)
    theta2 = np.einsum("...i,...i->...", omega, omega)
    theta = np.sqrt(theta2)
    small = theta < 1e-4
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta2 / 6.0 + theta2**2 / 120.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta2 / 24.0 + theta2**2 / 720.0, (1.0 - np.cos(safe)) / safe**2)
    k = hat(omega)
    return _EYE + a[..., None, None] * k + b[..., None, None] * (k @ k)


def _canonical_sign(v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    for x in v:
        if abs(x) > tol:
            return v if x > 0 else -v
    return v


def axis_angle(r) -> AxisAngle:
    """Logarithm of a rotation as an angle in ``[0, pi]`` and a unit axis.

    At ``theta = 0`` the axis is ``e1``. At ``theta = pi`` the two admissible
    axes are opposite; the one whose first nonzero component is positive is
    returned.
    """
    r = np.asarray(r, dtype=float)
    w = vee(r)
    s = np.linalg.norm(w)
    c = 0.5 * (np.trace(r) - 1.0)
    theta = float(np.arctan2(s, c))
    if s < 1e-12 and c > 0:
        return AxisAngle(0.0, np.array([1.0, 0.0, 0.0]))
    if c > -0.5:
        axis = w / s
        return AxisAngle(theta, axis)
    # Near pi: n n^T = (sym(R) - cos(theta) I) / (1 - cos(theta)).
    sym = 0.5 * (r + r.T)
    nn = (sym - c * _EYE) / (1.0 - c)
    k = int(np.argmax(np.diag(nn)))
    axis = nn[:, k] / np.sqrt(nn[k, k])
    axis /= np.linalg.norm(axis)
    if s > 1e-10:
        if np.dot(axis, w) < 0:
            axis = -axis
    else:
        theta = np.pi
        axis = _canonical_sign(axis)
    return AxisAngle(min(theta, np.pi), axis)


def log_so3(r) -> np.ndarray:
    """Rotation vector ``theta * axis`` of ``r``."""
    aa = axis_angle(r)
    return aa.theta * aa.axis


# --------------------------------------------------------------------------
# Haar sampling
# --------------------------------------------------------------------------


def haar_sample(rng: np.random.Generator) -> np.ndarray:
    """One Haar-distributed rotation (normalised Gaussian quaternion)."""
    return haar_samples(rng, 1)[0]


def haar_samples(rng: np.random.Generator, n: int) -> np.ndarray:
    from .quaternion import phi_map_batch

    q = rng.standard_normal((n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    return phi_map_batch(q)


# --------------------------------------------------------------------------
# Special singular value decomposition
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Ssvd:
    """``j = p @ diag(d) @ q`` with ``p, q`` in SO(3) and ``d1 >= d2 >= |d3|``."""

    p: np.ndarray
    d: np.ndarray
    q: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.p * self.d) @ self.q


def ssvd_batch(j) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised SSVD over ``(..., 3, 3)``; returns ``(p, d, q)`` arrays."""
    j = np.asarray(j, dtype=float)
    if j.shape[-2:] != (3, 3):
        raise InvalidInputError("expected 3x3 matrices")
    if not np.all(np.isfinite(j)):
        raise InvalidInputError("non-finite matrix entries")
    u, s, vt = np.linalg.svd(j)
    # Move negative determinants of the factors onto the smallest singular value.
    sign = np.sign(np.linalg.det(u)) * np.sign(np.linalg.det(vt))
    u[..., :, 2] *= np.sign(np.linalg.det(u))[..., None]
    vt[..., 2, :] *= np.sign(np.linalg.det(vt))[..., None]
    s[..., 2] *= sign
    return u, s, vt


def ssvd(j) -> Ssvd:
    """Special singular value decomposition of a single 3x3 matrix.

    Computed from the LAPACK SVD; the sign of ``det`` of the right
    factor is moved onto the smallest singular value so that both factors
    are special orthogonal. ``d`` is unique, ``p`` and ``q`` need not be.
    """
    j = np.asarray(j, dtype=float)
    if j.shape != (3, 3):
        raise InvalidInputError("expected a 3x3 matrix")
    p, d, q = ssvd_batch(j)
    return Ssvd(p, d, q)


def _cofactor(x: np.ndarray) -> np.ndarray:
    """Cofactor matrices (``det(x) x^{-T}``) of a stack of 3x3 matrices."""
    a, b, c, d, e, f, g, h, i = np.moveaxis(x.reshape(x.shape[:-2] + (9,)), -1, 0)
    cof = np.stack(
        [e * i - f * h, f * g - d * i, d * h - e * g,
         c * h - b * i, a * i - c * g, b * g - a * h,
         b * f - c * e, c * d - a * f, a * e - b * d],
        axis=-1,
    )
    return cof.reshape(x.shape)


def _newton_polar(x: np.ndarray, max_iter: int = 30) -> np.ndarray | None:
    """Orthogonal polar factor by Newton's iteration ``X <- (X + X^{-T}) / 2``.

    Only used for nearly orthogonal inputs with positive determinant, where
    the iteration converges quadratically; returns None if it does not settle.
    """
    for _ in range(max_iter):
        cof = _cofactor(x)
        det = np.einsum("...i,...i->...", x[..., 0, :], cof[..., 0, :])
        nxt = 0.5 * (x + cof / det[..., None, None])
        if np.max(np.abs(nxt - x), initial=0.0) < 1e-15:
            return nxt
        x = nxt
    return None


def nearest_rotation(j) -> np.ndarray:
    """Closest rotation to ``j`` in the half-trace norm (``p @ q`` of the SSVD).

    When ``d2 == -d3`` the minimiser is not unique and one of them is returned.
    Stacks of nearly orthogonal matrices with positive determinant take a
    Newton polar iteration; everything else goes through the SSVD.
    """
    j = np.asarray(j, dtype=float)
    if j.shape[-2:] == (3, 3) and np.all(np.isfinite(j)):
        gram = np.swapaxes(j, -1, -2) @ j - _EYE
        near = np.sqrt(np.sum(gram * gram, axis=(-2, -1))) < 0.5
        if np.all(near) and np.all(np.linalg.det(j) > 0):
            out = _newton_polar(j)
            if out is not None:
                return out
    p, _, q = ssvd_batch(j)
    return p @ q


def renormalize(r) -> np.ndarray:
    """Project (stacks of) nearly orthogonal matrices back onto SO(3)."""
    return nearest_rotation(r)
