"""Unit quaternions, the double cover onto SO(3), and the Q-tensor isomorphism.

Quaternions are ``(w, x, y, z)`` arrays. ``phi_map(q)`` is the matrix of
``u -> q u q*`` acting on imaginary quaternions. ``iso_phi`` sends a 3x3
matrix ``J`` to the traceless symmetric 4x4 matrix of the quadratic form
``q -> (J . phi_map(q)) / 2``.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError

UNIT_TOL = 1e-9


def _as_quat(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != 4:
        raise InvalidInputError("quaternions have 4 components")
    return q


def quat_mul(p, q) -> np.ndarray:
    """Hamilton product, broadcasting over leading dimensions."""
    p, q = _as_quat(p), _as_quat(q)
    pw, px, py, pz = np.moveaxis(p, -1, 0)
    qw, qx, qy, qz = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            pw * qw - px * qx - py * qy - pz * qz,
            pw * qx + px * qw + py * qz - pz * qy,
            pw * qy - px * qz + py * qw + pz * qx,
            pw * qz + px * qy - py * qx + pz * qw,
        ],
        axis=-1,
    )


def quat_conj(q) -> np.ndarray:
    q = _as_quat(q)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def _phi_homogeneous(q: np.ndarray) -> np.ndarray:
    """Matrix of ``u -> q u q*``; homogeneous of degree two in ``q``."""
    w, x, y, z = np.moveaxis(q, -1, 0)
    out = np.empty(q.shape[:-1] + (3, 3))
    out[..., 0, 0] = w * w + x * x - y * y - z * z
    out[..., 0, 1] = 2 * (x * y - w * z)
    out[..., 0, 2] = 2 * (x * z + w * y)
    out[..., 1, 0] = 2 * (x * y + w * z)
    out[..., 1, 1] = w * w - x * x + y * y - z * z
    out[..., 1, 2] = 2 * (y * z - w * x)
    out[..., 2, 0] = 2 * (x * z - w * y)
    out[..., 2, 1] = 2 * (y * z + w * x)
    out[..., 2, 2] = w * w - x * x - y * y + z * z
    return out


def phi_map(q) -> np.ndarray:
    """Rotation matrix of the unit quaternion ``q``; ``phi_map(-q) == phi_map(q)``."""
    q = _as_quat(q)
    if q.shape != (4,):
        raise InvalidInputError("expected a single quaternion")
    if not np.all(np.isfinite(q)) or abs(np.dot(q, q) - 1.0) > UNIT_TOL:
        raise InvalidInputError("quaternion is not of unit norm")
    return _phi_homogeneous(q)


def phi_map_batch(q) -> np.ndarray:
    """Unchecked :func:`phi_map` over an ``(n, 4)`` array of unit quaternions."""
    return _phi_homogeneous(_as_quat(q))


def canonical(q) -> np.ndarray:
    """Representative of ``+-q`` whose first nonzero component is positive."""
    q = np.array(_as_quat(q), dtype=float)
    for x in q:
        if abs(x) > 1e-15:
            return q if x > 0 else -q
    return q


def quaternion_of(a) -> np.ndarray:
    """Unit quaternion ``q`` with ``phi_map(q) == a`` (canonical sign).

    Shepperd's method: the largest of ``4w^2, 4x^2, 4y^2, 4z^2`` is taken as
    pivot, which keeps the extraction well conditioned for every trace.
    """
    m = np.asarray(a, dtype=float)
    if m.shape != (3, 3):
        raise InvalidInputError("expected a 3x3 rotation")
    t = np.trace(m)
    cand = np.array([1 + t, 1 + 2 * m[0, 0] - t, 1 + 2 * m[1, 1] - t, 1 + 2 * m[2, 2] - t])
    k = int(np.argmax(cand))
    r = np.sqrt(max(cand[k], 0.0))
    s = 0.5 / r
    if k == 0:
        q = [0.5 * r, (m[2, 1] - m[1, 2]) * s, (m[0, 2] - m[2, 0]) * s, (m[1, 0] - m[0, 1]) * s]
    elif k == 1:
        q = [(m[2, 1] - m[1, 2]) * s, 0.5 * r, (m[0, 1] + m[1, 0]) * s, (m[0, 2] + m[2, 0]) * s]
    elif k == 2:
        q = [(m[0, 2] - m[2, 0]) * s, (m[0, 1] + m[1, 0]) * s, 0.5 * r, (m[1, 2] + m[2, 1]) * s]
    else:
        q = [(m[1, 0] - m[0, 1]) * s, (m[0, 2] + m[2, 0]) * s, (m[1, 2] + m[2, 1]) * s, 0.5 * r]
    q = np.asarray(q)
    return canonical(q / np.linalg.norm(q))


# --------------------------------------------------------------------------
# The isomorphism M3(R) -> traceless symmetric 4x4 matrices
# --------------------------------------------------------------------------

# Coordinates of a traceless symmetric 4x4 matrix t:
# (t00, t11, t22, t01, t02, t03, t12, t13, t23), with t33 = -(t00 + t11 + t22).
_OFFDIAG = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


def _qtensor_coords(t: np.ndarray) -> np.ndarray:
    return np.array([t[0, 0], t[1, 1], t[2, 2]] + [t[i, j] for i, j in _OFFDIAG])


def _qtensor_from_coords(c: np.ndarray) -> np.ndarray:
    t = np.zeros((4, 4))
    t[0, 0], t[1, 1], t[2, 2] = c[:3]
    t[3, 3] = -(c[0] + c[1] + c[2])
    for (i, j), v in zip(_OFFDIAG, c[3:]):
        t[i, j] = t[j, i] = v
    return t


def _polarize(j: np.ndarray) -> np.ndarray:
    """Matrix of the symmetric bilinear form polarising ``q -> (j . Phi(q)) / 2``."""
    basis = np.eye(4)

    def form(q):
        return 0.25 * np.sum(j * _phi_homogeneous(q))

    b = np.empty((4, 4))
    for i in range(4):
        b[i, i] = form(basis[i])
    for i in range(4):
        for k in range(i + 1, 4):
            b[i, k] = b[k, i] = 0.5 * (form(basis[i] + basis[k]) - b[i, i] - b[k, k])
    return b


def _build_iso_matrix() -> np.ndarray:
    cols = []
    for idx in range(9):
        e = np.zeros(9)
        e[idx] = 1.0
        cols.append(_qtensor_coords(_polarize(e.reshape(3, 3))))
    return np.array(cols).T


_ISO = _build_iso_matrix()
_ISO_INV = np.linalg.inv(_ISO)


def iso_phi(j) -> np.ndarray:
    """Q-tensor ``phi(J)`` with ``q . phi(J) q == (J . phi_map(q)) / 2``."""
    j = np.asarray(j, dtype=float)
    if j.shape != (3, 3):
        raise InvalidInputError("expected a 3x3 matrix")
    return _qtensor_from_coords(_ISO @ j.ravel())


def iso_phi_inv(t) -> np.ndarray:
    """Inverse of :func:`iso_phi` on traceless symmetric 4x4 matrices."""
    t = np.asarray(t, dtype=float)
    if t.shape != (4, 4):
        raise InvalidInputError("expected a 4x4 matrix")
    if np.max(np.abs(t - t.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(t))):
        raise InvalidInputError("Q-tensor must be symmetric")
    if abs(np.trace(t)) > 1e-12 * max(1.0, np.max(np.abs(t))):
        raise InvalidInputError("Q-tensor must be traceless")
    return (_ISO_INV @ _qtensor_coords(t)).reshape(3, 3)


def qtensor_of(q) -> np.ndarray:
    """``q (x) q - I4 / 4``."""
    q = _as_quat(q)
    return np.outer(q, q) - 0.25 * np.eye(4)
