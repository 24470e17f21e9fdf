"""Riemannian primitives on Kendall's pre-shape sphere and on SO(3).

Conventions
-----------
* A landmark configuration is an ``(n, 3)`` array, one row per joint.
* A pre-shape is an ``(n - 1, 3)`` array of Helmert-centred pseudo-landmarks
  with unit Frobenius norm.  Its flat view is the row-major ravel, i.e.
  ``[x1, y1, z1, x2, ...]``.
* Tangent vectors live in the same ambient ``(n - 1, 3)`` space as the base
  point and satisfy ``<v, base> == 0``.
* Rotations act on the right of row-stored configurations: ``shape @ R.T``.

All functions are pure and work in float64.
"""

import numpy as np

from .errors import AntipodalError, DegenerateShapeError, DimensionError, TangencyError

SMALL_ANGLE = 1e-7
ANTIPODAL_MARGIN = 1e-7
TANGENCY_TOL = 1e-8
DEGENERATE_RTOL = 1e-12


def _inner(a, b):
    return float(np.dot(np.ravel(a), np.ravel(b)))


def _norm(a):
    return float(np.linalg.norm(np.ravel(a)))


def helmert_submatrix(n):
    """Helmert matrix of order ``n`` with its constant first row removed.

    Row ``k`` (1-based) is ``(1, ..., 1, -k, 0, ..., 0) / sqrt(k (k + 1))`` with
    ``k`` leading ones, so the rows are orthonormal and orthogonal to the
    all-ones vector.
    """
    n = int(n)
    if n < 2:
        raise DimensionError(f"Helmert submatrix needs n >= 2, got {n}")
    H = np.zeros((n - 1, n))
    for k in range(1, n):
        scale = 1.0 / np.sqrt(k * (k + 1.0))
        H[k - 1, :k] = scale
        H[k - 1, k] = -k * scale
    return H


def center(X):
    """Helmert-centred coordinates ``H X`` of an ``(n, 3)`` configuration."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != 3 or X.shape[0] < 2:
        raise DimensionError(f"expected an (n, 3) landmark array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DimensionError("landmark coordinates must be finite")
    return helmert_submatrix(X.shape[0]) @ X


def to_preshape(X):
    """Project an ``(n, 3)`` landmark configuration onto the pre-shape sphere.

    Raises :class:`DegenerateShapeError` when all landmarks coincide (to
    rounding, relative to the coordinate magnitude).
    """
    Z = center(X)
    size = _norm(Z)
    if size <= DEGENERATE_RTOL * float(np.abs(X).max()) or size == 0.0:
        raise DegenerateShapeError("configuration has zero norm after centering")
    return Z / size


def geodesic_distance(x, y):
    """Arc length between two pre-shapes, in ``[0, pi]``.

    Equal to ``arccos(<x, y>)`` for unit vectors, but evaluated as
    ``2 atan2(|x - y|, |x + y|)`` which keeps full relative precision near
    0 and pi, where arccos cannot resolve angles below ~1.5e-8.
    """
    x = np.ravel(x)
    y = np.ravel(y)
    return float(2.0 * np.arctan2(np.linalg.norm(x - y), np.linalg.norm(x + y)))


def log_map(x, y):
    """Tangent vector at ``x`` pointing along the geodesic to ``y``.

    Its norm equals the geodesic distance.  Raises :class:`AntipodalError`
    when ``y`` is (numerically) the antipode of ``x``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {y.shape}")
    cos_t = float(np.clip(_inner(x, y), -1.0, 1.0))
    theta = geodesic_distance(x, y)
    if np.pi - theta < ANTIPODAL_MARGIN:
        raise AntipodalError("log map undefined between antipodal pre-shapes")
    direction = y - cos_t * x
    if theta < SMALL_ANGLE:
        # theta / sin(theta) -> 1
        return direction
    return (theta / np.sin(theta)) * direction


def exp_map(x, v):
    """Follow the geodesic from ``x`` with initial velocity ``v`` for unit time."""
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if x.shape != v.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {v.shape}")
    if abs(_inner(x, v)) > TANGENCY_TOL:
        raise TangencyError(f"vector is not tangent at base point (<v, x> = {_inner(x, v):.3e})")
    t = _norm(v)
    if t < SMALL_ANGLE:
        return (1.0 - 0.5 * t * t) * x + (1.0 - t * t / 6.0) * v
    return np.cos(t) * x + (np.sin(t) / t) * v


def parallel_transport(x, y, u):
    """Transport ``u`` (tangent at ``x``) along the geodesic to ``y``.

    Uses ``u - <log_x y, u> / theta**2 * (log_y x + log_x y)``, which is an
    isometry between the two tangent spaces.  For ``theta`` below
    ``SMALL_ANGLE`` the algebraically equal form
    ``u - <y, u> / (1 + <x, y>) * (x + y)`` avoids dividing by ``theta**2``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if not (x.shape == y.shape == u.shape):
        raise DimensionError(f"shape mismatch {x.shape}, {y.shape}, {u.shape}")
    theta = geodesic_distance(x, y)
    if np.pi - theta < ANTIPODAL_MARGIN:
        raise AntipodalError("parallel transport undefined between antipodal pre-shapes")
    if theta == 0.0:
        return u.copy()
    if theta < SMALL_ANGLE:
        return u - (_inner(y, u) / (1.0 + _inner(x, y))) * (x + y)
    v = log_map(x, y)
    w = log_map(y, x)
    return u - (_inner(v, u) / theta**2) * (w + v)


def rotate(shape, R):
    """Apply rotation ``R`` to every row (point) of ``shape``."""
    return np.asarray(shape, dtype=np.float64) @ np.asarray(R, dtype=np.float64).T


def procrustes_rotation(x, y, full_output=False, tol=1e-12):
    """Rotation ``R`` in SO(3) minimising ``||x - y @ R.T||_F``.

    Solved in closed form from the SVD of the 3x3 cross-covariance
    ``x.T @ y``; the last singular direction is flipped when needed so that
    ``det(R) = +1``.

    With ``full_output=True`` returns ``(R, degenerate)`` where ``degenerate``
    flags a cross-covariance whose optimum is not unique (rank below two, or
    a reflection fix applied across a repeated smallest singular value).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2 or x.shape[1] != 3:
        raise DimensionError(f"expected matching (k, 3) arrays, got {x.shape} and {y.shape}")
    U, s, Vt = np.linalg.svd(x.T @ y)
    d = 1.0 if np.linalg.det(U @ Vt) >= 0.0 else -1.0
    R = U @ np.diag([1.0, 1.0, d]) @ Vt
    if not full_output:
        return R
    scale = max(s[0], np.finfo(float).tiny)
    degenerate = bool(s[1] <= tol * scale or (d < 0 and s[1] - s[2] <= tol * scale))
    return R, degenerate


def _rx(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(b):
    c, s = np.cos(b), np.sin(b)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rz(g):
    c, s = np.cos(g), np.sin(g)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _drx(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[0.0, 0.0, 0.0], [0.0, -s, -c], [0.0, c, -s]])


def _dry(b):
    c, s = np.cos(b), np.sin(b)
    return np.array([[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]])


def _drz(g):
    c, s = np.cos(g), np.sin(g)
    return np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])


def rotation_from_euler(alpha, beta=None, gamma=None):
    """``Rz(gamma) @ Ry(beta) @ Rx(alpha)``; angles in radians about x, y, z.

    Accepts either three scalars or a single length-3 sequence.
    """
    if beta is None and gamma is None:
        alpha, beta, gamma = np.asarray(alpha, dtype=np.float64)
    return _rz(gamma) @ _ry(beta) @ _rx(alpha)


def rotation_euler_jacobian(alpha, beta=None, gamma=None):
    """Partial derivatives of :func:`rotation_from_euler` w.r.t. each angle.

    Returns a ``(3, 3, 3)`` array stacked as ``(dR/dalpha, dR/dbeta, dR/dgamma)``.
    """
    if beta is None and gamma is None:
        alpha, beta, gamma = np.asarray(alpha, dtype=np.float64)
    Rx, Ry, Rz = _rx(alpha), _ry(beta), _rz(gamma)
    return np.stack([Rz @ Ry @ _drx(alpha), Rz @ _dry(beta) @ Rx, _drz(gamma) @ Ry @ Rx])


def batch_rotation_from_euler(angles):
    """Vectorised :func:`rotation_from_euler` over an ``(..., 3)`` angle array."""
    R, _ = _batch_euler(np.asarray(angles, dtype=np.float64), jacobian=False)
    return R


def batch_rotation_euler_jacobian(angles):
    """Rotations ``(..., 3, 3)`` and their angle partials ``(..., 3, 3, 3)``.

    The jacobian's axis ``-3`` indexes the angle (alpha, beta, gamma).
    """
    return _batch_euler(np.asarray(angles, dtype=np.float64), jacobian=True)


def _batch_euler(angles, jacobian):
    if angles.shape[-1:] != (3,):
        raise DimensionError(f"angle array must end in 3, got {angles.shape}")
    lead = angles.shape[:-1]
    ca, cb, cg = (np.cos(angles[..., i]) for i in range(3))
    sa, sb, sg = (np.sin(angles[..., i]) for i in range(3))
    zero, one = np.zeros(lead), np.ones(lead)

    def mat(rows):
        return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)

    Rx = mat([[one, zero, zero], [zero, ca, -sa], [zero, sa, ca]])
    Ry = mat([[cb, zero, sb], [zero, one, zero], [-sb, zero, cb]])
    Rz = mat([[cg, -sg, zero], [sg, cg, zero], [zero, zero, one]])
    RzRy = Rz @ Ry
    R = RzRy @ Rx
    if not jacobian:
        return R, None
    dRx = mat([[zero, zero, zero], [zero, -sa, -ca], [zero, ca, -sa]])
    dRy = mat([[-sb, zero, cb], [zero, zero, zero], [-cb, zero, -sb]])
    dRz = mat([[-sg, -cg, zero], [cg, -sg, zero], [zero, zero, zero]])
    J = np.stack([RzRy @ dRx, Rz @ dRy @ Rx, dRz @ Ry @ Rx], axis=-3)
    return R, J


def is_rotation(R, tol=1e-10):
    R = np.asarray(R, dtype=np.float64)
    return bool(
        np.max(np.abs(R.T @ R - np.eye(3))) < tol and abs(np.linalg.det(R) - 1.0) < tol
    )
