"""SE(3) helpers in body coordinates.

Twists and wrenches are 6-vectors ordered [angular; linear]. Poses are 4x4
homogeneous matrices.
"""

import numpy as np

# below this angle the coefficients use their series; the closed form for
# c loses about half its digits to cancellation near 1e-5
SMALL_ANGLE = 1e-2


def skew(w):
    w = np.asarray(w, dtype=float)
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


def unskew(W):
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


def hat(v):
    """6-vector [w; v] -> 4x4 element of se(3)."""
    v = np.asarray(v, dtype=float)
    out = np.zeros((4, 4))
    out[:3, :3] = skew(v[:3])
    out[:3, 3] = v[3:]
    return out


def vee(X):
    return np.concatenate([unskew(X[:3, :3]), X[:3, 3]])


def ad(xi):
    """6x6 matrix of the adjoint action of se(3) on itself."""
    xi = np.asarray(xi, dtype=float)
    W = skew(xi[:3])
    out = np.zeros((6, 6))
    out[:3, :3] = W
    out[3:, :3] = skew(xi[3:])
    out[3:, 3:] = W
    return out


def pose(R=None, p=None):
    g = np.eye(4)
    if R is not None:
        g[:3, :3] = R
    if p is not None:
        g[:3, 3] = p
    return g


def exp(xi):
    """Closed-form exponential of a twist, returned as a 4x4 pose."""
    xi = np.asarray(xi, dtype=float)
    w, v = xi[:3], xi[3:]
    th2 = float(w @ w)
    th = np.sqrt(th2)
    if th < SMALL_ANGLE:
        a = 1.0 - th2 / 6.0 * (1.0 - th2 / 20.0)
        b = 0.5 - th2 / 24.0 * (1.0 - th2 / 30.0)
        c = 1.0 / 6.0 - th2 / 120.0 * (1.0 - th2 / 42.0)
    else:
        a = np.sin(th) / th
        b = (1.0 - np.cos(th)) / th2
        c = (th - np.sin(th)) / (th2 * th)
    W = skew(w)
    W2 = W @ W
    I = np.eye(3)
    return pose(I + a * W + b * W2, (I + b * W + c * W2) @ v)


def step_pose(g, xi, h):
    """Advance ``g`` along the constant body twist ``xi`` for arclength ``h``."""
    return np.asarray(g, dtype=float) @ exp(h * np.asarray(xi, dtype=float))


def project_rotation(R):
    """Nearest rotation matrix in the Frobenius sense (polar factor)."""
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    if np.linalg.det(Q) < 0:
        U[:, -1] *= -1
        Q = U @ Vt
    return Q


def inverse(g):
    R, p = g[:3, :3], g[:3, 3]
    return pose(R.T, -R.T @ p)
