"""Compiled inner loops for rod integration.

Everything in here works on plain float arrays so numba can compile it.
The public, documented entry points live in ``liegroup``, ``mechanics`` and
``potentials``; these kernels are checked against them in the test suite.

Obstacle table layout (one row per obstacle, ``OBS_COLS`` columns)::

    [kind, ax, ay, az, bx, by, bz, r_solid, r_field, k]

``kind`` is 0 for a sphere (centre ``a``) and 1 for a capsule (axis ``a-b``).
"""

import numpy as np
from numba import njit

OBS_COLS = 10
SPHERE = 0
CAPSULE = 1
# below this angle the coefficients use their series; the closed form for
# c loses about half its digits to cancellation near 1e-5
SMALL_ANGLE = 1e-2
REORTHO_EVERY = 100


@njit(cache=True)
def exp_se3(w0, w1, w2, v0, v1, v2, R, p):
    """Closed-form exp of the twist [w; v] written into R (3x3) and p (3)."""
    th2 = w0 * w0 + w1 * w1 + w2 * w2
    th = np.sqrt(th2)
    if th < SMALL_ANGLE:
        a = 1.0 - th2 / 6.0 * (1.0 - th2 / 20.0)
        b = 0.5 - th2 / 24.0 * (1.0 - th2 / 30.0)
        c = 1.0 / 6.0 - th2 / 120.0 * (1.0 - th2 / 42.0)
    else:
        s = np.sin(th)
        co = np.cos(th)
        a = s / th
        b = (1.0 - co) / th2
        c = (th - s) / (th2 * th)
    # W = hat(w), W2 = W @ W
    W00 = 0.0
    W01 = -w2
    W02 = w1
    W10 = w2
    W11 = 0.0
    W12 = -w0
    W20 = -w1
    W21 = w0
    W22 = 0.0
    Q00 = -(w1 * w1 + w2 * w2)
    Q11 = -(w0 * w0 + w2 * w2)
    Q22 = -(w0 * w0 + w1 * w1)
    Q01 = w0 * w1
    Q02 = w0 * w2
    Q12 = w1 * w2
    R[0, 0] = 1.0 + a * W00 + b * Q00
    R[0, 1] = a * W01 + b * Q01
    R[0, 2] = a * W02 + b * Q02
    R[1, 0] = a * W10 + b * Q01
    R[1, 1] = 1.0 + a * W11 + b * Q11
    R[1, 2] = a * W12 + b * Q12
    R[2, 0] = a * W20 + b * Q02
    R[2, 1] = a * W21 + b * Q12
    R[2, 2] = 1.0 + a * W22 + b * Q22
    V00 = 1.0 + b * W00 + c * Q00
    V01 = b * W01 + c * Q01
    V02 = b * W02 + c * Q02
    V10 = b * W10 + c * Q01
    V11 = 1.0 + b * W11 + c * Q11
    V12 = b * W12 + c * Q12
    V20 = b * W20 + c * Q02
    V21 = b * W21 + c * Q12
    V22 = 1.0 + b * W22 + c * Q22
    p[0] = V00 * v0 + V01 * v1 + V02 * v2
    p[1] = V10 * v0 + V11 * v1 + V12 * v2
    p[2] = V20 * v0 + V21 * v1 + V22 * v2


@njit(cache=True)
def compose(R0, p0, R1, p1, Rout, pout):
    """(R0, p0) * (R1, p1) -> (Rout, pout); outputs must not alias inputs."""
    for i in range(3):
        for j in range(3):
            Rout[i, j] = R0[i, 0] * R1[0, j] + R0[i, 1] * R1[1, j] + R0[i, 2] * R1[2, j]
        pout[i] = R0[i, 0] * p1[0] + R0[i, 1] * p1[1] + R0[i, 2] * p1[2] + p0[i]


@njit(cache=True)
def ad_apply(a, b, out):
    """out = ad(a) b, the se(3) bracket [a, b] in [angular; linear] order."""
    # angular: wa x wb
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    # linear: va x wb + wa x vb
    out[3] = a[4] * b[2] - a[5] * b[1] + a[1] * b[5] - a[2] * b[4]
    out[4] = a[5] * b[0] - a[3] * b[2] + a[2] * b[3] - a[0] * b[5]
    out[5] = a[3] * b[1] - a[4] * b[0] + a[0] * b[4] - a[1] * b[3]


@njit(cache=True)
def dexpinv_right(omega, xi, out, tmp1, tmp2):
    """Right-trivialised inverse dexp truncated after the second bracket.

    For g = g0 exp(Omega(s)) with g' = g hat(xi): Omega' = xi + [Omega, xi]/2
    + [Omega, [Omega, xi]]/12 + O(|Omega|^4).
    """
    ad_apply(omega, xi, tmp1)
    ad_apply(omega, tmp1, tmp2)
    for i in range(6):
        out[i] = xi[i] + 0.5 * tmp1[i] + tmp2[i] / 12.0


@njit(cache=True)
def potential_grad(obs, x, y, z, grad):
    """Accumulate grad U at (x, y, z) into ``grad`` and return U."""
    grad[0] = 0.0
    grad[1] = 0.0
    grad[2] = 0.0
    total = 0.0
    for i in range(obs.shape[0]):
        ax = obs[i, 1]
        ay = obs[i, 2]
        az = obs[i, 3]
        if obs[i, 0] == CAPSULE:
            bx = obs[i, 4] - ax
            by = obs[i, 5] - ay
            bz = obs[i, 6] - az
            t = ((x - ax) * bx + (y - ay) * by + (z - az) * bz) / (bx * bx + by * by + bz * bz)
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            qx = ax + t * bx
            qy = ay + t * by
            qz = az + t * bz
        else:
            qx = ax
            qy = ay
            qz = az
        dx = x - qx
        dy = y - qy
        dz = z - qz
        d = np.sqrt(dx * dx + dy * dy + dz * dz)
        r_solid = obs[i, 7]
        r_field = obs[i, 8]
        if d >= r_field:
            continue
        k = obs[i, 9]
        w = r_field - r_solid
        gap = r_field - d
        total += 0.25 * k * gap ** 4 / (w * w)
        if d > 0.0:
            dU = -k * gap ** 3 / (w * w) / d
            grad[0] += dU * dx
            grad[1] += dU * dy
            grad[2] += dU * dz
    return total


@njit(cache=True)
def _rates(R, p, lam, lam_ad, cinv, xi0, obs, xi, dlam, grad):
    """Right-hand side of the canonical rod equations at one point."""
    for i in range(6):
        xi[i] = xi0[i] + cinv[i] * (lam[i] - lam_ad[i])
    potential_grad(obs, p[0], p[1], p[2], grad)
    # body-frame force from the field: -R^T grad U
    fx = -(R[0, 0] * grad[0] + R[1, 0] * grad[1] + R[2, 0] * grad[2])
    fy = -(R[0, 1] * grad[0] + R[1, 1] * grad[1] + R[2, 1] * grad[2])
    fz = -(R[0, 2] * grad[0] + R[1, 2] * grad[1] + R[2, 2] * grad[2])
    m0 = lam[0]
    m1 = lam[1]
    m2 = lam[2]
    n0 = lam[3]
    n1 = lam[4]
    n2 = lam[5]
    w0 = xi[0]
    w1 = xi[1]
    w2 = xi[2]
    v0 = xi[3]
    v1 = xi[4]
    v2 = xi[5]
    # ad(xi)^T lam - W with W = [0; f]
    dlam[0] = (m1 * w2 - m2 * w1) + (n1 * v2 - n2 * v1)
    dlam[1] = (m2 * w0 - m0 * w2) + (n2 * v0 - n0 * v2)
    dlam[2] = (m0 * w1 - m1 * w0) + (n0 * v1 - n1 * v0)
    dlam[3] = (n1 * w2 - n2 * w1) - fx
    dlam[4] = (n2 * w0 - n0 * w2) - fy
    dlam[5] = (n0 * w1 - n1 * w0) - fz


@njit(cache=True)
def _polar(R):
    U, _, Vt = np.linalg.svd(R)
    Q = U @ Vt
    for i in range(3):
        for j in range(3):
            R[i, j] = Q[i, j]


@njit(cache=True)
def integrate(R0, p0, lam0, lam_ad, cinv, xi0, length, n, obs, Rs, ps, lams):
    """RKMK4 integration of (g, Lambda) over ``n`` steps spanning ``length``.

    ``length`` may be negative (backward propagation). Node states are
    written into Rs (n+1,3,3), ps (n+1,3), lams (n+1,6). Returns -1 on
    success or the index of the first non-finite node.
    """
    h = length / n
    Rs[0] = R0
    ps[0] = p0
    lams[0] = lam0
    xi1 = np.empty(6)
    xi = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    L1 = np.empty(6)
    L2 = np.empty(6)
    L3 = np.empty(6)
    L4 = np.empty(6)
    om = np.empty(6)
    lam_s = np.empty(6)
    t1 = np.empty(6)
    t2 = np.empty(6)
    grad = np.empty(3)
    Re = np.empty((3, 3))
    pe = np.empty(3)
    Rs_ = np.empty((3, 3))
    ps_ = np.empty(3)
    for kk in range(n):
        R = Rs[kk]
        p = ps[kk]
        lam = lams[kk]
        _rates(R, p, lam, lam_ad, cinv, xi0, obs, xi1, L1, grad)
        # stage 2
        for i in range(6):
            om[i] = 0.5 * h * xi1[i]
            lam_s[i] = lam[i] + 0.5 * h * L1[i]
        exp_se3(om[0], om[1], om[2], om[3], om[4], om[5], Re, pe)
        compose(R, p, Re, pe, Rs_, ps_)
        _rates(Rs_, ps_, lam_s, lam_ad, cinv, xi0, obs, xi, L2, grad)
        dexpinv_right(om, xi, k2, t1, t2)
        # stage 3
        for i in range(6):
            om[i] = 0.5 * h * k2[i]
            lam_s[i] = lam[i] + 0.5 * h * L2[i]
        exp_se3(om[0], om[1], om[2], om[3], om[4], om[5], Re, pe)
        compose(R, p, Re, pe, Rs_, ps_)
        _rates(Rs_, ps_, lam_s, lam_ad, cinv, xi0, obs, xi, L3, grad)
        dexpinv_right(om, xi, k3, t1, t2)
        # stage 4
        for i in range(6):
            om[i] = h * k3[i]
            lam_s[i] = lam[i] + h * L3[i]
        exp_se3(om[0], om[1], om[2], om[3], om[4], om[5], Re, pe)
        compose(R, p, Re, pe, Rs_, ps_)
        _rates(Rs_, ps_, lam_s, lam_ad, cinv, xi0, obs, xi, L4, grad)
        dexpinv_right(om, xi, k4, t1, t2)
        # combine
        finite = True
        for i in range(6):
            om[i] = h / 6.0 * (xi1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            v = lam[i] + h / 6.0 * (L1[i] + 2.0 * L2[i] + 2.0 * L3[i] + L4[i])
            lams[kk + 1, i] = v
            if not np.isfinite(v):
                finite = False
        if not finite:
            return kk + 1
        exp_se3(om[0], om[1], om[2], om[3], om[4], om[5], Re, pe)
        compose(R, p, Re, pe, Rs[kk + 1], ps[kk + 1])
        if (kk + 1) % REORTHO_EVERY == 0:
            _polar(Rs[kk + 1])
        for i in range(3):
            if not np.isfinite(ps[kk + 1, i]):
                return kk + 1
    return -1


@njit(cache=True)
def integrate_tip_batch(lam0s, lam_ads, cinv, xi0, lengths, n, obs, R_out, p_out, lam_out):
    """Forward-integrate a batch of base wrenches from the identity pose.

    Only the tip states are kept. Returns an int array with -1 for each
    successful row, else the failing node index.
    """
    b = lam0s.shape[0]
    status = np.empty(b, dtype=np.int64)
    Rs = np.empty((n + 1, 3, 3))
    ps = np.empty((n + 1, 3))
    lams = np.empty((n + 1, 6))
    R0 = np.eye(3)
    p0 = np.zeros(3)
    for j in range(b):
        status[j] = integrate(R0, p0, lam0s[j], lam_ads[j], cinv, xi0, lengths[j], n, obs, Rs, ps, lams)
        R_out[j] = Rs[n]
        p_out[j] = ps[n]
        lam_out[j] = lams[n]
    return status


@njit(cache=True)
def integrate_kinematics(xis, length, n, Rs, ps):
    """Integrate g' = g hat(xi(s)) from the identity.

    ``xis`` holds the twist sampled on the half-step grid, shape (2n+1, 6):
    row 2k is node k, row 2k+1 the midpoint of step k.
    """
    h = length / n
    Rs[0] = np.eye(3)
    ps[0] = 0.0
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    om = np.empty(6)
    t1 = np.empty(6)
    t2 = np.empty(6)
    Re = np.empty((3, 3))
    pe = np.empty(3)
    for kk in range(n):
        for i in range(6):
            k1[i] = xis[2 * kk, i]
            om[i] = 0.5 * h * k1[i]
        dexpinv_right(om, xis[2 * kk + 1], k2, t1, t2)
        for i in range(6):
            om[i] = 0.5 * h * k2[i]
        dexpinv_right(om, xis[2 * kk + 1], k3, t1, t2)
        for i in range(6):
            om[i] = h * k3[i]
        dexpinv_right(om, xis[2 * kk + 2], k4, t1, t2)
        for i in range(6):
            om[i] = h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        exp_se3(om[0], om[1], om[2], om[3], om[4], om[5], Re, pe)
        compose(Rs[kk], ps[kk], Re, pe, Rs[kk + 1], ps[kk + 1])
        if (kk + 1) % REORTHO_EVERY == 0:
            _polar(Rs[kk + 1])
