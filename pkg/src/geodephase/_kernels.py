"""Compiled inner loops shared by the ensemble runners.

Quaternions are handled as ``(w, x, y, z)`` tuples inside the kernels; the
correspondence with SU(2) is ``U = w*1 - i*(x, y, z).sigma``.
"""

import math

import numba as nb
import numpy as np

RENORM_EVERY = 1024


@nb.njit(cache=True, nogil=True)
def qmul(a0, a1, a2, a3, b0, b1, b2, b3):
    return (
        a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
        a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
        a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
        a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
    )


@nb.njit(cache=True, nogil=True)
def qnormalize(q0, q1, q2, q3):
    n = math.sqrt(q0 * q0 + q1 * q1 + q2 * q2 + q3 * q3)
    return q0 / n, q1 / n, q2 / n, q3 / n


@nb.njit(cache=True, nogil=True)
def quat_from_rotvec(vx, vy, vz):
    """Rotor for a rotation by ``|v|`` about ``v``."""
    n = math.sqrt(vx * vx + vy * vy + vz * vz)
    if n == 0.0:
        return 1.0, 0.0, 0.0, 0.0
    h = 0.5 * n
    s = math.sin(h) / n
    return math.cos(h), s * vx, s * vy, s * vz


@nb.njit(cache=True, nogil=True)
def quat_from_axis_angle(nx, ny, nz, angle):
    h = 0.5 * angle
    s = math.sin(h)
    return math.cos(h), s * nx, s * ny, s * nz


@nb.njit(cache=True, nogil=True)
def rotate(q0, q1, q2, q3, ux, uy, uz):
    # v' = v + 2w (q x v) + 2 q x (q x v)
    cx = q2 * uz - q3 * uy
    cy = q3 * ux - q1 * uz
    cz = q1 * uy - q2 * ux
    dx = q2 * cz - q3 * cy
    dy = q3 * cx - q1 * cz
    dz = q1 * cy - q2 * cx
    return (
        ux + 2.0 * (q0 * cx + dx),
        uy + 2.0 * (q0 * cy + dy),
        uz + 2.0 * (q0 * cz + dz),
    )


@nb.njit(cache=True, nogil=True)
def chain_product(quats):
    """Product ``q[n-1] ... q[1] q[0]`` with periodic renormalization."""
    r0, r1, r2, r3 = 1.0, 0.0, 0.0, 0.0
    for i in range(quats.shape[0]):
        r0, r1, r2, r3 = qmul(quats[i, 0], quats[i, 1], quats[i, 2], quats[i, 3], r0, r1, r2, r3)
        if (i + 1) % RENORM_EVERY == 0:
            r0, r1, r2, r3 = qnormalize(r0, r1, r2, r3)
    return np.array([r0, r1, r2, r3])


@nb.njit(cache=True, nogil=True)
def ou_recursion(noise, rho, innov, sigma, out):
    """Exact OU update ``w[j+1] = rho[j] w[j] + innov[j] xi``; ``w[0] ~ N(0, sigma^2)``."""
    n = out.shape[0]
    w0 = sigma * noise[0, 0]
    w1 = sigma * noise[0, 1]
    w2 = sigma * noise[0, 2]
    out[0, 0], out[0, 1], out[0, 2] = w0, w1, w2
    for j in range(1, n):
        r = rho[j - 1]
        a = innov[j - 1]
        w0 = r * w0 + a * noise[j, 0]
        w1 = r * w1 + a * noise[j, 1]
        w2 = r * w2 + a * noise[j, 2]
        out[j, 0], out[j, 1], out[j, 2] = w0, w1, w2


@nb.njit(cache=True, nogil=True)
def ou_propagate(omega, dts, g_perp, g_par, readout, u0, out):
    """Lab-frame polarization along a piecewise-constant angular velocity path.

    ``omega[j]`` is held over step ``j`` of length ``dts[j]``.  The M-frame
    rotor and the frame rotor are accumulated separately and combined as
    ``inverse(frame) * m`` at each readout index.
    """
    m0, m1, m2, m3 = 1.0, 0.0, 0.0, 0.0
    f0, f1, f2, f3 = 1.0, 0.0, 0.0, 0.0
    k = 0
    nsteps = dts.shape[0]
    for j in range(nsteps + 1):
        while k < readout.shape[0] and readout[k] == j:
            l0, l1, l2, l3 = qmul(f0, -f1, -f2, -f3, m0, m1, m2, m3)
            out[k, 0], out[k, 1], out[k, 2] = rotate(l0, l1, l2, l3, u0[0], u0[1], u0[2])
            k += 1
        if j == nsteps:
            break
        dt = dts[j]
        wx = omega[j, 0]
        wy = omega[j, 1]
        wz = omega[j, 2]
        a0, a1, a2, a3 = quat_from_rotvec(wx * g_perp * dt, wy * g_perp * dt, wz * g_par * dt)
        b0, b1, b2, b3 = quat_from_rotvec(wx * dt, wy * dt, wz * dt)
        m0, m1, m2, m3 = qmul(a0, a1, a2, a3, m0, m1, m2, m3)
        f0, f1, f2, f3 = qmul(b0, b1, b2, b3, f0, f1, f2, f3)
        if (j + 1) % RENORM_EVERY == 0:
            m0, m1, m2, m3 = qnormalize(m0, m1, m2, m3)
            f0, f1, f2, f3 = qnormalize(f0, f1, f2, f3)


@nb.njit(cache=True, nogil=True)
def _perp_basis(kx, ky, kz):
    # Deterministic orthonormal pair spanning the plane normal to k.
    if abs(kz) < 0.9:
        rx, ry, rz = 0.0, 0.0, 1.0
    else:
        rx, ry, rz = 1.0, 0.0, 0.0
    ex = ry * kz - rz * ky
    ey = rz * kx - rx * kz
    ez = rx * ky - ry * kx
    n = math.sqrt(ex * ex + ey * ey + ez * ez)
    ex /= n
    ey /= n
    ez /= n
    fx = ky * ez - kz * ey
    fy = kz * ex - kx * ez
    fz = kx * ey - ky * ex
    return ex, ey, ez, fx, fy, fz


@nb.njit(cache=True, nogil=True)
def collision_geometry(thetas, phis, k0, axes, ks):
    """Axes of successive k-reorientations, each uniform in the plane normal to k."""
    kx, ky, kz = k0[0], k0[1], k0[2]
    ks[0, 0], ks[0, 1], ks[0, 2] = kx, ky, kz
    for i in range(thetas.shape[0]):
        ex, ey, ez, fx, fy, fz = _perp_basis(kx, ky, kz)
        c = math.cos(phis[i])
        s = math.sin(phis[i])
        nx = c * ex + s * fx
        ny = c * ey + s * fy
        nz = c * ez + s * fz
        axes[i, 0], axes[i, 1], axes[i, 2] = nx, ny, nz
        q0, q1, q2, q3 = quat_from_axis_angle(nx, ny, nz, thetas[i])
        kx, ky, kz = rotate(q0, q1, q2, q3, kx, ky, kz)
        n = math.sqrt(kx * kx + ky * ky + kz * kz)
        kx /= n
        ky /= n
        kz /= n
        ks[i + 1, 0], ks[i + 1, 1], ks[i + 1, 2] = kx, ky, kz


@nb.njit(cache=True, nogil=True)
def collisions_propagate(times, axes, thetas, delta_gamma, delta_t_c, t_grid, u0, out):
    """Lab-frame polarization under a time-ordered train of collisions.

    Event ``i`` starts at ``times[i]`` and lasts ``delta_t_c``; a readout
    falling inside an event sees the fraction of the lag rotation completed
    so far.
    """
    r0, r1, r2, r3 = 1.0, 0.0, 0.0, 0.0
    m = times.shape[0]
    i = 0
    for k in range(t_grid.shape[0]):
        t = t_grid[k]
        while i < m and times[i] + delta_t_c <= t:
            q0, q1, q2, q3 = quat_from_axis_angle(
                axes[i, 0], axes[i, 1], axes[i, 2], thetas[i] * delta_gamma
            )
            r0, r1, r2, r3 = qmul(q0, q1, q2, q3, r0, r1, r2, r3)
            i += 1
            if i % RENORM_EVERY == 0:
                r0, r1, r2, r3 = qnormalize(r0, r1, r2, r3)
        p0, p1, p2, p3 = r0, r1, r2, r3
        if i < m and times[i] <= t:
            frac = (t - times[i]) / delta_t_c
            q0, q1, q2, q3 = quat_from_axis_angle(
                axes[i, 0], axes[i, 1], axes[i, 2], frac * thetas[i] * delta_gamma
            )
            p0, p1, p2, p3 = qmul(q0, q1, q2, q3, r0, r1, r2, r3)
        out[k, 0], out[k, 1], out[k, 2] = rotate(p0, p1, p2, p3, u0[0], u0[1], u0[2])
