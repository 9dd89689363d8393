"""Hot numeric kernels with optional numba acceleration.

Two inner loops dominate the per-sweep cost: curvature scoring along each
scan and the residual/Jacobian assembly over point-to-line matches.  Both
ship in two variants, a pure-numpy implementation and an ``@njit`` twin
compiled at import time.  The environment variable ``EDGEODOM_NUMBA``
selects the backend: set it to ``0``/``false``/``off`` to force the numpy
path (the default is numba when importable).  Both variants perform the
arithmetic in the same order, so results are identical bit for bit.
"""

from __future__ import annotations

import math
import os

import numpy as np

_DISABLE_VALUES = {"0", "false", "off", "no"}


def _numba_requested() -> bool:
    return os.environ.get("EDGEODOM_NUMBA", "1").strip().lower() not in _DISABLE_VALUES


def _scan_curvature_np(points: np.ndarray, half_width: int, wrap: bool,
                       loam_style: bool) -> np.ndarray:
    """Curvature score at every index of one azimuth-ordered scan.

    Indices without a complete +-half_width neighborhood get NaN (all of
    them, when the scan is shorter than the window).  The score is the mean
    neighbor distance divided by the point's own range; ``loam_style``
    switches to the norm-of-summed-offsets variant.
    """
    n = points.shape[0]
    out = np.full(n, np.nan)
    if n == 0:
        return out
    win = 2 * half_width
    if not wrap and n < win + 1:
        return out
    if wrap and n < win + 1:
        return out

    offsets = [o for o in range(-half_width, half_width + 1) if o != 0]
    if loam_style:
        acc = np.zeros((n, 3))
        for off in offsets:
            acc += points - np.roll(points, -off, axis=0)
        total = np.sqrt(acc[:, 0] ** 2 + acc[:, 1] ** 2 + acc[:, 2] ** 2)
    else:
        total = np.zeros(n)
        for off in offsets:
            diff = points - np.roll(points, -off, axis=0)
            total += np.sqrt(diff[:, 0] ** 2 + diff[:, 1] ** 2 + diff[:, 2] ** 2)

    norms = np.sqrt(points[:, 0] ** 2 + points[:, 1] ** 2 + points[:, 2] ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = total / (win * norms)
    scores[norms == 0.0] = np.nan
    if not wrap:
        out[half_width:n - half_width] = scores[half_width:n - half_width]
    else:
        out[:] = scores
    return out


def _p2l_system_np(world: np.ndarray, anchor_a: np.ndarray, anchor_b: np.ndarray,
                   weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Weighted point-to-line residuals and their 6-dof Jacobian rows.

    ``world`` holds the already-projected points; the Jacobian is taken at a
    zero left-multiplicative increment ordered [rotation, translation].
    Rows whose point sits exactly on the line get a zero gradient.
    """
    u = world - anchor_a
    v = anchor_a - anchor_b
    c = np.cross(u, v)
    cn = np.sqrt(np.sum(c * c, axis=1))
    vn = np.sqrt(np.sum(v * v, axis=1))
    safe_vn = np.where(vn > 1e-12, vn, 1.0)
    dist = np.where(vn > 1e-12, cn / safe_vn, 0.0)
    residuals = weights * dist

    denom = safe_vn * np.where(cn > 1e-12, cn, 1.0)
    grad = np.cross(v, c) / denom[:, None]
    grad[(cn <= 1e-12) | (vn <= 1e-12)] = 0.0

    jac = np.empty((world.shape[0], 6))
    jac[:, 0:3] = weights[:, None] * np.cross(world, grad)
    jac[:, 3:6] = weights[:, None] * grad
    return residuals, jac


def _compile_numba():
    from numba import njit

    @njit(cache=True)
    def scan_curvature_nb(points, half_width, wrap, loam_style):
        n = points.shape[0]
        out = np.full(n, np.nan)
        win = 2 * half_width
        if n < win + 1:
            return out
        lo = 0 if wrap else half_width
        hi = n if wrap else n - half_width
        for j in range(lo, hi):
            px = points[j, 0]
            py = points[j, 1]
            pz = points[j, 2]
            norm = math.sqrt(px * px + py * py + pz * pz)
            if norm == 0.0:
                continue
            if loam_style:
                sx = 0.0
                sy = 0.0
                sz = 0.0
                for off in range(-half_width, half_width + 1):
                    if off == 0:
                        continue
                    k = (j + off) % n
                    sx += px - points[k, 0]
                    sy += py - points[k, 1]
                    sz += pz - points[k, 2]
                total = math.sqrt(sx * sx + sy * sy + sz * sz)
            else:
                total = 0.0
                for off in range(-half_width, half_width + 1):
                    if off == 0:
                        continue
                    k = (j + off) % n
                    dx = px - points[k, 0]
                    dy = py - points[k, 1]
                    dz = pz - points[k, 2]
                    total += math.sqrt(dx * dx + dy * dy + dz * dz)
            out[j] = total / (win * norm)
        return out

    @njit(cache=True)
    def p2l_system_nb(world, anchor_a, anchor_b, weights):
        m = world.shape[0]
        residuals = np.empty(m)
        jac = np.empty((m, 6))
        for i in range(m):
            ux = world[i, 0] - anchor_a[i, 0]
            uy = world[i, 1] - anchor_a[i, 1]
            uz = world[i, 2] - anchor_a[i, 2]
            vx = anchor_a[i, 0] - anchor_b[i, 0]
            vy = anchor_a[i, 1] - anchor_b[i, 1]
            vz = anchor_a[i, 2] - anchor_b[i, 2]
            cx = uy * vz - uz * vy
            cy = uz * vx - ux * vz
            cz = ux * vy - uy * vx
            cn = math.sqrt(cx * cx + cy * cy + cz * cz)
            vn = math.sqrt(vx * vx + vy * vy + vz * vz)
            w = weights[i]
            if vn > 1e-12:
                dist = cn / vn
            else:
                dist = 0.0
            residuals[i] = w * dist
            if cn <= 1e-12 or vn <= 1e-12:
                for d in range(6):
                    jac[i, d] = 0.0
                continue
            denom = vn * cn
            gx = (vy * cz - vz * cy) / denom
            gy = (vz * cx - vx * cz) / denom
            gz = (vx * cy - vy * cx) / denom
            px = world[i, 0]
            py = world[i, 1]
            pz = world[i, 2]
            jac[i, 0] = w * (py * gz - pz * gy)
            jac[i, 1] = w * (pz * gx - px * gz)
            jac[i, 2] = w * (px * gy - py * gx)
            jac[i, 3] = w * gx
            jac[i, 4] = w * gy
            jac[i, 5] = w * gz
        return residuals, jac

    return scan_curvature_nb, p2l_system_nb


_scan_curvature_nb = None
_p2l_system_nb = None
_BACKEND = "numpy"

if _numba_requested():
    try:
        _scan_curvature_nb, _p2l_system_nb = _compile_numba()
        _BACKEND = "numba"
    except ImportError:
        pass


def active_backend() -> str:
    """Name of the kernel backend selected at import ("numba" or "numpy")."""
    return _BACKEND


def scan_curvature(points: np.ndarray, half_width: int, wrap: bool = False,
                   loam_style: bool = False) -> np.ndarray:
    """Curvature at every index of one scan; NaN where the window is incomplete."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    if _BACKEND == "numba":
        return _scan_curvature_nb(points, half_width, wrap, loam_style)
    return _scan_curvature_np(points, half_width, wrap, loam_style)


def p2l_system(world: np.ndarray, anchor_a: np.ndarray, anchor_b: np.ndarray,
               weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Residuals and Jacobian rows for a batch of point-to-line matches."""
    world = np.ascontiguousarray(world, dtype=np.float64)
    anchor_a = np.ascontiguousarray(anchor_a, dtype=np.float64)
    anchor_b = np.ascontiguousarray(anchor_b, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if _BACKEND == "numba":
        return _p2l_system_nb(world, anchor_a, anchor_b, weights)
    return _p2l_system_np(world, anchor_a, anchor_b, weights)
