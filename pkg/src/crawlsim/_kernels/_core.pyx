# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled depth ray-march kernel.

Same semantics as crawlsim._kernels.fallback (see its module docstring);
scalar per-ray marching compiled to C.  Arithmetic is written expression-
for-expression like the numpy fallback and compiled with FP contraction
off, so both backends produce bit-identical depths.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, floor, sqrt

cnp.import_array()

DEF COARSE_FACTOR = 10


cdef inline double _bilinear_or_zero(
    const double[:, ::1] heights, double res, double ox, double oy,
    double x, double y, bint* inside,
) noexcept nogil:
    cdef Py_ssize_t ny = heights.shape[0]
    cdef Py_ssize_t nx = heights.shape[1]
    cdef double gx = (x - ox) / res
    cdef double gy = (y - oy) / res
    inside[0] = (gx >= 0.0) and (gx <= nx - 1) and (gy >= 0.0) and (gy <= ny - 1)
    if not inside[0]:
        return 0.0
    cdef Py_ssize_t ix = <Py_ssize_t>gx
    cdef Py_ssize_t iy = <Py_ssize_t>gy
    if ix > nx - 2:
        ix = nx - 2
    if iy > ny - 2:
        iy = ny - 2
    cdef double fx = gx - ix
    cdef double fy = gy - iy
    cdef double h00 = heights[iy, ix]
    cdef double h10 = heights[iy, ix + 1]
    cdef double h01 = heights[iy + 1, ix]
    cdef double h11 = heights[iy + 1, ix + 1]
    return (h00 * (1.0 - fx) + h10 * fx) * (1.0 - fy) + \
        (h01 * (1.0 - fx) + h11 * fx) * fy


cdef inline double _grad_at(
    const double[:, ::1] grad_pad, double res, double ox, double oy,
    double x, double y,
) noexcept nogil:
    cdef Py_ssize_t ncy = grad_pad.shape[0]
    cdef Py_ssize_t ncx = grad_pad.shape[1]
    cdef double gx = (x - ox) / res
    cdef double gy = (y - oy) / res
    cdef Py_ssize_t cx_ = <Py_ssize_t>floor(gx)
    cdef Py_ssize_t cy_ = <Py_ssize_t>floor(gy)
    if cx_ < 0:
        cx_ = 0
    elif cx_ > ncx - 1:
        cx_ = ncx - 1
    if cy_ < 0:
        cy_ = 0
    elif cy_ > ncy - 1:
        cy_ = ncy - 1
    return grad_pad[cy_, cx_]


cdef double _march_ray(
    const double[:, ::1] heights, const double[:, ::1] grad_pad,
    double res, double ox, double oy,
    double cx, double cy, double cz,
    double dx, double dy, double dz,
    double max_range, double fine_step, double max_h, Py_ssize_t max_i,
) noexcept nogil:
    cdef bint inside_prev, inside, dummy
    cdef double m_prev = cz - _bilinear_or_zero(
        heights, res, ox, oy, cx, cy, &inside_prev
    )
    cdef Py_ssize_t i = 0, i_next, j
    cdef double s, px, py, pz, h, m, seg, bound, mn, sj, qx, qy, qz
    while i < max_i:
        i_next = i + COARSE_FACTOR
        if i_next > max_i:
            i_next = max_i
        s = i_next * fine_step
        px = cx + s * dx
        py = cy + s * dy
        pz = cz + s * dz
        h = _bilinear_or_zero(heights, res, ox, oy, px, py, &inside)
        m = pz - h
        seg = (i_next - i) * fine_step
        bound = seg * (fabs(dz) + _grad_at(grad_pad, res, ox, oy, px, py))
        if not (inside and inside_prev):
            bound = bound + max_h
        mn = m_prev if m_prev < m else m
        if mn <= bound:
            for j in range(i + 1, i_next + 1):
                sj = j * fine_step
                qx = cx + sj * dx
                qy = cy + sj * dy
                qz = cz + sj * dz
                h = _bilinear_or_zero(heights, res, ox, oy, qx, qy, &dummy)
                if qz - h <= 0.0:
                    return sj
        m_prev = m
        inside_prev = inside
        if dz >= 0.0 and pz - max_h > 0.0:
            return max_range
        i = i_next
    return max_range


def render_depth_raw(
    heights, grad_pad, double res, double ox, double oy,
    cam_pos, cam_rot, Py_ssize_t width, Py_ssize_t height,
    double f_px, double max_range, double fine_step,
):
    cdef const double[:, ::1] hv = np.ascontiguousarray(heights, dtype=np.float64)
    cdef const double[:, ::1] gv = np.ascontiguousarray(grad_pad, dtype=np.float64)
    rot_arr = np.ascontiguousarray(np.asarray(cam_rot, dtype=np.float64).reshape(9))
    cdef const double[::1] rot = rot_arr
    cdef double cx = cam_pos[0], cy = cam_pos[1], cz = cam_pos[2]
    out = np.empty((height, width), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef double max_h = np.asarray(heights).max()
    cdef Py_ssize_t max_i = <Py_ssize_t>floor(max_range / fine_step)
    cdef Py_ssize_t u, v
    cdef double a, b, norm, dcx, dcy, dcz, dx, dy, dz
    with nogil:
        for v in range(height):
            b = ((<double>v) + 0.5 - (<double>height) / 2.0) / f_px
            for u in range(width):
                a = ((<double>u) + 0.5 - (<double>width) / 2.0) / f_px
                norm = sqrt(a * a + b * b + 1.0)
                dcx = a / norm
                dcy = b / norm
                dcz = 1.0 / norm
                dx = rot[0] * dcx + rot[1] * dcy + rot[2] * dcz
                dy = rot[3] * dcx + rot[4] * dcy + rot[5] * dcz
                dz = rot[6] * dcx + rot[7] * dcy + rot[8] * dcz
                ov[v, u] = _march_ray(
                    hv, gv, res, ox, oy, cx, cy, cz, dx, dy, dz,
                    max_range, fine_step, max_h, max_i,
                )
    return out
