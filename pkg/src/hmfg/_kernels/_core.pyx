# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of hmfg._kernels.pure (Heisenberg d=1 hot loops)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, pow, sqrt

COMPILED = True


cdef inline double _tab(double tq, double tdt, const double* V, const double* D, int nt) nogil:
    cdef double g = tq / tdt
    cdef int i
    cdef double s, h00, h10, h01, h11
    if g < 0.0:
        g = 0.0
    if g > nt - 1.0 - 1e-12:
        g = nt - 1.0 - 1e-12
    i = <int> g
    s = g - i
    h00 = (2.0 * s - 3.0) * s * s + 1.0
    h10 = ((s - 2.0) * s + 1.0) * s
    h01 = (3.0 - 2.0 * s) * s * s
    h11 = (s - 1.0) * s * s
    return h00 * V[i] + tdt * h10 * D[i] + h01 * V[i + 1] + tdt * h11 * D[i + 1]


cdef void _cost_grad(const double* x, double t,
                     const long* kinds, const double* params, int nk,
                     int conv, const double* cpar, const double* cpos,
                     const double* cw, int K, int P,
                     double tdt, const double* td1, const double* td2, int nt,
                     double* out) nogil:
    cdef int kk, pp, i0
    cdef double s, c, g, fr, px, py, pz, d0, d1c, d2c, rr, dp, coef
    cdef double strength, support, t0, dtp
    cdef const double* a
    cdef const double* b
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    for kk in range(nk):
        if kinds[kk] == 2:
            out[0] += params[6 * kk + 0]
            out[1] += params[6 * kk + 1]
            out[2] += params[6 * kk + 2]
        elif kinds[kk] == 3:
            s = x[0] * x[0] + x[1] * x[1]
            c = params[6 * kk] * 2.0 / ((1.0 + s) * (1.0 + s))
            out[0] += c * x[0]
            out[1] += c * x[1]
    if conv and P > 0:
        strength = cpar[0]
        support = cpar[1]
        t0 = cpar[2]
        dtp = cpar[3]
        if K == 0:
            i0 = 0
            fr = 0.0
        else:
            g = (t - t0) / dtp
            if g < 0.0:
                g = 0.0
            if g > K:
                g = K
            i0 = <int> g
            if i0 > K - 1:
                i0 = K - 1
            fr = g - i0
        a = cpos + 3 * P * i0
        b = cpos + 3 * P * (i0 + 1) if K > 0 else a
        for pp in range(P):
            px = (1.0 - fr) * a[3 * pp] + fr * b[3 * pp]
            py = (1.0 - fr) * a[3 * pp + 1] + fr * b[3 * pp + 1]
            pz = (1.0 - fr) * a[3 * pp + 2] + fr * b[3 * pp + 2]
            d0 = x[0] - px
            d1c = x[1] - py
            d2c = x[2] - pz
            rr = sqrt(d0 * d0 + d1c * d1c + d2c * d2c)
            if rr < support and rr > 1e-12:
                dp = _tab(rr, tdt, td1, td2, nt)
                coef = strength * cw[pp] * dp / rr
                out[0] += coef * d0
                out[1] += coef * d1c
                out[2] += coef * d2c


cdef void _rhs(const double* x, const double* p, double t, double eps, double gamma,
               const long* kinds, const double* params, int nk,
               int conv, const double* cpar, const double* cpos, const double* cw,
               int K, int P, double tdt, const double* td1, const double* td2, int nt,
               double* dx, double* dp) nogil:
    cdef double q1, q2, q3, nq, scale
    cdef double df[3]
    q1 = p[0] - x[1] * p[2]
    q2 = p[1] + x[0] * p[2]
    q3 = eps * p[2]
    if gamma == 2.0:
        scale = 1.0
    else:
        nq = sqrt(q1 * q1 + q2 * q2 + q3 * q3)
        scale = 0.0 if nq <= 1e-12 else gamma * pow(nq, gamma - 2.0)
    _cost_grad(x, t, kinds, params, nk, conv, cpar, cpos, cw, K, P, tdt, td1, td2, nt, df)
    dx[0] = scale * q1
    dx[1] = scale * q2
    dx[2] = scale * (-x[1] * q1 + x[0] * q2 + eps * q3)
    dp[0] = -scale * q2 * p[2] + df[0]
    dp[1] = scale * q1 * p[2] + df[1]
    dp[2] = df[2]


def pmp_integrate(x0, p0, double t0, double dt, int steps, double eps, double gamma,
                  kinds, params, int conv, conv_par, conv_pos, conv_w,
                  double tab_dt, tab_v, tab_d1, tab_d2, bint store_path=True):
    cdef double[::1] x0v = np.ascontiguousarray(x0, dtype=np.float64)
    cdef double[::1] p0v = np.ascontiguousarray(p0, dtype=np.float64)
    cdef long[::1] kindsv = np.ascontiguousarray(kinds, dtype=np.int64)
    cdef double[:, ::1] paramsv = np.ascontiguousarray(params, dtype=np.float64).reshape(-1, 6)
    cdef double[::1] cparv = np.ascontiguousarray(conv_par, dtype=np.float64)
    cdef double[:, :, ::1] cposv = np.ascontiguousarray(conv_pos, dtype=np.float64)
    cdef double[::1] cwv = np.ascontiguousarray(conv_w, dtype=np.float64)
    cdef double[::1] tv = np.ascontiguousarray(tab_v, dtype=np.float64)
    cdef double[::1] td1 = np.ascontiguousarray(tab_d1, dtype=np.float64)
    cdef double[::1] td2 = np.ascontiguousarray(tab_d2, dtype=np.float64)

    cdef int nk = kindsv.shape[0]
    cdef int K = cposv.shape[0] - 1
    cdef int P = cposv.shape[1]
    cdef int nt = tv.shape[0]
    cdef const long* kptr = &kindsv[0] if nk > 0 else NULL
    cdef const double* pptr = &paramsv[0, 0] if nk > 0 else NULL
    cdef const double* cpptr = &cposv[0, 0, 0] if P > 0 else NULL
    cdef const double* cwptr = &cwv[0] if P > 0 else NULL

    xs_arr = np.empty((steps + 1, 3)) if store_path else np.empty((1, 3))
    ps_arr = np.empty((steps + 1, 3)) if store_path else np.empty((1, 3))
    cdef double[:, ::1] xs = xs_arr
    cdef double[:, ::1] ps = ps_arr

    cdef double x[3]
    cdef double p[3]
    cdef double xa[3]
    cdef double pa[3]
    cdef double k1x[3]
    cdef double k1p[3]
    cdef double k2x[3]
    cdef double k2p[3]
    cdef double k3x[3]
    cdef double k3p[3]
    cdef double k4x[3]
    cdef double k4p[3]
    cdef int k, i
    cdef double t

    for i in range(3):
        x[i] = x0v[i]
        p[i] = p0v[i]
    with nogil:
        if store_path:
            for i in range(3):
                xs[0, i] = x[i]
                ps[0, i] = p[i]
        for k in range(steps):
            t = t0 + k * dt
            _rhs(x, p, t, eps, gamma, kptr, pptr, nk, conv, &cparv[0], cpptr, cwptr,
                 K, P, tab_dt, &td1[0], &td2[0], nt, k1x, k1p)
            for i in range(3):
                xa[i] = x[i] + 0.5 * dt * k1x[i]
                pa[i] = p[i] + 0.5 * dt * k1p[i]
            _rhs(xa, pa, t + 0.5 * dt, eps, gamma, kptr, pptr, nk, conv, &cparv[0], cpptr, cwptr,
                 K, P, tab_dt, &td1[0], &td2[0], nt, k2x, k2p)
            for i in range(3):
                xa[i] = x[i] + 0.5 * dt * k2x[i]
                pa[i] = p[i] + 0.5 * dt * k2p[i]
            _rhs(xa, pa, t + 0.5 * dt, eps, gamma, kptr, pptr, nk, conv, &cparv[0], cpptr, cwptr,
                 K, P, tab_dt, &td1[0], &td2[0], nt, k3x, k3p)
            for i in range(3):
                xa[i] = x[i] + dt * k3x[i]
                pa[i] = p[i] + dt * k3p[i]
            _rhs(xa, pa, t + dt, eps, gamma, kptr, pptr, nk, conv, &cparv[0], cpptr, cwptr,
                 K, P, tab_dt, &td1[0], &td2[0], nt, k4x, k4p)
            for i in range(3):
                x[i] = x[i] + dt / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i])
                p[i] = p[i] + dt / 6.0 * (k1p[i] + 2.0 * k2p[i] + 2.0 * k3p[i] + k4p[i])
            if store_path:
                for i in range(3):
                    xs[k + 1, i] = x[i]
                    ps[k + 1, i] = p[i]
        if not store_path:
            for i in range(3):
                xs[0, i] = x[i]
                ps[0, i] = p[i]
    if store_path:
        return xs_arr, ps_arr
    return xs_arr[0], ps_arr[0]


def hjb_sweep(u_next, flags_next, double L, double dt, double eps,
              controls, ctrl_cost, f_node, u_out, flags_out):
    cdef double[:, :, ::1] un = np.ascontiguousarray(u_next, dtype=np.float64)
    cdef unsigned char[:, :, ::1] fn = np.ascontiguousarray(flags_next, dtype=np.uint8)
    cdef double[:, ::1] ctl = np.ascontiguousarray(controls, dtype=np.float64)
    cdef double[::1] cc = np.ascontiguousarray(ctrl_cost, dtype=np.float64)
    cdef double[:, :, ::1] fv = np.ascontiguousarray(f_node, dtype=np.float64)
    cdef double[:, :, ::1] uo = u_out
    cdef unsigned char[:, :, ::1] fo = flags_out

    cdef int nx = un.shape[0]
    cdef int nc = ctl.shape[0]
    cdef int mc = ctl.shape[1]
    cdef double h = 2.0 * L / (nx - 1)
    cdef int i, j, k, c, i1, i2, i3, d1, d2, d3
    cdef double x1, x2, x3, a1, a2, a3, f1, f2, f3, g1, g2, g3, t1, t2, t3
    cdef double v, cand, best, bf1, bf2, bf3
    cdef int bc
    cdef bint outside, corner

    with nogil:
        for i in range(nx):
            x1 = -L + i * h
            for j in range(nx):
                x2 = -L + j * h
                for k in range(nx):
                    x3 = -L + k * h
                    best = INFINITY
                    bc = 0
                    bf1 = 0.0
                    bf2 = 0.0
                    bf3 = 0.0
                    for c in range(nc):
                        a1 = ctl[c, 0]
                        a2 = ctl[c, 1]
                        a3 = ctl[c, 2] if mc == 3 else 0.0
                        f1 = x1 + dt * a1
                        f2 = x2 + dt * a2
                        f3 = x3 + dt * (-x2 * a1 + x1 * a2 + eps * a3)
                        g1 = (f1 + L) / h
                        g2 = (f2 + L) / h
                        g3 = (f3 + L) / h
                        if g1 < 0.0:
                            g1 = 0.0
                        if g1 > nx - 1.0:
                            g1 = nx - 1.0
                        if g2 < 0.0:
                            g2 = 0.0
                        if g2 > nx - 1.0:
                            g2 = nx - 1.0
                        if g3 < 0.0:
                            g3 = 0.0
                        if g3 > nx - 1.0:
                            g3 = nx - 1.0
                        i1 = <int> g1
                        if i1 > nx - 2:
                            i1 = nx - 2
                        i2 = <int> g2
                        if i2 > nx - 2:
                            i2 = nx - 2
                        i3 = <int> g3
                        if i3 > nx - 2:
                            i3 = nx - 2
                        t1 = g1 - i1
                        t2 = g2 - i2
                        t3 = g3 - i3
                        v = (1.0 - t1) * ((1.0 - t2) * ((1.0 - t3) * un[i1, i2, i3] + t3 * un[i1, i2, i3 + 1])
                                          + t2 * ((1.0 - t3) * un[i1, i2 + 1, i3] + t3 * un[i1, i2 + 1, i3 + 1])) \
                            + t1 * ((1.0 - t2) * ((1.0 - t3) * un[i1 + 1, i2, i3] + t3 * un[i1 + 1, i2, i3 + 1])
                                    + t2 * ((1.0 - t3) * un[i1 + 1, i2 + 1, i3] + t3 * un[i1 + 1, i2 + 1, i3 + 1]))
                        cand = cc[c] + v
                        if cand < best:
                            best = cand
                            bc = c
                            bf1 = f1
                            bf2 = f2
                            bf3 = f3
                    # contamination for the winner
                    outside = bf1 < -L or bf1 > L or bf2 < -L or bf2 > L or bf3 < -L or bf3 > L
                    g1 = (bf1 + L) / h
                    g2 = (bf2 + L) / h
                    g3 = (bf3 + L) / h
                    if g1 < 0.0:
                        g1 = 0.0
                    if g1 > nx - 1.0:
                        g1 = nx - 1.0
                    if g2 < 0.0:
                        g2 = 0.0
                    if g2 > nx - 1.0:
                        g2 = nx - 1.0
                    if g3 < 0.0:
                        g3 = 0.0
                    if g3 > nx - 1.0:
                        g3 = nx - 1.0
                    i1 = <int> g1
                    if i1 > nx - 2:
                        i1 = nx - 2
                    i2 = <int> g2
                    if i2 > nx - 2:
                        i2 = nx - 2
                    i3 = <int> g3
                    if i3 > nx - 2:
                        i3 = nx - 2
                    corner = False
                    for d1 in range(2):
                        for d2 in range(2):
                            for d3 in range(2):
                                if fn[i1 + d1, i2 + d2, i3 + d3] > 0:
                                    corner = True
                    uo[i, j, k] = dt * fv[i, j, k] + best
                    fo[i, j, k] = 1 if (outside or corner) else 0
