# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; must agree with ``_pykernels`` (the simulator bit for bit)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport NAN, isfinite, fabs

cnp.import_array()

BACKEND = "cython"


cdef inline double _horner(const double[::1] c, double x) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(c.shape[0] - 1, -1, -1):
        acc = acc * x + c[i]
    return acc


cdef inline double _horner_d(const double[::1] c, double x) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(c.shape[0] - 1, 0, -1):
        acc = acc * x + i * c[i]
    return acc


cdef double _dde_rhs(double Fv, double[:, ::1] xs, Py_ssize_t stage, double[:, ::1] dxi,
                     const double[::1] rate, const double[::1] mass, const double[:, ::1] coef,
                     const double[:, ::1] alpha, const double[:, :, ::1] A, const double[:, ::1] mu,
                     const long long[::1] shift, double[:, ::1] gb, double[:, ::1] hdel,
                     unsigned char[::1] active) noexcept nogil:
    cdef Py_ssize_t C = alpha.shape[0], n = alpha.shape[1]
    cdef Py_ssize_t i, p, r
    cdef double dF = 0.0, hv, axi, hd, acc
    for i in range(C):
        hv = _horner(coef[i], Fv)
        axi = 0.0
        for p in range(n):
            axi += alpha[i, p] * xs[i, p]
        dF -= rate[i] * (mass[i] * gb[stage, i] + hv - axi)
        if active[i]:
            hd = hv if shift[i] == 0 else hdel[stage, i]
            for p in range(n):
                acc = 0.0
                for r in range(n):
                    acc += A[i, p, r] * xs[i, r]
                dxi[i, p] = acc + hd * mu[i, p]
        else:
            for p in range(n):
                dxi[i, p] = 0.0
    return dF


def dde_integrate(double rho, double h, Py_ssize_t nmax, double eps_tail,
                  const double[::1] rate, const double[::1] mass, const double[:, ::1] coef,
                  const double[:, ::1] alpha, const double[:, :, ::1] A, const double[:, ::1] mu,
                  const double[:, :, ::1] prop_half, const long long[::1] shift):
    cdef Py_ssize_t C = alpha.shape[0], n = alpha.shape[1]
    F_arr = np.empty(nmax + 1)
    D_arr = np.empty(nmax + 1)
    cdef double[::1] F = F_arr
    cdef double[::1] D = D_arr
    cdef double[:, ::1] xi = np.zeros((C, n))
    cdef double[:, ::1] xs = np.zeros((C, n))
    cdef double[:, ::1] l1 = np.zeros((C, n))
    cdef double[:, ::1] l2 = np.zeros((C, n))
    cdef double[:, ::1] l3 = np.zeros((C, n))
    cdef double[:, ::1] l4 = np.zeros((C, n))
    cdef double[:, ::1] gvec = np.array(alpha, dtype=float, copy=True)
    cdef double[:, ::1] gm = np.zeros((C, n))
    cdef double[:, ::1] ge = np.zeros((C, n))
    cdef double[:, ::1] gb = np.ones((3, C))
    cdef double[:, ::1] hdel = np.zeros((3, C))
    cdef unsigned char[::1] active = np.zeros(C, dtype=np.uint8)
    cdef Py_ssize_t step, i, p, r, a, s
    cdef Py_ssize_t last = nmax
    cdef bint converged = False
    cdef double Fn, k1, k2, k3, k4, F2, F3, F4, Fnext, fm, acc, sm, se, s0
    F[0] = rho
    with nogil:
        for step in range(nmax):
            Fn = F[step]
            for i in range(C):
                active[i] = step >= shift[i]
                if active[i]:
                    s0 = 0.0
                    sm = 0.0
                    se = 0.0
                    for p in range(n):
                        acc = 0.0
                        for r in range(n):
                            acc += gvec[i, r] * prop_half[i, r, p]
                        gm[i, p] = acc
                    for p in range(n):
                        acc = 0.0
                        for r in range(n):
                            acc += gm[i, r] * prop_half[i, r, p]
                        ge[i, p] = acc
                    for p in range(n):
                        s0 += gvec[i, p]
                        sm += gm[i, p]
                        se += ge[i, p]
                    gb[0, i] = s0
                    gb[1, i] = sm
                    gb[2, i] = se
                else:
                    gb[0, i] = 1.0
                    gb[1, i] = 1.0
                    gb[2, i] = 1.0
                s = shift[i]
                if s > 0 and active[i]:
                    a = step - s
                    fm = 0.5 * (F[a] + F[a + 1]) + 0.125 * h * (D[a] - D[a + 1])
                    hdel[0, i] = _horner(coef[i], F[a])
                    hdel[1, i] = _horner(coef[i], fm)
                    hdel[2, i] = _horner(coef[i], F[a + 1])

            k1 = _dde_rhs(Fn, xi, 0, l1, rate, mass, coef, alpha, A, mu, shift, gb, hdel, active)
            D[step] = k1
            F2 = Fn + 0.5 * h * k1
            for i in range(C):
                for p in range(n):
                    xs[i, p] = xi[i, p] + 0.5 * h * l1[i, p]
            k2 = _dde_rhs(F2, xs, 1, l2, rate, mass, coef, alpha, A, mu, shift, gb, hdel, active)
            F3 = Fn + 0.5 * h * k2
            for i in range(C):
                for p in range(n):
                    xs[i, p] = xi[i, p] + 0.5 * h * l2[i, p]
            k3 = _dde_rhs(F3, xs, 1, l3, rate, mass, coef, alpha, A, mu, shift, gb, hdel, active)
            F4 = Fn + h * k3
            for i in range(C):
                for p in range(n):
                    xs[i, p] = xi[i, p] + h * l3[i, p]
            k4 = _dde_rhs(F4, xs, 2, l4, rate, mass, coef, alpha, A, mu, shift, gb, hdel, active)
            Fnext = Fn + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            for i in range(C):
                for p in range(n):
                    xi[i, p] = xi[i, p] + h / 6.0 * (l1[i, p] + 2.0 * l2[i, p] + 2.0 * l3[i, p] + l4[i, p])
                if active[i]:
                    for p in range(n):
                        gvec[i, p] = ge[i, p]
            F[step + 1] = Fnext
            if not isfinite(Fnext) or Fnext > 1.0 + 1e-9:
                last = step + 1
                break
            if Fnext < eps_tail:
                last = step + 1
                converged = True
                break
    return F_arr[: last + 1].copy(), bool(converged)


def ide_integrate(double rho, double h, Py_ssize_t nmax, double eps_tail,
                  const double[::1] rate, const double[::1] mass, const double[:, ::1] coef,
                  const double[:, ::1] gbar, const double[:, ::1] cw, const double[:, ::1] bw):
    cdef Py_ssize_t C = rate.shape[0]
    F_arr = np.empty(nmax + 1)
    cdef double[::1] F = F_arr
    cdef double[:, ::1] Hs = np.empty((C, nmax + 1))
    cdef double[::1] known = np.empty(C)
    cdef Py_ssize_t n, m, i, t, it
    cdef Py_ssize_t last = nmax
    cdef bint converged = False
    cdef double Rn, x, phi, dx, r, dr, acc
    F[0] = rho
    with nogil:
        for i in range(C):
            Hs[i, 0] = _horner(coef[i], rho)
            known[i] = -Hs[i, 0] * bw[i, 1]
        Rn = 0.0
        for i in range(C):
            Rn -= rate[i] * (mass[i] * gbar[i, 0] + Hs[i, 0] * (1.0 - cw[i, 0]) - known[i])
        for n in range(nmax):
            m = n + 1
            for i in range(C):
                acc = 0.0
                for t in range(m):
                    acc += Hs[i, t] * cw[i, m - t]
                known[i] = acc - Hs[i, 0] * bw[i, m + 1]
            x = F[n] + h * Rn
            for it in range(50):
                r = 0.0
                dr = 0.0
                for i in range(C):
                    r -= rate[i] * (mass[i] * gbar[i, m] + _horner(coef[i], x) * (1.0 - cw[i, 0]) - known[i])
                    dr -= rate[i] * _horner_d(coef[i], x) * (1.0 - cw[i, 0])
                phi = x - F[n] - 0.5 * h * (Rn + r)
                dx = phi / (1.0 - 0.5 * h * dr)
                x -= dx
                if fabs(dx) <= 1e-16:
                    break
            F[m] = x
            Rn = 0.0
            for i in range(C):
                Hs[i, m] = _horner(coef[i], x)
                Rn -= rate[i] * (mass[i] * gbar[i, m] + Hs[i, m] * (1.0 - cw[i, 0]) - known[i])
            if not isfinite(x) or x > 1.0 + 1e-9:
                last = m
                break
            if x < eps_tail:
                last = m
                converged = True
                break
    return F_arr[: last + 1].copy(), bool(converged)


cdef inline void _decay(double[::1] work, double[::1] last, Py_ssize_t s, double t,
                        double[::1] acc, bint record) noexcept nogil:
    cdef double dt = t - last[s]
    cdef double w = work[s]
    if dt >= w:
        if record:
            acc[0] += w
            acc[1] += 0.5 * w * w
        w = 0.0
    else:
        if record:
            acc[0] += dt
            acc[1] += w * dt - 0.5 * dt * dt
        w -= dt
    work[s] = w
    last[s] = t


def flush(double[::1] work, double[::1] last, double t, double[::1] acc, bint record):
    cdef Py_ssize_t s
    with nogil:
        for s in range(work.shape[0]):
            _decay(work, last, s, t, acc, record)


def simulate_block(double[::1] work, double[::1] last, long long[::1] perm, double[::1] clock,
                   const double[::1] gaps, const long long[::1] cls, const double[:, ::1] sel_u,
                   const double[:, ::1] up_u, const double[::1] xhat, const long long[::1] d,
                   const long long[::1] k, double q, bint record, double[::1] resp,
                   signed char[::1] status, double[::1] acc):
    cdef Py_ssize_t nserv = work.shape[0]
    cdef double t = clock[0]
    cdef double vals[64]
    cdef Py_ssize_t idx[64]
    cdef Py_ssize_t a, r, pick, s, pos, j, m, dc, kc
    cdef long long tmp
    cdef long long c
    cdef double x, v
    with nogil:
        for a in range(gaps.shape[0]):
            t += gaps[a]
            c = cls[a]
            dc = d[c]
            kc = k[c]
            x = xhat[a]
            j = 0
            for r in range(dc):
                pick = r + <Py_ssize_t>(sel_u[a, r] * <double>(nserv - r))
                if pick >= nserv:
                    pick = nserv - 1
                tmp = perm[r]
                perm[r] = perm[pick]
                perm[pick] = tmp
                if up_u[a, r] < q:
                    s = perm[r]
                    _decay(work, last, s, t, acc, record)
                    v = work[s]
                    pos = j
                    while pos > 0 and vals[pos - 1] > v:
                        vals[pos] = vals[pos - 1]
                        idx[pos] = idx[pos - 1]
                        pos -= 1
                    vals[pos] = v
                    idx[pos] = s
                    j += 1
            m = kc if j >= kc else j
            if j >= kc:
                status[a] = 0
                resp[a] = vals[kc - 1] + x
            else:
                status[a] = 1
                resp[a] = NAN
            for r in range(m):
                work[idx[r]] += x
            if record:
                acc[2] += m * x
        clock[0] = t
