"""Pure-Python kernels; the reference twin of ``_ckernels.pyx``.

Both modules expose the same functions with the same argument order and
must produce identical results (the simulator bit-for-bit).
"""
import numpy as np

BACKEND = "python"


def _horner(c, x):
    acc = 0.0
    for i in range(c.shape[0] - 1, -1, -1):
        acc = acc * x + c[i]
    return acc


def _horner_d(c, x):
    acc = 0.0
    for i in range(c.shape[0] - 1, 0, -1):
        acc = acc * x + i * c[i]
    return acc


def dde_integrate(rho, h, nmax, eps_tail, rate, mass, coef, alpha, A, mu, prop_half, shift):
    """RK4 for the workload DDE with one aggregated memory vector per class.

    Returns ``(fbar, converged)``; ``fbar[0] = rho`` and integration stops at
    the first node below ``eps_tail``.
    """
    C, n = alpha.shape
    F = np.empty(nmax + 1)
    D = np.empty(nmax + 1)
    F[0] = rho
    xi = np.zeros((C, n))
    gvec = alpha.copy()  # alpha expm(A (w - delta)) once w >= delta
    gb = np.empty((3, C))
    hdel = np.empty((3, C))

    def rhs(Fv, xiv, g, hd, active):
        dF = 0.0
        dxi = np.zeros((C, n))
        for i in range(C):
            dF -= rate[i] * (mass[i] * g[i] + _horner(coef[i], Fv) - alpha[i] @ xiv[i])
            if active[i]:
                dxi[i] = A[i] @ xiv[i] + hd[i] * mu[i]
        return dF, dxi

    last = nmax
    converged = False
    for step in range(nmax):
        Fn = F[step]
        active = [step >= shift[i] for i in range(C)]
        for i in range(C):
            if active[i]:
                gm = gvec[i] @ prop_half[i]
                ge = gm @ prop_half[i]
                gb[0, i] = gvec[i].sum()
                gb[1, i] = gm.sum()
                gb[2, i] = ge.sum()
            else:
                gb[:, i] = 1.0
            s = shift[i]
            if s > 0 and active[i]:
                a = step - s
                fm = 0.5 * (F[a] + F[a + 1]) + 0.125 * h * (D[a] - D[a + 1])
                hdel[0, i] = _horner(coef[i], F[a])
                hdel[1, i] = _horner(coef[i], fm)
                hdel[2, i] = _horner(coef[i], F[a + 1])

        def hd_at(stage, Fv):
            out = hdel[stage].copy()
            for i in range(C):
                if shift[i] == 0:
                    out[i] = _horner(coef[i], Fv)
            return out

        k1, l1 = rhs(Fn, xi, gb[0], hd_at(0, Fn), active)
        D[step] = k1
        F2 = Fn + 0.5 * h * k1
        k2, l2 = rhs(F2, xi + 0.5 * h * l1, gb[1], hd_at(1, F2), active)
        F3 = Fn + 0.5 * h * k2
        k3, l3 = rhs(F3, xi + 0.5 * h * l2, gb[1], hd_at(1, F3), active)
        F4 = Fn + h * k3
        k4, l4 = rhs(F4, xi + h * l3, gb[2], hd_at(2, F4), active)
        Fnext = Fn + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        xi = xi + h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4)
        for i in range(C):
            if active[i]:
                gvec[i] = gvec[i] @ prop_half[i] @ prop_half[i]
        F[step + 1] = Fnext
        if not np.isfinite(Fnext) or Fnext > 1.0 + 1e-9:
            last = step + 1
            break
        if Fnext < eps_tail:
            last = step + 1
            converged = True
            break
    return F[: last + 1].copy(), converged


def ide_integrate(rho, h, nmax, eps_tail, rate, mass, coef, gbar, cw, bw):
    """Trapezoidal time stepping of the workload IDE.

    The convolution of the class kernel with the service density is a
    product-trapezoid sum over the stored prefix::

        conv[n] = sum_{m=0..n} Hs[m] cw[n-m] - Hs[0] bw[n+1]

    Each step solves the implicit endpoint equation by Newton iteration.
    ``gbar`` and ``cw`` have ``nmax + 1`` columns, ``bw`` has ``nmax + 2``.
    Returns ``(fbar, converged)``.
    """
    C = rate.shape[0]
    F = np.empty(nmax + 1)
    Hs = np.empty((C, nmax + 1))
    F[0] = rho
    for i in range(C):
        Hs[i, 0] = _horner(coef[i], rho)
    known = np.empty(C)
    self_w = cw[:, 0]

    def conv_known(i, n):
        # everything except the Hs[i, n] cw[i, 0] term
        return float(np.dot(Hs[i, :n], cw[i, n:0:-1])) - Hs[i, 0] * bw[i, n + 1]

    def rhs_at(n, Fv):
        r = 0.0
        for i in range(C):
            r -= rate[i] * (mass[i] * gbar[i, n] + _horner(coef[i], Fv) * (1.0 - self_w[i]) - known[i])
        return r

    def drhs(Fv):
        r = 0.0
        for i in range(C):
            r -= rate[i] * _horner_d(coef[i], Fv) * (1.0 - self_w[i])
        return r

    for i in range(C):
        # at n = 0 the prefix is just Hs[0], carried by the self weight
        known[i] = -Hs[i, 0] * bw[i, 1]
    Rn = rhs_at(0, rho)

    last = nmax
    converged = False
    for n in range(nmax):
        m = n + 1
        for i in range(C):
            known[i] = conv_known(i, m)
        x = F[n] + h * Rn
        for _ in range(50):
            phi = x - F[n] - 0.5 * h * (Rn + rhs_at(m, x))
            dx = phi / (1.0 - 0.5 * h * drhs(x))
            x -= dx
            if abs(dx) <= 1e-16:
                break
        F[m] = x
        for i in range(C):
            Hs[i, m] = _horner(coef[i], x)
        Rn = rhs_at(m, x)
        if not np.isfinite(x) or x > 1.0 + 1e-9:
            last = m
            break
        if x < eps_tail:
            last = m
            converged = True
            break
    return F[: last + 1].copy(), converged


def _decay(work, last, s, t, acc, record):
    dt = t - last[s]
    w = work[s]
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


def flush(work, last, t, acc, record):
    """Bring every server's workload forward to time ``t``."""
    for s in range(work.shape[0]):
        _decay(work, last, s, t, acc, record)


def simulate_block(work, last, perm, clock, gaps, cls, sel_u, up_u, xhat, d, k, q,
                   record, resp, status, acc):
    """Process one block of arrivals under LL(d, k) with per-request failures.

    ``clock`` is a length-1 array holding the current time.  ``status`` is set
    to 0 (served), 1 (lost) and ``resp`` to the response time when served.
    ``acc`` accumulates ``[busy time, workload area, work added]`` when
    ``record`` is set.
    """
    nserv = work.shape[0]
    t = clock[0]
    vals = [0.0] * 64
    idx = [0] * 64
    for a in range(gaps.shape[0]):
        t += gaps[a]
        c = cls[a]
        dc = d[c]
        kc = k[c]
        x = xhat[a]
        j = 0
        for r in range(dc):
            pick = r + int(sel_u[a, r] * (nserv - r))
            if pick >= nserv:
                pick = nserv - 1
            tmp = perm[r]
            perm[r] = perm[pick]
            perm[pick] = tmp
            if up_u[a, r] < q:
                s = perm[r]
                _decay(work, last, s, t, acc, record)
                # insertion sort by workload, stable in sample order
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
            resp[a] = np.nan
        for r in range(m):
            work[idx[r]] += x
        if record:
            acc[2] += m * x
    clock[0] = t
