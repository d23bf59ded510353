# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled fixed-step closed-loop kernels.

Mirrors the pure-Python backend operation for operation: stage-term tables
are evaluated on scalars (filtered controller, observer, plant) and on
truncated Taylor jets (exact derivative recursion of the analytic baseline).
Status codes travel out of the nogil region and are converted to the shared
exception types by the ``run_plan`` wrapper.
"""

from libc.math cimport M_PI, cos, isfinite, sin

import numpy as np

from ..errors import DivergenceError, GainFloorError

DEF MAXN = 8
DEF MAXC = 10        # jet coefficients: order up to MAXN + 1
DEF MAXAUG = 23      # 3 * MAXN - 1

# status codes returned by the C helpers
DEF OK = 0
DEF DIVERGED = 1
DEF GAIN_FLOOR = 2


# -- scalar and jet evaluation of stage-term tables --------------------------

cdef inline double eval_stage_s(int stage, const int[:] kk, const double[:] cc,
                                const int[:] ii, const int[:] off,
                                const double* x) noexcept nogil:
    cdef double acc = 0.0
    cdef int t, kind
    for t in range(off[stage], off[stage + 1]):
        kind = kk[t]
        if kind == 0:
            acc += cc[t]
        elif kind == 1:
            acc += cc[t] * x[ii[t]]
        elif kind == 2:
            acc += cc[t] * sin(x[ii[t]])
        else:
            acc += cc[t] * cos(x[ii[t]])
    return acc


cdef inline void jet_sincos_acc(const double* u, int m, double coef,
                                double* out, bint want_sin) noexcept nogil:
    # out[0..m] += coef * sin(u) or coef * cos(u), joint recurrence
    cdef double s[MAXC]
    cdef double c[MAXC]
    cdef double acc_s, acc_c
    cdef int k, j
    s[0] = sin(u[0])
    c[0] = cos(u[0])
    for k in range(1, m + 1):
        acc_s = 0.0
        acc_c = 0.0
        for j in range(1, k + 1):
            acc_s += j * u[j] * c[k - j]
            acc_c += j * u[j] * s[k - j]
        s[k] = acc_s / k
        c[k] = -acc_c / k
    if want_sin:
        for k in range(m + 1):
            out[k] += coef * s[k]
    else:
        for k in range(m + 1):
            out[k] += coef * c[k]


cdef inline void eval_stage_jet(int stage, const int[:] kk, const double[:] cc,
                                const int[:] ii, const int[:] off,
                                double xj[MAXN][MAXC], int m,
                                double* out) noexcept nogil:
    cdef int t, k, kind, idx
    for k in range(m + 1):
        out[k] = 0.0
    for t in range(off[stage], off[stage + 1]):
        kind = kk[t]
        idx = ii[t]
        if kind == 0:
            out[0] += cc[t]
        elif kind == 1:
            for k in range(m + 1):
                out[k] += cc[t] * xj[idx][k]
        elif kind == 2:
            jet_sincos_acc(&xj[idx][0], m, cc[t], out, 1)
        else:
            jet_sincos_acc(&xj[idx][0], m, cc[t], out, 0)


cdef inline void jet_mul(const double* a, const double* b, int m,
                         double* out) noexcept nogil:
    cdef int k, j
    cdef double acc
    for k in range(m + 1):
        acc = 0.0
        for j in range(k + 1):
            acc += a[j] * b[k - j]
        out[k] = acc


cdef inline void jet_div(const double* a, const double* b, int m,
                         double* out) noexcept nogil:
    cdef int k, j
    cdef double acc
    for k in range(m + 1):
        acc = a[k]
        for j in range(1, k + 1):
            acc -= b[j] * out[k - j]
        out[k] = acc / b[0]


# -- exact baseline control (jets) -------------------------------------------

cdef int bs_control(const double* x, double t, int n,
                    const int[:] fk, const double[:] fc, const int[:] fi, const int[:] foff,
                    const int[:] bk, const double[:] bc, const int[:] bi, const int[:] boff,
                    const double[:] kc,
                    double amp, double om, double ph, double gain_floor,
                    double* u_out, double* alpha_out, double* z_out) noexcept nogil:
    cdef double xj[MAXN][MAXC]
    cdef double aj[MAXN][MAXC]
    cdef double zj[MAXN][MAXC]
    cdef double rhs[MAXC]
    cdef double tmp[MAXC]
    cdef double bjet[MAXC]
    cdef double dprev[MAXC]
    cdef double fact, num0, g
    cdef int j, m, k, s, q, i

    # flow jets of the input-free chain prefix: xj[j] valid to order n-1-j
    for j in range(n):
        xj[j][0] = x[j]
    for m in range(1, n):
        for j in range(n - m):
            eval_stage_jet(j, fk, fc, fi, foff, xj, m - 1, rhs)
            eval_stage_jet(j, bk, bc, bi, boff, xj, m - 1, bjet)
            if bjet[0] < gain_floor:
                return GAIN_FLOOR
            jet_mul(bjet, &xj[j + 1][0], m - 1, tmp)
            for k in range(m):
                rhs[k] += tmp[k]
            xj[j][m] = rhs[m - 1] / m

    # reference jet to order n
    fact = 1.0
    for k in range(n + 1):
        if k > 0:
            fact *= k
        aj[0][k] = amp * om ** k * sin(om * t + ph + k * (M_PI / 2.0)) / fact
    for k in range(n):
        zj[0][k] = xj[0][k] - aj[0][k]

    # stage recursion: aj[s] (the (s+1)-th virtual control) to order n-s
    for s in range(1, n):
        q = n - s
        for k in range(q + 1):
            dprev[k] = (k + 1) * aj[s - 1][k + 1]
        eval_stage_jet(s - 1, fk, fc, fi, foff, xj, q, rhs)
        for k in range(q + 1):
            rhs[k] = -rhs[k] - kc[s - 1] * zj[s - 1][k] + dprev[k]
        if s >= 2:
            eval_stage_jet(s - 2, bk, bc, bi, boff, xj, q, bjet)
            if bjet[0] < gain_floor:
                return GAIN_FLOOR
            jet_mul(bjet, &zj[s - 2][0], q, tmp)
            for k in range(q + 1):
                rhs[k] -= tmp[k]
        eval_stage_jet(s - 1, bk, bc, bi, boff, xj, q, bjet)
        if bjet[0] < gain_floor:
            return GAIN_FLOOR
        jet_div(rhs, bjet, q, &aj[s][0])
        for k in range(n - s):
            zj[s][k] = xj[s][k] - aj[s][k]

    # top stage at order zero
    num0 = -eval_stage_s(n - 1, fk, fc, fi, foff, x) \
        - kc[n - 1] * zj[n - 1][0] + aj[n - 1][1]
    if n >= 2:
        g = eval_stage_s(n - 2, bk, bc, bi, boff, x)
        if g < gain_floor:
            return GAIN_FLOOR
        num0 -= g * zj[n - 2][0]
    g = eval_stage_s(n - 1, bk, bc, bi, boff, x)
    if g < gain_floor:
        return GAIN_FLOOR
    u_out[0] = num0 / g
    for i in range(n):
        alpha_out[i] = aj[i][0]
        z_out[i] = zj[i][0]
    return OK


cdef int bs_field(const double* x, double t, int n,
                  const int[:] fk, const double[:] fc, const int[:] fi, const int[:] foff,
                  const int[:] bk, const double[:] bc, const int[:] bi, const int[:] boff,
                  const double[:] kc,
                  double amp, double om, double ph, double gain_floor,
                  double* xdot) noexcept nogil:
    cdef double u
    cdef double alpha[MAXN]
    cdef double z[MAXN]
    cdef double g, drive
    cdef int i, st
    st = bs_control(x, t, n, fk, fc, fi, foff, bk, bc, bi, boff, kc,
                    amp, om, ph, gain_floor, &u, alpha, z)
    if st != OK:
        return st
    for i in range(n):
        g = eval_stage_s(i, bk, bc, bi, boff, x)
        if g < gain_floor:
            return GAIN_FLOOR
        drive = u if i == n - 1 else x[i + 1]
        xdot[i] = eval_stage_s(i, fk, fc, fi, foff, x) + g * drive
    return OK


cdef long bs_run(double[:, :] X, double[:, :] AL, double[:] U,
                 int n, int n_steps, double t0, double dt, int method,
                 const int[:] fk, const double[:] fc, const int[:] fi, const int[:] foff,
                 const int[:] bk, const double[:] bc, const int[:] bi, const int[:] boff,
                 const double[:] kc,
                 double amp, double om, double ph, double gain_floor) noexcept nogil:
    cdef double x[MAXN]
    cdef double xm[MAXN]
    cdef double k1[MAXN]
    cdef double k2[MAXN]
    cdef double k3[MAXN]
    cdef double k4[MAXN]
    cdef double u
    cdef double alpha[MAXN]
    cdef double z[MAXN]
    cdef double t, h
    cdef int i, j, st
    cdef bint bad

    h = dt
    for j in range(n):
        x[j] = X[0, j]
    for i in range(n_steps + 1):
        t = t0 + i * h
        st = bs_control(x, t, n, fk, fc, fi, foff, bk, bc, bi, boff, kc,
                        amp, om, ph, gain_floor, &u, alpha, z)
        if st != OK:
            return (<long> i << 2) | st
        U[i] = u
        for j in range(n):
            AL[i, j] = alpha[j]
            X[i, j] = x[j]
        if i == n_steps:
            break
        st = bs_field(x, t, n, fk, fc, fi, foff, bk, bc, bi, boff, kc,
                      amp, om, ph, gain_floor, k1)
        if st != OK:
            return (<long> i << 2) | st
        if method == 0:
            for j in range(n):
                xm[j] = x[j] + (0.5 * h) * k1[j]
            st = bs_field(xm, t + 0.5 * h, n, fk, fc, fi, foff,
                          bk, bc, bi, boff, kc, amp, om, ph, gain_floor, k2)
            if st != OK:
                return (<long> i << 2) | st
            for j in range(n):
                xm[j] = x[j] + (0.5 * h) * k2[j]
            st = bs_field(xm, t + 0.5 * h, n, fk, fc, fi, foff,
                          bk, bc, bi, boff, kc, amp, om, ph, gain_floor, k3)
            if st != OK:
                return (<long> i << 2) | st
            for j in range(n):
                xm[j] = x[j] + h * k3[j]
            st = bs_field(xm, t + h, n, fk, fc, fi, foff,
                          bk, bc, bi, boff, kc, amp, om, ph, gain_floor, k4)
            if st != OK:
                return (<long> i << 2) | st
            for j in range(n):
                x[j] = x[j] + (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        else:
            for j in range(n):
                x[j] = x[j] + h * k1[j]
        bad = 0
        for j in range(n):
            if not isfinite(x[j]):
                bad = 1
        if bad:
            return (<long> i << 2) | DIVERGED
    return OK


# -- filtered controller with observer (scalars) ------------------------------

cdef int dsc_control_c(const double* x, const double* af, const double* xi,
                       double t, int n,
                       const int[:] fk, const double[:] fc, const int[:] fi, const int[:] foff,
                       const int[:] bk, const double[:] bc, const int[:] bi, const int[:] boff,
                       const double[:] kc, double mu, double kobs, bint obs_on,
                       double amp, double om, double ph, double gain_floor,
                       double* u_out, double* alpha_out) noexcept nogil:
    cdef double z[MAXN]
    cdef double dh[MAXN]
    cdef double adot, num, g
    cdef int i
    for i in range(n):
        dh[i] = xi[i] + kobs * x[i] if obs_on else 0.0
    z[0] = x[0] - amp * sin(om * t + ph)
    adot = amp * om * sin(om * t + ph + M_PI / 2.0)
    for i in range(1, n):
        num = -eval_stage_s(i - 1, fk, fc, fi, foff, x) \
            - kc[i - 1] * z[i - 1] + adot - dh[i - 1]
        if i >= 2:
            g = eval_stage_s(i - 2, bk, bc, bi, boff, x)
            if g < gain_floor:
                return GAIN_FLOOR
            num -= g * z[i - 2]
        g = eval_stage_s(i - 1, bk, bc, bi, boff, x)
        if g < gain_floor:
            return GAIN_FLOOR
        alpha_out[i - 1] = num / g
        z[i] = x[i] - af[i - 1]
        adot = (alpha_out[i - 1] - af[i - 1]) / mu
    num = -eval_stage_s(n - 1, fk, fc, fi, foff, x) \
        - kc[n - 1] * z[n - 1] + adot - dh[n - 1]
    if n >= 2:
        g = eval_stage_s(n - 2, bk, bc, bi, boff, x)
        if g < gain_floor:
            return GAIN_FLOOR
        num -= g * z[n - 2]
    g = eval_stage_s(n - 1, bk, bc, bi, boff, x)
    if g < gain_floor:
        return GAIN_FLOOR
    u_out[0] = num / g
    return OK


cdef void dist_eval(const double* x, double t, int n, int m_terms,
                    const int[:] dk, const double[:] da, const double[:] db,
                    const double[:] dc_, const int[:] di, const int[:] deq,
                    double* d_out) noexcept nogil:
    cdef int i, ti, kind
    cdef double v, sgn_arg
    for i in range(n):
        d_out[i] = 0.0
    for ti in range(m_terms):
        kind = dk[ti]
        if kind == 0:
            v = da[ti]
        elif kind == 1:
            v = da[ti] * t
        elif kind == 2:
            v = da[ti] * sin(db[ti] * t + dc_[ti])
        else:
            sgn_arg = x[di[ti]]
            if sgn_arg > 0.0:
                v = da[ti]
            elif sgn_arg < 0.0:
                v = -da[ti]
            else:
                v = 0.0
        d_out[deq[ti]] += v


cdef int dsc_field(const double* y, double t, int n,
                   const int[:] fk, const double[:] fc, const int[:] fi, const int[:] foff,
                   const int[:] bk, const double[:] bc, const int[:] bi, const int[:] boff,
                   const double[:] kc, double mu, double kobs, bint obs_on,
                   double amp, double om, double ph, double gain_floor,
                   int m_terms,
                   const int[:] dk, const double[:] da, const double[:] db,
                   const double[:] dc_, const int[:] di, const int[:] deq,
                   double* ydot) noexcept nogil:
    cdef double u
    cdef double alpha[MAXN]
    cdef double d[MAXN]
    cdef double g, drive, model
    cdef int i, st
    st = dsc_control_c(y, y + n, y + 2 * n - 1, t, n,
                       fk, fc, fi, foff, bk, bc, bi, boff, kc,
                       mu, kobs, obs_on, amp, om, ph, gain_floor, &u, alpha)
    if st != OK:
        return st
    dist_eval(y, t, n, m_terms, dk, da, db, dc_, di, deq, d)
    for i in range(n):
        g = eval_stage_s(i, bk, bc, bi, boff, y)
        if g < gain_floor:
            return GAIN_FLOOR
        drive = u if i == n - 1 else y[i + 1]
        model = eval_stage_s(i, fk, fc, fi, foff, y) + g * drive
        ydot[i] = model + d[i]
        # model terms enter positively so the estimate error decays first order
        ydot[2 * n - 1 + i] = -kobs * (y[2 * n - 1 + i] + kobs * y[i] + model)
    for i in range(n - 1):
        ydot[n + i] = (alpha[i] - y[n + i]) / mu
    return OK


cdef int dsc_init_filters(const double* x0, double t0, int n,
                          const int[:] fk, const double[:] fc, const int[:] fi, const int[:] foff,
                          const int[:] bk, const double[:] bc, const int[:] bi, const int[:] boff,
                          const double[:] kc, double amp, double om, double ph,
                          double gain_floor, double* af) noexcept nogil:
    cdef double z[MAXN]
    cdef double adot, num, g
    cdef int i
    z[0] = x0[0] - amp * sin(om * t0 + ph)
    adot = amp * om * sin(om * t0 + ph + M_PI / 2.0)
    for i in range(1, n):
        num = -eval_stage_s(i - 1, fk, fc, fi, foff, x0) \
            - kc[i - 1] * z[i - 1] + adot
        if i >= 2:
            g = eval_stage_s(i - 2, bk, bc, bi, boff, x0)
            if g < gain_floor:
                return GAIN_FLOOR
            num -= g * z[i - 2]
        g = eval_stage_s(i - 1, bk, bc, bi, boff, x0)
        if g < gain_floor:
            return GAIN_FLOOR
        af[i - 1] = num / g
        z[i] = x0[i] - af[i - 1]
        adot = 0.0
    return OK


cdef long dsc_run(double[:, :] X, double[:, :] AF, double[:, :] XI,
                  double[:, :] AL, double[:] U,
                  int n, int n_steps, double t0, double dt, int method,
                  const int[:] fk, const double[:] fc, const int[:] fi, const int[:] foff,
                  const int[:] bk, const double[:] bc, const int[:] bi, const int[:] boff,
                  const double[:] kc, double mu, double kobs, bint obs_on,
                  double amp, double om, double ph, double gain_floor,
                  int m_terms,
                  const int[:] dk, const double[:] da, const double[:] db,
                  const double[:] dc_, const int[:] di, const int[:] deq) noexcept nogil:
    cdef double y[MAXAUG]
    cdef double ym[MAXAUG]
    cdef double k1[MAXAUG]
    cdef double k2[MAXAUG]
    cdef double k3[MAXAUG]
    cdef double k4[MAXAUG]
    cdef double u
    cdef double alpha[MAXN]
    cdef double t, h
    cdef int i, j, st, naug
    cdef bint bad

    naug = 3 * n - 1
    h = dt
    for j in range(n):
        y[j] = X[0, j]
        y[2 * n - 1 + j] = -kobs * X[0, j]
    st = dsc_init_filters(y, t0, n, fk, fc, fi, foff, bk, bc, bi, boff,
                          kc, amp, om, ph, gain_floor, y + n)
    if st != OK:
        return st

    for i in range(n_steps + 1):
        t = t0 + i * h
        st = dsc_control_c(y, y + n, y + 2 * n - 1, t, n,
                           fk, fc, fi, foff, bk, bc, bi, boff, kc,
                           mu, kobs, obs_on, amp, om, ph, gain_floor, &u, alpha)
        if st != OK:
            return (<long> i << 2) | st
        U[i] = u
        for j in range(n):
            X[i, j] = y[j]
            XI[i, j] = y[2 * n - 1 + j]
        for j in range(n - 1):
            AF[i, j] = y[n + j]
            AL[i, j] = alpha[j]
        if i == n_steps:
            break
        st = dsc_field(y, t, n, fk, fc, fi, foff, bk, bc, bi, boff, kc,
                       mu, kobs, obs_on, amp, om, ph, gain_floor,
                       m_terms, dk, da, db, dc_, di, deq, k1)
        if st != OK:
            return (<long> i << 2) | st
        if method == 0:
            for j in range(naug):
                ym[j] = y[j] + (0.5 * h) * k1[j]
            st = dsc_field(ym, t + 0.5 * h, n, fk, fc, fi, foff, bk, bc, bi, boff,
                           kc, mu, kobs, obs_on, amp, om, ph, gain_floor,
                           m_terms, dk, da, db, dc_, di, deq, k2)
            if st != OK:
                return (<long> i << 2) | st
            for j in range(naug):
                ym[j] = y[j] + (0.5 * h) * k2[j]
            st = dsc_field(ym, t + 0.5 * h, n, fk, fc, fi, foff, bk, bc, bi, boff,
                           kc, mu, kobs, obs_on, amp, om, ph, gain_floor,
                           m_terms, dk, da, db, dc_, di, deq, k3)
            if st != OK:
                return (<long> i << 2) | st
            for j in range(naug):
                ym[j] = y[j] + h * k3[j]
            st = dsc_field(ym, t + h, n, fk, fc, fi, foff, bk, bc, bi, boff,
                           kc, mu, kobs, obs_on, amp, om, ph, gain_floor,
                           m_terms, dk, da, db, dc_, di, deq, k4)
            if st != OK:
                return (<long> i << 2) | st
            for j in range(naug):
                y[j] = y[j] + (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
        else:
            for j in range(naug):
                y[j] = y[j] + h * k1[j]
        bad = 0
        for j in range(naug):
            if not isfinite(y[j]):
                bad = 1
        if bad:
            return (<long> i << 2) | DIVERGED
    return OK


# -- python-facing wrapper -----------------------------------------------------


def run_plan(plan):
    """Execute a packed simulation plan; returns the primitive channel dict."""
    cdef int n = plan.n
    cdef int n_steps = plan.n_steps
    cdef int method = plan.method
    cdef double t0 = plan.t0
    cdef double dt = plan.dt
    cdef long rc
    if n > MAXN:
        raise ValueError(f"compiled kernel supports chains up to order {MAXN}")

    cdef int[:] fk = np.ascontiguousarray(plan.f_kind, dtype=np.int32)
    cdef double[:] fc = np.ascontiguousarray(plan.f_coef, dtype=np.float64)
    cdef int[:] fi = np.ascontiguousarray(plan.f_idx, dtype=np.int32)
    cdef int[:] foff = np.ascontiguousarray(plan.f_off, dtype=np.int32)
    cdef int[:] bk = np.ascontiguousarray(plan.b_kind, dtype=np.int32)
    cdef double[:] bc = np.ascontiguousarray(plan.b_coef, dtype=np.float64)
    cdef int[:] bi = np.ascontiguousarray(plan.b_idx, dtype=np.int32)
    cdef int[:] boff = np.ascontiguousarray(plan.b_off, dtype=np.int32)
    cdef double[:] kc = np.ascontiguousarray(plan.gains, dtype=np.float64)
    cdef int[:] dk = np.ascontiguousarray(plan.d_kind, dtype=np.int32)
    cdef double[:] da = np.ascontiguousarray(plan.d_a, dtype=np.float64)
    cdef double[:] db = np.ascontiguousarray(plan.d_b, dtype=np.float64)
    cdef double[:] dc_ = np.ascontiguousarray(plan.d_c, dtype=np.float64)
    cdef int[:] di = np.ascontiguousarray(plan.d_idx, dtype=np.int32)
    cdef int[:] deq = np.ascontiguousarray(plan.d_eq, dtype=np.int32)
    cdef int m_terms = plan.d_kind.size

    cdef double amp = plan.ref_amp
    cdef double om = plan.ref_omega
    cdef double ph = plan.ref_phase
    cdef double floor_ = plan.gain_floor
    cdef double mu = plan.mu
    cdef double kobs = plan.k_obs
    cdef bint obs_on = plan.observer_enabled

    cdef double[:, :] X
    cdef double[:] U
    cdef double[:, :] AL
    cdef double[:, :] AF
    cdef double[:, :] XI

    x_arr = np.empty((n_steps + 1, n), dtype=np.float64)
    u_arr = np.empty(n_steps + 1, dtype=np.float64)
    x_arr[0, :] = np.asarray(plan.x0, dtype=np.float64)
    X = x_arr
    U = u_arr

    if plan.controller == "backstepping":
        al_arr = np.empty((n_steps + 1, n), dtype=np.float64)
        AL = al_arr
        with nogil:
            rc = bs_run(X, AL, U, n, n_steps, t0, dt, method,
                        fk, fc, fi, foff, bk, bc, bi, boff, kc,
                        amp, om, ph, floor_)
        _raise_for_status(rc, t0, dt)
        return {"x": x_arr, "alpha": al_arr, "u": u_arr}

    af_arr = np.empty((n_steps + 1, n - 1), dtype=np.float64)
    xi_arr = np.empty((n_steps + 1, n), dtype=np.float64)
    al_arr = np.empty((n_steps + 1, n - 1), dtype=np.float64)
    AF = af_arr
    XI = xi_arr
    AL = al_arr
    with nogil:
        rc = dsc_run(X, AF, XI, AL, U, n, n_steps, t0, dt, method,
                     fk, fc, fi, foff, bk, bc, bi, boff, kc,
                     mu, kobs, obs_on, amp, om, ph, floor_,
                     m_terms, dk, da, db, dc_, di, deq)
    _raise_for_status(rc, t0, dt)
    return {"x": x_arr, "alpha_f": af_arr, "xi": xi_arr, "alpha": al_arr, "u": u_arr}


def _raise_for_status(long rc, double t0, double dt):
    cdef int code
    cdef long step
    if rc == OK:
        return
    code = rc & 3
    step = rc >> 2
    t_bad = t0 + (step + 1) * dt
    if code == DIVERGED:
        raise DivergenceError(
            f"state became non-finite at t={t_bad:.6g}", time=t_bad
        )
    raise GainFloorError(
        f"a stage gain fell below the configured floor near t={t0 + step * dt:.6g}"
    )
