# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Euler-Maruyama core for the built-in coefficient families.

Family codes match ``jumpsde.coefficients``; evaluation order matches
``jumpsde._kernels_py`` so the two backends agree to rounding.
"""

from libc.math cimport sqrt, pow, tanh, sin, isfinite, NAN, INFINITY

import numpy as np

cdef enum:
    MAXD = 8

cdef inline double cutoff(double r, double R) noexcept nogil:
    cdef double u
    if not isfinite(R):
        return 1.0
    u = r - R
    if u <= 0.0:
        return 1.0
    if u >= 1.0:
        return 0.0
    return 1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)


cdef inline double sqn(const double* x, int d) noexcept nogil:
    cdef double s = x[0] * x[0]
    cdef int i
    for i in range(1, d):
        s = s + x[i] * x[i]
    return s


cdef inline void base_drift(int fam, const double* par, double cut,
                            const double* x, double* out, int d) noexcept nogil:
    cdef int i
    cdef double r, scale, v, eta
    r = sqrt(sqn(x, d))
    if fam == 0:
        for i in range(d):
            out[i] = 0.0
    elif fam == 1:
        for i in range(d):
            out[i] = par[0] * x[i]
    elif fam == 2:
        scale = pow(r, -par[0]) if r > 0 else 0.0
        for i in range(d):
            out[i] = (-x[i]) * scale - par[1] * x[i]
    else:
        for i in range(d):
            v = -x[i]
            if v < -par[0]:
                v = -par[0]
            elif v > par[0]:
                v = par[0]
            out[i] = v
    if isfinite(cut):
        eta = cutoff(r, cut)
        for i in range(d):
            out[i] = eta * out[i]


cdef inline double diff_diag(int fam, const double* par, double xi) noexcept nogil:
    if fam == 0:
        return 0.0
    if fam == 1:
        return par[0]
    if fam == 2:
        return par[0] * xi
    return par[0] * tanh(xi)


cdef inline double jump_coef(int fam, const double* par, double xi) noexcept nogil:
    if fam == 0:
        return 0.0
    if fam == 1:
        return par[0]
    if fam == 2:
        return par[0] * xi
    return par[0] * sin(xi)


def run_chunk(int drift_fam, double[::1] drift_par, double drift_cut,
              double[:, ::1] shifts, double[::1] weights, double drift_bound,
              int diff_fam, double[::1] diff_par,
              int jump_fam, double[::1] jump_par, double field_cut,
              double lam_mean, bint compensate,
              double[:, ::1] x0, double[:, :, ::1] dw, double[::1] dts,
              long long[::1] jptr, long long[::1] jstep, double[:, ::1] jmarks,
              long long[::1] rec_steps, double stop_radius, double blowup):
    """Simulate a chunk of paths.  Returns the same tuple as the numpy core,
    or raises ValueError when a mollified drift exceeds its bound."""
    cdef int P = dw.shape[0], n = dw.shape[1], d = dw.shape[2]
    cdef int nq = shifts.shape[0]
    cdef int n_rec = rec_steps.shape[0]
    if d > MAXD:
        raise ValueError("compiled core supports d <= %d" % MAXD)

    states_a = np.full((P, n_rec, d), np.nan)
    supsq_a = np.full((P, n_rec), np.nan)
    exit_step_a = np.full(P, -1, dtype=np.int64)
    exit_state_a = np.full((P, d), np.nan)
    explode_step_a = np.full(P, -1, dtype=np.int64)
    cdef double[:, :, ::1] states = states_a
    cdef double[:, ::1] supsq = supsq_a
    cdef long long[::1] exit_step = exit_step_a
    cdef double[:, ::1] exit_state = exit_state_a
    cdef long long[::1] explode_step = explode_step_a

    cdef double x[MAXD]
    cdef double y[MAXD]
    cdef double b[MAXD]
    cdef double tmp[MAXD]
    cdef double pt[MAXD]
    cdef double bdt[MAXD]
    cdef double noise[MAXD]
    cdef double cdt[MAXD]
    cdef int p, i, k, q, r, status = 0
    cdef long long j, jend
    cdef double dt, sq, sup, rr, eta_f, acc, lim2 = blowup * blowup
    cdef bint check_stop = isfinite(stop_radius)
    cdef bint exploded

    with nogil:
        for p in range(P):
            if status:
                break
            for k in range(d):
                x[k] = x0[p, k]
            sq = sqn(x, d)
            sup = sq
            exploded = False
            if check_stop and sqrt(sq) >= stop_radius:
                exit_step[p] = 0
                for k in range(d):
                    exit_state[p, k] = x[k]
            r = 0
            if rec_steps[0] == 0:
                for k in range(d):
                    states[p, 0, k] = x[k]
                supsq[p, 0] = sup
                r = 1
            j = jptr[p]
            jend = jptr[p + 1]
            for i in range(n):
                if exploded:
                    break
                dt = dts[i]
                # drift (optionally mollified by quadrature)
                if nq == 0:
                    base_drift(drift_fam, &drift_par[0], drift_cut, x, b, d)
                else:
                    for q in range(nq):
                        for k in range(d):
                            pt[k] = x[k] - shifts[q, k]
                        base_drift(drift_fam, &drift_par[0], drift_cut, pt, tmp, d)
                        if sqn(tmp, d) > drift_bound:
                            status = 1
                            break
                        if q == 0:
                            for k in range(d):
                                b[k] = tmp[k] * weights[0]
                        else:
                            for k in range(d):
                                b[k] = b[k] + tmp[k] * weights[q]
                    if status:
                        break
                eta_f = cutoff(sqrt(sqn(x, d)), field_cut)
                for k in range(d):
                    bdt[k] = b[k] * dt
                    if isfinite(field_cut):
                        noise[k] = (eta_f * diff_diag(diff_fam, &diff_par[0], x[k])) * dw[p, i, k]
                        cdt[k] = ((eta_f * jump_coef(jump_fam, &jump_par[0], x[k])) * lam_mean) * dt
                    else:
                        noise[k] = diff_diag(diff_fam, &diff_par[0], x[k]) * dw[p, i, k]
                        cdt[k] = (jump_coef(jump_fam, &jump_par[0], x[k]) * lam_mean) * dt
                    y[k] = x[k]
                while j < jend and jstep[j] == i:
                    if isfinite(field_cut):
                        eta_f = cutoff(sqrt(sqn(y, d)), field_cut)
                        for k in range(d):
                            y[k] = y[k] + (eta_f * jump_coef(jump_fam, &jump_par[0], y[k])) * jmarks[j, k]
                    else:
                        for k in range(d):
                            y[k] = y[k] + jump_coef(jump_fam, &jump_par[0], y[k]) * jmarks[j, k]
                    j += 1
                for k in range(d):
                    x[k] = y[k] + bdt[k] + noise[k]
                    if compensate:
                        x[k] = x[k] - cdt[k]
                sq = sqn(x, d)
                if not (sq <= lim2):
                    explode_step[p] = i + 1
                    exploded = True
                    sq = NAN
                if sq > sup or sq != sq:
                    sup = sq
                if check_stop and not exploded and exit_step[p] < 0 and sqrt(sq) >= stop_radius:
                    exit_step[p] = i + 1
                    for k in range(d):
                        exit_state[p, k] = x[k]
                if r < n_rec and rec_steps[r] == i + 1:
                    if not exploded:
                        for k in range(d):
                            states[p, r, k] = x[k]
                    supsq[p, r] = sup
                    r += 1
    if status:
        raise ValueError("mollified drift exceeds its global bound")
    return states_a, supsq_a, exit_step_a, exit_state_a, explode_step_a
