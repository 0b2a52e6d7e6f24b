# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: register-program evaluation and RK4 geodesic paths.

Mirrors `tansurf._kernels.pure`; the Python wrappers in `tansurf.geodesic`
treat both backends identically.
"""

from libc.math cimport cos as c_cos
from libc.math cimport exp as c_exp
from libc.math cimport fabs, isfinite
from libc.math cimport pow as c_pow
from libc.math cimport sin as c_sin

import numpy as np

BACKEND_NAME = "c"

cdef enum:
    OP_CONST = 0
    OP_VAR = 1
    OP_NEG = 2
    OP_SIN = 3
    OP_COS = 4
    OP_EXP = 5
    OP_ADD = 6
    OP_SUB = 7
    OP_MUL = 8
    OP_DIV = 9
    OP_POWI = 10


cdef inline double _ipow(double base, int e) noexcept nogil:
    cdef double r = 1.0
    cdef double b = base
    cdef int n = e if e >= 0 else -e
    while n:
        if n & 1:
            r *= b
        b *= b
        n >>= 1
    if e < 0:
        r = 1.0 / r
    return r


cdef inline int _run_program(
    const int[::1] ops, const int[::1] aa, const int[::1] bb,
    const double[::1] consts, const double* env, double* regs, int n_ops,
) noexcept nogil:
    """Execute the program with env as the variable bank. Returns 0 or -1."""
    cdef int i, op, a, b
    cdef double v, den, base
    for i in range(n_ops):
        op = ops[i]
        a = aa[i]
        b = bb[i]
        if op == OP_CONST:
            v = consts[b]
        elif op == OP_VAR:
            v = env[b]
        elif op == OP_ADD:
            v = regs[a] + regs[b]
        elif op == OP_SUB:
            v = regs[a] - regs[b]
        elif op == OP_MUL:
            v = regs[a] * regs[b]
        elif op == OP_DIV:
            den = regs[b]
            if den == 0.0:
                return -1
            v = regs[a] / den
        elif op == OP_NEG:
            v = -regs[a]
        elif op == OP_SIN:
            v = c_sin(regs[a])
        elif op == OP_COS:
            v = c_cos(regs[a])
        elif op == OP_EXP:
            if regs[a] > 700.0:
                return -1
            v = c_exp(regs[a])
        else:
            base = regs[a]
            if base == 0.0 and b < 0:
                return -1
            v = _ipow(base, b)
        regs[i] = v
    return 0


def eval_program(program, env):
    """Single-point evaluation; raises ArithmeticError on domain errors."""
    cdef const int[::1] ops = program.ops
    cdef const int[::1] aa = program.a
    cdef const int[::1] bb = program.b
    cdef const double[::1] consts = program.consts
    cdef const int[::1] out_regs = program.out_regs
    env_arr = np.ascontiguousarray(env, dtype=np.float64)
    cdef const double[::1] env_mv = env_arr
    regs_arr = np.empty(program.n_regs, dtype=np.float64)
    cdef double[::1] regs = regs_arr
    cdef int n_ops = ops.shape[0]
    cdef int st
    if program.n_regs == 0:
        return []
    st = _run_program(ops, aa, bb, consts,
                      &env_mv[0] if env_mv.shape[0] else NULL, &regs[0], n_ops)
    if st != 0:
        raise ZeroDivisionError("expression evaluation failed (pole)")
    return [regs[out_regs[i]] for i in range(out_regs.shape[0])]


def eval_program_batch(program, env):
    """env: (n_vars, B) -> (n_out, B); domain errors yield inf/nan entries."""
    env_arr = np.ascontiguousarray(env, dtype=np.float64)
    cdef const double[:, ::1] env_mv = env_arr
    cdef const int[::1] ops = program.ops
    cdef const int[::1] aa = program.a
    cdef const int[::1] bb = program.b
    cdef const double[::1] consts = program.consts
    cdef const int[::1] out_regs = program.out_regs
    cdef int n_ops = ops.shape[0]
    cdef int n_out = out_regs.shape[0]
    cdef Py_ssize_t B = env_mv.shape[1]
    cdef Py_ssize_t n_vars = env_mv.shape[0]
    out_arr = np.empty((n_out, B), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    regs_arr = np.empty(program.n_regs, dtype=np.float64)
    cdef double[::1] regs = regs_arr
    env_col_arr = np.empty(max(n_vars, 1), dtype=np.float64)
    cdef double[::1] env_col = env_col_arr
    cdef Py_ssize_t j
    cdef int i, st
    cdef double nan = float("nan")
    with nogil:
        for j in range(B):
            for i in range(<int> n_vars):
                env_col[i] = env_mv[i, j]
            st = _run_program(ops, aa, bb, consts, &env_col[0], &regs[0], n_ops)
            for i in range(n_out):
                out[i, j] = regs[out_regs[i]] if st == 0 else nan
    return out_arr


cdef inline int _accel(
    const int[::1] ops, const int[::1] aa, const int[::1] bb,
    const double[::1] consts, const int[::1] out_regs,
    const int[::1] lam, const int[::1] mu, const int[::1] nu,
    int m, int n_ops, int nnz,
    const double* pos, const double* vel, double* regs, double* acc,
) noexcept nogil:
    cdef int e, i
    cdef double g
    if _run_program(ops, aa, bb, consts, pos, regs, n_ops) != 0:
        return -1
    for i in range(m):
        acc[i] = 0.0
    for e in range(nnz):
        g = regs[out_regs[e]]
        acc[lam[e]] -= g * vel[mu[e]] * vel[nu[e]]
    return 0


def geodesic_path(program, lam, mu, nu, int m, x0, v0, targets,
                  int n_steps, double blowup):
    """See pure.geodesic_path: same contract, same return convention."""
    cdef const int[::1] ops = program.ops
    cdef const int[::1] aa = program.a
    cdef const int[::1] bb = program.b
    cdef const double[::1] consts = program.consts
    cdef const int[::1] out_regs = program.out_regs
    cdef const int[::1] lam_mv = np.ascontiguousarray(lam, dtype=np.int32)
    cdef const int[::1] mu_mv = np.ascontiguousarray(mu, dtype=np.int32)
    cdef const int[::1] nu_mv = np.ascontiguousarray(nu, dtype=np.int32)
    cdef int n_ops = ops.shape[0]
    cdef int nnz = lam_mv.shape[0]

    targets_arr = np.ascontiguousarray(targets, dtype=np.float64)
    cdef const double[::1] tg = targets_arr
    cdef Py_ssize_t k = tg.shape[0]

    out_pos_arr = np.full((k, m), np.nan)
    out_vel_arr = np.full((k, m), np.nan)
    cdef double[:, ::1] out_pos = out_pos_arr
    cdef double[:, ::1] out_vel = out_vel_arr

    state_arr = np.empty(14 * m + program.n_regs, dtype=np.float64)
    cdef double[::1] W = state_arr
    cdef double* pos = &W[0]
    cdef double* vel = &W[m]
    cdef double* p2 = &W[2 * m]
    cdef double* v2 = &W[3 * m]
    cdef double* p3 = &W[4 * m]
    cdef double* v3 = &W[5 * m]
    cdef double* p4 = &W[6 * m]
    cdef double* v4 = &W[7 * m]
    cdef double* a1 = &W[8 * m]
    cdef double* a2 = &W[9 * m]
    cdef double* a3 = &W[10 * m]
    cdef double* a4 = &W[11 * m]
    cdef double* npos = &W[12 * m]
    cdef double* nvel = &W[13 * m]
    cdef double* regs = &W[14 * m]

    x0_arr = np.ascontiguousarray(x0, dtype=np.float64)
    v0_arr = np.ascontiguousarray(v0, dtype=np.float64)
    cdef const double[::1] x0_mv = x0_arr
    cdef const double[::1] v0_mv = v0_arr

    cdef int i, idx_i, nseg, step, bad
    cdef Py_ssize_t idx
    cdef double h, h6, total, h_base, prev, seg
    cdef int status = 0

    for i in range(m):
        pos[i] = x0_mv[i]
        vel[i] = v0_mv[i]

    total = fabs(tg[k - 1])
    h_base = total / n_steps
    prev = 0.0
    with nogil:
        for idx in range(k):
            seg = tg[idx] - prev
            nseg = <int> (fabs(seg) / h_base - 1e-12) + 1
            if nseg < 1:
                nseg = 1
            h = seg / nseg
            h6 = h / 6.0
            bad = 0
            for step in range(nseg):
                if _accel(ops, aa, bb, consts, out_regs, lam_mv, mu_mv, nu_mv,
                          m, n_ops, nnz, pos, vel, regs, a1) != 0:
                    bad = 1
                    break
                for i in range(m):
                    p2[i] = pos[i] + 0.5 * h * vel[i]
                    v2[i] = vel[i] + 0.5 * h * a1[i]
                if _accel(ops, aa, bb, consts, out_regs, lam_mv, mu_mv, nu_mv,
                          m, n_ops, nnz, p2, v2, regs, a2) != 0:
                    bad = 1
                    break
                for i in range(m):
                    p3[i] = pos[i] + 0.5 * h * v2[i]
                    v3[i] = vel[i] + 0.5 * h * a2[i]
                if _accel(ops, aa, bb, consts, out_regs, lam_mv, mu_mv, nu_mv,
                          m, n_ops, nnz, p3, v3, regs, a3) != 0:
                    bad = 1
                    break
                for i in range(m):
                    p4[i] = pos[i] + h * v3[i]
                    v4[i] = vel[i] + h * a3[i]
                if _accel(ops, aa, bb, consts, out_regs, lam_mv, mu_mv, nu_mv,
                          m, n_ops, nnz, p4, v4, regs, a4) != 0:
                    bad = 1
                    break
                for i in range(m):
                    npos[i] = pos[i] + h6 * (vel[i] + 2.0 * (v2[i] + v3[i]) + v4[i])
                    nvel[i] = vel[i] + h6 * (a1[i] + 2.0 * (a2[i] + a3[i]) + a4[i])
                for i in range(m):
                    if not (isfinite(npos[i]) and isfinite(nvel[i])):
                        bad = 1
                        break
                    if fabs(npos[i]) > blowup or fabs(nvel[i]) > blowup:
                        bad = 1
                        break
                if bad:
                    break
                for i in range(m):
                    pos[i] = npos[i]
                    vel[i] = nvel[i]
            if bad:
                status = <int> idx + 1
                break
            prev = tg[idx]
            for i in range(m):
                out_pos[idx, i] = pos[i]
                out_vel[idx, i] = vel[i]
    return out_pos_arr, out_vel_arr, status


def geodesic_path_batch(program, lam, mu, nu, int m, X0, V0, targets,
                        int n_steps, double blowup):
    """Batched variant; see pure.geodesic_path_batch."""
    X0_arr = np.ascontiguousarray(X0, dtype=np.float64)
    V0_arr = np.ascontiguousarray(V0, dtype=np.float64)
    cdef Py_ssize_t B = X0_arr.shape[0]
    targets_arr = np.ascontiguousarray(targets, dtype=np.float64)
    cdef Py_ssize_t k = targets_arr.shape[0]
    out_pos = np.full((k, B, m), np.nan)
    out_vel = np.full((k, B, m), np.nan)
    statuses = np.zeros(B, dtype=np.int64)
    cdef Py_ssize_t r
    for r in range(B):
        p, v, st = geodesic_path(program, lam, mu, nu, m, X0_arr[r], V0_arr[r],
                                 targets_arr, n_steps, blowup)
        out_pos[:, r, :] = p
        out_vel[:, r, :] = v
        statuses[r] = st
    return out_pos, out_vel, statuses
