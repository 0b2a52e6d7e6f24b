"""Pure-Python/numpy implementations of the hot kernels.

Selected automatically when the compiled extension is unavailable (or when
``TANSURF_BACKEND=python``).  Scalar geodesic queries run a plain-float RK4
loop; batched queries (mesh rows, trials) vectorize across the batch with
numpy.  Semantics match ``_core`` exactly; equivalence is covered by tests.
"""

from __future__ import annotations

import math
import weakref

import numpy as np

from .program import (
    ERR_NON_FINITE,
    OP_ADD,
    OP_CONST,
    OP_COS,
    OP_DIV,
    OP_EXP,
    OP_MUL,
    OP_NEG,
    OP_POWI,
    OP_SIN,
    OP_SUB,
    OP_VAR,
    Program,
)

BACKEND_NAME = "python"

_list_cache: "weakref.WeakKeyDictionary[Program, tuple]" = weakref.WeakKeyDictionary()


def _as_lists(program: Program) -> tuple:
    hit = _list_cache.get(program)
    if hit is None:
        hit = (
            program.ops.tolist(),
            program.a.tolist(),
            program.b.tolist(),
            program.consts.tolist(),
            program.out_regs.tolist(),
            program.n_regs,
        )
        _list_cache[program] = hit
    return hit


def eval_program(program: Program, env) -> list[float]:
    """Evaluate on a single environment (sequence of floats).  Raises
    ArithmeticError on division by zero / 0^negative."""
    ops, aa, bb, consts, out_regs, n_regs = _as_lists(program)
    regs = [0.0] * n_regs
    env = list(map(float, env))
    r = 0
    for i in range(len(ops)):
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
                raise ZeroDivisionError("division by zero")
            v = regs[a] / den
        elif op == OP_NEG:
            v = -regs[a]
        elif op == OP_SIN:
            v = math.sin(regs[a])
        elif op == OP_COS:
            v = math.cos(regs[a])
        elif op == OP_EXP:
            v = math.exp(regs[a])
        else:  # OP_POWI
            base = regs[a]
            if base == 0.0 and b < 0:
                raise ZeroDivisionError("zero raised to a negative power")
            v = base**b
        regs[r] = v
        r += 1
    return [regs[j] for j in out_regs]


def eval_program_batch(program: Program, env: np.ndarray) -> np.ndarray:
    """Evaluate on a batch: env has shape (n_vars, B); returns (n_out, B).

    Invalid rows (poles, overflow) propagate as inf/nan rather than raising.
    """
    env = np.asarray(env, dtype=np.float64)
    n = env.shape[1]
    regs = np.empty((program.n_regs, n), dtype=np.float64)
    ops = program.ops
    aa = program.a
    bb = program.b
    consts = program.consts
    with np.errstate(all="ignore"):
        for i in range(len(ops)):
            op = ops[i]
            a = aa[i]
            b = bb[i]
            if op == OP_CONST:
                regs[i] = consts[b]
            elif op == OP_VAR:
                regs[i] = env[b]
            elif op == OP_ADD:
                np.add(regs[a], regs[b], out=regs[i])
            elif op == OP_SUB:
                np.subtract(regs[a], regs[b], out=regs[i])
            elif op == OP_MUL:
                np.multiply(regs[a], regs[b], out=regs[i])
            elif op == OP_DIV:
                np.divide(regs[a], regs[b], out=regs[i])
            elif op == OP_NEG:
                np.negative(regs[a], out=regs[i])
            elif op == OP_SIN:
                np.sin(regs[a], out=regs[i])
            elif op == OP_COS:
                np.cos(regs[a], out=regs[i])
            elif op == OP_EXP:
                np.exp(regs[a], out=regs[i])
            else:  # OP_POWI
                np.power(regs[a], float(b), out=regs[i])
    return regs[program.out_regs]


# ---------------------------------------------------------------------------
# geodesic integration
# ---------------------------------------------------------------------------


def _segment_steps(targets, n_steps: int) -> list[tuple[float, int]]:
    """Split [0, targets[-1]] into per-target segments with step counts."""
    total = abs(targets[-1])
    h_base = total / n_steps
    out = []
    prev = 0.0
    for s in targets:
        seg = s - prev
        nseg = max(1, int(math.ceil(abs(seg) / h_base - 1e-12)))
        out.append((seg / nseg, nseg))
        prev = s
    return out


def geodesic_path(program, lam, mu, nu, m, x0, v0, targets, n_steps, blowup):
    """Integrate the geodesic system through increasing-|s| targets.

    Returns (positions (k, m), velocities (k, m), status) where status is 0
    on success or 1-based index of the first target not reached (escape or
    evaluation failure); entries from that target on are nan.
    """
    ops, aa, bb, consts, out_regs, n_regs = _as_lists(program)
    lam = list(lam)
    mu = list(mu)
    nu = list(nu)
    nnz = len(lam)
    regs = [0.0] * n_regs
    n_ops = len(ops)

    def accel(pos, vel):
        # gamma values at pos, then acc^l = -sum Gamma^l_{mu nu} v^mu v^nu
        try:
            for i in range(n_ops):
                op = ops[i]
                a = aa[i]
                b = bb[i]
                if op == OP_CONST:
                    v = consts[b]
                elif op == OP_VAR:
                    v = pos[b]
                elif op == OP_ADD:
                    v = regs[a] + regs[b]
                elif op == OP_SUB:
                    v = regs[a] - regs[b]
                elif op == OP_MUL:
                    v = regs[a] * regs[b]
                elif op == OP_DIV:
                    den = regs[b]
                    if den == 0.0:
                        return None
                    v = regs[a] / den
                elif op == OP_NEG:
                    v = -regs[a]
                elif op == OP_SIN:
                    v = math.sin(regs[a])
                elif op == OP_COS:
                    v = math.cos(regs[a])
                elif op == OP_EXP:
                    if regs[a] > 700.0:
                        return None
                    v = math.exp(regs[a])
                else:
                    base = regs[a]
                    if base == 0.0 and b < 0:
                        return None
                    v = base**b
                regs[i] = v
            acc = [0.0] * m
            for e in range(nnz):
                acc[lam[e]] -= regs[out_regs[e]] * vel[mu[e]] * vel[nu[e]]
            return acc
        except ArithmeticError:
            return None

    k = len(targets)
    out_pos = np.full((k, m), np.nan)
    out_vel = np.full((k, m), np.nan)
    pos = [float(x0[i]) for i in range(m)]
    vel = [float(v0[i]) for i in range(m)]
    status = 0
    for idx, (h, nseg) in enumerate(_segment_steps(targets, n_steps)):
        failed = False
        for _ in range(nseg):
            a1 = accel(pos, vel)
            if a1 is None:
                failed = True
                break
            p2 = [pos[i] + 0.5 * h * vel[i] for i in range(m)]
            v2 = [vel[i] + 0.5 * h * a1[i] for i in range(m)]
            a2 = accel(p2, v2)
            if a2 is None:
                failed = True
                break
            p3 = [pos[i] + 0.5 * h * v2[i] for i in range(m)]
            v3 = [vel[i] + 0.5 * h * a2[i] for i in range(m)]
            a3 = accel(p3, v3)
            if a3 is None:
                failed = True
                break
            p4 = [pos[i] + h * v3[i] for i in range(m)]
            v4 = [vel[i] + h * a3[i] for i in range(m)]
            a4 = accel(p4, v4)
            if a4 is None:
                failed = True
                break
            h6 = h / 6.0
            pos = [
                pos[i] + h6 * (vel[i] + 2.0 * (v2[i] + v3[i]) + v4[i]) for i in range(m)
            ]
            vel = [
                vel[i] + h6 * (a1[i] + 2.0 * (a2[i] + a3[i]) + a4[i]) for i in range(m)
            ]
            bad = False
            for i in range(m):
                if not (abs(pos[i]) <= blowup and abs(vel[i]) <= blowup):
                    bad = True
                    break
            if bad:
                failed = True
                break
        if failed:
            status = idx + 1
            break
        for i in range(m):
            out_pos[idx, i] = pos[i]
            out_vel[idx, i] = vel[i]
    return out_pos, out_vel, status


def geodesic_path_batch(program, lam, mu, nu, m, X0, V0, targets, n_steps, blowup):
    """Batched variant: X0, V0 are (B, m); returns (k, B, m) arrays and
    per-row statuses (0 ok, else 1-based first unreached target index)."""
    X0 = np.asarray(X0, dtype=np.float64)
    V0 = np.asarray(V0, dtype=np.float64)
    B = X0.shape[0]
    k = len(targets)
    lam = np.asarray(lam)
    mu = np.asarray(mu)
    nu = np.asarray(nu)
    nnz = len(lam)

    def accel(pos, vel):
        gvals = eval_program_batch(program, pos.T)
        acc = np.zeros((B, m))
        for e in range(nnz):
            acc[:, lam[e]] -= gvals[e] * vel[:, mu[e]] * vel[:, nu[e]]
        return acc

    out_pos = np.full((k, B, m), np.nan)
    out_vel = np.full((k, B, m), np.nan)
    statuses = np.zeros(B, dtype=np.int64)
    pos = X0.copy()
    vel = V0.copy()
    with np.errstate(all="ignore"):
        for idx, (h, nseg) in enumerate(_segment_steps(targets, n_steps)):
            for _ in range(nseg):
                a1 = accel(pos, vel)
                p2 = pos + 0.5 * h * vel
                v2 = vel + 0.5 * h * a1
                a2 = accel(p2, v2)
                p3 = pos + 0.5 * h * v2
                v3 = vel + 0.5 * h * a2
                a3 = accel(p3, v3)
                p4 = pos + h * v3
                v4 = vel + h * a3
                a4 = accel(p4, v4)
                h6 = h / 6.0
                pos = pos + h6 * (vel + 2.0 * (v2 + v3) + v4)
                vel = vel + h6 * (a1 + 2.0 * (a2 + a3) + a4)
            ok = (
                np.isfinite(pos).all(axis=1)
                & np.isfinite(vel).all(axis=1)
                & (np.abs(pos).max(axis=1) <= blowup)
                & (np.abs(vel).max(axis=1) <= blowup)
            )
            newly_bad = ok == False  # noqa: E712 - elementwise
            fresh = newly_bad & (statuses == 0)
            statuses[fresh] = idx + 1
            good = statuses == 0
            out_pos[idx, good] = pos[good]
            out_vel[idx, good] = vel[good]
            # freeze failed rows at a finite value so nan does not slow ufuncs
            pos[~good] = 0.0
            vel[~good] = 0.0
    return out_pos, out_vel, statuses
