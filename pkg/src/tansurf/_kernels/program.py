"""Compilation of expression trees to flat register programs.

Both evaluation backends (the compiled extension and the numpy fallback)
execute the same program format: four parallel int32 arrays plus a constant
pool.  Instructions write to `dst` from source registers `a` and `b`; for
loads, `b` indexes the constant pool or the variable slot; for integer
powers, `b` holds the exponent.  Compilation is DAG-aware, so subtrees
shared by several outputs are computed once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..expr import (
    Add,
    Const,
    Cos,
    Div,
    Exp,
    Expression,
    Mul,
    Neg,
    Pow,
    Sin,
    Sub,
    Var,
)

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

# status codes shared with the backends
OK = 0
ERR_DIV_ZERO = -1
ERR_POW_ZERO = -2
ERR_NON_FINITE = -3

STATUS_MESSAGES = {
    ERR_DIV_ZERO: "division by zero",
    ERR_POW_ZERO: "zero raised to a negative power",
    ERR_NON_FINITE: "non-finite value",
}


@dataclass(frozen=True, eq=False)
class Program:
    """A straight-line register program computing `len(out_regs)` scalars."""

    ops: np.ndarray
    dst: np.ndarray
    a: np.ndarray
    b: np.ndarray
    consts: np.ndarray
    n_regs: int
    out_regs: np.ndarray
    n_vars: int

    def __len__(self) -> int:
        return len(self.ops)


def compile_expressions(
    exprs: Sequence[Expression], var_slots: dict[str, int]
) -> Program:
    """Compile expressions into one shared program.

    `var_slots` maps variable names to environment indices; every variable
    appearing in the expressions must be present.
    """
    ops: list[int] = []
    dst: list[int] = []
    src_a: list[int] = []
    src_b: list[int] = []
    consts: list[float] = []
    const_index: dict[float, int] = {}
    reg_of: dict[int, int] = {}
    n_regs = 0

    def emit(op: int, a: int, b: int) -> int:
        nonlocal n_regs
        r = n_regs
        n_regs += 1
        ops.append(op)
        dst.append(r)
        src_a.append(a)
        src_b.append(b)
        return r

    def const_slot(value: float) -> int:
        idx = const_index.get(value)
        if idx is None:
            idx = len(consts)
            consts.append(value)
            const_index[value] = idx
        return idx

    def walk(e: Expression) -> int:
        key = id(e)
        hit = reg_of.get(key)
        if hit is not None:
            return hit
        if isinstance(e, Const):
            r = emit(OP_CONST, -1, const_slot(e.value))
        elif isinstance(e, Var):
            try:
                slot = var_slots[e.name]
            except KeyError:
                raise KeyError(f"variable {e.name!r} has no slot") from None
            r = emit(OP_VAR, -1, slot)
        elif isinstance(e, Neg):
            r = emit(OP_NEG, walk(e.arg), -1)
        elif isinstance(e, Sin):
            r = emit(OP_SIN, walk(e.arg), -1)
        elif isinstance(e, Cos):
            r = emit(OP_COS, walk(e.arg), -1)
        elif isinstance(e, Exp):
            r = emit(OP_EXP, walk(e.arg), -1)
        elif isinstance(e, Add):
            r = emit(OP_ADD, walk(e.left), walk(e.right))
        elif isinstance(e, Sub):
            r = emit(OP_SUB, walk(e.left), walk(e.right))
        elif isinstance(e, Mul):
            r = emit(OP_MUL, walk(e.left), walk(e.right))
        elif isinstance(e, Div):
            r = emit(OP_DIV, walk(e.left), walk(e.right))
        elif isinstance(e, Pow):
            r = emit(OP_POWI, walk(e.base), e.exponent)
        else:
            raise TypeError(f"cannot compile node {type(e)}")
        reg_of[key] = r
        return r

    out_regs = np.asarray([walk(e) for e in exprs], dtype=np.int32)
    n_vars = 1 + max(var_slots.values(), default=-1)
    return Program(
        ops=np.asarray(ops, dtype=np.int32),
        dst=np.asarray(dst, dtype=np.int32),
        a=np.asarray(src_a, dtype=np.int32),
        b=np.asarray(src_b, dtype=np.int32),
        consts=np.asarray(consts, dtype=np.float64),
        n_regs=n_regs,
        out_regs=out_regs,
        n_vars=n_vars,
    )


def coordinate_slots(m: int, with_t: bool = False) -> dict[str, int]:
    slots = {f"x{i + 1}": i for i in range(m)}
    if with_t:
        slots["t"] = m
    return slots
