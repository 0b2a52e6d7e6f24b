"""Affine connections on R^m given by coefficient tables Gamma^l_{mu nu}.

A connection is either *symbolic* (each coefficient an expression in
``x1..xm``; zero entries omitted) or *callback-backed* (coefficients produced
numerically per point, as for the metric/Levi-Civita constructor).  Both
expose the same evaluation interface; downstream modules pick symbolic fast
paths when available.
"""

from __future__ import annotations

import itertools
from typing import Callable, Mapping, Sequence

import numpy as np

from . import expr as ex
from ._kernels import compile_expressions, coordinate_slots, eval_program_batch

__all__ = [
    "Connection",
    "levi_civita",
    "torsion_tensor",
    "symmetrize",
    "christoffel_partial",
]

TORSION_PROBE_TOL = 1e-12
_FD_STEP = 1e-5


def _parse_triple(key, m: int) -> tuple[int, int, int]:
    """Accept 'l,mu,nu' strings or integer triples, 1-based, returning 0-based."""
    if isinstance(key, str):
        parts = key.split(",")
        if len(parts) != 3:
            raise ValueError(f"bad coefficient key {key!r}: want 'l,mu,nu'")
        idx = tuple(int(p.strip()) for p in parts)
    else:
        idx = tuple(int(p) for p in key)
        if len(idx) != 3:
            raise ValueError(f"bad coefficient key {key!r}")
    for i in idx:
        if not 1 <= i <= m:
            raise ValueError(f"coefficient index {idx} out of range 1..{m}")
    return (idx[0] - 1, idx[1] - 1, idx[2] - 1)


def probe_grid(m: int, span: float = 1.0) -> np.ndarray:
    """Certification grid: 5 points per axis for m <= 4, 3 per axis beyond
    (keeps the grid size comparable)."""
    per_axis = 5 if m <= 4 else 3
    axis = np.linspace(-span, span, per_axis)
    return np.array(list(itertools.product(axis, repeat=m)))


class Connection:
    """Coefficient table of an affine connection on R^m (m >= 2)."""

    def __init__(
        self,
        m: int,
        table: Mapping | None = None,
        *,
        callback_batch: Callable[[np.ndarray], np.ndarray] | None = None,
        _assume_torsion_free: bool | None = None,
    ):
        if m < 2:
            raise ValueError(f"dimension must be at least 2, got {m}")
        if (table is None) == (callback_batch is None):
            raise ValueError("provide exactly one of a coefficient table or a callback")
        self.m = m
        self._callback_batch = callback_batch
        self._kernel_cache = None
        self._partials_cache: dict[tuple[int, int, int, int], ex.Expression] = {}
        if table is not None:
            entries: dict[tuple[int, int, int], ex.Expression] = {}
            for key, raw in table.items():
                e = ex.as_expression(raw)
                bad = e.variables() - {f"x{i + 1}" for i in range(m)}
                if bad:
                    raise ValueError(
                        f"coefficient {key!r} uses {sorted(bad)}; only x1..x{m} allowed"
                    )
                if not (isinstance(e, ex.Const) and e.value == 0.0):
                    entries[_parse_triple(key, m)] = e
            self.table = entries
        else:
            self.table = None
        if _assume_torsion_free is None:
            self.torsion_free = self._certify_torsion_free()
        else:
            self.torsion_free = _assume_torsion_free

    # -- constructors -----------------------------------------------------

    @classmethod
    def flat(cls, m: int) -> "Connection":
        return cls(m, {})

    @classmethod
    def from_table(cls, m: int, table: Mapping) -> "Connection":
        return cls(m, table)

    @property
    def is_symbolic(self) -> bool:
        return self.table is not None

    def entry(self, lam: int, mu: int, nu: int) -> ex.Expression:
        """Coefficient as an expression, 0-based indices (symbolic only)."""
        if self.table is None:
            raise TypeError("callback-backed connection has no symbolic entries")
        return self.table.get((lam, mu, nu), ex.ZERO)

    # -- evaluation --------------------------------------------------------

    def christoffel_values(self, x) -> np.ndarray:
        """All coefficients at a point: array of shape (m, m, m), [l, mu, nu]."""
        return self.christoffel_values_batch(np.asarray(x, dtype=float)[None, :])[0]

    def christoffel_values_batch(self, X: np.ndarray) -> np.ndarray:
        """Values at a batch of points: (B, m) -> (B, m, m, m)."""
        X = np.asarray(X, dtype=float)
        m = self.m
        if self.table is None:
            out = self._callback_batch(X)
            return np.asarray(out, dtype=float).reshape(len(X), m, m, m)
        out = np.zeros((len(X), m, m, m))
        if not self.table:
            return out
        program, lam, mu, nu = self._kernel_data()
        vals = eval_program_batch(program, X.T)
        for e in range(len(lam)):
            out[:, lam[e], mu[e], nu[e]] = vals[e]
        if not np.isfinite(out).all():
            raise ex.EvaluationError("connection coefficients not finite at a requested point")
        return out

    def christoffel_partials(self, x) -> np.ndarray:
        """Partial derivatives at a point: (m, m, m, m), [l, mu, nu, k] =
        d Gamma^l_{mu nu} / d x^k.  Symbolic connections differentiate
        exactly; callback-backed ones use central differences (step 1e-5)."""
        x = np.asarray(x, dtype=float)
        m = self.m
        out = np.zeros((m, m, m, m))
        if self.table is not None:
            env = {f"x{i + 1}": x[i] for i in range(m)}
            for (l, mu, nu), e in self.table.items():
                for k in range(m):
                    out[l, mu, nu, k] = self._partial_expr(l, mu, nu, k).evaluate(env)
            return out
        for k in range(m):
            step = np.zeros(m)
            step[k] = _FD_STEP
            hi = self.christoffel_values(x + step)
            lo = self.christoffel_values(x - step)
            out[:, :, :, k] = (hi - lo) / (2.0 * _FD_STEP)
        return out

    def _partial_expr(self, l: int, mu: int, nu: int, k: int) -> ex.Expression:
        key = (l, mu, nu, k)
        hit = self._partials_cache.get(key)
        if hit is None:
            hit = self.entry(l, mu, nu).diff(f"x{k + 1}")
            self._partials_cache[key] = hit
        return hit

    # -- derived objects ----------------------------------------------------

    def torsion(self, x) -> np.ndarray:
        """Torsion tensor T^l_{mu nu} = Gamma^l_{mu nu} - Gamma^l_{nu mu} at x."""
        g = self.christoffel_values(x)
        return g - np.swapaxes(g, 1, 2)

    def symmetrize(self) -> "Connection":
        """The connection with coefficients (Gamma^l_{mu nu} + Gamma^l_{nu mu}) / 2;
        same geodesics, zero torsion."""
        m = self.m
        if self.table is not None:
            sym: dict[tuple[int, int, int], ex.Expression] = {}
            seen = set()
            for (l, mu, nu) in self.table:
                if (l, mu, nu) in seen or (l, nu, mu) in seen:
                    continue
                seen.add((l, mu, nu))
                seen.add((l, nu, mu))
                half = ex.mul(
                    ex.Const(0.5), ex.add(self.entry(l, mu, nu), self.entry(l, nu, mu))
                )
                if mu == nu:
                    half = self.entry(l, mu, nu)
                sym[(l, mu, nu)] = half
                if mu != nu:
                    sym[(l, nu, mu)] = half
            table = {f"{l + 1},{mu + 1},{nu + 1}": e for (l, mu, nu), e in sym.items()}
            return Connection(m, table, _assume_torsion_free=True)

        base = self._callback_batch

        def sym_batch(X):
            g = np.asarray(base(X), dtype=float)
            return 0.5 * (g + np.swapaxes(g, 2, 3))

        return Connection(m, callback_batch=sym_batch, _assume_torsion_free=True)

    # -- certification -------------------------------------------------------

    def _certify_torsion_free(self) -> bool:
        if self.table is not None and not self.table:
            return True
        worst = 0.0
        usable = 0
        for x in probe_grid(self.m):
            try:
                t = self.torsion(x)
            except (ex.EvaluationError, ArithmeticError, np.linalg.LinAlgError):
                continue  # pole of a coefficient: certify on the evaluable points
            if not np.isfinite(t).all():
                continue
            usable += 1
            worst = max(worst, float(np.abs(t).max()))
        return usable > 0 and worst <= TORSION_PROBE_TOL

    # -- kernel integration hooks --------------------------------------------

    def _kernel_data(self):
        """Compiled program + index arrays for the nonzero coefficients."""
        if self.table is None:
            return None
        if self._kernel_cache is None:
            keys = sorted(self.table)
            exprs = [self.table[k] for k in keys]
            program = compile_expressions(exprs, coordinate_slots(self.m))
            lam = np.asarray([k[0] for k in keys], dtype=np.int32)
            mu = np.asarray([k[1] for k in keys], dtype=np.int32)
            nu = np.asarray([k[2] for k in keys], dtype=np.int32)
            self._kernel_cache = (program, lam, mu, nu)
        return self._kernel_cache

    def __repr__(self):
        kind = "symbolic" if self.is_symbolic else "callback"
        nnz = len(self.table) if self.table is not None else "?"
        return (
            f"Connection(m={self.m}, {kind}, nonzero={nnz}, "
            f"torsion_free={self.torsion_free})"
        )


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------


def torsion_tensor(connection: Connection, x) -> np.ndarray:
    return connection.torsion(x)


def symmetrize(connection: Connection) -> Connection:
    return connection.symmetrize()


def christoffel_partial(
    connection: Connection, lam: int, mu: int, nu: int, kappa: int, x
) -> float:
    """d Gamma^lam_{mu nu} / d x^kappa at x, indices 1-based."""
    m = connection.m
    for i in (lam, mu, nu, kappa):
        if not 1 <= i <= m:
            raise ValueError(f"index {i} out of range 1..{m}")
    if connection.is_symbolic:
        env = {f"x{i + 1}": float(np.asarray(x, dtype=float)[i]) for i in range(m)}
        return connection._partial_expr(lam - 1, mu - 1, nu - 1, kappa - 1).evaluate(env)
    return float(connection.christoffel_partials(x)[lam - 1, mu - 1, nu - 1, kappa - 1])


def _sym_det(rows: list[list[ex.Expression]]) -> ex.Expression:
    """Determinant of a matrix of expressions by cofactor expansion (zeros
    folded away by the smart constructors)."""
    n = len(rows)
    if n == 1:
        return rows[0][0]
    total = ex.ZERO
    for j in range(n):
        entry = rows[0][j]
        if isinstance(entry, ex.Const) and entry.value == 0.0:
            continue
        minor = [r[:j] + r[j + 1 :] for r in rows[1:]]
        term = ex.mul(entry, _sym_det(minor))
        total = ex.add(total, term) if j % 2 == 0 else ex.sub(total, term)
    return total


def _sym_inverse(rows: list[list[ex.Expression]]) -> list[list[ex.Expression]]:
    """Matrix inverse as expressions: adjugate over determinant."""
    n = len(rows)
    det = _sym_det(rows)
    if isinstance(det, ex.Const) and det.value == 0.0:
        raise ValueError("metric determinant is identically zero")
    inv = [[ex.ZERO] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [
                [rows[r][c] for c in range(n) if c != j]
                for r in range(n)
                if r != i
            ]
            cof = _sym_det(minor) if n > 1 else ex.ONE
            if (i + j) % 2 == 1:
                cof = ex.neg(cof)
            inv[j][i] = ex.div(cof, det)
    return inv


def levi_civita(metric, m: int | None = None, symbolic: bool = True) -> Connection:
    """Connection of a (pseudo-)Riemannian metric given as a symmetric table.

    `metric` is a dict with 1-based keys like ``"1,1"`` (missing = 0) or an
    m x m nested sequence of expressions/strings.  By default the inverse
    metric is formed symbolically (adjugate over determinant), so the result
    is an expression-backed connection with all fast paths available; pass
    ``symbolic=False`` to get a callback-backed connection that inverts the
    metric numerically per point instead.  A singular metric raises on
    evaluation (symbolically: division by the vanishing determinant).
    """
    if isinstance(metric, Mapping):
        if m is None:
            raise ValueError("dimension m is required with a sparse metric table")
        g_entries: dict[tuple[int, int], ex.Expression] = {}
        for key, raw in metric.items():
            if isinstance(key, str):
                parts = [int(p.strip()) for p in key.split(",")]
            else:
                parts = [int(p) for p in key]
            if len(parts) != 2 or not all(1 <= p <= m for p in parts):
                raise ValueError(f"bad metric key {key!r}")
            i, j = parts[0] - 1, parts[1] - 1
            e = ex.as_expression(raw)
            prev = g_entries.get((i, j))
            if prev is not None and str(prev) != str(e):
                raise ValueError(f"conflicting metric entries for {key!r}")
            g_entries[(i, j)] = e
            g_entries[(j, i)] = e
    else:
        rows = [list(r) for r in metric]
        if m is None:
            m = len(rows)
        if len(rows) != m or any(len(r) != m for r in rows):
            raise ValueError("metric must be an m x m table")
        g_entries = {}
        for i in range(m):
            for j in range(m):
                g_entries[(i, j)] = ex.as_expression(rows[i][j])

    allowed = {f"x{i + 1}" for i in range(m)}
    for (i, j), e in g_entries.items():
        bad = e.variables() - allowed
        if bad:
            raise ValueError(f"metric entry ({i + 1},{j + 1}) uses {sorted(bad)}")

    g_exprs = [[g_entries.get((i, j), ex.ZERO) for j in range(m)] for i in range(m)]
    dg_exprs = [
        [[g_exprs[i][j].diff(f"x{k + 1}") for k in range(m)] for j in range(m)]
        for i in range(m)
    ]

    if symbolic:
        ginv = _sym_inverse(g_exprs)
        half = ex.Const(0.5)
        table: dict[tuple[int, int, int], ex.Expression] = {}
        for lam in range(m):
            for mu in range(m):
                for nu in range(m):
                    acc = ex.ZERO
                    for rho in range(m):
                        bracket = ex.sub(
                            ex.add(dg_exprs[rho][nu][mu], dg_exprs[rho][mu][nu]),
                            dg_exprs[mu][nu][rho],
                        )
                        acc = ex.add(acc, ex.mul(ginv[lam][rho], bracket))
                    entry = ex.mul(half, acc)
                    if not (isinstance(entry, ex.Const) and entry.value == 0.0):
                        table[(lam + 1, mu + 1, nu + 1)] = entry
        return Connection(m, table, _assume_torsion_free=True)

    flat: list[ex.Expression] = []
    for i in range(m):
        for j in range(m):
            flat.append(g_exprs[i][j])
    for i in range(m):
        for j in range(m):
            for k in range(m):
                flat.append(dg_exprs[i][j][k])
    program = compile_expressions(flat, coordinate_slots(m))

    def gamma_batch(X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        B = len(X)
        vals = eval_program_batch(program, X.T)
        if not np.isfinite(vals).all():
            raise ex.EvaluationError("metric not finite at a requested point")
        g = vals[: m * m].T.reshape(B, m, m)
        dg = vals[m * m :].T.reshape(B, m, m, m)  # [b, rho, nu, mu] = d_mu g_{rho nu}
        try:
            ginv = np.linalg.inv(g)
        except np.linalg.LinAlgError:
            raise ex.EvaluationError("metric is singular at a requested point") from None
        # bracket[b, rho, mu, nu] = d_mu g_{rho nu} + d_nu g_{rho mu} - d_rho g_{mu nu}
        bracket = np.transpose(dg, (0, 1, 3, 2)) + dg - np.transpose(dg, (0, 3, 1, 2))
        return 0.5 * np.einsum("blr,brmn->blmn", ginv, bracket)

    return Connection(m, callback_batch=gamma_batch, _assume_torsion_free=True)
