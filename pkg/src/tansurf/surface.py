"""The tangent surface of a (directed) curve: f(t, s) = phi(g(t), u(t), s).

Along s = 0 the surface touches the curve and is singular: the two partials
become parallel there.  The pair (V1, F) with V1 = df/ds and
s F = df/dt - c(t) df/ds extends to a smooth frame across s = 0 (F has a
removable singularity; its limit is the covariant derivative of the frame),
and the signed area density sigma compares df/dt ^ df/ds to V1 ^ F.  With
these conventions sigma(t, s) = -s up to numerical error, so the singular
locus is exactly the curve.

Everything numeric funnels through batched geodesic integration; partial
derivatives in t use central differences (step 1e-5) evaluated inside one
batch so that both stencil legs share the same step count and the
integrator's smooth discretization error cancels in the difference.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .connection import Connection
from .covariant import CurveSpec, DirectedCurveSpec, frame_tower_values
from .geodesic import GeodesicJet, geodesic_states_batch, jet_coefficients

__all__ = [
    "TangentSurface",
    "FrontalFrame",
    "SurfaceMesh",
    "FrameDegenerateError",
    "export_obj",
    "export_csv",
]

T_STEP = 1e-5  # central-difference step for df/dt
F_QUOTIENT_MIN_S = 1e-3  # below this |s|, F comes from the series form
DEGENERATE_SIN = 1e-8  # frame 2-vector norm (as sine of the angle) cutoff


class FrameDegenerateError(RuntimeError):
    """V1 and F are numerically parallel; the frontal frame hypotheses fail."""


@dataclass(frozen=True)
class FrontalFrame:
    t: float
    s: float
    V1: np.ndarray
    F: np.ndarray
    eta: tuple[float, float]  # kernel direction (dt, ds) = (1, -c(t))


@dataclass(frozen=True)
class SurfaceMesh:
    """Grid evaluation; vertex index = i_t * ns + i_s (row-major, s fastest)."""

    t_values: np.ndarray
    s_values: np.ndarray
    vertices: np.ndarray  # (nt, ns, m)
    sigma: np.ndarray  # (nt, ns), nan where invalid/degenerate
    valid: np.ndarray  # (nt, ns) bool
    quads: np.ndarray  # (n_quads, 4) vertex indices, corners all valid

    @property
    def nt(self) -> int:
        return len(self.t_values)

    @property
    def ns(self) -> int:
        return len(self.s_values)

    @property
    def m(self) -> int:
        return self.vertices.shape[2]

    @property
    def hole_count(self) -> int:
        return int((~self.valid).sum())

    def sigma_sign_bands(self, min_fraction: float = 0.5) -> list[tuple[float, float, float]]:
        """s-intervals where sigma changes sign across many t-columns.

        Returns (s_lo, s_hi, fraction of t-columns with a sign change).
        A grid column where sigma is exactly zero carries the preceding
        sign, so a crossing landing on a grid point still registers; invalid
        or frame-degenerate vertices break the run instead.  The band
        containing s = 0 is always present for a healthy surface.
        """
        bands = []
        sg = np.sign(self.sigma)  # nan propagates
        carried = sg.copy()
        for j in range(1, self.ns):
            col = sg[:, j]
            keep = np.abs(col) == 1.0
            carried[:, j] = np.where(
                keep, col, np.where(np.isnan(col), np.nan, carried[:, j - 1])
            )
        for j in range(self.ns - 1):
            a, b = carried[:, j], sg[:, j + 1]
            ok = (np.abs(a) == 1.0) & (np.abs(b) == 1.0)
            if not ok.any():
                continue
            frac = float((a[ok] != b[ok]).sum() / ok.sum())
            if frac >= min_fraction:
                bands.append((float(self.s_values[j]), float(self.s_values[j + 1]), frac))
        return bands


def _wedge(a: np.ndarray, b: np.ndarray, pairs) -> np.ndarray:
    """Grassmann coordinates of a ^ b; a, b (..., m) -> (..., len(pairs))."""
    comps = [a[..., i] * b[..., j] - a[..., j] * b[..., i] for i, j in pairs]
    return np.stack(comps, axis=-1)


class TangentSurface:
    """Evaluator for f(t, s) and its frontal data.

    Accepts a directed curve, or a plain curve which is given its canonical
    direction (u = g', c = 1).
    """

    def __init__(self, conn: Connection, curve: CurveSpec | DirectedCurveSpec):
        if isinstance(curve, CurveSpec):
            curve = DirectedCurveSpec.immersed(curve)
        self.conn = conn
        self.directed = curve
        self.curve = curve.curve
        self.m = curve.m
        self._frame_deriv = tuple(c.diff("t") for c in curve.frame)
        self._pairs = list(combinations(range(self.m), 2))
        self._jet_cache: dict[float, GeodesicJet] = {}

    # -- curve-level samples -------------------------------------------------

    def _frame_deriv_value(self, t: float) -> np.ndarray:
        env = {"t": float(t)}
        return np.array([c.evaluate(env) for c in self._frame_deriv])

    def _jet_at(self, t: float) -> GeodesicJet:
        jet = self._jet_cache.get(t)
        if jet is None:
            jet = jet_coefficients(self.conn, self.curve.value(t), self.directed.frame_value(t))
            self._jet_cache[t] = jet
        return jet

    # -- evaluation -----------------------------------------------------------

    def evaluate(self, t: float, s: float) -> np.ndarray:
        """The point f(t, s); raises GeodesicEscape when unreachable."""
        x = self.curve.value(t)
        u = self.directed.frame_value(t)
        pos, _, valid = geodesic_states_batch(self.conn, [x], [u], [float(s)])
        if not valid[0, 0]:
            from .geodesic import GeodesicEscape

            raise GeodesicEscape(f"surface point unreachable at (t={t}, s={s})", s_failed=float(s))
        return pos[0, 0]

    def partials(self, t: float, s: float, h: float = T_STEP):
        """(df/dt, df/ds) at (t, s).

        df/ds is the exact geodesic velocity from the integration state;
        df/dt is a central difference whose two legs run in the same batch
        (matched step count), so the integrator error largely cancels.
        """
        t = float(t)
        X = [self.curve.value(t - h), self.curve.value(t + h)]
        V = [self.directed.frame_value(t - h), self.directed.frame_value(t + h)]
        X.append(self.curve.value(t))
        V.append(self.directed.frame_value(t))
        pos, vel, valid = geodesic_states_batch(self.conn, X, V, [float(s)])
        if not valid.all():
            from .geodesic import GeodesicEscape

            raise GeodesicEscape(f"stencil point unreachable at (t={t}, s={s})", s_failed=float(s))
        ft = (pos[0, 1] - pos[0, 0]) / (2.0 * h)
        fs = vel[0, 2]
        return ft, fs

    def _series_F(self, t: float, s: float) -> np.ndarray:
        """F to first order in s from the geodesic jet.

        Exact identity: F = u' + (s/2)(h_x g' + h_v u') - c h - (s c / 2) h_s.
        Expanding h about s = 0 gives
        F = u' + (s/2)(h_x g' + h_v u') - c h0 - (3/2) s c h_s|0 + O(s^2).
        At s = 0 the value is u' - c h0 = the covariant derivative of u.
        """
        jet = self._jet_at(t)
        up = self._frame_deriv_value(t)
        gp = self.curve.velocity(t)
        c = self.directed.factor_value(t)
        return (
            up
            + 0.5 * s * (jet.dh_dx @ gp + jet.dh_dv @ up)
            - c * jet.h0
            - 1.5 * s * c * jet.dh_ds
        )

    def frontal_frame_at(self, t: float, s: float) -> FrontalFrame:
        t = float(t)
        s = float(s)
        c = self.directed.factor_value(t)
        if s == 0.0:
            u = self.directed.frame_value(t)
            F = frame_tower_values(self.conn, self.directed, t, 2)[1]
            return FrontalFrame(t, s, u, F, (1.0, -c))
        ft, fs = self.partials(t, s)
        if abs(s) < F_QUOTIENT_MIN_S:
            F = self._series_F(t, s)
        else:
            F = (ft - c * fs) / s
        return FrontalFrame(t, s, fs, F, (1.0, -c))

    def s_function(self, t: float, s: float) -> float:
        """sigma with df/dt ^ df/ds = sigma (V1 ^ F), least-squares over the
        Grassmann coordinates.  Raises FrameDegenerateError when V1, F are
        numerically parallel (so sigma is meaningless there)."""
        frame = self.frontal_frame_at(t, s)
        ft, fs = self.partials(t, s)
        w1 = _wedge(ft, fs, self._pairs)
        w2 = _wedge(frame.V1, frame.F, self._pairs)
        scale = np.linalg.norm(frame.V1) * np.linalg.norm(frame.F)
        if np.linalg.norm(w2) <= DEGENERATE_SIN * max(scale, 1e-300):
            raise FrameDegenerateError(
                f"frame vectors are parallel at (t={t}, s={s}); "
                "the frontal hypotheses fail here"
            )
        return float(w1 @ w2 / (w2 @ w2))

    # -- meshing ---------------------------------------------------------------

    def build_mesh(self, t_range, s_range, nt: int, ns: int, h: float = T_STEP) -> SurfaceMesh:
        """Evaluate f on a grid, with sigma per vertex.

        One batched integration covers the grid and both t-stencil legs, so
        every vertex shares a common discretization.  Vertices whose geodesic
        escapes (or cannot be certified) are flagged invalid; quads touching
        them are omitted.
        """
        t_vals = np.linspace(float(t_range[0]), float(t_range[1]), nt)
        s_vals = np.linspace(float(s_range[0]), float(s_range[1]), ns)
        X, V = [], []
        for shift in (0.0, -h, +h):
            for t in t_vals:
                X.append(self.curve.value(t + shift))
                V.append(self.directed.frame_value(t + shift))
        pos, vel, valid = geodesic_states_batch(
            self.conn, X, V, s_vals, nonconvergent="invalidate"
        )
        # pos: (ns, 3*nt, m) -> center/minus/plus blocks
        center = np.transpose(pos[:, :nt, :], (1, 0, 2))  # (nt, ns, m)
        minus = np.transpose(pos[:, nt : 2 * nt, :], (1, 0, 2))
        plus = np.transpose(pos[:, 2 * nt :, :], (1, 0, 2))
        vel_c = np.transpose(vel[:, :nt, :], (1, 0, 2))
        ok = valid[:, :nt].T & valid[:, nt : 2 * nt].T & valid[:, 2 * nt :].T

        ft = (plus - minus) / (2.0 * h)
        fs = vel_c
        c_vals = np.array([self.directed.factor_value(t) for t in t_vals])
        F = np.empty_like(fs)
        with np.errstate(invalid="ignore", divide="ignore"):
            quot = (ft - c_vals[:, None, None] * fs) / s_vals[None, :, None]
        small = np.abs(s_vals) < F_QUOTIENT_MIN_S
        F[:, ~small, :] = quot[:, ~small, :]
        for j in np.where(small)[0]:
            sj = float(s_vals[j])
            for i, t in enumerate(t_vals):
                F[i, j] = (
                    self._series_F(t, sj)
                    if sj != 0.0
                    else frame_tower_values(self.conn, self.directed, t, 2)[1]
                )
        # sigma references the frame plane at the curve (s = 0, same t).
        # Pointwise, df/dt ^ df/ds = -s (V1 ^ F)(t, s) identically, so the
        # quotient against the propagated frame is -s and blind to focal
        # points where that frame itself collapses; projecting onto the
        # fixed curve frame keeps the full singular locus visible as sign
        # changes (s = 0 line and any caustic the geodesics form).
        w1 = _wedge(ft, fs, self._pairs)
        ref = np.empty((nt, len(self._pairs)))
        ref_bad = np.zeros(nt, dtype=bool)
        for i, t in enumerate(t_vals):
            u = self.directed.frame_value(t)
            Du = frame_tower_values(self.conn, self.directed, t, 2)[1]
            r = _wedge(u, Du, self._pairs)
            scale = np.linalg.norm(u) * np.linalg.norm(Du)
            ref[i] = r
            ref_bad[i] = np.linalg.norm(r) <= DEGENERATE_SIN * max(scale, 1e-300)
        denom = np.einsum("ip,ip->i", ref, ref)
        with np.errstate(invalid="ignore", divide="ignore"):
            sigma = np.einsum("ijp,ip->ij", w1, ref) / denom[:, None]
        sigma[ref_bad, :] = np.nan
        sigma[~ok] = np.nan

        quads = []
        for i in range(nt - 1):
            for j in range(ns - 1):
                if ok[i, j] and ok[i, j + 1] and ok[i + 1, j] and ok[i + 1, j + 1]:
                    a = i * ns + j
                    quads.append((a, a + 1, a + ns + 1, a + ns))
        return SurfaceMesh(
            t_values=t_vals,
            s_values=s_vals,
            vertices=center,
            sigma=sigma,
            valid=ok,
            quads=np.array(quads, dtype=np.int64).reshape(-1, 4),
        )


def export_obj(mesh: SurfaceMesh, path) -> None:
    """Wavefront OBJ: the first three coordinates (padded with 0 for m = 2);
    only valid vertices are written, with faces reindexed around holes."""
    remap = -np.ones(mesh.nt * mesh.ns, dtype=np.int64)
    lines = []
    count = 0
    flat_valid = mesh.valid.reshape(-1)
    verts = mesh.vertices.reshape(-1, mesh.m)
    for idx in range(len(verts)):
        if not flat_valid[idx]:
            continue
        v = verts[idx]
        x, y = v[0], v[1]
        z = v[2] if mesh.m >= 3 else 0.0
        lines.append(f"v {x:.17g} {y:.17g} {z:.17g}")
        count += 1
        remap[idx] = count  # OBJ indices are 1-based
    for quad in mesh.quads:
        a, b, c, d = (remap[k] for k in quad)
        lines.append(f"f {a} {b} {c} {d}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def export_csv(mesh: SurfaceMesh, path) -> None:
    """All m coordinates plus sigma per vertex, one row per grid point."""
    header = ["t", "s"] + [f"x{i + 1}" for i in range(mesh.m)] + ["sigma"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, t in enumerate(mesh.t_values):
            for j, s in enumerate(mesh.s_values):
                if not mesh.valid[i, j]:
                    continue
                row = [f"{t:.17g}", f"{s:.17g}"]
                row += [f"{x:.17g}" for x in mesh.vertices[i, j]]
                sij = mesh.sigma[i, j]
                row.append("" if math.isnan(sij) else f"{sij:.17g}")
                writer.writerow(row)
