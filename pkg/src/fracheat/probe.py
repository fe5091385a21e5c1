"""Empirical probes of the excess-decay regularity mechanism: weighted
linear fits on shrinking parabolic cylinders, the dyadic excess sequence
with its modulus bound, the one-step improvement scan, thin-space Campanato
profiles, the gradient-modulus sampler, and the interior (unweighted cube)
variant.

The excess of a fit l(x) = a + b.(x - x0) on the cylinder pair at radius r
around a thin-space center (t0, x0) is

    E(r) = r^-(n+2)   int_(Q_r)  |U(.,.,0) - l|^2
         + r^-(n+3+a) int_(Q*_r) y^a |U - l|^2 .
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .grids import ParabolicGrid, ScalarField

__all__ = [
    "LinearFit",
    "ExcessSequence",
    "ModulusProbeReport",
    "parabolic_distance",
    "best_linear_fit",
    "excess_with_fit",
    "excess_sequence",
    "one_step_improvement",
    "campanato_excess_profile",
    "gradient_modulus_probe",
    "interior_probe",
]


def parabolic_distance(p1, p2) -> float:
    """max(sqrt|t1-t2|, ||X1-X2||) for points (t, X) in the thick space."""
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    return float(max(math.sqrt(abs(p1[0] - p2[0])),
                     np.linalg.norm(p1[1:] - p2[1:])))


@dataclass
class LinearFit:
    """l(x) = a + b.(x - center) with its combined weighted excess."""

    a: float
    b: np.ndarray
    excess: float
    excess_thin: float
    excess_thick: float
    center: tuple
    radius: float
    normal_residual: float

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        c = np.asarray(self.center[1:], dtype=float)
        if x.ndim <= 1 and c.size == 1:
            return self.a + self.b[0] * (x - c[0])
        return self.a + (x - c) @ self.b


def _fit_weights(grid: ParabolicGrid, center, radius: float):
    """Thin and thick weight stacks plus centered x-coordinate columns."""
    t0 = center[0]
    x0 = np.asarray(center[1:1 + grid.n], dtype=float)
    tw = grid.time_weights(t0 - radius ** 2, t0 + radius ** 2)
    wx = grid._x_overlap(x0, radius)
    wy = grid.thick_cylinder_weights(center, radius)[2]
    thin_w = np.multiply.outer(tw, wx) * radius ** -(grid.n + 2.0)
    thick_w = np.multiply.outer(np.multiply.outer(tw, wx), wy) \
        * radius ** -(grid.n + 3.0 + grid.params.a)
    Xc = [X - x0[d] for d, X in enumerate(grid.x_centers)]
    return thin_w, thick_w, Xc


def _design_columns(grid: ParabolicGrid, Xc, thick: bool):
    """Regressor fields (1, x_1 - c_1, ..., x_n - c_n) over the thin or
    thick sample lattice."""
    shape = (grid.nt + 1,) + (grid.nx,) * grid.n + ((grid.ny,) if thick else ())
    cols = [np.ones(shape)]
    for d in range(grid.n):
        col = Xc[d].reshape((1,) + (1,) * d + (-1,) + (1,) * (grid.n - 1 - d)
                            + ((1,) if thick else ()))
        cols.append(np.broadcast_to(col, shape).copy())
    return cols


def best_linear_fit(U: ScalarField, radius: float, center=None) -> LinearFit:
    """Minimizer of the combined thin+thick excess functional over linear
    l(x); closed-form normal equations in the (1+n) coefficients."""
    grid = U.grid
    if center is None:
        center = (grid.center[0],) + tuple(grid.center[1:]) + (0.0,)
    thin_w, thick_w, Xc = _fit_weights(grid, center, radius)
    if float(np.sum(thin_w)) + float(np.sum(thick_w)) <= 0.0:
        raise ValueError("fit cylinder does not intersect the grid")
    tr = grid.trace_at_zero(U.values)
    cols_thin = _design_columns(grid, Xc, thick=False)
    cols_thick = _design_columns(grid, Xc, thick=True)

    m = grid.n + 1
    M = np.zeros((m, m))
    rhs = np.zeros(m)
    for i in range(m):
        rhs[i] = float(np.sum(thin_w * cols_thin[i] * tr)) \
            + float(np.sum(thick_w * cols_thick[i] * U.values))
        for j in range(i, m):
            M[i, j] = M[j, i] = \
                float(np.sum(thin_w * cols_thin[i] * cols_thin[j])) \
                + float(np.sum(thick_w * cols_thick[i] * cols_thick[j]))
    try:
        coef = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("degenerate moment matrix in linear fit") from exc
    nres = float(np.linalg.norm(M @ coef - rhs)
                 / max(np.linalg.norm(rhs), 1e-300))

    lin_thin = coef[0] * cols_thin[0]
    lin_thick = coef[0] * cols_thick[0]
    for d in range(grid.n):
        lin_thin = lin_thin + coef[1 + d] * cols_thin[1 + d]
        lin_thick = lin_thick + coef[1 + d] * cols_thick[1 + d]
    e_thin = float(np.sum(thin_w * (tr - lin_thin) ** 2))
    e_thick = float(np.sum(thick_w * (U.values - lin_thick) ** 2))
    return LinearFit(float(coef[0]), coef[1:].copy(), e_thin + e_thick,
                     e_thin, e_thick, tuple(center), radius, nres)


def excess_with_fit(U: ScalarField, radius: float, fit: LinearFit,
                    center=None) -> float:
    """Combined excess of a GIVEN linear function on the radius-r cylinder
    pair (used to assert minimality of the fitted one)."""
    grid = U.grid
    if center is None:
        center = fit.center
    thin_w, thick_w, Xc = _fit_weights(grid, center, radius)
    tr = grid.trace_at_zero(U.values)
    cols_thin = _design_columns(grid, Xc, thick=False)
    cols_thick = _design_columns(grid, Xc, thick=True)
    shift = np.asarray(center[1:1 + grid.n]) - np.asarray(fit.center[1:1 + grid.n])
    base = fit.a + float(np.dot(fit.b, shift)) if np.any(shift) else fit.a
    lin_thin = base * cols_thin[0]
    lin_thick = base * cols_thick[0]
    for d in range(grid.n):
        lin_thin = lin_thin + fit.b[d] * cols_thin[1 + d]
        lin_thick = lin_thick + fit.b[d] * cols_thick[1 + d]
    return float(np.sum(thin_w * (tr - lin_thin) ** 2)
                 + np.sum(thick_w * (U.values - lin_thick) ** 2))


@dataclass
class ExcessSequence:
    """Per-scale excess records against the modulus bound."""

    lam: float
    ks: np.ndarray
    radii: np.ndarray
    excess_thin: np.ndarray
    excess_thick: np.ndarray
    bounds: np.ndarray
    ratios: np.ndarray
    fits: list
    drift_a: np.ndarray
    drift_b: np.ndarray
    clamped_kmax: int
    requested_kmax: int

    @property
    def excess(self):
        return self.excess_thin + self.excess_thick

    def to_csv(self, path):
        rows = np.column_stack([self.ks, self.radii, self.excess,
                                self.bounds, self.ratios])
        np.savetxt(path, rows, delimiter=",",
                   header="k,r,excess,bound,ratio", comments="")


def resolvable_kmax(grid: ParabolicGrid, lam: float, kmax: int,
                    min_cells: int = 3) -> int:
    """Largest k whose cylinder still covers min_cells x-cells across and
    min_cells time cells in its 2 r^2 window."""
    floor = max(min_cells * grid.dx / 2.0,
                math.sqrt(min_cells * grid.dt / 2.0))
    k = 0
    while k < kmax and lam ** (k + 1) >= floor:
        k += 1
    return k


def excess_sequence(U: ScalarField, lam: float, kmax: int, omega,
                    center=None) -> ExcessSequence:
    """Dyadic excess records E_k at radii lam^k around a thin-space center,
    against the bound lam^(2k) omega(lam^k)^2, with the fit-coefficient
    drifts |a_(k+1) - a_k| / (lam^k omega(lam^k)) and
    |b_(k+1) - b_k| / omega(lam^k)."""
    grid = U.grid
    k_eff = resolvable_kmax(grid, lam, kmax)
    ks = np.arange(k_eff + 1)
    radii = lam ** ks
    fits = [best_linear_fit(U, r, center) for r in radii]
    e_thin = np.array([f.excess_thin for f in fits])
    e_thick = np.array([f.excess_thick for f in fits])
    om = np.asarray(omega(radii), dtype=float)
    bounds = lam ** (2.0 * ks) * om ** 2
    ratios = (e_thin + e_thick) / np.maximum(bounds, 1e-300)
    da = np.array([abs(fits[k + 1].a - fits[k].a) / (radii[k] * om[k])
                   for k in range(k_eff)])
    db = np.array([np.linalg.norm(fits[k + 1].b - fits[k].b) / om[k]
                   for k in range(k_eff)])
    return ExcessSequence(lam, ks, radii, e_thin, e_thick, bounds, ratios,
                          fits, da, db, k_eff, kmax)


def combined_norm(U: ScalarField) -> float:
    """sqrt of the trace L^2 plus weighted L^2 over the field's cylinder."""
    grid = U.grid
    tr = grid.trace_at_zero(U.values)
    tw = grid.time_weights()
    xm = grid.x_cell_measures()
    thin = float(tw @ np.tensordot(tr ** 2, xm,
                                   axes=(tuple(range(1, tr.ndim)),
                                         tuple(range(xm.ndim)))))
    thick = grid.weighted_norm_sq(U.values)
    return math.sqrt(thin + thick)


def one_step_improvement(U: ScalarField, lams=None, center=None):
    """Scan lam in {2^-2, ..., 2^-6} for the one-scale improvement
        E(lam) < lam^3
    on the input normalized to unit combined norm.  Returns
    (lam_found, achieved_ratio, table); lam_found is None when no scale
    achieves the bound."""
    if lams is None:
        lams = [2.0 ** -k for k in range(2, 7)]
    norm = combined_norm(U)
    if norm <= 0.0:
        return max(lams), 0.0, [(lam, 0.0) for lam in lams]
    Un = ScalarField(U.grid, U.values / norm)
    table = []
    for lam in sorted(lams, reverse=True):
        fit = best_linear_fit(Un, lam, center)
        ratio = fit.excess / lam ** 3
        table.append((lam, ratio))
    for lam, ratio in table:
        if ratio < 1.0:
            return lam, ratio, table
    return None, min(r for _, r in table), table


def campanato_excess_profile(U: ScalarField, center, radii, K=None) -> dict:
    """Thick-cylinder excess of the limiting fit (realized as the
    finest-radius fit) across the given radii; when the gradient modulus K
    is supplied the table also carries excess / (r^2 K(r)^2).

    The drift-tail column bounds the gap to the true limiting fit by the
    last observed inter-scale coefficient drifts."""
    grid = U.grid
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    fits = [best_linear_fit(U, r, center) for r in radii]
    limit_fit = fits[-1]
    a_ = grid.params.a
    rows = []
    for r, f in zip(radii, fits):
        thick_w = _fit_weights(grid, center, r)[1]
        cols = _design_columns(grid, _fit_weights(grid, center, r)[2], True)
        lin = limit_fit.a * cols[0]
        for d in range(grid.n):
            lin = lin + limit_fit.b[d] * cols[1 + d]
        exc = float(np.sum(thick_w * (U.values - lin) ** 2))
        row = {"r": float(r), "excess": exc}
        if K is not None:
            row["ratio"] = exc / max(r ** 2 * float(K(r)) ** 2, 1e-300)
        rows.append(row)
    drifts = [abs(fits[i + 1].a - fits[i].a)
              + float(np.linalg.norm(fits[i + 1].b - fits[i].b))
              for i in range(len(fits) - 1)]
    return {"rows": rows, "limit_fit": limit_fit,
            "drift_tail_estimate": drifts[-1] if drifts else 0.0,
            "gradients": [f.b.copy() for f in fits]}


@dataclass
class ModulusProbeReport:
    """Empirical sup ratios of gradient increments against the modulus."""

    C_emp_interior: float
    C_emp_boundary: float
    C_emp_time: float
    n_interior: int
    n_boundary: int
    n_time: int
    geometry_ok: bool
    seed: int
    pair_distances: np.ndarray
    pair_ratios: np.ndarray
    pair_cases: np.ndarray

    def to_csv(self, path):
        np.savetxt(path, np.column_stack([self.pair_distances,
                                          self.pair_ratios,
                                          self.pair_cases]),
                   delimiter=",", header="distance,ratio,case", comments="")


def _cells_in_half_cylinder(grid: ParabolicGrid):
    tmask = np.abs(grid.t_nodes - grid.center[0]) <= 0.25
    xmask = np.abs(grid.x_centers[0] - grid.center[1]) <= 0.5
    ymask = grid.y_centers < 0.5
    return (np.nonzero(tmask)[0], np.nonzero(xmask)[0], np.nonzero(ymask)[0])


def gradient_modulus_probe(U: ScalarField, K, n_pairs: int = 10000,
                           seed: int = 0) -> ModulusProbeReport:
    """Sample stratified point pairs in the half cylinder and report the
    empirical constants sup |grad U(p1) - grad U(p2)| / K(dist), split into
    the interior regime (dist <= y1/4) and the boundary regime, plus the
    time-increment ratio |U(t1,X) - U(t2,X)| / (K(sqrt dt) sqrt dt).

    The boundary-regime geometry fact y2 <= 6 dist is asserted pairwise.
    """
    grid = U.grid
    if grid.n != 1:
        raise NotImplementedError("the pair sampler runs at n = 1")
    rng = np.random.default_rng(seed)
    gx, gy = grid.gradient(U.values)
    ti, xi_, yi = _cells_in_half_cylinder(grid)
    t_nodes, x_c, y_c = grid.t_nodes, grid.x_centers[0], grid.y_centers

    h_min = min(grid.dx, math.sqrt(grid.dt))
    decades = []
    d = 0.45
    while d > h_min:
        decades.append(d)
        d /= 2.0
    n_dec = max(len(decades), 1)

    dists, ratios, cases = [], [], []
    geometry_ok = True
    ci = cb = 0.0
    n_i = n_b = 0
    attempts = 0
    while len(dists) < n_pairs and attempts < 40 * n_pairs:
        attempts += 1
        i1 = (rng.choice(ti), rng.choice(xi_), rng.choice(yi))
        target = decades[rng.integers(0, n_dec)] * rng.uniform(0.5, 1.0)
        # random parabolic displacement at the target scale, snapped to cells
        dt_ = rng.uniform(-1.0, 1.0) * target ** 2
        dx_ = rng.uniform(-1.0, 1.0) * target
        dy_ = rng.uniform(-1.0, 1.0) * target
        t2 = t_nodes[i1[0]] + dt_
        x2 = x_c[i1[1]] + dx_
        y2 = y_c[i1[2]] + dy_
        if abs(t2 - grid.center[0]) > 0.25 or abs(x2 - grid.center[1]) > 0.5 \
                or not 0.0 < y2 < 0.5:
            continue
        i2 = (int(np.argmin(np.abs(t_nodes - t2))),
              int(np.argmin(np.abs(x_c - x2))),
              int(np.argmin(np.abs(y_c - y2))))
        p1 = (t_nodes[i1[0]], x_c[i1[1]], y_c[i1[2]])
        p2 = (t_nodes[i2[0]], x_c[i2[1]], y_c[i2[2]])
        dist = parabolic_distance(p1, p2)
        if dist < h_min / 2.0 or dist > 0.45:
            continue
        g1 = np.array([gx[i1], gy[i1]])
        g2 = np.array([gx[i2], gy[i2]])
        ratio = float(np.linalg.norm(g1 - g2)) / max(float(K(min(dist, 1.0))),
                                                     1e-300)
        y1_, y2_ = min(p1[2], p2[2]), max(p1[2], p2[2])
        interior = dist <= y1_ / 4.0
        if interior:
            ci = max(ci, ratio)
            n_i += 1
        else:
            geometry_ok &= (y2_ <= 6.0 * dist + 1e-12)
            cb = max(cb, ratio)
            n_b += 1
        dists.append(dist)
        ratios.append(ratio)
        cases.append(0 if interior else 1)

    # time-increment pairs: same spatial cell, varying time separation
    ct = 0.0
    n_t = 0
    for _ in range(n_pairs // 4):
        j1, j2 = rng.choice(ti, size=2, replace=False)
        ix = rng.choice(xi_)
        iy = rng.choice(yi)
        dt_ = abs(t_nodes[j1] - t_nodes[j2])
        if dt_ <= 0:
            continue
        rdt = math.sqrt(dt_)
        du = abs(U.values[j1, ix, iy] - U.values[j2, ix, iy])
        ct = max(ct, du / max(float(K(min(rdt, 1.0))) * rdt, 1e-300))
        n_t += 1
    return ModulusProbeReport(ci, cb, ct, n_i, n_b, n_t, bool(geometry_ok),
                              seed, np.asarray(dists), np.asarray(ratios),
                              np.asarray(cases, dtype=int))


def interior_probe(U: ScalarField, center, side: float, lam: float,
                   kmax: int, psi) -> dict:
    """Excess decay on full (unweighted) cubes strictly interior in y:
    fits are linear in all n+1 spatial coordinates, the normalization is
    r^-(N+2) with N = n+1, and the bound is lam^(2k) psi(lam^k)^2."""
    grid = U.grid
    t0 = center[0]
    x0 = np.asarray(center[1:1 + grid.n], dtype=float)
    y0 = center[-1]
    if y0 - side < 0.0 + side * 1e-9 or y0 < side:
        raise ValueError("cube touches the boundary layer")
    N = grid.n + 1
    rows = []
    ylocal = grid.y_centers[(grid.y_centers > y0 - side)
                            & (grid.y_centers < y0 + side)]
    dy_local = float(np.max(np.diff(ylocal))) if ylocal.size > 2 else side
    for k in range(kmax + 1):
        r = side * lam ** k
        if r < max(1.5 * grid.dx, math.sqrt(1.5 * grid.dt),
                   1.5 * dy_local):
            break
        tw = grid.time_weights(t0 - r ** 2, t0 + r ** 2)
        wx = grid._x_overlap(x0, r)
        # plain (unweighted) y overlap on the interior slab
        yl, yh = y0 - r, y0 + r
        wy = np.maximum(np.minimum(grid.y_faces[1:], yh)
                        - np.maximum(grid.y_faces[:-1], yl), 0.0)
        w = np.multiply.outer(np.multiply.outer(tw, wx), wy) * r ** -(N + 2.0)
        mesh = grid.meshgrid()
        Xcols = [np.broadcast_to(mesh[1 + d], grid.shape) - x0[d]
                 for d in range(grid.n)] + \
                [np.broadcast_to(mesh[-1], grid.shape) - y0]
        mdim = N + 1
        M = np.zeros((mdim, mdim))
        rhs = np.zeros(mdim)
        cols = [np.ones(grid.shape)] + Xcols
        for i in range(mdim):
            rhs[i] = float(np.sum(w * cols[i] * U.values))
            for j in range(i, mdim):
                M[i, j] = M[j, i] = float(np.sum(w * cols[i] * cols[j]))
        coef = np.linalg.solve(M, rhs)
        lin = sum(c * col for c, col in zip(coef, cols))
        exc = float(np.sum(w * (U.values - lin) ** 2))
        bound = lam ** (2.0 * k) * float(psi(lam ** k)) ** 2
        rows.append({"k": k, "r": r, "excess": exc, "bound": bound,
                     "ratio": exc / max(bound, 1e-300),
                     "coef": coef.copy()})
    return {"rows": rows, "lam": lam, "side": side, "center": tuple(center)}
