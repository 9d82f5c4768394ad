"""Limit free energy via the Hopf and Hopf-Lax variational formulas.

The building block is the monotone convex conjugate

    g*(h) = sup_{y PSD} { h . y - g(y) },

evaluated by multi-start smooth maximization in the Cholesky-style
parametrization y = L L^T (L lower-triangular), with a projected-gradient
fallback and a radius-doubling divergence check: conjugates of
cone-increasing functions are +infinity on large regions by design, and
that case is reported as a sentinel result rather than computed with.

On top of it sit the two representations of the limit free energy,

    hopf:      f(t,h) = sup_y { y . h - psi*(y) + t H(y) }
    hopf-lax:  f(t,h) = sup_y { psi(h + y) - t H*(y/t) }      (standard)
               f(t,h) = sup_y { psi(h + t y) - t H*(y) }      (scaled)

where the inner conjugate is solved by its own solver and cached by the
exact bytes of the query point.  Hopf-Lax is gated on the midpoint
convexity probe of H and never assumed.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
from scipy.optimize import minimize

from .errors import FormulaUnavailableError
from .nonlinearity import InteractionSpec, convexity_probe, h_grad, h_value
from .symcone import ConePoint, SymMatrix, as_sym_values, basis, inner, norm, project_psd, sym_part

__all__ = [
    "ConeFunction",
    "VariationalResult",
    "DiagnosticsReport",
    "monotone_conjugate",
    "hopf_value",
    "hopf_lax_value",
    "hopf_lax_available",
    "maximizer_diagnostics",
    "fd_grad_h",
    "fd_dt",
]

_GROWTH_TOL = 1e-8
_TIE_VALUE_TOL = 1e-9
_TIE_DIST_TOL = 1e-4


@dataclass(eq=False)
class ConeFunction:
    """A real function on the PSD cone with optional analytic gradient.

    `lipschitz_bound` (when known) bounds the Frobenius norm of the gradient
    over the cone and is used to size conjugate search regions.
    """

    evaluator: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    lipschitz_bound: float | None = None
    label: str = ""
    _conj_cache: dict = field(default_factory=dict, repr=False)

    def value(self, y: np.ndarray) -> float:
        return float(self.evaluator(y))

    def grad(self, y: np.ndarray) -> np.ndarray:
        if self.gradient is not None:
            return np.asarray(self.gradient(y), dtype=float)
        d = y.shape[0]
        step = 1e-6 * (1.0 + norm(y))
        g = np.zeros_like(y)
        for e in basis(d):
            ev = e.values
            dv = (self.value(y + step * ev) - self.value(y - step * ev)) / (2.0 * step)
            g += (dv / inner(ev, ev)) * ev
        return g


@dataclass(frozen=True, eq=False)
class VariationalResult:
    """Outcome of one cone-constrained variational evaluation.

    `value` is the max over all starts and `maximizer` reproduces it exactly
    (the objective is re-evaluated there).  A diverged conjugate is reported
    with value = +inf and `diverged` set; no arithmetic is done on it.
    Value ties between distant maximizers are flagged, since the maximizer
    identities of the theory hold only at differentiable points.
    """

    value: float
    maximizer: ConePoint
    stationarity_residual: float
    starts: int
    best_start_index: int
    formula: Literal["conjugate", "hopf", "hopf_lax", "hopf_lax_scaled"]
    diverged: bool = False
    tie_detected: bool = False
    tie_distance: float = 0.0
    seed: int = 0


def _pack_indices(d: int):
    return np.tril_indices(d)


def _chol_start(y: np.ndarray) -> np.ndarray:
    d = y.shape[0]
    try:
        return np.linalg.cholesky(y + 1e-12 * np.eye(d))
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(sym_part(y))
        return v * np.sqrt(np.clip(w, 0.0, None))


def _maximize_once(objective, d: int, y0: np.ndarray, radius: float, maxiter: int = 300):
    """Maximize objective(y) over PSD y with a soft ball penalty at `radius`.

    objective(y) -> (value, gradient).  Works in the packed lower-triangular
    factor; returns (value at terminal point, terminal y).
    """
    rows, cols = _pack_indices(d)
    penalty_c = 100.0

    def fun(packed):
        l = np.zeros((d, d))
        l[rows, cols] = packed
        y = l @ l.T
        val, grad = objective(y)
        r = norm(y)
        fval = -val
        gmat = -grad
        if r > radius:
            fval += penalty_c * (r - radius) ** 2
            gmat = gmat + penalty_c * 2.0 * (r - radius) * (y / r)
        gl = 2.0 * (gmat @ l)
        return fval, gl[rows, cols]

    l0 = _chol_start(y0)
    res = minimize(
        fun,
        l0[rows, cols],
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": maxiter, "ftol": 1e-15, "gtol": 1e-11},
    )
    lf = np.zeros((d, d))
    lf[rows, cols] = res.x
    y = sym_part(lf @ lf.T)
    val, _ = objective(y)
    return val, y


def _projected_gradient_fallback(objective, y0: np.ndarray, steps: int = 60):
    """Plain projected gradient ascent with backtracking; used when the
    factorized solver returns a clearly non-stationary point."""
    y = project_psd(y0).values
    val, grad = objective(y)
    eta = 1.0
    stall = 0
    for _ in range(steps):
        while eta > 1e-14:
            cand = project_psd(y + eta * grad).values
            cval, cgrad = objective(cand)
            if cval > val + 1e-16:
                gain = cval - val
                y, val, grad = cand, cval, cgrad
                eta = min(eta * 2.0, 1e3)
                stall = stall + 1 if gain < 1e-14 * (1.0 + abs(val)) else 0
                break
            eta *= 0.5
        else:
            break
        if stall >= 3:
            break
    return val, y


def _stationarity_residual(objective, y: np.ndarray) -> float:
    _, grad = objective(y)
    s = 1e-6
    return norm(project_psd(y + s * grad).values - y) / s


def _multi_start_maximize(objective, d: int, starts_y0, radius: float, full_solves: int = 4):
    """Screen the starts by objective value, run the factorized solver from
    the best few, pick the best terminal point, and detect value ties at
    distant points."""
    starts_y0 = list(starts_y0)
    screen = np.array([objective(y0)[0] for y0 in starts_y0])
    order = np.argsort(-screen)[: max(1, min(full_solves, len(starts_y0)))]
    vals, points = [], []
    for j in order:
        v, y = _maximize_once(objective, d, starts_y0[j], radius)
        vals.append(v)
        points.append(y)
    best = int(np.argmax(vals))
    best_val, best_y = vals[best], points[best]
    best = int(order[best])
    resid = _stationarity_residual(objective, best_y)
    if resid > 1e-6 * (1.0 + abs(best_val)):
        fval, fy = _projected_gradient_fallback(objective, best_y)
        if fval > best_val:
            best_val, best_y = fval, fy
            resid = _stationarity_residual(objective, best_y)
    tie, tie_dist = False, 0.0
    for v, y in zip(vals, points):
        dist = norm(y - best_y)
        if v >= best_val - _TIE_VALUE_TOL * (1.0 + abs(best_val)) and dist > _TIE_DIST_TOL:
            tie = True
            tie_dist = max(tie_dist, dist)
    return best_val, best_y, best, resid, tie, tie_dist


def _conjugate_starts(d: int, h: np.ndarray, radius: float, starts: int, seed: int):
    out = [np.zeros((d, d)), 0.1 * radius * np.eye(d) / np.sqrt(d), project_psd(h).values]
    i = 0
    while len(out) < starts:
        rng = np.random.default_rng(seed + i)
        g = rng.standard_normal((d, d))
        w = sym_part(g @ g.T)
        out.append((rng.uniform(0.1, 0.9) * radius / max(norm(w), 1e-12)) * w)
        i += 1
    return out[:starts]


def _conjugate_solve(g: ConeFunction, hq: np.ndarray, radius: float, starts: int, seed: int):
    """Core conjugate solve with radius doubling.

    Returns (value, argmax, diverged, resid, tie, tie_dist, best_idx).
    Divergence is declared when the max keeps landing near the search
    boundary and the value keeps growing across three radius doublings.
    """
    d = hq.shape[0]

    def objective(y):
        return inner(hq, y) - g.value(y), hq - g.grad(y)

    radius_now = max(radius, 1e-3)
    prev_val = None
    growths = 0
    last = None
    for _ in range(4):  # initial radius plus three doublings
        val, y, idx, resid, tie, tie_dist = _multi_start_maximize(
            objective, d, _conjugate_starts(d, hq, radius_now, starts, seed), radius_now
        )
        last = (val, y, idx, resid, tie, tie_dist)
        if norm(y) < 0.9 * radius_now:
            return val, y, False, resid, tie, tie_dist, idx
        if prev_val is not None and val > prev_val + _GROWTH_TOL * (1.0 + abs(prev_val)):
            growths += 1
        prev_val = val
        radius_now *= 2.0
    val, y, idx, resid, tie, tie_dist = last
    if growths >= 3:
        return np.inf, np.zeros((d, d)), True, np.inf, False, 0.0, idx
    # boundary-attained but the value has stalled: the supremum is approached
    # along a recession direction yet finite (e.g. entropy-limit slopes)
    return val, y, False, resid, tie, tie_dist, idx


def monotone_conjugate(
    g: ConeFunction,
    h,
    radius: float | None = None,
    starts: int = 8,
    seed: int = 0,
) -> VariationalResult:
    """g*(h) = sup over PSD y of { inner(h, y) - g(y) }.

    The caller-supplied radius must cover the region where the supremum is
    attained; by default it is sized from the query and the Lipschitz bound
    of g.  When the objective keeps growing at the search boundary through
    three radius doublings, a +inf sentinel result with `diverged` set is
    returned instead of a maximizer.
    """
    hq = as_sym_values(h) if not np.isscalar(h) else np.array([[float(h)]])
    d = hq.shape[0]
    if radius is None:
        radius = norm(hq) + (g.lipschitz_bound or 1.0) + 1.0
    val, y, diverged, resid, tie, tie_dist, idx = _conjugate_solve(g, hq, radius, starts, seed)
    return VariationalResult(
        value=float(val),
        maximizer=project_psd(y),
        stationarity_residual=float(resid),
        starts=starts,
        best_start_index=idx,
        formula="conjugate",
        diverged=diverged,
        tie_detected=tie,
        tie_distance=tie_dist,
        seed=seed,
    )


def _conjugate_cached(g: ConeFunction, hq: np.ndarray, radius: float, starts: int, seed: int):
    """(value, argmax, diverged) of g* at hq, cached by exact query bytes.

    For convex g the inner objective is concave, so a single warm-started
    solve finds the global maximum; a cold multi-start pass is the fallback
    when the warm result is visibly non-stationary.
    """
    key = (hq.tobytes(), round(radius, 12), starts)
    hit = g._conj_cache.get(key)
    if hit is not None:
        return hit

    d = hq.shape[0]

    if g.lipschitz_bound is not None:
        # certificate: along the top eigendirection u of hq the objective
        # grows at rate lambda_max(hq) - slope_g(u) >= lambda_max - Lip(g)
        lam_max = float(np.linalg.eigvalsh(sym_part(hq))[-1])
        if lam_max > g.lipschitz_bound + 1e-9:
            result = (np.inf, np.zeros((d, d)), True)
            g._conj_cache[key] = result
            return result

    def objective(y):
        return inner(hq, y) - g.value(y), hq - g.grad(y)

    status, val, y = _concave_conjugate_fast(g, hq, objective, d)
    if status == "ok":
        result = (val, y, False)
    elif status == "grew" and _ray_diverges(objective, y, max(radius, 1.0)):
        # the Newton iterates ran off along a recession direction and the
        # objective keeps growing through three radius doublings
        result = (np.inf, np.zeros((d, d)), True)
    else:
        fval, fy, fdiv, *_ = _conjugate_solve(g, hq, radius, starts, seed)
        result = (fval, fy, fdiv)

    g._conj_cache[key] = result
    if not result[2]:
        g._conj_cache["_warm"] = result[1]
    return result


def _ray_diverges(objective, y_far: np.ndarray, radius: float) -> bool:
    n = norm(y_far)
    if n < 1e-12:
        return False
    u = y_far / n
    vals = [objective(r * u)[0] for r in (radius, 2 * radius, 4 * radius, 8 * radius)]
    return all(
        vals[i + 1] > vals[i] + _GROWTH_TOL * (1.0 + abs(vals[i])) for i in range(3)
    )


def _concave_conjugate_fast(g: ConeFunction, hq: np.ndarray, objective, d: int):
    """Damped Newton on the stationarity grad g(y) = hq for a concave inner
    objective.

    Returns ("ok", value, argmax) on success, ("grew", _, last iterate) when
    the iterates ran away (a divergence signal the caller verifies cheaply),
    or ("failed", ...) when the caller should use the full multi-start path
    (typically partial-rank boundary maximizers).
    """
    val0, grad0 = objective(np.zeros((d, d)))
    if float(np.linalg.eigvalsh(sym_part(grad0))[-1]) <= 1e-12:
        # KKT at the apex: no ascent direction enters the cone
        return "ok", val0, np.zeros((d, d))
    warm = g._conj_cache.get("_warm")
    y = warm.copy() if warm is not None else 0.1 * np.eye(d)
    frame = [e.values / norm(e.values) for e in basis(d)]  # orthonormal in S^D
    nb = len(frame)
    val, grad = objective(y)
    for _ in range(40):
        gn = norm(grad)
        if gn <= 1e-10 * (1.0 + abs(val)):
            return "ok", val, y
        step = 1e-5 * (1.0 + norm(y))
        hess = np.zeros((nb, nb))
        for j, u in enumerate(frame):
            # keep the stencil on the cone; the Hessian only preconditions
            yp = project_psd(y + step * u).values
            ym = project_psd(y - step * u).values
            gap = norm(yp - ym)
            if gap < 0.1 * step:
                return "failed", val, y
            dgrad = (objective(yp)[1] - objective(ym)[1]) / gap
            for i, u2 in enumerate(frame):
                hess[i, j] = -inner(u2, dgrad)
        rhs = np.array([inner(u, grad) for u in frame])
        try:
            coef = np.linalg.solve(hess + 1e-12 * np.eye(nb), rhs)
        except np.linalg.LinAlgError:
            return "failed", val, y
        delta = sum(c * u for c, u in zip(coef, frame))
        dn = norm(delta)
        cap = 10.0 * (1.0 + norm(y))
        if dn > cap:
            delta *= cap / dn
        eta = 1.0
        moved = False
        while eta > 1e-10:
            cand = project_psd(y + eta * delta).values
            cval, cgrad = objective(cand)
            if cval > val or (cval >= val - 1e-15 and norm(cgrad) < gn):
                y, val, grad = cand, cval, cgrad
                moved = True
                break
            eta *= 0.25
        if not moved:
            # stalled at the FD-noise floor: accept when the gradient is far
            # below the accuracy anything downstream asserts
            if gn <= 1e-8 * (1.0 + abs(val)):
                return "ok", val, y
            return "failed", val, y
        if norm(y) > max(1e2, 25.0 * (1.0 + norm(hq))):
            return "grew", val, y
    if norm(grad) <= 1e-8 * (1.0 + abs(val)):
        return "ok", val, y
    return "failed", val, y


_PSI_CONE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()
_H_CONE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()
_PROBE_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _as_cone_function(psi) -> ConeFunction:
    """Adapt a PsiOracle-like object (value/grad/lipschitz_bound) or pass a
    ConeFunction through, keeping one adapter per object so conjugate caches
    persist across calls."""
    if isinstance(psi, ConeFunction):
        return psi
    try:
        return _PSI_CONE[psi]
    except KeyError:
        cf = ConeFunction(
            evaluator=psi.value,
            gradient=psi.grad,
            lipschitz_bound=getattr(psi, "lipschitz_bound", None),
            label=getattr(psi, "label", "psi"),
        )
        _PSI_CONE[psi] = cf
        return cf


def _h_cone_function(spec: InteractionSpec) -> ConeFunction:
    try:
        return _H_CONE[spec]
    except KeyError:
        cf = ConeFunction(
            evaluator=lambda q: h_value(spec, q),
            gradient=lambda q: h_grad(spec, q),
            label="H",
        )
        _H_CONE[spec] = cf
        return cf


def hopf_lax_available(spec: InteractionSpec, samples: int = 4096, seed: int = 20) -> bool:
    """Whether the midpoint-convexity probe of H passes for this spec (cached)."""
    try:
        return _PROBE_CACHE[spec]
    except KeyError:
        ok = convexity_probe(spec, samples=samples, seed=seed).passed
        _PROBE_CACHE[spec] = ok
        return ok


def _outer_result(formula, objective, d, starts_y0, radius, starts, seed) -> VariationalResult:
    val, y, idx, resid, tie, tie_dist = _multi_start_maximize(objective, d, starts_y0, radius)
    return VariationalResult(
        value=float(val),
        maximizer=project_psd(y),
        stationarity_residual=float(resid),
        starts=starts,
        best_start_index=idx,
        formula=formula,
        tie_detected=tie,
        tie_distance=tie_dist,
        seed=seed,
    )


def hopf_value(psi, spec: InteractionSpec, t: float, h, starts: int = 16, seed: int = 0) -> VariationalResult:
    """The Hopf representation sup_y { y . h - psi*(y) + t H(y) }.

    psi* is +infinity outside a bounded set (psi is cone-Lipschitz), so the
    outer search lives in the ball of radius D sqrt(D) + 1.  The inner
    conjugate is evaluated by its own solver and cached per query; starts are
    seeded through grad psi, which lands them inside the effective domain.
    """
    cf = _as_cone_function(psi)
    hv = as_sym_values(h) if not np.isscalar(h) else np.array([[float(h)]])
    d = hv.shape[0]
    lip = cf.lipschitz_bound if cf.lipschitz_bound is not None else float(d)
    r_out = d * np.sqrt(d) + 1.0
    r_in = r_out + lip + 1.0
    inner_starts = 4

    def psi_star(y):
        return _conjugate_cached(cf, y, r_in, inner_starts, seed + 101)

    def objective(y):
        val, argmax, diverged = psi_star(y)
        if diverged or not np.isfinite(val):
            # outside dom psi*: steer back toward the origin
            return -1e10 * (1.0 + inner(y, y)), -2e10 * y
        return (
            inner(y, hv) - val + t * h_value(spec, y),
            hv - argmax + t * h_grad(spec, y),
        )

    grad_seeds = [np.zeros((d, d)), hv.copy(), 0.25 * np.eye(d), np.eye(d)]
    i = 0
    while len(grad_seeds) < starts:
        rng = np.random.default_rng(seed + 7 * i + 3)
        g = rng.standard_normal((d, d))
        w = sym_part(g @ g.T)
        grad_seeds.append((rng.uniform(0.2, 2.0) / max(norm(w), 1e-12)) * w)
        i += 1
    starts_y0 = [cf.grad(project_psd(g).values) for g in grad_seeds[:starts]]
    starts_y0.append(np.zeros((d, d)))
    return _outer_result("hopf", objective, d, starts_y0, r_out, starts, seed)


def hopf_lax_value(
    psi,
    spec: InteractionSpec,
    t: float,
    h,
    starts: int = 16,
    seed: int = 0,
    form: Literal["standard", "scaled"] = "standard",
) -> VariationalResult:
    """The Hopf-Lax representation, standard or time-scaled form.

    Requires the convexity probe of H to have passed (the formula is only a
    representation of f for convex H); at t = 0 both forms reduce to psi(h).
    H* is computed by the monotone conjugate of H with per-spec caching.
    """
    if not hopf_lax_available(spec):
        raise FormulaUnavailableError(
            "the convexity probe failed for this interaction; Hopf-Lax is disabled"
        )
    cf = _as_cone_function(psi)
    hcf = _h_cone_function(spec)
    hv = as_sym_values(h) if not np.isscalar(h) else np.array([[float(h)]])
    d = hv.shape[0]
    formula = "hopf_lax" if form == "standard" else "hopf_lax_scaled"
    if t == 0.0:
        val = cf.value(hv)
        return VariationalResult(
            value=float(val),
            maximizer=project_psd(np.zeros((d, d))),
            stationarity_residual=0.0,
            starts=starts,
            best_start_index=0,
            formula=formula,
            seed=seed,
        )
    if t < 0:
        raise ValueError("t must be nonnegative")

    def h_star(s):
        r = norm(s) + 2.0
        val, argmax, diverged = _conjugate_cached(hcf, s, r, 4, seed + 211)
        if diverged or not np.isfinite(val):
            return None
        return val, argmax

    gate = max(1.0, norm(h_grad(spec, cf.grad(hv))))
    if form == "standard":
        radius = max(1.0, 4.0 * t * gate)

        def objective(y):
            hs = h_star(y / t)
            if hs is None:
                return -1e10 * (1.0 + inner(y, y)), -2e10 * y
            val, argmax = hs
            return cf.value(hv + y) - t * val, cf.grad(hv + y) - argmax

    else:
        radius = max(1.0, 4.0 * gate)

        def objective(y):
            hs = h_star(y)
            if hs is None:
                return -1e10 * (1.0 + inner(y, y)), -2e10 * y
            val, argmax = hs
            return cf.value(hv + t * y) - t * val, t * (cf.grad(hv + t * y) - argmax)

    scale = t if form == "standard" else 1.0
    starts_y0 = [np.zeros((d, d)), scale * gate * np.eye(d) / np.sqrt(d)]
    i = 0
    while len(starts_y0) < starts:
        rng = np.random.default_rng(seed + 13 * i + 5)
        g = rng.standard_normal((d, d))
        w = sym_part(g @ g.T)
        starts_y0.append((rng.uniform(0.05, 1.0) * scale * gate / max(norm(w), 1e-12)) * w)
        i += 1
    return _outer_result(formula, objective, d, starts_y0[:starts], radius, starts, seed)


def _evaluate_formula(formula: str, psi, spec, t, h, starts, seed) -> float:
    if formula == "hopf":
        return hopf_value(psi, spec, t, h, starts=starts, seed=seed).value
    if formula == "hopf_lax":
        return hopf_lax_value(psi, spec, t, h, starts=starts, seed=seed, form="standard").value
    if formula == "hopf_lax_scaled":
        return hopf_lax_value(psi, spec, t, h, starts=starts, seed=seed, form="scaled").value
    raise ValueError(f"cannot re-evaluate formula {formula!r}")


def fd_grad_h(f_eval: Callable[[float, np.ndarray], float], t: float, h: np.ndarray, step: float) -> np.ndarray:
    """Central-difference spatial gradient of a scalar field on the cone."""
    d = h.shape[0]
    g = np.zeros((d, d))
    for e in basis(d):
        ev = e.values
        dv = (f_eval(t, h + step * ev) - f_eval(t, h - step * ev)) / (2.0 * step)
        g += (dv / inner(ev, ev)) * ev
    return g


def fd_dt(f_eval: Callable[[float, np.ndarray], float], t: float, h: np.ndarray, step: float) -> float:
    """Central-difference time derivative, one-sided at t < step."""
    if t >= step:
        return (f_eval(t + step, h) - f_eval(t - step, h)) / (2.0 * step)
    return (f_eval(t + step, h) - f_eval(t, h)) / step


@dataclass(frozen=True, eq=False)
class DiagnosticsReport:
    """Maximizer identities checked against finite differences of f.

    For a Hopf result: `maximizer_vs_grad` is |h_star - grad_h f| and
    `h_of_maximizer_vs_dt` is |H(h_star) - dt f|.  For a Hopf-Lax result:
    `psi_grad_vs_grad` is |grad psi(h + h_diamond) - grad_h f| (with the
    time-scaled shift for the scaled form).  `hj_residual` is
    |dt f - H(grad_h f)| in every case.  When the variational solve reported
    a value tie between distant maximizers the point is flagged as possibly
    nondifferentiable and the maximizer identities should not be asserted.
    """

    formula: str
    grad_f: np.ndarray
    dt_f: float
    hj_residual: float
    maximizer_vs_grad: float | None = None
    h_of_maximizer_vs_dt: float | None = None
    psi_grad_vs_grad: float | None = None
    flagged_nonunique: bool = False


def maximizer_diagnostics(
    result: VariationalResult,
    psi,
    spec: InteractionSpec,
    t: float,
    h,
    fd_step: float = 1e-4,
) -> DiagnosticsReport:
    """Check the envelope-theorem maximizer identities at a point.

    Computes grad_h f and dt f by central differences of the same formula
    that produced `result` and reports the residuals of the identities that
    apply to that formula, plus the Hamilton-Jacobi residual.
    """
    hv = as_sym_values(h) if not np.isscalar(h) else np.array([[float(h)]])
    cf = _as_cone_function(psi)
    f_eval = lambda tt, hh: _evaluate_formula(result.formula, psi, spec, tt, hh, result.starts, result.seed)
    grad_f = fd_grad_h(f_eval, t, hv, fd_step)
    dt_f = fd_dt(f_eval, t, hv, fd_step)
    hj = abs(dt_f - h_value(spec, project_psd(grad_f).values))
    y = result.maximizer.values
    kw: dict = {}
    if result.formula == "hopf":
        kw["maximizer_vs_grad"] = norm(y - grad_f)
        kw["h_of_maximizer_vs_dt"] = abs(h_value(spec, y) - dt_f)
    elif result.formula == "hopf_lax":
        kw["psi_grad_vs_grad"] = norm(cf.grad(hv + y) - grad_f)
    elif result.formula == "hopf_lax_scaled":
        kw["psi_grad_vs_grad"] = norm(cf.grad(hv + t * y) - grad_f)
    return DiagnosticsReport(
        formula=result.formula,
        grad_f=grad_f,
        dt_f=dt_f,
        hj_residual=hj,
        flagged_nonunique=result.tie_detected,
        **kw,
    )
