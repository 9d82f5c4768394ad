"""Short-time smooth solution of the cone HJ equation by characteristics.

The forward characteristic map is X(t, h) = h - t grad H(grad psi(h)); for
t below the reciprocal of the Lipschitz constant of grad H o grad psi it is
inverted by the plain fixed-point iteration

    h  <-  k + t grad H(grad psi(h)),

which contracts exactly in that regime and keeps every iterate on the PSD
cone (both summands are PSD: the nonlinearity gradient maps the cone into
itself and grad psi is a posterior second moment).  The explicit solution
transported along characteristics is

    u(t, h) = psi(z) - t grad H(grad psi(z)) . grad psi(z)
                     + t H(grad psi(z)),        z = Z(t, h),

a classical solution of dt u = H(grad u) on the short-time strip; its
agreement with the Hopf value is checked by the studies, never assumed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ContractionError, NumericError
from .nonlinearity import InteractionSpec, h_grad, h_value
from .symcone import ConePoint, SymMatrix, as_sym_values, basis, inner, norm, sym_part

__all__ = [
    "CharSolution",
    "SmoothnessReport",
    "char_forward",
    "char_invert",
    "u_value",
    "smoothness_report",
]

#: Eigenvalue floor below which a computed psi-gradient is treated as a bug:
#: the theory guarantees grad psi lies in the PSD cone, so quadrature noise
#: past this tolerance must fail loudly rather than be projected away.
GRAD_PSD_TOL = 1e-8

_ITERATE_PSD_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class CharSolution:
    """One inverted characteristic: Z(t, h), iteration diagnostics, and
    (when requested) the transported solution value u(t, h)."""

    t: float
    h: ConePoint
    z: ConePoint
    iterations: int
    residual: float
    u: float | None = None


def _as_point(h, d: int) -> ConePoint:
    if isinstance(h, ConePoint):
        return h
    arr = np.asarray(h, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.shape != (d, d):
        raise ValueError(f"h has shape {arr.shape}, expected ({d}, {d})")
    return ConePoint(SymMatrix(sym_part(arr)))


def _checked_psi_grad(psi_grad: Callable, h: np.ndarray) -> np.ndarray:
    g = np.asarray(psi_grad(h), dtype=float)
    lo = float(np.linalg.eigvalsh(sym_part(g))[0])
    if lo < -GRAD_PSD_TOL:
        raise NumericError(
            f"psi gradient has eigenvalue {lo:.3e} < -{GRAD_PSD_TOL:.0e}; "
            "the initial condition's gradient must lie in the PSD cone"
        )
    return sym_part(g)


def char_forward(psi_grad: Callable, spec: InteractionSpec, t: float, h) -> np.ndarray:
    """Forward characteristic X(t, h) = h - t grad H(grad psi(h))."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    hp = _as_point(h, spec.D)
    return hp.values - t * h_grad(spec, _checked_psi_grad(psi_grad, hp.values))


def char_invert(
    psi_grad: Callable,
    spec: InteractionSpec,
    t: float,
    k,
    tol: float = 1e-12,
    max_iter: int = 500,
) -> CharSolution:
    """Invert the characteristic map: find Z(t, k) with X(t, Z(t, k)) = k.

    Fixed-point iteration of h <- k + t grad H(grad psi(h)) from h = k; a
    contraction whenever t times the Lipschitz constant of the transport
    velocity is below one (the caller enforces the 0.9 safety margin).
    Every iterate is checked to stay on the cone.  On failure to converge a
    ContractionError reports the observed contraction quotient, which
    signals an underestimated Lipschitz constant.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    kp = _as_point(k, spec.D)
    h = kp.values.copy()
    prev_step = None
    quotient = None
    for it in range(max_iter):
        step_mat = t * h_grad(spec, _checked_psi_grad(psi_grad, h))
        nxt = kp.values + step_mat
        lo = float(np.linalg.eigvalsh(nxt)[0])
        if lo < -_ITERATE_PSD_TOL:
            raise NumericError(f"fixed-point iterate left the cone (eigenvalue {lo:.3e})")
        step = norm(nxt - h)
        if prev_step is not None and prev_step > 0:
            quotient = step / prev_step
        prev_step = step
        h = nxt
        if step <= tol:
            residual = norm(char_forward(psi_grad, spec, t, h) - kp.values)
            return CharSolution(t=t, h=kp, z=_as_point(h, spec.D), iterations=it + 1, residual=residual)
    raise ContractionError(
        f"characteristic inversion did not reach tol={tol:g} in {max_iter} iterations "
        f"(last contraction quotient {quotient!r}); the time step may exceed the "
        "contraction regime",
        quotient=quotient,
    )


def u_value(
    psi: Callable,
    psi_grad: Callable,
    spec: InteractionSpec,
    t: float,
    h,
    tol: float = 1e-12,
    max_iter: int = 500,
) -> CharSolution:
    """The transported short-time solution u(t, h) along the inverted
    characteristic; at t = 0 it reduces to psi(h)."""
    sol = char_invert(psi_grad, spec, t, h, tol=tol, max_iter=max_iter)
    z = sol.z.values
    gz = _checked_psi_grad(psi_grad, z)
    u = float(psi(z)) - t * inner(h_grad(spec, gz), gz) + t * h_value(spec, gz)
    return CharSolution(t=sol.t, h=sol.h, z=sol.z, iterations=sol.iterations, residual=sol.residual, u=u)


@dataclass(frozen=True, eq=False)
class SmoothnessReport:
    """Second-difference tables of u over a short-time grid.

    `max_hj_residual` is the largest |dt u - H(grad u)| over the grid (the
    classical-solution check); `discontinuity_flags` lists grid positions
    where the second-difference magnitude jumps by more than 10x between
    adjacent cells, the screening heuristic for smoothness failures.
    """

    t_values: tuple
    h_labels: tuple
    u_table: np.ndarray  # (T, H)
    hj_residuals: np.ndarray  # (T, H)
    second_diff_h: np.ndarray  # (T, H, n_basis)
    second_diff_t: np.ndarray  # (T, H)
    max_hj_residual: float
    discontinuity_flags: tuple
    fd_step: float
    flag_floor: float


def smoothness_report(
    psi: Callable,
    psi_grad: Callable,
    spec: InteractionSpec,
    t_values: Sequence[float],
    h_values: Sequence,
    fd_step: float = 1e-4,
    tol: float = 1e-12,
    flag_floor: float = 1e-2,
) -> SmoothnessReport:
    """Tabulate u, its HJ residual, and second differences over a grid.

    All grid times must lie in the contraction regime (the caller screens
    against its Lipschitz estimate).  Interior h values are required so the
    spatial stencils stay on the cone.
    """
    d = spec.D
    bas = basis(d)
    hs = [_as_point(h, d).values for h in h_values]
    ts = [float(t) for t in t_values]

    def u_at(t: float, hm: np.ndarray) -> float:
        if t <= 0.0:
            return float(psi(hm))
        return u_value(psi, psi_grad, spec, t, hm, tol=tol).u

    nt, nh, nb = len(ts), len(hs), len(bas)
    u_tab = np.zeros((nt, nh))
    hj = np.zeros((nt, nh))
    s2h = np.zeros((nt, nh, nb))
    s2t = np.zeros((nt, nh))
    for i, t in enumerate(ts):
        for j, hm in enumerate(hs):
            u0 = u_at(t, hm)
            u_tab[i, j] = u0
            grad = np.zeros((d, d))
            for b_i, e in enumerate(bas):
                ev = e.values
                up = u_at(t, hm + fd_step * ev)
                dn = u_at(t, hm - fd_step * ev)
                grad += ((up - dn) / (2.0 * fd_step) / inner(ev, ev)) * ev
                s2h[i, j, b_i] = (up - 2.0 * u0 + dn) / fd_step**2
            if t >= fd_step:
                ut_p = u_at(t + fd_step, hm)
                ut_m = u_at(t - fd_step, hm)
                dt_u = (ut_p - ut_m) / (2.0 * fd_step)
                s2t[i, j] = (ut_p - 2.0 * u0 + ut_m) / fd_step**2
            else:
                ut_p = u_at(t + fd_step, hm)
                dt_u = (ut_p - u0) / fd_step
                s2t[i, j] = 0.0
            hj[i, j] = abs(dt_u - h_value(spec, sym_part(grad)))

    flags = []
    for i in range(nt):
        for j in range(nh - 1):
            for b_i in range(nb):
                a, b = abs(s2h[i, j, b_i]), abs(s2h[i, j + 1, b_i])
                if b > 10.0 * max(a, flag_floor) or a > 10.0 * max(b, flag_floor):
                    flags.append((i, j, b_i))
    return SmoothnessReport(
        t_values=tuple(ts),
        h_labels=tuple(range(nh)),
        u_table=u_tab,
        hj_residuals=hj,
        second_diff_h=s2h,
        second_diff_t=s2t,
        max_hj_residual=float(hj.max()) if hj.size else 0.0,
        discontinuity_flags=tuple(flags),
        fd_step=fd_step,
        flag_floor=flag_floor,
    )
