"""Disorder averaging: quenched observables by quadrature or Monte Carlo.

Per disorder draw the posterior is exact (module `model`); this module
supplies the outer average over (X, W, Z).  In quadrature mode the Gaussian
pair (W, Z) runs over a tensor Gauss-Hermite grid and X over the full prior
product, so quenched values are deterministic and tolerance-checkable; in
Monte Carlo mode all three are sampled and a jackknife standard error is
reported.

The engine is vectorized over disorder points in chunks.  For each chunk it
assembles the K x m matrix of Hamiltonian values (K enumerated
configurations, m disorder points), normalizes with a log-sum-exp, and
reduces the requested posterior moments with the chunk weights in a fixed
order, so identical inputs give bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import CapacityError, DomainError
from .model import (
    DisorderSample,
    ModelSpec,
    PriorSpec,
    enumerate_configs,
    gibbs_exact,
    tensor_channel,
)
from .nonlinearity import InteractionSpec
from .symcone import ConePoint, SymMatrix, as_sym_values, basis, inner, sqrt_psd, sym_part

MAX_QUAD_DIM = 8
MAX_QUAD_NODES = 16
MIN_MC_BUDGET = 100
MAX_PAIR_CONFIGS = 512  # K cap for the K^2 replica-pair moments

__all__ = [
    "QuenchedEstimate",
    "MomentRequest",
    "quenched_moments",
    "quenched",
    "free_energy",
    "fbar_grad_h_fd",
    "fbar_dt_fd",
    "overlap_statistics",
    "mmse_matrix",
    "mmse_scalar",
    "nishimori_suite",
    "NishimoriPair",
    "PsiOracle",
    "psi",
    "psi_grad",
    "psi_hess",
]


@dataclass(frozen=True, eq=False)
class QuenchedEstimate:
    """A disorder-averaged value.

    Quadrature estimates are deterministic: std_error is 0 and refine_delta
    (when computed) is the change under halving the nodes-per-dimension,
    a grid-refinement error proxy.  Monte Carlo estimates carry a jackknife
    standard error instead.
    """

    value: float | np.ndarray
    std_error: float | np.ndarray
    n_samples: int
    method: str  # "quadrature" | "monte_carlo"
    refine_delta: float | np.ndarray | None = None


@dataclass(frozen=True)
class MomentRequest:
    key: str
    kind: str
    param: object = None


def _as_cone(h, d: int) -> ConePoint:
    if isinstance(h, ConePoint):
        return h
    arr = np.asarray(h, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.shape != (d, d):
        raise ValueError(f"h has shape {arr.shape}, expected ({d}, {d})")
    return ConePoint(SymMatrix(sym_part(arr)))


def _gh_rule(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Hermite rule rescaled for the standard normal weight."""
    x, w = np.polynomial.hermite.hermgauss(nodes)
    return x * np.sqrt(2.0), w / np.sqrt(np.pi)


def _tensor_power_batch(x: np.ndarray, p: int) -> np.ndarray:
    """Batched Kronecker power: (m, N, D) -> (m, N^p, D^p)."""
    m, n, d = x.shape
    out = x
    for _ in range(p - 1):
        on, od = out.shape[1], out.shape[2]
        out = (out[:, :, None, :, None] * x[:, None, :, None, :]).reshape(m, on * n, od * d)
    return out


class _DsqrtOp:
    """Directional derivative of the matrix square root at fixed base h,
    applied to batches of symmetric directions."""

    def __init__(self, h: ConePoint):
        w, v = np.linalg.eigh(h.values)
        roots = np.sqrt(np.clip(w, 0.0, None))
        self.v = v
        self.denom = roots[:, None] + roots[None, :]

    def apply(self, a: np.ndarray) -> np.ndarray:
        atil = self.v.T @ a @ self.v
        return self.v @ (atil / self.denom) @ self.v.T


class _Precompute:
    """Per-(model, t, h) constants shared by every chunk."""

    def __init__(self, model: ModelSpec, t: float, h: ConePoint):
        if t < 0:
            raise ValueError("t must be nonnegative")
        self.model = model
        self.t = float(t)
        self.h = h
        n, p = model.N, model.p
        self.configs, self.logw = enumerate_configs(model)
        self.k = self.configs.shape[0]
        self.s2h = sqrt_psd(2.0 * h.values).values
        self.tcfg = np.stack(
            [tensor_channel(c, model.interaction).ravel() for c in self.configs]
        )  # (K, N^p L)
        self.tensor_sq = np.einsum("kq,kq->k", self.tcfg, self.tcfg)
        self.xtx = np.einsum("knd,kne->kde", self.configs, self.configs)
        self.hxx = np.einsum("de,kde->k", h.values, self.xtx)
        self.bcfg = (self.configs @ self.s2h).reshape(self.k, -1)  # (K, N D)
        self.coef_t = np.sqrt(2.0 * t / n ** (p - 1))
        self.coef_tt = t / n ** (p - 1)
        self._dsqrt_op = None
        self._pair_sq = None

    @property
    def dsqrt_op(self) -> _DsqrtOp:
        if self._dsqrt_op is None:
            if self.h.interior_margin <= 1e-10:
                raise DomainError("this observable requires strictly interior h")
            self._dsqrt_op = _DsqrtOp(self.h)
        return self._dsqrt_op

    @property
    def pair_sq(self) -> np.ndarray:
        """S_kl = |x_k^T x_l / N|^2, used by the two-replica second moment."""
        if self._pair_sq is None:
            if self.k > MAX_PAIR_CONFIGS:
                raise CapacityError(
                    f"replica-pair moments need K^2 work; K = {self.k} exceeds {MAX_PAIR_CONFIGS}"
                )
            cross = np.einsum("knd,lne->klde", self.configs, self.configs) / self.model.N
            self._pair_sq = (cross**2).sum(axis=(2, 3))
        return self._pair_sq


class _ChunkContext:
    """One chunk of disorder points with lazily computed posterior moments."""

    def __init__(self, pre: _Precompute, x, w, z, tx=None):
        self.pre = pre
        self.X = x  # (m, N, D), possibly a broadcast view
        self.W = w  # (m, N^p L) or None when t == 0
        self.Z = z  # (m, N, D)
        self.m = z.shape[0]
        self._tx = tx
        self._cache: dict[str, np.ndarray] = {}

    @property
    def TX(self) -> np.ndarray:
        """Signal tensor channel X^(x)p A per point, flattened: (m, N^p L)."""
        if self._tx is None:
            model = self.pre.model
            xp = _tensor_power_batch(np.ascontiguousarray(self.X), model.p)
            self._tx = (xp @ model.interaction.A).reshape(self.m, -1)
        return self._tx

    def _get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def posterior(self) -> tuple[np.ndarray, np.ndarray]:
        """(log partition per point, posterior matrix P of shape (K, m))."""

        def build():
            pre = self.pre
            n = pre.model.N
            ybar = (self.X @ pre.s2h + self.Z).reshape(self.m, -1)
            energy = pre.bcfg @ ybar.T - pre.hxx[:, None]
            if pre.t > 0.0:
                y = pre.coef_t * self.TX + self.W
                energy = energy + pre.coef_t * (pre.tcfg @ y.T) - pre.coef_tt * pre.tensor_sq[:, None]
            logits = energy + pre.logw[:, None]
            logz = logsumexp(logits, axis=0)
            return logz, np.exp(logits - logz[None, :])

        return self._get("posterior", build)

    @property
    def f(self) -> np.ndarray:
        logz, _ = self.posterior
        return logz / self.pre.model.N

    @property
    def P(self) -> np.ndarray:
        return self.posterior[1]

    @property
    def mean_x(self) -> np.ndarray:
        return self._get("mean_x", lambda: np.einsum("km,knd->mnd", self.P, self.pre.configs))

    @property
    def mean_t(self) -> np.ndarray:
        return self._get("mean_t", lambda: np.einsum("km,kq->mq", self.P, self.pre.tcfg))

    @property
    def xtx_mean(self) -> np.ndarray:
        return self._get("xtx_mean", lambda: np.einsum("km,kde->mde", self.P, self.pre.xtx))

    @property
    def q_per_config(self) -> np.ndarray:
        """Q_k = X^T x_k / N for every configuration: (K, m, D, D)."""
        return self._get(
            "q_per_config",
            lambda: np.einsum("mnd,kne->kmde", self.X, self.pre.configs) / self.pre.model.N,
        )

    @property
    def c_per_config(self) -> np.ndarray:
        """C_k = x_k^T <x> / N for every configuration: (K, m, D, D)."""
        return self._get(
            "c_per_config",
            lambda: np.einsum("knd,mne->kmde", self.pre.configs, self.mean_x) / self.pre.model.N,
        )

    @property
    def l_per_config(self) -> np.ndarray:
        """The h-gradient observable of each configuration: (K, m, D, D)."""

        def build():
            pre = self.pre
            n = pre.model.N
            xz = np.einsum("knd,mne->kmde", pre.configs, self.Z)
            xz = 0.5 * (xz + np.swapaxes(xz, -1, -2))
            xs = np.einsum("knd,mne->kmde", pre.configs, self.X)
            xs = 0.5 * (xs + np.swapaxes(xs, -1, -2))
            return (
                np.sqrt(2.0) * pre.dsqrt_op.apply(xz) + 2.0 * xs - pre.xtx[:, None, :, :]
            ) / n

        return self._get("l_per_config", build)


def _sym_batch(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def _m_f(ctx, _):
    return ctx.f


def _m_f_sq(ctx, _):
    return ctx.f**2


def _m_grad_h_moment(ctx, _):
    n = ctx.pre.model.N
    return np.einsum("mnd,mne->mde", ctx.mean_x, ctx.mean_x) / n


def _m_grad_t_moment(ctx, _):
    n, p = ctx.pre.model.N, ctx.pre.model.p
    return (ctx.mean_t**2).sum(axis=1) / n**p


def _m_overlap_mean(ctx, _):
    n = ctx.pre.model.N
    return np.einsum("mnd,mne->mde", ctx.X, ctx.mean_x) / n


def _m_overlap_abs_dev(ctx, center):
    c = np.asarray(center, dtype=float)
    diff = ctx.q_per_config - c[None, None, :, :]
    return np.einsum("km,km->m", ctx.P, np.sqrt((diff**2).sum(axis=(2, 3))))


def _m_overlap_sq(ctx, _):
    return np.einsum("km,kmde,kmde->m", ctx.P, ctx.q_per_config, ctx.q_per_config)


def _m_replica_sq(ctx, _):
    s = ctx.pre.pair_sq
    return np.einsum("km,km->m", ctx.P, s @ ctx.P)


def _m_q_dot_r(ctx, _):
    return np.einsum("km,kmde,kmde->m", ctx.P, ctx.q_per_config, ctx.c_per_config)


def _m_r3_dot_r(ctx, _):
    c = ctx.c_per_config
    return np.einsum("km,kmde,kmed->m", ctx.P, c, c)


def _m_q_dot_self(ctx, _):
    n = ctx.pre.model.N
    return np.einsum("km,kmde,kde->m", ctx.P, ctx.q_per_config, ctx.pre.xtx / n)


def _m_r_dot_self(ctx, _):
    n = ctx.pre.model.N
    return np.einsum("km,kmde,kde->m", ctx.P, ctx.c_per_config, ctx.pre.xtx / n)


def _m_l_mean(ctx, _):
    pre = ctx.pre
    n = pre.model.N
    mz = _sym_batch(np.einsum("mnd,mne->mde", ctx.mean_x, ctx.Z))
    ms = _sym_batch(np.einsum("mnd,mne->mde", ctx.mean_x, ctx.X))
    return (np.sqrt(2.0) * pre.dsqrt_op.apply(mz) + 2.0 * ms - ctx.xtx_mean) / n


def _m_l_sq(ctx, _):
    lk = ctx.l_per_config
    return np.einsum("km,kmde,kmde->m", ctx.P, lk, lk)


def _m_l_dev_sq(ctx, _):
    """<|L - <L>|^2> per disorder point (the inner-variance integrand)."""
    lk = ctx.l_per_config
    lbar = np.einsum("km,kmde->mde", ctx.P, lk)
    return np.einsum("km,kmde,kmde->m", ctx.P, lk, lk) - (lbar**2).sum(axis=(1, 2))


def _m_mmse_matrix(ctx, _):
    n = ctx.pre.model.N
    diff = ctx.X - ctx.mean_x
    return np.einsum("mnd,mne->mde", diff, diff) / n


def _m_mmse_scalar(ctx, _):
    n, p = ctx.pre.model.N, ctx.pre.model.p
    return ((ctx.TX - ctx.mean_t) ** 2).sum(axis=1) / n**p


def _m_signal_tensor_sq(ctx, _):
    n, p = ctx.pre.model.N, ctx.pre.model.p
    return (ctx.TX**2).sum(axis=1) / n**p


_MOMENTS: dict[str, Callable] = {
    "f": _m_f,
    "f_sq": _m_f_sq,
    "grad_h_moment": _m_grad_h_moment,
    "replica_mean": _m_grad_h_moment,  # <R> = <x>^T <x> / N, same array
    "grad_t_moment": _m_grad_t_moment,
    "overlap_mean": _m_overlap_mean,
    "overlap_abs_dev": _m_overlap_abs_dev,
    "overlap_sq": _m_overlap_sq,
    "replica_sq": _m_replica_sq,
    "q_dot_r": _m_q_dot_r,
    "r3_dot_r": _m_r3_dot_r,
    "q_dot_self": _m_q_dot_self,
    "r_dot_self": _m_r_dot_self,
    "l_mean": _m_l_mean,
    "l_sq": _m_l_sq,
    "l_dev_sq": _m_l_dev_sq,
    "mmse_matrix": _m_mmse_matrix,
    "mmse_scalar": _m_mmse_scalar,
    "signal_tensor_sq": _m_signal_tensor_sq,
}


def _normalize_requests(names) -> list[MomentRequest]:
    reqs = []
    for item in names:
        if isinstance(item, MomentRequest):
            reqs.append(item)
        elif isinstance(item, str):
            reqs.append(MomentRequest(key=item, kind=item))
        else:
            raise TypeError(f"unsupported moment request {item!r}")
    for r in reqs:
        if r.kind not in _MOMENTS:
            raise ValueError(f"unknown moment kind {r.kind!r}")
    return reqs


def _chunk_cap(k: int, d: int) -> int:
    return max(256, min(1 << 16, (1 << 21) // max(1, k * d * d)))


def _quadrature_chunks(pre: _Precompute, nodes: int):
    """Yield (X, W, Z, TX, weights) chunks covering prior^N x GH-grid exactly."""
    model = pre.model
    n, d, p, l = model.N, model.D, model.p, model.interaction.L_cols
    gw = n**p * l if pre.t > 0.0 else 0
    gz = n * d
    gdim = gw + gz
    if gdim > MAX_QUAD_DIM:
        raise CapacityError(
            f"quadrature needs {gdim} Gaussian dimensions (> {MAX_QUAD_DIM}); use Monte Carlo"
        )
    if not 2 <= nodes <= MAX_QUAD_NODES:
        raise CapacityError(f"nodes-per-dimension must be in [2, {MAX_QUAD_NODES}], got {nodes}")
    x1, w1 = _gh_rule(nodes)
    total = nodes**gdim
    chunk = _chunk_cap(pre.k, d)
    x_weights = np.exp(pre.logw)
    for sigma in range(pre.k):
        x_sig = pre.configs[sigma]
        tx_sig = pre.tcfg[sigma][None, :]
        pw = x_weights[sigma]
        for start in range(0, total, chunk):
            idx = np.arange(start, min(start + chunk, total))
            m = idx.size
            coords = np.empty((m, gdim))
            wts = np.full(m, pw)
            rem = idx
            for g in range(gdim - 1, -1, -1):
                digit = rem % nodes
                rem = rem // nodes
                coords[:, g] = x1[digit]
                wts *= w1[digit]
            w = coords[:, :gw].reshape(m, -1) if gw else None
            z = coords[:, gw:].reshape(m, n, d)
            x = np.broadcast_to(x_sig, (m, n, d))
            tx = np.broadcast_to(tx_sig, (m, tx_sig.shape[1]))
            yield x, w, z, tx, wts


def _mc_chunks(pre: _Precompute, budget: int, seed: int):
    """Yield sampled-disorder chunks; the full set is drawn up front from one
    seeded stream so results do not depend on the chunk size."""
    if budget is None or budget < MIN_MC_BUDGET:
        raise CapacityError(f"Monte Carlo budget must be >= {MIN_MC_BUDGET}, got {budget}")
    model = pre.model
    n, d, p, l = model.N, model.D, model.p, model.interaction.L_cols
    rng = np.random.default_rng(seed)
    rows = rng.choice(model.prior.n_points, size=(budget, n), p=model.prior.weights)
    xs = model.prior.support[rows]
    ws = rng.standard_normal((budget, n**p * l)) if pre.t > 0.0 else None
    zs = rng.standard_normal((budget, n, d))
    chunk = _chunk_cap(pre.k, d)
    wts_all = np.full(budget, 1.0 / budget)
    for start in range(0, budget, chunk):
        sl = slice(start, min(start + chunk, budget))
        yield xs[sl], (ws[sl] if ws is not None else None), zs[sl], None, wts_all[sl]


def quenched_moments(
    model: ModelSpec,
    t: float,
    h,
    requests: Sequence[MomentRequest | str],
    *,
    mode: str = "quadrature",
    nodes: int = 12,
    budget: int | None = None,
    seed: int = 0,
    refine: bool = False,
) -> dict[str, QuenchedEstimate]:
    """Average the requested posterior moments over the disorder.

    Quadrature sums exactly over X in support^N and over a tensor
    Gauss-Hermite grid for (W, Z); Monte Carlo samples all three.  Chunked
    reduction order is fixed, so outputs are reproducible bit for bit.
    """
    h = _as_cone(h, model.D)
    reqs = _normalize_requests(requests)
    pre = _Precompute(model, t, h)

    if mode == "quadrature":
        chunks = _quadrature_chunks(pre, nodes)
    elif mode == "monte_carlo":
        chunks = _mc_chunks(pre, budget, seed)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    sums: dict[str, np.ndarray | float] = {r.key: 0.0 for r in reqs}
    sums_sq: dict[str, np.ndarray | float] = {r.key: 0.0 for r in reqs}
    n_points = 0
    for x, w, z, tx, wts in chunks:
        ctx = _ChunkContext(pre, x, w, z, tx=tx)
        n_points += wts.size
        for r in reqs:
            vals = _MOMENTS[r.kind](ctx, r.param)
            sums[r.key] = sums[r.key] + np.tensordot(wts, vals, axes=1)
            if mode == "monte_carlo":
                sums_sq[r.key] = sums_sq[r.key] + np.tensordot(wts, vals**2, axes=1)

    out = {}
    deltas = {}
    if refine and mode == "quadrature" and nodes >= 4:
        half = quenched_moments(
            model, t, h, reqs, mode="quadrature", nodes=nodes // 2, seed=seed, refine=False
        )
        deltas = {r.key: np.abs(sums[r.key] - half[r.key].value) for r in reqs}
    for r in reqs:
        value = sums[r.key]
        if mode == "monte_carlo":
            var = np.clip(sums_sq[r.key] - value**2, 0.0, None)
            se = np.sqrt(var / max(n_points - 1, 1))
        else:
            se = np.zeros_like(np.asarray(value)) if np.ndim(value) else 0.0
        out[r.key] = QuenchedEstimate(
            value=value,
            std_error=se,
            n_samples=n_points,
            method=mode,
            refine_delta=deltas.get(r.key),
        )
    return out


def quenched(
    model: ModelSpec,
    t: float,
    h,
    estimator,
    *,
    mode: str = "quadrature",
    budget: int | None = None,
    seed: int = 0,
    nodes: int = 12,
    refine: bool = False,
) -> QuenchedEstimate:
    """Disorder average of a single estimator.

    `estimator` may be the name of a built-in moment (vectorized fast path),
    a MomentRequest, or an arbitrary callable GibbsSummary -> value, which
    falls back to a per-sample loop (fine for small grids and tests, slow on
    large quadrature grids).
    """
    if isinstance(estimator, (str, MomentRequest)):
        req = estimator if isinstance(estimator, MomentRequest) else MomentRequest(estimator, estimator)
        return quenched_moments(
            model, t, h, [req], mode=mode, nodes=nodes, budget=budget, seed=seed, refine=refine
        )[req.key]
    if not callable(estimator):
        raise TypeError("estimator must be a moment name or a callable on GibbsSummary")

    h = _as_cone(h, model.D)
    pre = _Precompute(model, t, h)
    chunks = (
        _quadrature_chunks(pre, nodes) if mode == "quadrature" else _mc_chunks(pre, budget, seed)
    )
    total = 0.0
    total_sq = 0.0
    n_points = 0
    for x, w, z, _, wts in chunks:
        for i in range(wts.size):
            d = DisorderSample(
                X=np.array(x[i]),
                W=(w[i].reshape(model.N**model.p, -1) if w is not None else np.zeros(
                    (model.N**model.p, model.interaction.L_cols))),
                Z=np.array(z[i]),
                weight=float(wts[i]),
            )
            val = np.asarray(estimator(gibbs_exact(model, t, h, d)), dtype=float)
            total = total + wts[i] * val
            if mode == "monte_carlo":
                total_sq = total_sq + wts[i] * val**2
            n_points += 1
    if mode == "monte_carlo":
        var = np.clip(total_sq - total**2, 0.0, None)
        se = np.sqrt(var / max(n_points - 1, 1))
    else:
        se = np.zeros_like(np.asarray(total)) if np.ndim(total) else 0.0
    value = float(total) if np.ndim(total) == 0 else total
    return QuenchedEstimate(value=value, std_error=se, n_samples=n_points, method=mode)


def free_energy(model: ModelSpec, t: float, h, **kw) -> QuenchedEstimate:
    """Quenched free energy F-bar_N(t, h)."""
    return quenched(model, t, h, "f", **kw)


def fbar_grad_h_fd(model: ModelSpec, t: float, h, step: float = 1e-4, **kw) -> np.ndarray:
    """Central-difference h-gradient of the quenched free energy.

    Steps along the orthogonal basis of S^D; requires h +- step * e to stay
    PSD, i.e. an interior h for off-axis directions.
    """
    hv = as_sym_values(_as_cone(h, model.D))
    grad = np.zeros_like(hv)
    for e in basis(model.D):
        up = free_energy(model, t, hv + step * e.values, **kw).value
        dn = free_energy(model, t, hv - step * e.values, **kw).value
        grad += ((up - dn) / (2.0 * step) / inner(e.values, e.values)) * e.values
    return grad


def fbar_dt_fd(model: ModelSpec, t: float, h, step: float = 1e-4, **kw) -> float:
    """Central-difference t-derivative of the quenched free energy (one-sided at t < step)."""
    if t >= step:
        up = free_energy(model, t + step, h, **kw).value
        dn = free_energy(model, t - step, h, **kw).value
        return (up - dn) / (2.0 * step)
    up = free_energy(model, t + step, h, **kw).value
    at = free_energy(model, t, h, **kw).value
    return (up - at) / step


def overlap_statistics(
    model: ModelSpec,
    t: float,
    h,
    center=None,
    *,
    mode: str = "quadrature",
    budget: int | None = None,
    seed: int = 0,
    nodes: int = 12,
) -> dict[str, QuenchedEstimate]:
    """Quenched overlap bundle: E<Q>, E<R>, and absolute deviations.

    Returns E<Q>, E<R>, E<|Q - center|> (when a center is given) and
    E<|Q - E<Q>|>, the latter via a second pass centered at the first-pass
    mean.  All entries derive from exact per-disorder posteriors.
    """
    kw = dict(mode=mode, nodes=nodes, budget=budget, seed=seed)
    first = quenched_moments(model, t, h, ["overlap_mean", "replica_mean"], **kw)
    reqs = [MomentRequest("dev_from_mean", "overlap_abs_dev", first["overlap_mean"].value)]
    if center is not None:
        reqs.append(MomentRequest("dev_from_center", "overlap_abs_dev", np.asarray(center, dtype=float)))
    second = quenched_moments(model, t, h, reqs, **kw)
    out = {
        "overlap_mean": first["overlap_mean"],
        "replica_mean": first["replica_mean"],
        "dev_from_mean": second["dev_from_mean"],
    }
    if center is not None:
        out["dev_from_center"] = second["dev_from_center"]
    return out


def mmse_matrix(model: ModelSpec, t: float, h, **kw) -> QuenchedEstimate:
    """(1/N) E[(X - <x>)^T (X - <x>)], the matrix MMSE."""
    return quenched(model, t, h, "mmse_matrix", **kw)


def mmse_scalar(model: ModelSpec, t: float, h, **kw) -> QuenchedEstimate:
    """(1/N^p) E|X^(x)p A - <x^(x)p A>|^2, the tensor MMSE."""
    return quenched(model, t, h, "mmse_scalar", **kw)


@dataclass(frozen=True, eq=False)
class NishimoriPair:
    """One exchangeability check: a Gibbs moment with the signal in one slot
    against the same moment with the signal replaced by a fresh replica."""

    name: str
    signal_value: float | np.ndarray
    replica_value: float | np.ndarray

    @property
    def abs_diff(self) -> float:
        return float(np.max(np.abs(np.asarray(self.signal_value) - np.asarray(self.replica_value))))


def nishimori_suite(
    model: ModelSpec,
    t: float,
    h,
    *,
    mode: str = "quadrature",
    nodes: int = 12,
    budget: int | None = None,
    seed: int = 0,
) -> list[NishimoriPair]:
    """The shipped signal-vs-replica exchangeability suite.

    Every pair is an instance of E<g(x, X)> = E<g(x, x')> (extra replicas
    integrate out into posterior means):

      * overlap entries:        E<Q>        vs  E<R>
      * squared overlap:        E<|Q|^2>    vs  E<|R|^2>
      * overlap-replica cross:  E<Q . R>    vs  E<R'' . R>   (signal -> third replica)
      * overlap-self cross:     E<Q . S>    vs  E<R . S>,  S = x^T x / N
    """
    res = quenched_moments(
        model,
        t,
        h,
        [
            "overlap_mean",
            "replica_mean",
            "overlap_sq",
            "replica_sq",
            "q_dot_r",
            "r3_dot_r",
            "q_dot_self",
            "r_dot_self",
        ],
        mode=mode,
        nodes=nodes,
        budget=budget,
        seed=seed,
    )
    return [
        NishimoriPair("overlap_entries", res["overlap_mean"].value, res["replica_mean"].value),
        NishimoriPair("overlap_sq", res["overlap_sq"].value, res["replica_sq"].value),
        NishimoriPair("overlap_replica_cross", res["q_dot_r"].value, res["r3_dot_r"].value),
        NishimoriPair("overlap_self_cross", res["q_dot_self"].value, res["r_dot_self"].value),
    ]


class PsiOracle:
    """The initial condition: single-row quenched free energy of the linear
    channel, psi(h) = F-bar_1(0, h), with its exact gradient E[<x>^T <x>].

    Dedicated lean path (N = 1, t = 0 only): the Gaussian integral is over
    the D coordinates of one noise row, so a nodes^D tensor grid is cheap and
    every evaluation is deterministic.  Values and gradients are cached by
    the exact bytes of h, which makes repeated solver queries free.
    """

    def __init__(self, prior: PriorSpec, nodes: int = 64):
        if prior.D > 6:
            raise CapacityError("psi quadrature supports D <= 6 Gaussian dimensions")
        if nodes < 2:
            raise ValueError("nodes must be >= 2")
        self.prior = prior
        self.nodes = nodes
        d = prior.D
        x1, w1 = _gh_rule(nodes)
        grids = np.meshgrid(*([x1] * d), indexing="ij")
        self._z = np.stack([g.ravel() for g in grids], axis=1)  # (M, D)
        wgrids = np.meshgrid(*([w1] * d), indexing="ij")
        self._zw = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)  # (M,)
        self._logw = np.log(prior.weights)
        self._xtx = np.einsum("sd,se->sde", prior.support, prior.support)  # (S, D, D)
        self._cache: dict[bytes, tuple[float, np.ndarray]] = {}

    @property
    def D(self) -> int:
        return self.prior.D

    @property
    def lipschitz_bound(self) -> float:
        """|grad psi| <= D: every entry of <x>^T <x> lies in [-1, 1]."""
        return float(self.D)

    def _normalize(self, h) -> np.ndarray:
        if isinstance(h, ConePoint):
            return h.values
        arr = np.asarray(h, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        if arr.shape != (self.D, self.D):
            raise ValueError(f"h has shape {arr.shape}, expected ({self.D}, {self.D})")
        return 0.5 * (arr + arr.T)

    def _value_and_grad(self, hv: np.ndarray) -> tuple[float, np.ndarray]:
        key = hv.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        w2, v = np.linalg.eigh(2.0 * hv)
        if w2[0] < -1e-9 * max(1.0, abs(w2[-1])):
            raise DomainError(f"h is not PSD (eigenvalue {w2[0]:.3e})")
        w2 = np.clip(w2, 0.0, None)
        s2h = (v * np.sqrt(w2)) @ v.T
        sup = self.prior.support  # (S, D)
        s = sup.shape[0]
        m = self._z.shape[0]
        b = sup @ s2h  # (S, D)
        hxx = np.einsum("de,sde->s", hv, self._xtx)  # (S,)
        # all signal branches at once: ybar = b_sigma + z over (sigma, node)
        ybar = (b[:, None, :] + self._z[None, :, :]).reshape(s * m, self.D)
        logits = b @ ybar.T - hxx[:, None] + self._logw[:, None]  # (S, S*M)
        top = logits.max(axis=0)
        logz = top + np.log(np.exp(logits - top[None, :]).sum(axis=0))
        p = np.exp(logits - logz[None, :])
        mx = p.T @ sup  # (S*M, D) posterior means
        pw = (self.prior.weights[:, None] * self._zw[None, :]).ravel()  # (S*M,)
        value = float(pw @ logz)
        # The gradient must be the exact derivative of the quadrature value,
        # not the Gaussian-integration-by-parts moment E[<x>^T <x>] (the two
        # differ by the quadrature error, which stalls the conjugate solvers):
        # per node, grad F_1 equals the h-gradient observable exactly.
        if w2[0] > 2e-8:
            roots = np.sqrt(0.5 * w2)  # eigenvalues of sqrt(h)
            denom = roots[:, None] + roots[None, :]
            xp = np.repeat(sup, m, axis=0)  # signal row per point
            zp = np.tile(self._z, (s, 1))  # noise row per point
            mz = np.einsum("pd,pe->pde", mx, zp)
            mz = 0.5 * (mz + np.swapaxes(mz, -1, -2))
            dsq = v @ ((v.T @ mz @ v) / denom) @ v.T
            ms = np.einsum("pd,pe->pde", mx, xp)
            ms = 0.5 * (ms + np.swapaxes(ms, -1, -2))
            xtx_mean = np.einsum("sp,sde->pde", p, self._xtx)
            per_point = np.sqrt(2.0) * dsq + 2.0 * ms - xtx_mean
            grad = np.einsum("p,pde->de", pw, per_point)
        else:
            # at the cone boundary the square-root derivative is singular;
            # fall back to the moment form (exact there in the limit)
            grad = (mx * pw[:, None]).T @ mx
        result = (value, 0.5 * (grad + grad.T))
        self._cache[key] = result
        return result

    def value(self, h) -> float:
        return self._value_and_grad(self._normalize(h))[0]

    def grad(self, h) -> np.ndarray:
        """grad psi(h) = E[<x>^T <x>] at N = 1; PSD for every h in the cone."""
        return self._value_and_grad(self._normalize(h))[1]

    def hess(self, h, step: float = 1e-5) -> np.ndarray:
        """Second-derivative bilinear form of psi on the orthogonal basis of
        S^D, B[i, j] = inner(e_i, D^2 psi [e_j]), by central differences of
        the exact gradient."""
        hv = self._normalize(h)
        bas = basis(self.D)
        nb = len(bas)
        hs = np.zeros((nb, nb))
        for j, e in enumerate(bas):
            gu = self.grad(hv + step * e.values)
            gd = self.grad(hv - step * e.values)
            dg = (gu - gd) / (2.0 * step)
            for i, f in enumerate(bas):
                hs[i, j] = inner(f.values, dg)
        return 0.5 * (hs + hs.T)

    def __call__(self, h) -> float:
        return self.value(h)


def psi(prior: PriorSpec, h, nodes: int = 64) -> float:
    """psi(h) = F-bar_1(0, h) by Gauss-Hermite quadrature over one noise row."""
    return PsiOracle(prior, nodes).value(h)


def psi_grad(prior: PriorSpec, h, nodes: int = 64) -> np.ndarray:
    """grad psi(h) = E[<x>^T <x>] at N = 1 (exact derivative identity)."""
    return PsiOracle(prior, nodes).grad(h)


def psi_hess(prior: PriorSpec, h, nodes: int = 64, step: float = 1e-5) -> np.ndarray:
    """Hessian of psi in orthogonal-basis coordinates via central differences."""
    return PsiOracle(prior, nodes).hess(h, step=step)
