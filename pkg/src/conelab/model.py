"""The finite-N tensor inference model with exact posterior enumeration.

An instance couples a finite-support prior on signal rows (entries in
[-1, 1], rows i.i.d.) with a tensor interaction.  The observation channels
are

    Y    = sqrt(2t / N^(p-1)) X^(x)p A + W        (tensor channel)
    Ybar = X sqrt(2h) + Z                          (linear channel)

and the random Hamiltonian evaluated at a candidate configuration x is

    H_N(t, h, x) = sqrt(2t/N^(p-1)) (x^(x)p A) . Y - (t/N^(p-1)) |x^(x)p A|^2
                   + sqrt(2h) . (x^T Ybar) - h . (x^T x).

Because the prior support is finite, the Gibbs posterior is enumerated
exactly per disorder draw; the only approximation anywhere downstream is
the disorder average.  Values are immutable once constructed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Callable

import numpy as np

from .errors import CapacityError, DomainError
from .nonlinearity import InteractionSpec
from .symcone import ConePoint, SymMatrix, as_sym_values, dsqrt, inner, sqrt_psd, sym_part

ENUMERATION_CAP = 2**20

__all__ = [
    "PriorSpec",
    "ModelSpec",
    "DisorderSample",
    "GibbsSummary",
    "rademacher_prior",
    "product_rademacher_prior",
    "enumerate_configs",
    "tensor_power",
    "tensor_channel",
    "draw_disorder",
    "hamiltonian",
    "gibbs_exact",
    "l_observable",
]


@dataclass(frozen=True, eq=False)
class PriorSpec:
    """Finite-support distribution of one signal row, coordinates in [-1, 1]."""

    support: np.ndarray  # (S, D)
    weights: np.ndarray  # (S,)

    def __post_init__(self):
        sup = np.atleast_2d(np.asarray(self.support, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        if sup.ndim != 2:
            raise ValueError("support must be a list of row vectors")
        if w.shape != (sup.shape[0],):
            raise ValueError("weights must match the number of support points")
        if np.any(np.abs(sup) > 1.0 + 1e-15):
            raise ValueError("support coordinates must lie in [-1, +1]")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got {float(w.sum())!r}")
        sup = sup.copy()
        w = w.copy()
        sup.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "weights", w)

    @property
    def D(self) -> int:
        return self.support.shape[1]

    @property
    def n_points(self) -> int:
        return self.support.shape[0]

    def mean(self) -> np.ndarray:
        return self.weights @ self.support

    def second_moment(self) -> np.ndarray:
        """E[X_1^T X_1], a D x D PSD matrix."""
        return sym_part(np.einsum("s,sd,se->de", self.weights, self.support, self.support))


def rademacher_prior() -> PriorSpec:
    """Uniform +-1 scalar rows: the classical spiked-model prior (D = 1)."""
    return PriorSpec(support=np.array([[-1.0], [1.0]]), weights=np.array([0.5, 0.5]))


def product_rademacher_prior(d: int) -> PriorSpec:
    """Uniform product of +-1 coordinates in dimension d."""
    pts = np.array(np.meshgrid(*([[-1.0, 1.0]] * d), indexing="ij")).reshape(d, -1).T
    return PriorSpec(support=pts, weights=np.full(2**d, 2.0**-d))


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """A full inference instance: prior, interaction, and system size N."""

    prior: PriorSpec
    interaction: InteractionSpec
    N: int

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if self.interaction.D != self.prior.D:
            raise ValueError(
                f"interaction dimension {self.interaction.D} != prior dimension {self.prior.D}"
            )

    @property
    def D(self) -> int:
        return self.prior.D

    @property
    def p(self) -> int:
        return self.interaction.p

    @property
    def n_configs(self) -> int:
        return self.prior.n_points**self.N


@dataclass(frozen=True, eq=False)
class DisorderSample:
    """One draw of the quenched randomness (X, W, Z).

    In quadrature mode a sample is a node of the tensor Gauss-Hermite grid
    and carries its product weight; node weights over a full grid sum to 1.
    """

    X: np.ndarray  # (N, D), rows from the prior support
    W: np.ndarray  # (N^p, L) standard Gaussian
    Z: np.ndarray  # (N, D) standard Gaussian
    weight: float = 1.0


def tensor_power(x: np.ndarray, p: int) -> np.ndarray:
    """Iterated Kronecker power x^(x)p of an N x D matrix: N^p x D^p."""
    return reduce(np.kron, [x] * p)


def tensor_channel(x: np.ndarray, interaction: InteractionSpec) -> np.ndarray:
    """x^(x)p A, an N^p x L matrix."""
    return tensor_power(x, interaction.p) @ interaction.A


def enumerate_configs(model: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    """All configurations support^N with log prior weights.

    Returns (configs, log_weights) of shapes (K, N, D) and (K,), K = S^N.
    Raises CapacityError when K exceeds the enumeration bound.
    """
    s = model.prior.n_points
    k = model.n_configs
    if k > ENUMERATION_CAP:
        raise CapacityError(
            f"enumeration of {s}^{model.N} = {k} configurations exceeds the cap "
            f"{ENUMERATION_CAP}; use Monte Carlo disorder mode at smaller N"
        )
    idx = np.stack(np.unravel_index(np.arange(k), (s,) * model.N), axis=1)  # (K, N)
    configs = model.prior.support[idx]  # (K, N, D)
    logw = np.log(model.prior.weights)[idx].sum(axis=1)  # (K,)
    return configs, logw


def draw_disorder(model: ModelSpec, rng: np.random.Generator) -> DisorderSample:
    """Sample (X, W, Z) from their product law."""
    n, d, p, l = model.N, model.D, model.p, model.interaction.L_cols
    rows = rng.choice(model.prior.n_points, size=n, p=model.prior.weights)
    return DisorderSample(
        X=model.prior.support[rows].copy(),
        W=rng.standard_normal((n**p, l)),
        Z=rng.standard_normal((n, d)),
    )


def _channel_scale(t: float, n: int, p: int) -> float:
    return np.sqrt(2.0 * t / n ** (p - 1))


def assemble_y(model: ModelSpec, t: float, d: DisorderSample) -> np.ndarray:
    """Tensor-channel observation Y for a disorder draw."""
    return _channel_scale(t, model.N, model.p) * tensor_channel(d.X, model.interaction) + d.W


def assemble_ybar(model: ModelSpec, h: ConePoint, d: DisorderSample) -> np.ndarray:
    """Linear-channel observation Ybar for a disorder draw."""
    return d.X @ sqrt_psd(2.0 * as_sym_values(h)).values + d.Z


def hamiltonian(model: ModelSpec, t: float, h, x: np.ndarray, d: DisorderSample) -> float:
    """Evaluate H_N(t, h, x) for one configuration and one disorder draw."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    h = h if isinstance(h, ConePoint) else ConePoint(SymMatrix(as_sym_values(h)))
    x = np.asarray(x, dtype=float)
    if x.shape != (model.N, model.D):
        raise ValueError(f"x has shape {x.shape}, expected ({model.N}, {model.D})")
    y = assemble_y(model, t, d)
    ybar = assemble_ybar(model, h, d)
    s2h = sqrt_psd(2.0 * h.values).values
    tx = tensor_channel(x, model.interaction)
    scale = _channel_scale(t, model.N, model.p)
    return float(
        scale * np.sum(tx * y)
        - (t / model.N ** (model.p - 1)) * np.sum(tx * tx)
        + np.sum(s2h * (x.T @ ybar))
        - np.sum(h.values * (x.T @ x))
    )


@dataclass(frozen=True, eq=False)
class GibbsSummary:
    """Exact posterior statistics for one disorder draw.

    Carries the full normalized posterior over the enumerated configurations,
    so any Gibbs moment can be recovered via `expectation`.  `l_mean` is only
    set when h is strictly interior (the square-root derivative in the
    observable blows up at the cone boundary).
    """

    f_n: float
    mean_x: np.ndarray  # (N, D)
    mean_tensor: np.ndarray  # (N^p, L)
    overlap_mean: np.ndarray  # (D, D); symmetric only after disorder average
    xtx_mean: np.ndarray  # (D, D) posterior mean of x^T x
    l_mean: np.ndarray | None  # (D, D) or None at boundary h
    weights: np.ndarray  # (K,) posterior probabilities
    configs: np.ndarray  # (K, N, D)
    sample: DisorderSample
    N: int

    def expectation(self, fn: Callable[[np.ndarray], float | np.ndarray]):
        """Posterior mean of fn(x) over the enumerated configurations."""
        vals = [np.asarray(fn(cfg), dtype=float) for cfg in self.configs]
        return np.tensordot(self.weights, np.stack(vals), axes=1)

    def overlap_abs_dev(self, center) -> float:
        """Posterior mean of |Q - center| in Frobenius norm, Q = X^T x / N."""
        c = np.asarray(center, dtype=float).reshape(self.sample.X.shape[1], -1)
        q = np.einsum("nd,kne->kde", self.sample.X, self.configs) / self.N
        return float(self.weights @ np.sqrt(((q - c) ** 2).sum(axis=(1, 2))))


def gibbs_exact(model: ModelSpec, t: float, h, d: DisorderSample) -> GibbsSummary:
    """Enumerate the posterior for one disorder draw and report its moments.

    The log-partition is evaluated by a stable log-sum-exp; F_N is its value
    divided by N.  All moments are exact for this draw.
    """
    h = h if isinstance(h, ConePoint) else ConePoint(SymMatrix(as_sym_values(h)))
    configs, logw = enumerate_configs(model)
    k = configs.shape[0]
    n, p = model.N, model.p
    scale = _channel_scale(t, n, p)
    s2h = sqrt_psd(2.0 * h.values).values

    y = assemble_y(model, t, d)
    ybar = assemble_ybar(model, h, d)

    flat = configs.reshape(k, n * model.D)
    tcfg = np.stack([tensor_channel(c, model.interaction).ravel() for c in configs])  # (K, N^p L)
    xtx = np.einsum("knd,kne->kde", configs, configs)  # (K, D, D)

    energies = (
        scale * (tcfg @ y.ravel())
        - (t / n ** (p - 1)) * np.einsum("kq,kq->k", tcfg, tcfg)
        + (configs @ s2h).reshape(k, -1) @ ybar.ravel()
        - np.einsum("de,kde->k", h.values, xtx)
    )
    logits = energies + logw
    top = logits.max()
    logz = top + np.log(np.exp(logits - top).sum())
    weights = np.exp(logits - logz)

    mean_x = np.tensordot(weights, configs, axes=1)
    mean_tensor = (weights @ tcfg).reshape(n**p, model.interaction.L_cols)
    overlap_mean = d.X.T @ mean_x / n
    xtx_mean = np.tensordot(weights, xtx, axes=1)
    l_mean = None
    if h.interior_margin > 1e-10:
        # dsqrt is linear in its direction, so posterior means pass through it
        l_mean = (
            np.sqrt(2.0) * dsqrt(h, sym_part(mean_x.T @ d.Z)).values
            + 2.0 * sym_part(mean_x.T @ d.X)
            - xtx_mean
        ) / n

    return GibbsSummary(
        f_n=float(logz) / n,
        mean_x=mean_x,
        mean_tensor=mean_tensor,
        overlap_mean=overlap_mean,
        xtx_mean=xtx_mean,
        l_mean=l_mean,
        weights=weights,
        configs=configs,
        sample=d,
        N=n,
    )


def l_observable(model: ModelSpec, t: float, h, d: DisorderSample, x: np.ndarray) -> np.ndarray:
    """The h-gradient observable of one configuration, a D x D symmetric matrix.

    For every symmetric direction a,

        inner(a, L) = (1/N) (sqrt(2) dsqrt(h, a) . x^T Z
                             + 2 a . x^T X - a . x^T x),

    which is d/de H_N(t, h + e a, x) / N at e = 0.  Requires strictly
    interior h; `t` does not enter (the tensor channel carries no h) and is
    accepted only so the signature matches the Hamiltonian family.
    """
    h = h if isinstance(h, ConePoint) else ConePoint(SymMatrix(as_sym_values(h)))
    if h.interior_margin <= 1e-10:
        raise DomainError("the h-gradient observable requires strictly interior h")
    x = np.asarray(x, dtype=float)
    return (
        np.sqrt(2.0) * dsqrt(h, sym_part(x.T @ d.Z)).values
        + 2.0 * sym_part(x.T @ d.X)
        - x.T @ x
    ) / model.N
