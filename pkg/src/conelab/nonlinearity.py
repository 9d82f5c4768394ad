"""The Hamilton-Jacobi nonlinearity (AA^T) . q^(x)p and its probes.

The interaction matrix A of shape D^p x L defines the degree-p polynomial
H(q) = sum over multi-indices d, d' of (AA^T)_{d d'} prod_i q_{d_i d'_i}.
This module evaluates H and its gradient exactly via multi-index
contractions (D^p <= 256), and provides the sampling-based checks the
variational and characteristics layers rely on: cone monotonicity of the
gradient, midpoint convexity, and a sampled Lipschitz estimate of
h |-> grad H(grad psi(h)).

Pure functions over immutable specs; sampling ops take explicit seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .symcone import as_sym_values, inner, norm, project_psd, random_sym, sym_part

MAX_TENSOR_DIM = 256

__all__ = [
    "InteractionSpec",
    "LipschitzEstimate",
    "MonotoneReport",
    "ConvexityReport",
    "h_value",
    "h_grad",
    "cone_monotone_check",
    "convexity_probe",
    "estimate_lipschitz",
]

_LETTERS = "abcdefgh"


@dataclass(frozen=True, eq=False)
class InteractionSpec:
    """Immutable tensor-interaction data: order p, matrix A, and its Gram AA^T.

    The Gram matrix is always recomputed from A at construction; serialized
    copies are never trusted.
    """

    D: int
    p: int
    A: np.ndarray
    L_cols: int = field(init=False)
    gram: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.D < 1 or self.p < 1:
            raise ValueError("D and p must be positive integers")
        dp = self.D**self.p
        if dp > MAX_TENSOR_DIM:
            raise ValueError(f"D^p = {dp} exceeds the desk-scale bound {MAX_TENSOR_DIM}")
        a = np.asarray(self.A, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if a.ndim != 2 or a.shape[0] != dp:
            raise ValueError(f"A must be D^p x L = {dp} x L, got shape {a.shape}")
        a = a.copy()
        a.flags.writeable = False
        gram = a @ a.T
        gram = 0.5 * (gram + gram.T)
        gram.flags.writeable = False
        object.__setattr__(self, "A", a)
        object.__setattr__(self, "L_cols", a.shape[1])
        object.__setattr__(self, "gram", gram)

    @property
    def gram_tensor(self) -> np.ndarray:
        """gram reshaped to (D,)*2p with axes (d_1..d_p, d'_1..d'_p)."""
        return self.gram.reshape((self.D,) * (2 * self.p))


@dataclass(frozen=True, eq=False)
class LipschitzEstimate:
    """Sampled lower estimate of the Lipschitz norm of grad H o grad psi.

    `l_hat` is the maximum difference quotient over the sampled pairs within
    the PSD ball of radius `region_radius`; `pair_max` is the attaining pair.
    This is a lower estimate of the true (unbounded-domain) Lipschitz norm,
    restricted to the reported region.
    """

    l_hat: float
    samples: int
    region_radius: float
    pair_max: tuple[np.ndarray, np.ndarray]


@dataclass(frozen=True)
class MonotoneReport:
    samples: int
    failures: int
    min_eigenvalue: float
    tolerance: float = 1e-10

    @property
    def passed(self) -> bool:
        return self.failures == 0


@dataclass(frozen=True)
class ConvexityReport:
    samples: int
    violations: int
    max_violation: float
    tolerance: float = 1e-10

    @property
    def passed(self) -> bool:
        return self.violations == 0


def _check_dim(spec: InteractionSpec, q: np.ndarray):
    if q.shape != (spec.D, spec.D):
        raise ValueError(f"q has shape {q.shape}, expected ({spec.D}, {spec.D})")


def h_value(spec: InteractionSpec, q) -> float:
    """H(q) = (AA^T) . q^(x)p, contracted slot by slot over multi-indices."""
    qv = as_sym_values(q)
    _check_dim(spec, qv)
    p = spec.p
    subs = [_LETTERS[: 2 * p]] + [_LETTERS[k] + _LETTERS[p + k] for k in range(p)]
    return float(np.einsum(",".join(subs) + "->", spec.gram_tensor, *([qv] * p)))


def h_grad(spec: InteractionSpec, q) -> np.ndarray:
    """Symmetric representer of the directional derivative of H at q.

    For every symmetric a, inner(h_grad(q), a) equals d/de H(q + e a) at e=0:
    the raw per-slot contractions are summed and symmetrized.
    """
    qv = as_sym_values(q)
    _check_dim(spec, qv)
    p = spec.p
    gt = spec.gram_tensor
    total = np.zeros((spec.D, spec.D))
    for k in range(p):
        subs = [_LETTERS[: 2 * p]]
        operands = []
        for i in range(p):
            if i == k:
                continue
            subs.append(_LETTERS[i] + _LETTERS[p + i])
            operands.append(qv)
        out = _LETTERS[k] + _LETTERS[p + k]
        total += np.einsum(",".join(subs) + "->" + out, gt, *operands)
    return sym_part(total)


def cone_monotone_check(spec: InteractionSpec, samples: int, seed: int) -> MonotoneReport:
    """Sample Wishart PSD points q and check grad H(q) is PSD.

    A failure (eigenvalue below -1e-10) contradicts the monotonicity of H on
    the cone and indicates a build-stopping bug; the report only counts.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    tol = 1e-10
    failures = 0
    min_eig = np.inf
    for _ in range(samples):
        g = rng.standard_normal((spec.D, spec.D))
        q = g @ g.T
        lo = float(np.linalg.eigvalsh(h_grad(spec, sym_part(q)))[0])
        min_eig = min(min_eig, lo)
        if lo < -tol:
            failures += 1
    return MonotoneReport(samples=samples, failures=failures, min_eigenvalue=min_eig, tolerance=tol)


def convexity_probe(spec: InteractionSpec, samples: int, seed: int) -> ConvexityReport:
    """Midpoint-convexity test of H on random PSD pairs.

    Gates whether the Hopf-Lax representation is enabled for this spec; the
    outcome is recorded, never assumed.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    tol = 1e-10
    violations = 0
    worst = 0.0
    for _ in range(samples):
        g1 = rng.standard_normal((spec.D, spec.D))
        g2 = rng.standard_normal((spec.D, spec.D))
        q1 = sym_part(g1 @ g1.T)
        q2 = sym_part(g2 @ g2.T)
        gap = h_value(spec, 0.5 * (q1 + q2)) - 0.5 * (h_value(spec, q1) + h_value(spec, q2))
        worst = max(worst, gap)
        if gap > tol:
            violations += 1
    return ConvexityReport(samples=samples, violations=violations, max_violation=worst, tolerance=tol)


def estimate_lipschitz(
    spec: InteractionSpec,
    psi_grad: Callable[[np.ndarray], np.ndarray],
    radius: float,
    samples: int,
    seed: int,
) -> LipschitzEstimate:
    """Max sampled difference quotient of h |-> grad H(grad psi(h)).

    Pairs are drawn in the PSD ball of the given radius; every other pair is
    near-coincident (separation in [1e-4, 1e-2]) to probe the local slope.
    The sample sequence is prefix-stable in `samples`, so doubling the count
    never decreases the estimate.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if samples < 2:
        raise ValueError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    d = spec.D

    def draw_in_ball():
        g = rng.standard_normal((d, d))
        w = sym_part(g @ g.T)
        r = rng.uniform(0.0, radius)
        n = norm(w)
        return (r / n) * w if n > 0 else w

    phi = lambda hm: h_grad(spec, psi_grad(hm))
    l_hat = 0.0
    best = None
    for i in range(samples):
        h1 = draw_in_ball()
        if i % 2 == 0:
            h2 = draw_in_ball()
        else:
            step = rng.uniform(1e-4, 1e-2)
            direction = random_sym(rng, d)
            n = norm(direction)
            h2 = project_psd(h1 + (step / n) * direction).values if n > 0 else h1
        dist = norm(h1 - h2)
        if dist < 1e-14:
            continue
        quot = norm(phi(h1) - phi(h2)) / dist
        if quot > l_hat:
            l_hat = quot
            best = (h1, h2)
    if best is None:
        best = (np.zeros((d, d)), np.zeros((d, d)))
    return LipschitzEstimate(l_hat=l_hat, samples=samples, region_radius=radius, pair_max=best)
