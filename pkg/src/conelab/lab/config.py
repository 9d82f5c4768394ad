"""Experiment configuration: TOML loading, validation, and defaults.

A config names an inference instance (prior support/weights plus the
interaction matrix) and one study with its grid, budgets, seeds, and
tolerances.  Validation happens entirely at load time, before any
computation; in particular a serialized `gram` entry is never trusted but
recomputed from A and compared.  Every default that a study relies on is
resolved here so the emitted config echo is complete.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..model import ModelSpec, PriorSpec, product_rademacher_prior, rademacher_prior
from ..nonlinearity import InteractionSpec

STUDIES = ("identities", "convergence", "concentration", "mmse", "short_time", "variational_grid")

#: Tolerances every study names explicitly; echoed into all outputs.
DEFAULT_TOLERANCES = {
    "gibbs_grad_identity": 1e-6,
    "dt_formula_rel": 1e-4,
    "grad_h_formula_rel": 1e-4,
    "nishimori_abs": 1e-8,
    "mmse_matrix_identity": 1e-4,
    "mmse_scalar_identity": 1e-4,
    "trivial_point": 1e-12,
    "t0_equals_psi": 1e-8,
    "midpoint_convexity": 1e-8,
    "hopf_t0_psi": 1e-6,
    "hopf_lax_agreement": 2e-5,
    "hj_residual": 1e-3,
    "maximizer_residual": 1e-3,
    "u_vs_hopf": 1e-4,
    "u_grad_vs_psi_grad": 1e-4,
    "char_residual": 1e-10,
    "screen_quotient": 1e-3,
}


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Fully resolved study configuration (instance + grids + budgets)."""

    study: str
    instance_name: str
    prior: PriorSpec
    interaction: InteractionSpec
    n_values: tuple[int, ...]
    t_values: tuple[float, ...]
    h_values: tuple  # tuple of D x D arrays
    mode: str
    budget: int
    nodes: int
    psi_nodes: int
    starts: int
    seed: int
    fd_step: float
    fd_step_disorder: float
    n_disorder_samples: int
    t_fractions: tuple[float, ...]
    lipschitz_samples: int
    lipschitz_radius: float
    tolerances: dict
    out_dir: str
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def D(self) -> int:
        return self.prior.D

    def model(self, n: int) -> ModelSpec:
        return ModelSpec(prior=self.prior, interaction=self.interaction, N=n)

    def echo(self) -> dict:
        """Deterministic flat echo of every resolved setting."""
        return {
            "study": self.study,
            "instance": self.instance_name,
            "D": self.D,
            "p": self.interaction.p,
            "L": self.interaction.L_cols,
            "prior_support": self.prior.support.tolist(),
            "prior_weights": self.prior.weights.tolist(),
            "A": self.interaction.A.tolist(),
            "n_values": list(self.n_values),
            "t_values": list(self.t_values),
            "h_values": [np.asarray(h).tolist() for h in self.h_values],
            "mode": self.mode,
            "budget": self.budget,
            "nodes": self.nodes,
            "psi_nodes": self.psi_nodes,
            "starts": self.starts,
            "seed": self.seed,
            "fd_step": self.fd_step,
            "fd_step_disorder": self.fd_step_disorder,
            "n_disorder_samples": self.n_disorder_samples,
            "t_fractions": list(self.t_fractions),
            "lipschitz_samples": self.lipschitz_samples,
            "lipschitz_radius": self.lipschitz_radius,
            "tolerances": dict(sorted(self.tolerances.items())),
        }


def reference_instance() -> tuple[str, PriorSpec, InteractionSpec]:
    """D=1, p=2, A=[1], Rademacher prior: the classical spiked model."""
    return "rademacher-d1-p2", rademacher_prior(), InteractionSpec(D=1, p=2, A=np.array([[1.0]]))


def d2_instance() -> tuple[str, PriorSpec, InteractionSpec]:
    """D=2, p=2, identity-flattened A, product-Rademacher prior."""
    a = np.eye(2).reshape(4, 1)
    return "product-rademacher-d2-p2", product_rademacher_prior(2), InteractionSpec(D=2, p=2, A=a)

_BUILTIN = {"reference-d1": reference_instance, "d2-identity": d2_instance}


def _default_h_values(d: int) -> tuple:
    if d == 1:
        return tuple(np.array([[0.1 * k]]) for k in range(1, 11))
    out = []
    for alpha in (0.2, 0.5, 1.0):
        for beta in (0.0, 0.1):
            m = alpha * np.eye(d)
            m[0, 1] = m[1, 0] = beta
            if np.linalg.eigvalsh(m)[0] > 0:
                out.append(m)
    return tuple(out)


def _parse_instance(table) -> tuple[str, PriorSpec, InteractionSpec]:
    if isinstance(table, str):
        if table not in _BUILTIN:
            raise ValueError(f"unknown builtin instance {table!r}; have {sorted(_BUILTIN)}")
        return _BUILTIN[table]()
    if "builtin" in table:
        return _parse_instance(table["builtin"])
    prior_tab = table.get("prior")
    inter_tab = table.get("interaction")
    if prior_tab is None or inter_tab is None:
        raise ValueError("instance table needs [instance.prior] and [instance.interaction]")
    prior = PriorSpec(
        support=np.asarray(prior_tab["support"], dtype=float),
        weights=np.asarray(prior_tab["weights"], dtype=float),
    )
    p = int(inter_tab["p"])
    a = np.asarray(inter_tab["A"], dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.shape[0] != prior.D**p:
        raise ValueError(
            f"A has {a.shape[0]} rows, expected D^p = {prior.D}^{p} = {prior.D ** p}"
        )
    interaction = InteractionSpec(D=prior.D, p=p, A=a)
    if "gram" in inter_tab:
        gram_file = np.asarray(inter_tab["gram"], dtype=float)
        if gram_file.shape != interaction.gram.shape or np.max(
            np.abs(gram_file - interaction.gram)
        ) > 1e-12:
            raise ValueError("serialized gram does not match A A^T; refusing corrupted config")
    return str(table.get("name", "custom")), prior, interaction


def _parse_h_values(raw_h, d: int) -> tuple:
    out = []
    for item in raw_h:
        if isinstance(item, (int, float)):
            if d != 1:
                raise ValueError("scalar h values are only valid for D = 1")
            out.append(np.array([[float(item)]]))
        else:
            m = np.asarray(item, dtype=float)
            if m.shape != (d, d):
                raise ValueError(f"h entry has shape {m.shape}, expected ({d}, {d})")
            if np.max(np.abs(m - m.T)) > 0:
                raise ValueError("h entries must be exactly symmetric")
            out.append(m)
    return tuple(out)


def build_config(data: dict, study: str | None = None) -> ExperimentConfig:
    """Resolve a raw config dict (parsed TOML) into an ExperimentConfig."""
    known = {"instance", "study", "tolerances"}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown top-level config keys: {sorted(unknown)}")
    name, prior, interaction = _parse_instance(data.get("instance", "reference-d1"))
    stab = dict(data.get("study", {}))
    kind = study or stab.pop("kind", None)
    if kind not in STUDIES:
        raise ValueError(f"study must be one of {STUDIES}, got {kind!r}")
    d = prior.D

    tol = dict(DEFAULT_TOLERANCES)
    tol.update({k: float(v) for k, v in data.get("tolerances", {}).items()})

    def pop(key, default):
        return stab.pop(key, default)

    cfg = ExperimentConfig(
        study=kind,
        instance_name=name,
        prior=prior,
        interaction=interaction,
        n_values=tuple(int(n) for n in pop("n_values", _default_n(kind))),
        t_values=tuple(float(t) for t in pop("t_values", (0.05, 0.1, 0.2, 0.4))),
        h_values=_parse_h_values(pop("h_values", None) or _default_h_values(d), d),
        mode=str(pop("mode", "quadrature")),
        budget=int(pop("budget", 20000)),
        nodes=int(pop("nodes", 12)),
        psi_nodes=int(pop("psi_nodes", 64 if d == 1 else 24)),
        starts=int(pop("starts", 8)),
        seed=int(pop("seed", 0)),
        fd_step=float(pop("fd_step", 1e-4)),
        fd_step_disorder=float(pop("fd_step_disorder", 1e-5)),
        n_disorder_samples=int(pop("n_disorder_samples", 20)),
        t_fractions=tuple(float(x) for x in pop("t_fractions", (0.1, 0.3, 0.5))),
        lipschitz_samples=int(pop("lipschitz_samples", 200)),
        lipschitz_radius=float(pop("lipschitz_radius", 2.0)),
        tolerances=tol,
        out_dir=str(pop("out", "out")),
        raw=data,
    )
    if stab:
        raise ValueError(f"unknown [study] keys: {sorted(stab)}")
    if cfg.mode not in ("quadrature", "monte_carlo"):
        raise ValueError(f"mode must be quadrature or monte_carlo, got {cfg.mode!r}")
    if cfg.mode == "monte_carlo" and cfg.budget < 100:
        raise ValueError("Monte Carlo budget must be >= 100")
    return cfg


def _default_n(kind: str) -> tuple[int, ...]:
    if kind == "identities":
        return (1, 2)
    if kind == "concentration":
        return tuple(range(2, 11))
    if kind in ("convergence", "mmse"):
        return (1, 2, 4, 8)
    return (1,)


def load_config(path: str | Path | None, study: str | None = None) -> ExperimentConfig:
    """Load and validate a TOML config; None falls back to built-in defaults."""
    if path is None:
        return build_config({}, study=study)
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    return build_config(data, study=study)
