"""Finite-state generators, reference measures, and the shifted bilinear form.

A chain couples a dense rate matrix Q (nonnegative off-diagonal entries,
nonpositive row sums, the defect acting as killing) with a strictly positive
weight vector mu. The induced form is

    form(beta; f, g) = <(beta*I - Q) f, g>_mu

evaluated densely through the matrix A = (beta*I - Q)^T M, M = diag(mu).
The dual generator, the adjoint of Q in the mu-weighted inner product, is
the explicit similarity M^{-1} Q^T M on a finite state space.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .defaults import MARKOV_TOL, STRUCTURAL_TOL

__all__ = [
    "Measure",
    "Generator",
    "Chain",
    "FormView",
    "ValidationReport",
    "weighted_inner",
    "dual_generator",
    "form_matrix",
    "eval_form",
    "form_view",
    "validate_assumption_a",
]


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


def _as_vector(x, n: int | None = None, name: str = "vector") -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {v.shape}")
    if n is not None and v.shape[0] != n:
        raise ValueError(f"{name} has length {v.shape[0]}, expected {n}")
    return v


def weighted_inner(weights: np.ndarray, f: np.ndarray, g: np.ndarray) -> float:
    """Inner product sum_x weights[x] f[x] g[x]."""
    return float(np.sum(weights * f * g))


@dataclass(frozen=True, eq=False)
class Measure:
    """Strictly positive reference weights, one per state.

    ``normalized`` marks a probability measure (weights sum to one); the
    flag is validated, not inferred.
    """

    weights: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        w = _as_vector(self.weights, name="measure weights")
        if w.size == 0:
            raise ValueError("measure needs at least one state")
        if np.any(w <= 0):
            raise ValueError("measure weights must be strictly positive")
        if self.normalized and abs(w.sum() - 1.0) > STRUCTURAL_TOL:
            raise ValueError("normalized measure must sum to 1 within 1e-12")
        object.__setattr__(self, "weights", _freeze(w))

    @classmethod
    def probability(cls, weights) -> "Measure":
        """Normalize arbitrary positive weights into a probability measure."""
        w = _as_vector(weights, name="measure weights")
        return cls(w / w.sum(), normalized=True)

    def __len__(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True, eq=False)
class Generator:
    """Dense rate matrix with nonnegative off-diagonal entries.

    Row sums must be nonpositive (sub-Markov; the defect is killing) unless
    ``require_submarkov=False``. Duals of chains whose measure is not
    subinvariant can carry positive row sums and remain useful diagnostic
    objects; user-facing chains always enforce the check.
    """

    matrix: np.ndarray
    require_submarkov: bool = True

    def __post_init__(self):
        q = np.asarray(self.matrix, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise ValueError(f"generator matrix must be square, got shape {q.shape}")
        off = q.copy()
        np.fill_diagonal(off, 0.0)
        if off.size and off.min() < -STRUCTURAL_TOL:
            raise ValueError(
                f"off-diagonal rates must be nonnegative (min {off.min():.3e})"
            )
        if self.require_submarkov:
            worst = q.sum(axis=1).max()
            if worst > STRUCTURAL_TOL:
                raise ValueError(
                    f"row sums must be nonpositive (max {worst:.3e})"
                )
        object.__setattr__(self, "matrix", _freeze(q))

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def killing_rates(self) -> np.ndarray:
        """Nonnegative defect -row sums (exit mass not routed to a state)."""
        return -self.matrix.sum(axis=1)


@dataclass(frozen=True, eq=False)
class Chain:
    """A generator together with its reference measure and optional labels."""

    generator: Generator
    measure: Measure
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.generator.size != len(self.measure):
            raise ValueError(
                f"generator size {self.generator.size} does not match "
                f"measure length {len(self.measure)}"
            )
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != self.generator.size:
                raise ValueError("label count does not match state count")
            object.__setattr__(self, "labels", labels)

    @property
    def n_states(self) -> int:
        return self.generator.size

    @property
    def q(self) -> np.ndarray:
        return self.generator.matrix

    @property
    def mu(self) -> np.ndarray:
        return self.measure.weights

    def state_labels(self) -> tuple[str, ...]:
        if self.labels is not None:
            return self.labels
        return tuple(str(i) for i in range(self.n_states))

    def is_reversible(self, tol: float = STRUCTURAL_TOL) -> bool:
        """Detailed balance: diag(mu) Q symmetric within tol (scaled)."""
        mq = self.mu[:, None] * self.q
        scale = max(1.0, np.abs(mq).max())
        return bool(np.abs(mq - mq.T).max() <= tol * scale)

    def is_conservative(self, tol: float = STRUCTURAL_TOL) -> bool:
        return bool(np.abs(self.q.sum(axis=1)).max() <= tol)

    def to_dict(self) -> dict:
        return {
            "states": list(self.state_labels()),
            "mu": self.mu.tolist(),
            "Q": self.q.tolist(),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, doc: dict) -> "Chain":
        mu = _as_vector(doc["mu"], name="mu")
        normalized = abs(mu.sum() - 1.0) <= STRUCTURAL_TOL
        labels = tuple(str(s) for s in doc["states"]) if "states" in doc else None
        return cls(
            generator=Generator(np.asarray(doc["Q"], dtype=float)),
            measure=Measure(mu, normalized=normalized),
            labels=labels,
        )

    @classmethod
    def from_json(cls, text: str) -> "Chain":
        return cls.from_dict(json.loads(text))


def dual_generator(chain: Chain) -> Generator:
    """Adjoint of the generator in the mu-weighted inner product.

    Returns M^{-1} Q^T M. Off-diagonal entries stay nonnegative; row sums
    can turn positive when mu is not subinvariant, so the sub-Markov check
    is skipped and left to validate_assumption_a.
    """
    mu = chain.mu
    dual = (chain.q.T * mu[None, :]) / mu[:, None]
    return Generator(dual, require_submarkov=False)


def form_matrix(chain: Chain, beta: float) -> np.ndarray:
    """Matrix A with form(beta; f, g) = f @ A @ g, A = (beta*I - Q)^T M."""
    shifted = beta * np.eye(chain.n_states) - chain.q
    return shifted.T * chain.mu[None, :]


def _symmetric_part_pencil(chain: Chain):
    """Symmetric part of the unshifted form matrix plus the mass matrix."""
    a0 = form_matrix(chain, 0.0)
    return (a0 + a0.T) / 2.0, np.diag(chain.mu), a0


def _beta0_estimate(chain: Chain) -> float:
    """Smallest shift making the symmetric part of the form nonnegative.

    Computed as max(0, -lambda_min) of the generalized symmetric
    eigenproblem sym(A0) v = lambda M v.
    """
    sym0, m, _ = _symmetric_part_pencil(chain)
    lam = scipy.linalg.eigh(sym0, m, eigvals_only=True)
    return float(max(0.0, -lam[0]))


def _sector_constant(chain: Chain, probe: float) -> float:
    """sup |form0(f,g)| / sqrt(form_probe(f,f) form_probe(g,g)), floored at 1.

    Valid for probe strictly above the lower-bound estimate, where the
    shifted symmetric part is positive definite; the supremum is the
    largest singular value of S^{-1/2} A0 S^{-1/2}.
    """
    sym0, m, a0 = _symmetric_part_pencil(chain)
    s = sym0 + probe * m
    lam, vec = scipy.linalg.eigh(s)
    if lam[0] <= 0:
        return float("inf")
    inv_root = (vec * (1.0 / np.sqrt(lam))[None, :]) @ vec.T
    sigma = np.linalg.norm(inv_root @ a0 @ inv_root, 2)
    return float(max(1.0, sigma))


@dataclass(frozen=True, eq=False)
class ValidationReport:
    """Numeric check of lower boundedness, sector bound, and sign structure."""

    beta0_estimate: float
    sector_constant: float
    primal_markov_ok: bool
    dual_markov_ok: bool
    violations: tuple[tuple[str, float], ...]

    def to_dict(self) -> dict:
        return {
            "beta0_estimate": self.beta0_estimate,
            "sector_constant": _json_float(self.sector_constant),
            "primal_markov_ok": self.primal_markov_ok,
            "dual_markov_ok": self.dual_markov_ok,
            "violations": [[name, mag] for name, mag in self.violations],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _json_float(x: float):
    """Finite floats pass through; infinities serialize as the string 'inf'."""
    return x if np.isfinite(x) else ("inf" if x > 0 else "-inf")


def _markov_violations(matrix: np.ndarray, prefix: str) -> list[tuple[str, float]]:
    off = matrix.copy()
    np.fill_diagonal(off, 0.0)
    neg_off = float(max(0.0, -off.min())) if off.size else 0.0
    pos_row = float(max(0.0, matrix.sum(axis=1).max()))
    return [(f"{prefix}_offdiag", neg_off), (f"{prefix}_rowsum", pos_row)]


def validate_assumption_a(chain: Chain, beta_probe: float) -> ValidationReport:
    """Estimate the lower bound and sector constant, check sign structure.

    The lower-bound estimate is spectral: the smallest shift making the
    symmetric part of the form matrix positive semidefinite in the
    mu-weighted inner product. The sector constant is evaluated at
    ``beta_probe``; probes at or below the estimate report +inf together
    with a violation entry. Sign checks cover off-diagonal nonnegativity
    and row-sum nonpositivity of the generator and of its dual.
    """
    beta0 = _beta0_estimate(chain)
    violations = _markov_violations(chain.q, "primal")
    violations += _markov_violations(dual_generator(chain).matrix, "dual")
    if beta_probe > beta0:
        sector = _sector_constant(chain, beta_probe)
    else:
        sector = float("inf")
        violations.append(("sector_probe_not_above_beta0", float(beta0 - beta_probe)))
    primal_ok = all(mag <= MARKOV_TOL for name, mag in violations if name.startswith("primal"))
    dual_ok = all(mag <= MARKOV_TOL for name, mag in violations if name.startswith("dual"))
    return ValidationReport(
        beta0_estimate=beta0,
        sector_constant=sector,
        primal_markov_ok=primal_ok,
        dual_markov_ok=dual_ok,
        violations=tuple(violations),
    )


@dataclass(frozen=True, eq=False)
class FormView:
    """The shifted form of a chain: matrix, dual, lower bound, sector bound."""

    chain: Chain
    beta: float
    primal_matrix: np.ndarray
    dual_generator: Generator
    beta0: float
    sector_constant: float

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("form shift beta must be nonnegative")
        object.__setattr__(self, "primal_matrix", _freeze(self.primal_matrix))


def form_view(chain: Chain, beta: float) -> FormView:
    """Assemble the shifted form E_beta together with its dual generator.

    Verifies the adjoint identity Q^T M = M Q~ to 1e-12 (it holds by
    construction; the check guards against accidental mutation).
    """
    dual = dual_generator(chain)
    m = chain.mu
    lhs = chain.q.T * m[None, :]
    rhs = m[:, None] * dual.matrix
    scale = max(1.0, np.abs(lhs).max())
    if np.abs(lhs - rhs).max() > STRUCTURAL_TOL * scale:
        raise AssertionError("dual generator fails the adjoint identity")
    report = validate_assumption_a(chain, beta_probe=beta)
    return FormView(
        chain=chain,
        beta=float(beta),
        primal_matrix=form_matrix(chain, beta),
        dual_generator=dual,
        beta0=report.beta0_estimate,
        sector_constant=report.sector_constant,
    )


def eval_form(view: FormView, f, g) -> float:
    """Evaluate form(beta; f, g) = <(beta*I - Q) f, g>_mu densely."""
    n = view.chain.n_states
    fv = _as_vector(f, n, "f")
    gv = _as_vector(g, n, "g")
    return float(fv @ view.primal_matrix @ gv)
