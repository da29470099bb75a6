"""Restricted Poisson solves: the exact exit-time functionals of a chain.

For a domain given by a boolean mask over states, the restriction L_D of
the generator to inside states encodes exit through any mass leaving the
set (jumps to outside states and killing alike). Solving

    (beta*I - L_D) u = xi

on the inside states yields the weak solution of the shifted Poisson
equation with Dirichlet data, and from it the Laplace transform, the mean,
and (for reversible chains below the Dirichlet eigenvalue) the exponential
moment of the exit time.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from ._linalg import SingularSystemError, solve_refined
from .defaults import SPECTRAL_EDGE_MARGIN, STRUCTURAL_TOL
from .forms import Chain, _as_vector, _freeze, _json_float, dual_generator

__all__ = [
    "DomainMask",
    "ExitFunctionals",
    "SingularSystemError",
    "RecurrentRestrictionError",
    "ExitImpossibleError",
    "NonReversibleError",
    "solve_poisson",
    "exit_laplace",
    "exit_mean",
    "exit_exp_moment",
    "exit_functionals",
    "embed",
]


class RecurrentRestrictionError(SingularSystemError):
    """The restricted generator is singular: exit is not almost sure."""


class ExitImpossibleError(ValueError):
    """Full-state domain on a conservative generator: the exit time is infinite."""


class NonReversibleError(ValueError):
    """Operation requires detailed balance of the chain."""


@dataclass(frozen=True, eq=False)
class DomainMask:
    """Boolean inside-indicator over states. True marks the open set."""

    inside: np.ndarray

    def __post_init__(self):
        ind = np.asarray(self.inside, dtype=bool)
        if ind.ndim != 1:
            raise ValueError("inside indicator must be one-dimensional")
        if not ind.any():
            raise ValueError("domain must contain at least one state")
        frozen = ind.copy()
        frozen.setflags(write=False)
        object.__setattr__(self, "inside", frozen)

    @classmethod
    def from_states(cls, states, n_states: int) -> "DomainMask":
        ind = np.zeros(n_states, dtype=bool)
        idx = np.asarray(list(states), dtype=int)
        if idx.size and (idx.min() < 0 or idx.max() >= n_states):
            raise ValueError("domain state index out of range")
        ind[idx] = True
        return cls(ind)

    @classmethod
    def full(cls, n_states: int) -> "DomainMask":
        return cls(np.ones(n_states, dtype=bool))

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.inside)

    @property
    def size(self) -> int:
        return int(self.inside.sum())

    def is_full(self) -> bool:
        return bool(self.inside.all())


def embed(mask: DomainMask, values, fill: float = 0.0) -> np.ndarray:
    """Extend a vector on the domain to the full state space."""
    out = np.full(mask.inside.shape[0], fill, dtype=float)
    out[mask.indices] = _as_vector(values, mask.size, "domain vector")
    return out


def _restrict_source(mask: DomainMask, xi, n_states: int) -> np.ndarray:
    """Accept a source of domain length, or full length vanishing outside."""
    v = _as_vector(xi, name="xi")
    if v.shape[0] == mask.size:
        return v
    if v.shape[0] == n_states:
        outside = v[~mask.inside]
        if outside.size and np.abs(outside).max() > STRUCTURAL_TOL:
            raise ValueError("source xi must vanish outside the domain")
        return v[mask.indices]
    raise ValueError(
        f"xi has length {v.shape[0]}, expected {mask.size} (domain) or {n_states} (full)"
    )


def _check_exit_possible(chain: Chain, mask: DomainMask) -> None:
    if mask.is_full() and chain.is_conservative():
        raise ExitImpossibleError(
            "domain covers every state of a conservative generator; "
            "the exit time is infinite"
        )


def restricted_generator(chain: Chain, mask: DomainMask, side: str = "primal") -> np.ndarray:
    """Sub-matrix of the generator (or of its dual) on inside states."""
    if side == "primal":
        q = chain.q
    elif side == "dual":
        q = dual_generator(chain).matrix
    else:
        raise ValueError(f"side must be 'primal' or 'dual', got {side!r}")
    idx = mask.indices
    return q[np.ix_(idx, idx)]


def solve_poisson(chain: Chain, mask: DomainMask, beta: float, xi, side: str = "primal") -> np.ndarray:
    """Solve (beta*I - L_D) u = xi on the inside states.

    Parameters
    ----------
    chain, mask : the chain and the inside-indicator of the domain.
    beta : shift; any real for which the restriction is nonsingular.
    xi : source, of domain length or full length vanishing outside.
    side : "primal" solves with L_D, "dual" with the adjoint restriction.

    Returns the solution on the inside states (callers extend by zero).
    Raises SingularSystemError, with a condition estimate, when beta sits
    at a Dirichlet eigenvalue of the restriction.
    """
    lom = restricted_generator(chain, mask, side)
    rhs = _restrict_source(mask, xi, chain.n_states)
    a = beta * np.eye(mask.size) - lom
    u, _cond = solve_refined(a, rhs, context=f"restricted {side} solve (beta={beta:g})")
    return u


def exit_laplace(chain: Chain, mask: DomainMask, beta: float) -> np.ndarray:
    """E_x[exp(-beta * exit time)] for every state; 1 outside the domain."""
    if beta <= 0:
        raise ValueError("exit_laplace needs beta > 0")
    _check_exit_possible(chain, mask)
    u = solve_poisson(chain, mask, beta, np.ones(mask.size))
    lap = 1.0 - beta * u
    if lap.min() < -STRUCTURAL_TOL or lap.max() > 1.0 + STRUCTURAL_TOL:
        raise AssertionError("Laplace transform left [0, 1] beyond tolerance")
    return embed(mask, np.clip(lap, 0.0, 1.0), fill=1.0)


def exit_mean(chain: Chain, mask: DomainMask) -> np.ndarray:
    """E_x[exit time] for every state; 0 outside the domain.

    Fails with RecurrentRestrictionError when the restriction is singular,
    i.e. some inside communicating class cannot exit.
    """
    _check_exit_possible(chain, mask)
    try:
        m = solve_poisson(chain, mask, 0.0, np.ones(mask.size))
    except SingularSystemError as err:
        raise RecurrentRestrictionError(
            "restricted generator is singular: exit from the domain is not "
            "almost sure (recurrent restriction)",
            cond_estimate=err.cond_estimate,
        ) from err
    if m.min() < -STRUCTURAL_TOL:
        raise AssertionError("mean exit time turned negative beyond tolerance")
    return embed(mask, np.maximum(m, 0.0), fill=0.0)


def exit_exp_moment(chain: Chain, mask: DomainMask, beta: float, lambda0: float) -> np.ndarray:
    """E_x[exp(+beta * exit time)]; +inf marker on the domain at or past lambda0.

    Requires a reversible chain. ``lambda0`` is the smallest Dirichlet
    eigenvalue of the restriction (see the spectral module); for beta
    within SPECTRAL_EDGE_MARGIN of it the moment is reported infinite.
    Outside the domain the exit time is 0 and the moment is 1.
    """
    if beta <= 0:
        raise ValueError("exit_exp_moment needs beta > 0")
    if not chain.is_reversible():
        raise NonReversibleError("exponential moments need a reversible chain")
    _check_exit_possible(chain, mask)
    if beta >= lambda0 - SPECTRAL_EDGE_MARGIN:
        return embed(mask, np.full(mask.size, np.inf), fill=1.0)
    v = solve_poisson(chain, mask, -beta, np.ones(mask.size))
    return embed(mask, 1.0 + beta * v, fill=1.0)


@dataclass(frozen=True, eq=False)
class ExitFunctionals:
    """Exact exit-time functionals of one domain at one shift.

    Vectors are full length: ``u_beta`` vanishes outside the domain,
    ``laplace`` is 1 there, ``mean`` is 0, ``exp_moment`` is 1.
    ``exp_moment`` is None when the chain is not reversible or no
    Dirichlet eigenvalue was supplied. ``aggregate_mu`` is <xi, u_beta>_mu
    for the supplied source.
    """

    beta: float
    u_beta: np.ndarray
    laplace: np.ndarray
    mean: np.ndarray
    exp_moment: np.ndarray | None
    aggregate_mu: float

    def __post_init__(self):
        for name in ("u_beta", "laplace", "mean"):
            object.__setattr__(self, name, _freeze(getattr(self, name)))
        if self.exp_moment is not None:
            object.__setattr__(self, "exp_moment", _freeze(self.exp_moment))
        resid = np.abs(self.u_beta - (1.0 - self.laplace) / self.beta).max()
        if resid > STRUCTURAL_TOL:
            raise AssertionError(
                f"u_beta and (1 - laplace)/beta disagree by {resid:.3e}"
            )

    def to_dict(self, labels=None) -> dict:
        doc = {
            "beta": self.beta,
            "u_beta": self.u_beta.tolist(),
            "laplace": self.laplace.tolist(),
            "mean": self.mean.tolist(),
            "exp_moment": None
            if self.exp_moment is None
            else [_json_float(x) for x in self.exp_moment],
            "aggregate_mu": self.aggregate_mu,
        }
        if labels is not None:
            doc["states"] = list(labels)
        return doc

    def to_json(self, labels=None, **kwargs) -> str:
        return json.dumps(self.to_dict(labels=labels), **kwargs)

    def to_csv(self, labels=None) -> str:
        """CSV with one row per state: state, laplace, mean, exp_moment."""
        n = self.laplace.shape[0]
        names = list(labels) if labels is not None else [str(i) for i in range(n)]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["state", "laplace", "mean", "exp_moment"])
        for i in range(n):
            exp_cell = ""
            if self.exp_moment is not None:
                x = self.exp_moment[i]
                exp_cell = "inf" if np.isinf(x) else repr(float(x))
            writer.writerow(
                [names[i], repr(float(self.laplace[i])), repr(float(self.mean[i])), exp_cell]
            )
        return buf.getvalue()


def exit_functionals(
    chain: Chain,
    mask: DomainMask,
    beta: float,
    xi=None,
    lambda0: float | None = None,
) -> ExitFunctionals:
    """Bundle the exact functionals of one domain at one shift.

    ``xi`` defaults to the indicator of the domain. The exponential moment
    is included when the chain is reversible and ``lambda0`` is supplied.
    """
    if beta <= 0:
        raise ValueError("exit_functionals needs beta > 0")
    xi_d = (
        np.ones(mask.size)
        if xi is None
        else _restrict_source(mask, xi, chain.n_states)
    )
    u_one = solve_poisson(chain, mask, beta, np.ones(mask.size))
    laplace = embed(mask, np.clip(1.0 - beta * u_one, 0.0, 1.0), fill=1.0)
    # derive u_beta from the stored transform so the identity
    # u_beta == (1 - laplace)/beta holds to the last bit even at tiny beta
    u_beta = (1.0 - laplace) / beta
    mean = exit_mean(chain, mask)
    exp_m = None
    if lambda0 is not None and chain.is_reversible():
        exp_m = exit_exp_moment(chain, mask, beta, lambda0)
    mu_d = chain.mu[mask.indices]
    return ExitFunctionals(
        beta=float(beta),
        u_beta=u_beta,
        laplace=laplace,
        mean=mean,
        exp_moment=exp_m,
        aggregate_mu=float(np.sum(mu_d * xi_d * u_beta[mask.indices])),
    )
