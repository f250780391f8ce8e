"""Finite-alleles mutation models: theta, the transition matrix P and its
stationary distribution pi, plus the structural checks (irreducibility and
detailed balance restricted to a set of alleles) that decide which formula
applies to a sample.

``P[j, i]`` is the probability that allele ``j`` mutates to allele ``i``.
Allele indices are 0-based throughout the library.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import ModelError, SingularityError, ValidationError

__all__ = [
    "MutationModel",
    "build_model",
    "stationary_distribution",
    "stationary_distribution_exact",
    "is_irreducible_on",
    "is_reversible_on",
    "reversibility_residual",
    "load_model",
    "save_model",
    "flip_model",
    "uniform_model",
    "primate_model",
    "random_irreducible_model",
    "random_reversible_model",
    "PRIMATE_P_HAT",
    "PRIMATE_BASES",
    "DEFAULT_REV_TOL",
    "STRICT_REV_TOL",
]

MIN_K, MAX_K = 2, 16
ROW_SUM_TOL = 1e-6
DEFAULT_REV_TOL = 1e-2
STRICT_REV_TOL = 1e-10

# Rescaled psi-eta globin pseudogene matrix, three printed digits, (T, C, A, G).
PRIMATE_BASES = ("T", "C", "A", "G")
PRIMATE_P_HAT = (
    (0.433, 0.398, 0.074, 0.095),
    (0.665, 0.000, 0.164, 0.171),
    (0.074, 0.098, 0.394, 0.434),
    (0.147, 0.159, 0.674, 0.020),
)


@dataclass(frozen=True, eq=False)
class MutationModel:
    """An immutable, validated mutation model.

    ``P_exact``/``pi_exact`` hold exact rationals when the model was built
    from rational input; otherwise the rational view is the exact binary
    value of each double (see :meth:`exact_P`).
    """

    K: int
    theta: float
    P: np.ndarray
    pi: np.ndarray
    rev_tol: float = DEFAULT_REV_TOL
    P_exact: tuple | None = field(default=None, repr=False)
    pi_exact: tuple | None = field(default=None, repr=False)

    def with_theta(self, theta: float) -> "MutationModel":
        if theta < 0:
            raise ValidationError(f"theta must be non-negative, got {theta}")
        return replace(self, theta=float(theta))

    def exact_P(self) -> tuple:
        if self.P_exact is not None:
            return self.P_exact
        return tuple(tuple(Fraction(float(x)) for x in row) for row in self.P)

    def exact_pi(self) -> tuple:
        if self.pi_exact is not None:
            return self.pi_exact
        return tuple(Fraction(float(x)) for x in self.pi)

    def permuted(self, perm: Sequence[int]) -> "MutationModel":
        """Relabel alleles so that new allele ``a`` is old allele ``perm[a]``."""
        perm = list(perm)
        P = self.P[np.ix_(perm, perm)]
        pi = self.pi[perm]
        Pe = tuple(tuple(self.P_exact[r][c] for c in perm) for r in perm) if self.P_exact else None
        pe = tuple(self.pi_exact[r] for r in perm) if self.pi_exact else None
        return MutationModel(self.K, self.theta, _frozen(P), _frozen(pi), self.rev_tol, Pe, pe)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


def _is_rational(x) -> bool:
    return isinstance(x, (int, Fraction)) and not isinstance(x, bool)


def build_model(K: int, theta: float, P, pi=None, rev_tol: float = DEFAULT_REV_TOL) -> MutationModel:
    """Validate ``P`` (and ``pi`` if given) and return a :class:`MutationModel`.

    Rows within 1e-6 of summing to one are renormalised; larger deviations
    are rejected.  If every entry of ``P`` is an ``int`` or ``Fraction`` the
    model also keeps the exact rational matrix, and ``pi`` is then computed
    exactly when omitted.
    """
    if not isinstance(K, (int, np.integer)) or not MIN_K <= K <= MAX_K:
        raise ValidationError(f"K must be an integer in [{MIN_K}, {MAX_K}], got {K!r}")
    if theta is None or not np.isfinite(theta) or theta < 0:
        raise ValidationError(f"theta must be a non-negative number, got {theta!r}")
    rows = [list(r) for r in P]
    if len(rows) != K or any(len(r) != K for r in rows):
        raise ValidationError(f"P must be {K}x{K}")

    exact = all(_is_rational(x) for r in rows for x in r)
    P_exact = None
    if exact:
        Pf = [[Fraction(x) for x in r] for r in rows]
        if any(x < 0 for r in Pf for x in r):
            raise ValidationError("P has negative entries")
        for idx, r in enumerate(Pf):
            s = sum(r)
            if abs(s - 1) > ROW_SUM_TOL:
                raise ValidationError(f"row {idx} of P sums to {float(s)}, not 1")
        P_exact = tuple(tuple(x / sum(r) for x in r) for r in Pf)
        Pa = np.array([[float(x) for x in r] for r in P_exact])
    else:
        try:
            Pa = np.array(rows, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"P is not numeric: {exc}") from None
        if not np.all(np.isfinite(Pa)):
            raise ValidationError("P has non-finite entries")
        if np.any(Pa < 0):
            raise ValidationError("P has negative entries")
        sums = Pa.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1) > ROW_SUM_TOL)
        if bad.size:
            raise ValidationError(f"row {bad[0]} of P sums to {sums[bad[0]]!r}, not 1")
        Pa = Pa / sums[:, None]

    pi_exact = None
    if pi is None:
        if P_exact is not None:
            pi_exact = stationary_distribution_exact(P_exact)
            pia = np.array([float(x) for x in pi_exact])
        else:
            pia = stationary_distribution(Pa)
    else:
        pi = list(pi)
        if len(pi) != K:
            raise ValidationError(f"pi must have length {K}")
        if exact and all(_is_rational(x) for x in pi):
            pi_exact = tuple(Fraction(x) for x in pi)
        pia = np.array([float(x) for x in pi])
        if np.any(pia < 0):
            raise ValidationError("pi has negative entries")
        if abs(pia.sum() - 1) > 1e-12:
            raise ValidationError(f"pi sums to {pia.sum()!r}, not 1")
        if np.max(np.abs(pia @ Pa - pia)) > 1e-10:
            raise ValidationError("pi is not stationary for P")
    return MutationModel(int(K), float(theta), _frozen(Pa), _frozen(pia), float(rev_tol),
                         P_exact, pi_exact)


def stationary_distribution(P) -> np.ndarray:
    """Solve pi P = pi, sum(pi) = 1 by replacing one balance row with the
    normalisation constraint."""
    P = np.asarray(P, dtype=float)
    K = P.shape[0]
    A = P.T - np.eye(K)
    A[-1, :] = 1.0
    b = np.zeros(K)
    b[-1] = 1.0
    if np.linalg.cond(A) > 1e12:
        raise SingularityError("stationary system is singular: P has several recurrent classes")
    pi = np.linalg.solve(A, b)
    if np.any(pi < -1e-12):
        raise SingularityError("stationary solve produced negative mass")
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def stationary_distribution_exact(P: Sequence[Sequence[Fraction]]) -> tuple:
    """Rational Gauss-Jordan solve of the same system as :func:`stationary_distribution`."""
    K = len(P)
    A = [[Fraction(P[c][r]) - (1 if r == c else 0) for c in range(K)] for r in range(K)]
    A[-1] = [Fraction(1)] * K
    b = [Fraction(0)] * (K - 1) + [Fraction(1)]
    for col in range(K):
        piv = next((r for r in range(col, K) if A[r][col] != 0), None)
        if piv is None:
            raise SingularityError("stationary system is singular: P has several recurrent classes")
        A[col], A[piv] = A[piv], A[col]
        b[col], b[piv] = b[piv], b[col]
        for r in range(K):
            if r != col and A[r][col] != 0:
                f = A[r][col] / A[col][col]
                A[r] = [x - f * y for x, y in zip(A[r], A[col])]
                b[r] -= f * b[col]
    return tuple(b[r] / A[r][r] for r in range(K))


def _members(model: MutationModel, S: Iterable[int]) -> list[int]:
    S = sorted(set(int(s) for s in S))
    if not S or S[0] < 0 or S[-1] >= model.K:
        raise ValidationError(f"allele set {S} is not a nonempty subset of 0..{model.K - 1}")
    return S


def is_irreducible_on(model: MutationModel, S: Iterable[int]) -> bool:
    S = _members(model, S)
    if len(S) == 1:
        return True
    sub = np.array(model.P[np.ix_(S, S)] > 0, dtype=float)
    np.fill_diagonal(sub, 0.0)
    ncomp, _ = connected_components(sub, directed=True, connection="strong")
    return ncomp == 1


def reversibility_residual(model: MutationModel, S: Iterable[int]) -> tuple[float, tuple[int, int] | None]:
    """Largest relative detailed-balance violation over pairs in S, and the pair."""
    S = _members(model, S)
    worst, pair = 0.0, None
    for a in S:
        for b in S:
            if b <= a:
                continue
            f = model.pi[a] * model.P[a, b]
            g = model.pi[b] * model.P[b, a]
            r = abs(f - g) / max(f, g, 1e-300)
            if r > worst:
                worst, pair = r, (a, b)
    return worst, pair


def is_reversible_on(model: MutationModel, S: Iterable[int], tol: float | None = None) -> bool:
    tol = model.rev_tol if tol is None else tol
    return reversibility_residual(model, S)[0] <= tol


# -- files ------------------------------------------------------------------

def load_model(path: str | os.PathLike, theta: float | None = None) -> MutationModel:
    """Read a JSON model file with fields K, theta, P and optional pi.

    Entries may be numbers or strings holding fractions ("1/20"); a matrix
    given entirely as integers or fractions keeps its exact values.
    """
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from None
    missing = [k for k in ("K", "P") if k not in doc]
    if missing:
        raise ValidationError(f"{path}: missing field(s) {', '.join(missing)}")
    if theta is None:
        theta = doc.get("theta")
        if theta is None:
            raise ValidationError(f"{path}: no theta in file or on the command line")
    pi = doc.get("pi")
    return build_model(doc["K"], float(theta), _entries(doc["P"], path),
                       None if pi is None else _entries(pi, path),
                       rev_tol=doc.get("reversibility_tol", DEFAULT_REV_TOL))


def _entries(obj, path):
    # strings such as "1/20" are read as exact rationals
    if isinstance(obj, list):
        return [_entries(x, path) for x in obj]
    if isinstance(obj, str):
        try:
            return Fraction(obj)
        except ValueError:
            raise ValidationError(f"{path}: cannot read {obj!r} as a number") from None
    return obj


def save_model(model: MutationModel, path: str | os.PathLike, **extra) -> None:
    doc = {"K": model.K, "theta": model.theta, "P": model.P.tolist(), "pi": model.pi.tolist()}
    doc.update(extra)
    with open(path, "w") as f:
        json.dump(doc, f, indent=2)
        f.write("\n")


# -- stock models -----------------------------------------------------------

def flip_model(theta: float = 0.01) -> MutationModel:
    """Two alleles that always mutate into each other."""
    return build_model(2, theta, [[0, 1], [1, 0]])


def uniform_model(K: int, theta: float = 0.01) -> MutationModel:
    """Mutation to each other allele with probability 1/(K-1), held exactly."""
    P = [[Fraction(0) if i == j else Fraction(1, K - 1) for j in range(K)] for i in range(K)]
    return build_model(K, theta, P)


def primate_model(theta: float = 0.01) -> MutationModel:
    return build_model(4, theta, PRIMATE_P_HAT)


def random_irreducible_model(K: int, rng: np.random.Generator, theta: float = 0.01,
                             diagonal: bool = True) -> MutationModel:
    """Dense random P with Dirichlet rows; every off-diagonal entry is positive."""
    P = rng.dirichlet(np.ones(K), size=K)
    if not diagonal:
        np.fill_diagonal(P, 0.0)
        P /= P.sum(axis=1, keepdims=True)
    return build_model(K, theta, P)


def random_reversible_model(K: int, rng: np.random.Generator, theta: float = 0.01) -> MutationModel:
    """Reversible P from symmetric exchangeabilities s and a random pi.

    P_ij = s_ij pi_j / c off the diagonal, with c large enough that every row
    keeps non-negative diagonal mass.
    """
    pi = rng.dirichlet(np.ones(K))
    s = rng.uniform(0.1, 1.0, size=(K, K))
    s = (s + s.T) / 2
    np.fill_diagonal(s, 0.0)
    off = s * pi[None, :]
    c = off.sum(axis=1).max() * rng.uniform(1.0, 1.5)
    P = off / c
    P[np.diag_indices(K)] = 1.0 - P.sum(axis=1)
    return build_model(K, theta, P, pi=pi, rev_tol=STRICT_REV_TOL)
