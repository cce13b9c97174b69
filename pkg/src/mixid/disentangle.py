"""Removing the affine ambiguity of a conditionally factorial latent mixture.

Given the observed mixture ``Y = A Z + b`` with diagonal latent component
covariances, two components whose variance ratios are distinct pin down
``A`` up to a permutation and per-axis scaling.
"""
from dataclasses import dataclass, field
import itertools
from typing import List, Optional, Sequence

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import linear_sum_assignment

from .errors import (AssumptionViolated, DimensionMismatch, NoValidPair,
                     NotConditionallyFactorial, RepeatedSingularValues)
from .gmm import AffineMap, GaussianMixture, affine_pushforward, gmm_from_arrays
from .linalg import psd_sqrt

DIAG_TOL = 1e-9
DIAG_REL_TOL = 1e-6
SINGULAR_GAP = 1e-8


@dataclass(frozen=True)
class LatentStructure:
    """Discrete latent variables ``U_1..U_k`` and their continuous neighbourhoods."""

    k: int
    domain_sizes: Sequence[int]
    joint_weights: Sequence[float]
    neighborhoods: Sequence[frozenset]
    component_index: Optional[dict] = None

    def __post_init__(self):
        if len(self.domain_sizes) != self.k or len(self.neighborhoods) != self.k:
            raise DimensionMismatch("k must match domain_sizes and neighborhoods")
        if int(np.prod(self.domain_sizes)) != len(self.joint_weights):
            raise DimensionMismatch(
                f"prod(domain_sizes)={int(np.prod(self.domain_sizes))} but "
                f"{len(self.joint_weights)} joint weights")
        if any(w <= 0 for w in self.joint_weights):
            raise AssumptionViolated("every joint state needs positive probability")
        object.__setattr__(self, "neighborhoods", tuple(frozenset(n) for n in self.neighborhoods))

    @classmethod
    def from_dict(cls, data):
        return cls(int(data["k"]), list(data["domain_sizes"]), list(data["weights"]),
                   [frozenset(n) for n in data["neighborhoods"]])

    def to_dict(self):
        return {"k": self.k, "domain_sizes": list(self.domain_sizes),
                "weights": list(self.joint_weights),
                "neighborhoods": [sorted(n) for n in self.neighborhoods]}


@dataclass(frozen=True, eq=False)
class UnmixingResult:
    """``unmixing`` maps recovered latent coordinates to observed space.

    ``permutation``, ``scaling`` and ``residual`` are only filled when the true
    mixing matrix is supplied (testing and diagnostics).
    """

    unmixing: AffineMap
    singular_values: np.ndarray
    pair: tuple
    permutation: Optional[np.ndarray] = None
    scaling: Optional[np.ndarray] = None
    residual: Optional[float] = None

    def to_dict(self):
        out = {"unmixing": self.unmixing.to_dict(), "singular_values": self.singular_values.tolist(),
               "pair": list(self.pair)}
        if self.permutation is not None:
            out["permutation"] = self.permutation.tolist()
            out["scaling"] = self.scaling.tolist()
            out["residual"] = self.residual
        return out


def _is_diagonal(S, tol=DIAG_TOL):
    off = S - np.diag(np.diag(S))
    return np.max(np.abs(off), initial=0.0) <= tol


def variance_ratios(S1, S2):
    """Ratios ``(S1)_tt / (S2)_tt``, computed affine-invariantly as generalised eigenvalues."""
    return np.sort(eigh(S1, S2, eigvals_only=True))


def check_ratio_assumption(gmm, require_diagonal=True):
    """Best component pair for unmixing and its ratio margin.

    The margin of a pair is the smallest gap between its sorted variance
    ratios; the pair maximising it is returned (first pair on ties). With
    ``require_diagonal=False`` the ratios are read off as generalised
    eigenvalues, which is invariant under the unknown mixing map.
    """
    if gmm.n_components < 2:
        raise NoValidPair("need at least two components")
    if require_diagonal and not all(_is_diagonal(S) for S in gmm.covs):
        raise NotConditionallyFactorial("component covariances are not diagonal")
    if gmm.dim == 1:
        return (0, 1), np.inf
    best, best_margin = None, -1.0
    for i, j in itertools.combinations(range(gmm.n_components), 2):
        if require_diagonal:
            ratios = np.sort(np.diag(gmm.covs[i]) / np.diag(gmm.covs[j]))
        else:
            ratios = variance_ratios(gmm.covs[i], gmm.covs[j])
        margin = float(np.min(np.diff(ratios)))
        if margin > best_margin:
            best, best_margin = (i, j), margin
    if best_margin <= 1e-12:
        raise NoValidPair("no component pair has distinct variance ratios")
    return best, best_margin


def nearest_qd(M):
    """Nearest permutation-times-positive-diagonal pattern to ``M``.

    Rows are normalised first. Returns ``(perm, diag, residual)`` where
    ``perm[r]`` is the column kept in row ``r``.
    """
    M = np.asarray(M, dtype=float)
    Mn = M / np.linalg.norm(M, axis=1, keepdims=True)
    gain = np.maximum(Mn, 0.0) ** 2
    rows, cols = linear_sum_assignment(-gain)
    perm = cols[np.argsort(rows)]
    R = Mn.copy()
    rows = np.arange(M.shape[0])
    R[rows, perm] = np.minimum(Mn[rows, perm], 0.0)
    residual = float(np.linalg.norm(R))
    diag = np.empty(M.shape[1])
    diag[perm] = M[np.arange(M.shape[0]), perm]
    return perm, diag, residual


def _sign_fix(Ap):
    """Flip columns so each column's largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(Ap), axis=0)
    signs = np.sign(Ap[idx, np.arange(Ap.shape[1])])
    signs[signs == 0] = 1.0
    return Ap * signs


def recover_unmixing(observed, i1, i2, truth=None):
    """Recover ``A'`` with ``(A')^{-1} A = Q D`` from two component covariances.

    ``truth`` (an :class:`AffineMap` or matrix) is only used to report the
    permutation, scaling and residual.
    """
    V1 = psd_sqrt(observed.covs[i1])
    V2 = psd_sqrt(observed.covs[i2])
    U, s, _ = np.linalg.svd(np.linalg.solve(V1, V2))
    if observed.dim > 1 and np.min(-np.diff(s)) < SINGULAR_GAP:
        raise RepeatedSingularValues(f"singular values {s} are not separated by {SINGULAR_GAP}")
    Ap = _sign_fix(V1 @ U)
    h = AffineMap(Ap, observed.mean())
    Apinv = np.linalg.inv(Ap)
    for S in observed.covs:
        L = Apinv @ S @ Apinv.T
        d = np.sqrt(np.diag(L))
        off = np.abs(L - np.diag(np.diag(L))) / np.outer(d, d)
        if np.max(off, initial=0.0) > DIAG_REL_TOL:
            raise AssumptionViolated(
                f"unmixed covariance off-diagonal correlation {np.max(off):.2e} exceeds {DIAG_REL_TOL}")
    perm = scaling = residual = None
    if truth is not None:
        A = truth.matrix if isinstance(truth, AffineMap) else np.asarray(truth, dtype=float)
        perm, scaling, residual = nearest_qd(Apinv @ A)
    return UnmixingResult(h, s, (i1, i2), perm, scaling, residual)


def recover_latent(observed, truth=None):
    """Latent mixture up to permutation, scaling and translation of its axes."""
    pair, _ = check_ratio_assumption(observed, require_diagonal=False)
    result = recover_unmixing(observed, *pair, truth=truth)
    z = affine_pushforward(observed, result.unmixing.inverse())
    covs = []
    for S in z.covs:
        S = 0.5 * (S + S.T)
        d = np.sqrt(np.diag(S))
        small = np.abs(S) < DIAG_REL_TOL * np.outer(d, d)
        np.fill_diagonal(small, False)
        covs.append(np.where(small, 0.0, S))
    return gmm_from_arrays(z.weights, z.means, np.array(covs)), result


def check_subset_condition(structure):
    """No neighbourhood ``nbhd(U_i)`` is contained in another ``nbhd(U_j)``."""
    for i, j in itertools.permutations(range(structure.k), 2):
        if structure.neighborhoods[i] <= structure.neighborhoods[j]:
            return False
    return True


def structure_report(structure):
    """Checkable parts of the structural assumptions; the existential ones stay unchecked."""
    return {
        "subset_condition": check_subset_condition(structure),
        "positive_joint_weights": bool(all(w > 0 for w in structure.joint_weights)),
        "distinct_conditionals": "unchecked",
        "dimension_maximality": "unchecked",
    }
