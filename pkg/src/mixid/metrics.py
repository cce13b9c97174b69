"""Alignment maps and distances between latent representations.

Mixture-level comparisons use the closed-form L2 geometry of Gaussian
mixtures; sample-level comparisons use CCA and mean correlation coefficients.
"""
import csv
from dataclasses import dataclass
import itertools
from pathlib import Path
from typing import Optional
import warnings

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import rankdata

from .errors import (AssumptionViolated, DimensionMismatch, InconsistentDimensions, ParseError,
                     RankDeficientMeans, SingularCovariance, TooManyComponents,
                     ZeroVarianceCoordinate)
from .gmm import (INVERTIBLE_COND, AffineMap, affine_candidates, affine_pushforward, l2_inner)
from .linalg import psd_inv_sqrt, psd_sqrt

MAX_COMPONENTS = 10
OUT_OF_SAMPLE_MIN = 200


@dataclass(frozen=True, eq=False)
class LatentSample:
    values: np.ndarray
    run_id: str = ""
    source: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise DimensionMismatch("latent sample must be a matrix")
        if not np.all(np.isfinite(v)):
            raise ParseError("latent sample has missing or non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def m(self):
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class AlignmentReport:
    map: AffineMap
    permutation: tuple
    score: float
    method: str
    correlations: Optional[np.ndarray] = None

    def to_dict(self):
        out = {"map": self.map.to_dict(), "permutation": list(self.permutation),
               "score": float(self.score), "method": self.method}
        if self.correlations is not None:
            out["correlations"] = self.correlations.tolist()
        return out


def _values(x):
    return x.values if isinstance(x, LatentSample) else LatentSample(x).values


# --------------------------------------------------------------------------- mixtures

def delta_l2(p, q):
    """Normalised L2 distance ``||p - q|| / (||p||^{1/2} ||q||^{1/2})``."""
    if p.dim != q.dim:
        raise DimensionMismatch(f"dimensions {p.dim} and {q.dim} differ")
    pp, qq, pq = l2_inner(p, p), l2_inner(q, q), l2_inner(p, q)
    diff2 = max(pp - 2.0 * pq + qq, 0.0)
    return float(np.sqrt(diff2) / (pp ** 0.25 * qq ** 0.25))


def mean_match_affine(src_means, dst_means):
    """Least-squares affine map sending ``src_means[k]`` to ``dst_means[k]``.

    Solved via SVD-based least squares in homogeneous coordinates; when the
    source means are affinely dependent the minimum-norm solution is returned
    and :class:`RankDeficientMeans` is warned.
    """
    src = np.atleast_2d(np.asarray(src_means, dtype=float))
    dst = np.atleast_2d(np.asarray(dst_means, dtype=float))
    if src.shape != dst.shape:
        raise DimensionMismatch(f"mean arrays {src.shape} and {dst.shape} differ")
    K, m = src.shape
    X = np.hstack([src, np.ones((K, 1))])
    sol, _, rank, _ = np.linalg.lstsq(X, dst, rcond=None)
    if rank < m + 1:
        warnings.warn(f"means span an affine subspace of rank {rank - 1} < {m}; "
                      "returning minimum-norm map", RankDeficientMeans, stacklevel=2)
    return AffineMap(sol[:m].T, sol[m])


def _matchings(kp, kq):
    """Pairs ``(p_idx, q_idx)`` of index tuples: all injections of the smaller set."""
    if kp <= kq:
        for inj in itertools.permutations(range(kq), kp):
            yield tuple(range(kp)), inj
    else:
        for inj in itertools.permutations(range(kp), kq):
            yield inj, tuple(range(kq))


def dist_aff_l2(p, q):
    """Smallest ``delta_l2(h♯p, q)`` over a finite set of candidate affine maps.

    Candidates are mean-matching maps for every component permutation or
    injection. For equal component counts the covariance-conjugation
    candidates of :func:`affine_candidates` are added, which keeps the search
    exact when there are too few means to pin down ``h``.
    """
    if p.dim != q.dim:
        raise DimensionMismatch(f"dimensions {p.dim} and {q.dim} differ")
    if max(p.n_components, q.n_components) > MAX_COMPONENTS:
        raise TooManyComponents(f"more than {MAX_COMPONENTS} components")
    best_val, best = np.inf, None
    for pi, qi in _matchings(p.n_components, q.n_components):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RankDeficientMeans)
            cands = [mean_match_affine(p.means[list(pi)], q.means[list(qi)])]
        if p.n_components == q.n_components:
            cands.extend(affine_candidates(p, q, qi))
        for h in cands:
            if not np.all(np.isfinite(h.matrix)) or h.condition() >= INVERTIBLE_COND:
                continue
            val = delta_l2(affine_pushforward(p, h), q)
            if val < best_val - 1e-15:
                best_val, best = val, AlignmentReport(h, qi if len(pi) == p.n_components else pi,
                                                      val, "mean_matching")
    if best is None:
        raise AssumptionViolated("no invertible alignment candidate")
    return best_val, best


# --------------------------------------------------------------------------- samples

def _cov(x):
    return np.cov(x, rowvar=False, ddof=1).reshape(x.shape[1], x.shape[1])


def _check_cov(C, which):
    lam = np.linalg.eigvalsh(C)
    if lam[0] <= 1e-12 * max(lam[-1], 1e-300):
        raise SingularCovariance(f"covariance of {which} is singular (eigenvalues {lam})")


def _cca_fit(a, b):
    ma, mb = a.mean(axis=0), b.mean(axis=0)
    ac, bc = a - ma, b - mb
    n = a.shape[0]
    Caa, Cbb = _cov(a), _cov(b)
    _check_cov(Caa, "a")
    _check_cov(Cbb, "b")
    Cab = ac.T @ bc / (n - 1)
    Wa, Wb = psd_inv_sqrt(Caa), psd_inv_sqrt(Cbb)
    U, s, Vt = np.linalg.svd(Wa @ Cab @ Wb)
    return dict(ma=ma, mb=mb, Caa=Caa, Cbb=Cbb, Wa=Wa, Wb=Wb, U=U, s=s, V=Vt.T)


def cca_align(a, b, dim):
    """Affine map from ``a``'s space to ``b``'s built from the top ``dim`` canonical pairs.

    The map is the rank-``dim`` regression ``Cbb^{1/2} V_d S_d U_d^T Caa^{-1/2}``;
    for ``dim`` equal to the full dimension it is ordinary least squares of
    ``b`` on ``a``. With ``dim`` below the dimension the map is not invertible.
    """
    a, b = _values(a), _values(b)
    if a.shape[0] != b.shape[0]:
        raise InconsistentDimensions(f"unpaired samples: {a.shape[0]} vs {b.shape[0]} rows")
    if dim < 1 or dim > min(a.shape[1], b.shape[1]):
        raise DimensionMismatch(f"cca dim {dim} outside [1, {min(a.shape[1], b.shape[1])}]")
    if a.shape[0] < max(a.shape[1], b.shape[1]) + 1:
        raise DimensionMismatch("need at least m + 1 samples")
    fit = _cca_fit(a, b)
    Ud, Vd, sd = fit["U"][:, :dim], fit["V"][:, :dim], fit["s"][:dim]
    M = psd_sqrt(fit["Cbb"]) @ Vd @ np.diag(sd) @ Ud.T @ fit["Wa"]
    h = AffineMap(M, fit["mb"] - M @ fit["ma"])
    return AlignmentReport(h, tuple(range(b.shape[1])), float(np.mean(sd)), "cca", sd)


def _abs_corr(a, b, correlation):
    if correlation == "spearman":
        a = np.apply_along_axis(rankdata, 0, a)
        b = np.apply_along_axis(rankdata, 0, b)
    elif correlation != "pearson":
        raise ValueError(f"unknown correlation {correlation!r}")
    sa, sb = a.std(axis=0, ddof=1), b.std(axis=0, ddof=1)
    if np.any(sa <= 0) or np.any(sb <= 0):
        raise ZeroVarianceCoordinate("a coordinate has zero variance")
    za = (a - a.mean(axis=0)) / sa
    zb = (b - b.mean(axis=0)) / sb
    return np.abs(za.T @ zb / (a.shape[0] - 1))


def _matched_mean(corr):
    rows, cols = linear_sum_assignment(-corr)
    return float(np.clip(np.mean(corr[rows, cols]), 0.0, 1.0))


def mcc(a, b, mode="strong", cca_dim=None, correlation="pearson"):
    """Mean correlation coefficient after optimal coordinate assignment.

    ``strong`` compares raw coordinates. ``weak`` fits CCA on the first half of
    the rows and scores the canonical variates on the held-out second half.
    """
    a, b = _values(a), _values(b)
    if a.shape[0] != b.shape[0]:
        raise InconsistentDimensions(f"unpaired samples: {a.shape[0]} vs {b.shape[0]} rows")
    if mode == "strong":
        return _matched_mean(_abs_corr(a, b, correlation))
    if mode != "weak":
        raise ValueError(f"unknown mode {mode!r}")
    if a.shape[0] < OUT_OF_SAMPLE_MIN:
        raise DimensionMismatch(f"weak MCC needs at least {OUT_OF_SAMPLE_MIN} rows")
    dim = cca_dim or min(a.shape[1], b.shape[1])
    half = a.shape[0] // 2
    fit = _cca_fit(a[:half], b[:half])
    xa = (a[half:] - fit["ma"]) @ fit["Wa"] @ fit["U"][:, :dim]
    xb = (b[half:] - fit["mb"]) @ fit["Wb"] @ fit["V"][:, :dim]
    return _matched_mean(_abs_corr(xa, xb, correlation))


def ingest_latents(path):
    """Read a latent CSV with header ``z1,...,zm``."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or any(not h for h in header):
        raise ParseError(f"{path}: line 1: malformed header")
    m = len(header)
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != m:
            raise ParseError(f"{path}: line {lineno}: expected {m} fields, got {len(row)}")
        try:
            vals = [float(v) for v in row]
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from None
        if not all(np.isfinite(vals)):
            raise ParseError(f"{path}: line {lineno}: missing or non-finite value")
        data.append(vals)
    if not data:
        raise ParseError(f"{path}: no data rows")
    return LatentSample(np.array(data), run_id=path.stem, source=str(path))


def ingest_pair(path_a, path_b):
    a, b = ingest_latents(path_a), ingest_latents(path_b)
    if a.n != b.n:
        raise InconsistentDimensions(f"{a.run_id} has {a.n} rows, {b.run_id} has {b.n}")
    return a, b
