"""Finite Gaussian mixtures and affine maps.

Everything here is exact algebra: densities, Cholesky sampling, affine
pushforwards and the closed-form L2 inner product between two mixtures.
"""
from dataclasses import dataclass
import itertools

import numpy as np
from scipy.special import logsumexp

from .errors import (DegenerateCovariance, DimensionMismatch, MixIdError,
                     NonPositiveWeight)
from .linalg import EIG_FLOOR, condition_number, psd_inv_sqrt, psd_sqrt, symmetrize

MERGE_TOL = 1e-9
WEIGHT_SUM_TOL = 1e-9
INVERTIBLE_COND = 1e12
_LOG_2PI = np.log(2.0 * np.pi)


class WeightSumError(MixIdError, ValueError):
    pass


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AffineMap:
    """``x -> matrix @ x + offset``."""

    matrix: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        b = np.atleast_1d(np.asarray(self.offset, dtype=float)).ravel()
        if A.shape[0] != b.shape[0]:
            raise DimensionMismatch(f"matrix {A.shape} vs offset {b.shape}")
        object.__setattr__(self, "matrix", _frozen(A))
        object.__setattr__(self, "offset", _frozen(b))

    @classmethod
    def identity(cls, dim):
        return cls(np.eye(dim), np.zeros(dim))

    @property
    def in_dim(self):
        return self.matrix.shape[1]

    @property
    def out_dim(self):
        return self.matrix.shape[0]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.in_dim:
            raise DimensionMismatch(f"expected last axis {self.in_dim}, got {x.shape}")
        return x @ self.matrix.T + self.offset

    def condition(self):
        return condition_number(self.matrix)

    def is_invertible(self):
        return self.in_dim == self.out_dim and self.condition() < INVERTIBLE_COND

    def inverse(self):
        if not self.is_invertible():
            raise DegenerateCovariance("affine map is not invertible")
        Ainv = np.linalg.inv(self.matrix)
        return AffineMap(Ainv, -Ainv @ self.offset)

    def compose(self, inner):
        """Return ``self ∘ inner``."""
        return AffineMap(self.matrix @ inner.matrix, self.matrix @ inner.offset + self.offset)

    def allclose(self, other, tol):
        return (self.matrix.shape == other.matrix.shape
                and np.max(np.abs(self.matrix - other.matrix)) <= tol
                and np.max(np.abs(self.offset - other.offset)) <= tol)

    def to_dict(self):
        return {"A": self.matrix.tolist(), "b": self.offset.tolist()}


@dataclass(frozen=True, eq=False)
class GaussianMixture:
    """Mixture in reduced form: ``weights (K,)``, ``means (K, m)``, ``covs (K, m, m)``.

    Use :func:`make_gmm` for raw input; the constructor only validates.
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        mu = np.asarray(self.means, dtype=float)
        if mu.ndim == 1:
            mu = mu[:, None]
        S = np.asarray(self.covs, dtype=float)
        if S.ndim == 1:
            S = S[:, None, None]
        K, m = mu.shape
        if w.shape != (K,) or S.shape != (K, m, m):
            raise DimensionMismatch(f"weights {w.shape}, means {mu.shape}, covs {S.shape}")
        if np.any(w <= 0):
            raise NonPositiveWeight(f"weights must be positive, got {w}")
        if abs(w.sum() - 1.0) > 1e-12:
            raise WeightSumError(f"weights sum to {w.sum()!r}")
        for S_k in S:
            if np.max(np.abs(S_k - S_k.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(S_k))):
                raise DegenerateCovariance("covariance is not symmetric")
            if np.linalg.eigvalsh(S_k)[0] <= EIG_FLOOR:
                raise DegenerateCovariance(
                    f"covariance min eigenvalue {np.linalg.eigvalsh(S_k)[0]:.3e} <= {EIG_FLOOR}")
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "means", _frozen(mu))
        object.__setattr__(self, "covs", _frozen(S))

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def n_components(self):
        return self.weights.shape[0]

    def components(self):
        return list(zip(self.weights, self.means, self.covs))

    def mean(self):
        return self.weights @ self.means

    def envelope(self, nsd=8.0):
        """Per-axis box ``(lo, hi)`` spanning ``nsd`` standard deviations of every component."""
        sd = np.sqrt(np.diagonal(self.covs, axis1=1, axis2=2))
        return (self.means - nsd * sd).min(axis=0), (self.means + nsd * sd).max(axis=0)

    def to_dict(self):
        return {
            "dim": self.dim,
            "components": [
                {"weight": float(w), "mean": mu.tolist(), "cov": S.tolist()}
                for w, mu, S in self.components()
            ],
        }


def make_gmm(raw_components):
    """Build a reduced-form mixture from ``(weight, mean, covariance)`` triples.

    Scalars are accepted for 1D means/covariances. Weights summing to within
    1e-9 of one are renormalised; duplicate components are merged.
    """
    raw = list(raw_components)
    if not raw:
        raise DimensionMismatch("a mixture needs at least one component")
    weights, means, covs = [], [], []
    m = None
    for w, mu, S in raw:
        mu = np.atleast_1d(np.asarray(mu, dtype=float)).ravel()
        S = np.atleast_2d(np.asarray(S, dtype=float))
        if m is None:
            m = mu.shape[0]
        if mu.shape != (m,) or S.shape != (m, m):
            raise DimensionMismatch(f"component mean {mu.shape} / cov {S.shape} for dim {m}")
        w = float(w)
        if not w > 0:
            raise NonPositiveWeight(f"component weight {w} is not positive")
        S = symmetrize(S)
        if np.linalg.eigvalsh(S)[0] <= EIG_FLOOR:
            raise DegenerateCovariance("covariance is not positive definite")
        weights.append(w)
        means.append(mu)
        covs.append(S)
    total = sum(weights)
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise WeightSumError(f"weights sum to {total!r}, not 1")

    kept_w, kept_mu, kept_S = [], [], []
    for w, mu, S in zip(weights, means, covs):
        for j in range(len(kept_w)):
            if (np.max(np.abs(mu - kept_mu[j])) < MERGE_TOL
                    and np.max(np.abs(S - kept_S[j])) < MERGE_TOL):
                kept_w[j] += w
                break
        else:
            kept_w.append(w)
            kept_mu.append(mu)
            kept_S.append(S)
    w = np.array(kept_w) / sum(kept_w)
    return GaussianMixture(w, np.array(kept_mu), np.array(kept_S))


def gmm_from_arrays(weights, means, covs):
    """Like :func:`make_gmm` but from stacked arrays."""
    means = np.asarray(means, dtype=float)
    if means.ndim == 1:
        means = means[:, None]
    covs = np.asarray(covs, dtype=float)
    if covs.ndim == 1:
        covs = covs[:, None, None]
    return make_gmm(zip(weights, means, covs))


def _as_points(gmm, x):
    x = np.asarray(x, dtype=float)
    single = False
    if gmm.dim == 1 and x.ndim <= 1:
        single = x.ndim == 0
        x = x.reshape(-1, 1)
    elif x.ndim == 1:
        single = True
        x = x[None, :]
    if x.shape[-1] != gmm.dim:
        raise DimensionMismatch(f"point of dim {x.shape[-1]} for mixture of dim {gmm.dim}")
    return x, single


def log_density(gmm, x):
    """Log density; ``x`` is one point or an ``(N, m)`` array (``(N,)`` in 1D)."""
    pts, single = _as_points(gmm, x)
    logs = []
    for w, mu, S in gmm.components():
        L = np.linalg.cholesky(S)
        r = np.linalg.solve(L, (pts - mu).T)
        logdet = 2.0 * np.sum(np.log(np.diag(L)))
        logs.append(np.log(w) - 0.5 * (gmm.dim * _LOG_2PI + logdet + np.sum(r * r, axis=0)))
    out = logsumexp(np.array(logs), axis=0)
    return float(out[0]) if single else out


def density(gmm, x):
    out = np.exp(log_density(gmm, x))
    return float(out) if np.ndim(out) == 0 else out


def sample(gmm, n, seed, return_labels=False):
    """Draw ``n`` points; deterministic in ``seed``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    labels = rng.choice(gmm.n_components, size=n, p=gmm.weights)
    chol = np.linalg.cholesky(gmm.covs)
    eps = rng.standard_normal((n, gmm.dim))
    x = gmm.means[labels] + np.einsum("nij,nj->ni", chol[labels], eps)
    return (x, labels) if return_labels else x


def affine_pushforward(gmm, h):
    """Mixture of ``h(Z)`` for ``Z ~ gmm``; ``h`` must be square and full rank."""
    if h.in_dim != gmm.dim:
        raise DimensionMismatch(f"map input dim {h.in_dim} vs mixture dim {gmm.dim}")
    A = h.matrix
    if A.shape[0] != A.shape[1] or np.linalg.matrix_rank(A) < gmm.dim:
        raise DegenerateCovariance("pushforward by a map without full column rank "
                                   "into the same dimension is degenerate")
    means = gmm.means @ A.T + h.offset
    covs = np.einsum("ij,kjl,ml->kim", A, gmm.covs, A)
    return gmm_from_arrays(gmm.weights, means, 0.5 * (covs + np.swapaxes(covs, 1, 2)))


def _gauss_at(x, mean, cov):
    """Vectorised N(x; mean, cov) over leading axes of ``x - mean`` and ``cov``."""
    m = cov.shape[-1]
    L = np.linalg.cholesky(cov)
    d = x - mean
    r = np.linalg.solve(L, d[..., None])[..., 0]
    logdet = 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)
    return np.exp(-0.5 * (m * _LOG_2PI + logdet + np.sum(r * r, axis=-1)))


def l2_inner(p, q):
    """Closed-form ``∫ p(x) q(x) dx`` via the Gaussian product identity."""
    if p.dim != q.dim:
        raise DimensionMismatch(f"dims {p.dim} and {q.dim}")
    vals = _gauss_at(p.means[:, None, :], q.means[None, :, :],
                     p.covs[:, None, :, :] + q.covs[None, :, :, :])
    return float(p.weights @ vals @ q.weights)


def l2_norm(p):
    return float(np.sqrt(l2_inner(p, p)))


def component_matchings(k):
    """All permutations of ``range(k)`` in lexicographic order."""
    return itertools.permutations(range(k))


def maps_onto(p, q, h, matching, tol):
    """True when ``h`` sends component ``i`` of ``p`` to component ``matching[i]`` of ``q``."""
    A, b = h.matrix, h.offset
    for i, j in enumerate(matching):
        scale = max(1.0, np.max(np.abs(q.covs[j])), np.max(np.abs(q.means[j])))
        if abs(p.weights[i] - q.weights[j]) > tol:
            return False
        if np.max(np.abs(A @ p.means[i] + b - q.means[j])) > tol * scale:
            return False
        if np.max(np.abs(A @ p.covs[i] @ A.T - q.covs[j])) > tol * scale:
            return False
    return True


def _orthogonal_grid_2d():
    out = []
    for k in range(8):
        t = k * np.pi / 4.0
        c, s = np.cos(t), np.sin(t)
        out.append(np.array([[c, -s], [s, c]]))
        out.append(np.array([[c, s], [s, -c]]))
    return out


def affine_candidates(p, q, matching):
    """Candidate maps ``h`` with ``h♯p`` matching ``q`` under a component matching.

    Candidates come from least-squares mean matching (when the means span the
    space affinely) and from conjugating two anchor covariances. When the
    anchors leave an orthogonal freedom in 2D, a 16-element grid of O(2) is
    used; higher-dimensional ties fall back to sign flips only.
    """
    m = p.dim
    K = len(matching)
    qi = list(matching)
    out = []

    if K >= m + 1:
        X = np.hstack([p.means, np.ones((K, 1))])
        if np.linalg.matrix_rank(X) == m + 1:
            sol = np.linalg.lstsq(X, q.means[qi], rcond=None)[0]
            out.append(AffineMap(sol[:m].T, sol[m]))

    L0 = psd_sqrt(p.covs[0])
    L0inv = psd_inv_sqrt(p.covs[0])
    L0q = psd_sqrt(q.covs[qi[0]])
    L0qinv = psd_inv_sqrt(q.covs[qi[0]])
    rotations = []
    if K >= 2:
        M = L0inv @ p.covs[1] @ L0inv
        Mq = L0qinv @ q.covs[qi[1]] @ L0qinv
        lam, E = np.linalg.eigh(symmetrize(M))
        lamq, Eq = np.linalg.eigh(symmetrize(Mq))
        distinct = m == 1 or np.min(np.diff(lam)) > 1e-8 * max(1.0, lam[-1])
        if distinct:
            for signs in itertools.product([1.0, -1.0], repeat=m):
                rotations.append(Eq @ np.diag(signs) @ E.T)
        elif m == 2:
            rotations.extend(_orthogonal_grid_2d())
        else:
            rotations.append(np.eye(m))
    else:
        rotations.append(np.eye(m))
        if m == 1:
            rotations.append(-np.eye(1))
    for O in rotations:
        A = L0q @ O @ L0inv
        out.append(AffineMap(A, q.means[qi[0]] - A @ p.means[0]))
    return out
