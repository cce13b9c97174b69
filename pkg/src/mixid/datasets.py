"""Synthetic clustered datasets: pinwheel spirals and noisy parallelograms."""
from dataclasses import dataclass

import numpy as np

RADIAL_STD = 0.3
TANGENTIAL_STD = 0.05
WARP_RATE = 0.25


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "pinwheel"
    n_samples: int = 5000
    n_clusters: int = 3
    noise: float = 0.05
    ambient_dim: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("pinwheel", "parallelograms"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.n_samples < 1 or self.n_clusters < 1:
            raise ValueError("n_samples and n_clusters must be >= 1")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")
        if self.ambient_dim < 2:
            raise ValueError("ambient_dim must be >= 2")


def gen_pinwheel(spec, radial_std=RADIAL_STD, tangential_std=TANGENTIAL_STD, rate=WARP_RATE):
    """Spiral arms: radial Gaussians centred at radius 1, twisted by ``rate * r``.

    Returns ``(X, labels)``.
    """
    if spec.ambient_dim != 2:
        raise ValueError("pinwheel data is two-dimensional")
    rng = np.random.default_rng(spec.seed)
    K = spec.n_clusters
    labels = rng.integers(0, K, size=spec.n_samples)
    feats = rng.standard_normal((spec.n_samples, 2)) * np.array([radial_std, tangential_std])
    feats[:, 0] += 1.0
    angle = 2.0 * np.pi * labels / K + rate * feats[:, 0]
    c, s = np.cos(angle), np.sin(angle)
    X = np.column_stack([c * feats[:, 0] - s * feats[:, 1], s * feats[:, 0] + c * feats[:, 1]])
    return X, labels


def random_parallelograms(K, rng, spread=4.0, min_area=0.5):
    """``K`` parallelograms as ``(corner, edges)`` with ``edges`` a 2x2 column pair."""
    out = []
    while len(out) < K:
        corner = rng.uniform(-spread, spread, size=2)
        edges = rng.normal(scale=1.5, size=(2, 2))
        if abs(np.linalg.det(edges)) >= min_area:
            out.append((corner, edges))
    return out


def in_parallelogram(x, corner, edges, tol=1e-12):
    """Whether rows of ``x`` lie in ``corner + edges @ [0,1]^2``."""
    u = np.linalg.solve(edges, (np.atleast_2d(x) - corner).T).T
    return np.all((u >= -tol) & (u <= 1 + tol), axis=1)


def gen_parallelograms(spec, return_geometry=False):
    """Uniform samples from random parallelograms plus isotropic Gaussian noise.

    For ``ambient_dim > 2`` the plane is embedded by a seeded random affine
    map of full column rank and the noise is added in the ambient space.
    """
    rng = np.random.default_rng(spec.seed)
    shapes = random_parallelograms(spec.n_clusters, rng)
    labels = rng.integers(0, spec.n_clusters, size=spec.n_samples)
    u = rng.uniform(size=(spec.n_samples, 2))
    corners = np.array([c for c, _ in shapes])
    edges = np.array([e for _, e in shapes])
    X = corners[labels] + np.einsum("nij,nj->ni", edges[labels], u)
    embed = None
    if spec.ambient_dim > 2:
        while True:
            B = rng.standard_normal((spec.ambient_dim, 2))
            if np.linalg.cond(B) < 10:
                break
        t = rng.standard_normal(spec.ambient_dim)
        embed = (B, t)
        X = X @ B.T + t
    if spec.noise > 0:
        X = X + spec.noise * rng.standard_normal(X.shape)
    if return_geometry:
        return X, labels, {"parallelograms": shapes, "embedding": embed}
    return X, labels


def generate(spec):
    if spec.kind == "pinwheel":
        return gen_pinwheel(spec)
    return gen_parallelograms(spec)
