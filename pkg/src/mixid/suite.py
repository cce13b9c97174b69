"""Desk-scale checks of affine identifiability and its counterexamples.

Distribution equality is tested by comparing analytic densities on a grid;
affine witnesses are searched over component matchings.
"""
from dataclasses import dataclass, field
import itertools
from typing import Optional

import numpy as np
from scipy.special import ndtr

from .disentangle import LatentStructure, check_subset_condition, recover_latent
from .errors import (AssumptionViolated, DimensionMismatch, MixIdError, NoValidPair,
                     PrerequisiteViolated, RepeatedSingularValues)
from .gmm import (AffineMap, affine_candidates, affine_pushforward, component_matchings, density,
                  gmm_from_arrays, make_gmm, maps_onto)
from .likelihood import GenerativeModel, noisy_density, observable_envelope
from .metrics import delta_l2
from .pwa import (Layer, NetworkSpec, PiecewiseAffineFunction, architecture_check,
                  classify_injectivity, compile_network, evaluate, level_rank)

GRID_POINTS = 2000
ATOM_EXCLUSION = 1e-6
INTERIOR_TOL = 1e-9
WITNESS_TOL = 1e-6


# --------------------------------------------------------------------------- catalog

def abs_decoder():
    return PiecewiseAffineFunction.from_intervals([(-np.inf, 0.0, -1.0, 0.0), (0.0, np.inf, 1.0, 0.0)])


def folded_priors(sigma=1.0):
    """Two three-component priors, not affinely related, with equal images under ``|z|``."""
    v = sigma ** 2
    P = make_gmm([(1 / 3, -2.0, v), (1 / 3, -1.0, v), (1 / 3, 3.0, v)])
    Q = make_gmm([(1 / 3, -2.0, v), (1 / 3, 1.0, v), (1 / 3, 3.0, v)])
    return P, Q


def folded_models(sigma=1.0):
    P, Q = folded_priors(sigma)
    f = abs_decoder()
    return GenerativeModel(P, f), GenerativeModel(Q, f)


def fold_pair_decoders():
    """Two weakly injective decoders with equal pushforwards of ``½N(-2,1) + ½N(2,1)``."""
    f = PiecewiseAffineFunction.from_intervals([
        (2.0, np.inf, 1.0, -4.0),
        (-2.0, 2.0, -1.0, 0.0),
        (-4.0, -2.0, 1.0, 4.0),
        (-np.inf, -4.0, 0.2, 0.8),
    ])
    g = PiecewiseAffineFunction.from_intervals([
        (4.0, np.inf, 1.0, -4.0),
        (2.0, 4.0, -1.0, 4.0),
        (-2.0, 2.0, 1.0, 0.0),
        (-4.0, -2.0, -1.0, -4.0),
        (-np.inf, -4.0, 0.2, 0.8),
    ])
    return f, g


def fold_pair_models():
    Y = make_gmm([(0.5, -2.0, 1.0), (0.5, 2.0, 1.0)])
    f, g = fold_pair_decoders()
    return GenerativeModel(Y, f), GenerativeModel(Y, g)


def half_abs_network():
    """Leaky-ReLU network (slope 1/2) computing ``|x|/2`` through widths 1 -> 2 -> 2 -> 1."""
    return NetworkSpec((
        Layer(np.array([[1.0], [-1.0]]), np.zeros(2), "leaky_relu", 0.5),
        Layer(np.array([[1.0, -1.0], [1.0, 1.0]]), np.zeros(2), "identity"),
        Layer(np.array([[0.0, 1.0]]), np.zeros(1), "identity"),
    ))


# --------------------------------------------------------------------------- densities on grids

def _prior_mass_1d(prior, lo, hi):
    mu, sd = prior.means[:, 0], np.sqrt(prior.covs[:, 0, 0])
    u = np.where(np.isposinf(hi), np.inf, (hi - mu) / sd)
    l = np.where(np.isneginf(lo), -np.inf, (lo - mu) / sd)
    return float(prior.weights @ (ndtr(u) - ndtr(l)))


def atoms_1d(f, prior):
    """``[(location, mass)]`` of the point masses created by constant pieces."""
    out = []
    for p in f.pieces:
        if p.rank() == 0:
            lo, hi = p.interval()
            mass = _prior_mass_1d(prior, lo, hi)
            if mass > 0:
                loc = float(p.b[0])
                for a in out:
                    if abs(a[0] - loc) < 1e-9:
                        a[1] += mass
                        break
                else:
                    out.append([loc, mass])
    return [tuple(a) for a in sorted(out)]


def grid_density(f, prior, X):
    """Absolutely continuous pushforward density at rows of ``X`` and a validity mask.

    Rows whose preimage touches a region boundary, or that lie in the image of
    a rank-deficient piece, are marked invalid (non-generic).
    """
    m = f.input_dim
    if f.output_dim != m:
        raise DimensionMismatch("grid densities need m = n")
    X = np.asarray(X, dtype=float).reshape(-1, m)
    dens = np.zeros(len(X))
    valid = np.ones(len(X), dtype=bool)
    for p in f.pieces:
        if p.rank() == m:
            Z = np.linalg.solve(p.A, (X - p.b).T).T
            viol = p.violation(Z)
            inside = viol < -INTERIOR_TOL
            valid &= ~(np.abs(viol) <= INTERIOR_TOL)
            if inside.any():
                dens[inside] += density(prior, Z[inside] if m > 1 else Z[inside, 0]) / abs(
                    np.linalg.det(p.A))
        else:
            Z, *_ = np.linalg.lstsq(p.A, (X - p.b).T, rcond=None)
            resid = np.linalg.norm(p.A @ Z + p.b[:, None] - X.T, axis=0)
            valid &= resid > ATOM_EXCLUSION
    return dens, valid


def _grid(models, n_points):
    m = models[0].prior.dim
    if m == 1:
        lo = min(observable_envelope(md)[0] for md in models)
        hi = max(observable_envelope(md)[1] for md in models)
        return np.linspace(lo, hi, n_points)[:, None]
    lows, highs = [], []
    for md in models:
        zlo, zhi = md.prior.envelope()
        corners = np.array(list(itertools.product(*zip(zlo, zhi))))
        # images of all region vertices inside the box are bounded by the box image under each piece
        imgs = np.vstack([corners @ p.A.T + p.b for p in md.decoder.pieces])
        lows.append(imgs.min(axis=0))
        highs.append(imgs.max(axis=0))
    lo, hi = np.min(lows, axis=0), np.max(highs, axis=0)
    k = int(np.ceil(np.sqrt(n_points)))
    axes = [np.linspace(lo[i], hi[i], k) for i in range(m)]
    g = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([a.ravel() for a in g])


@dataclass(frozen=True, eq=False)
class EqualityEvidence:
    grid: np.ndarray
    max_abs_diff: float
    max_rel_diff: float
    verdict: str
    tolerance: float
    n_excluded: int = 0
    atom_diff: Optional[float] = None
    notes: tuple = field(default=())

    def to_dict(self):
        return {"n_points": int(len(self.grid)), "n_excluded": self.n_excluded,
                "max_abs_diff": self.max_abs_diff, "max_rel_diff": self.max_rel_diff,
                "atom_diff": self.atom_diff, "verdict": self.verdict,
                "tolerance": self.tolerance, "notes": list(self.notes)}


def verify_pushforward_equality(m1, m2, tolerance=1e-10, n_points=GRID_POINTS):
    """Compare the observable densities of two models on a grid over their envelopes."""
    if m1.prior.dim != m2.prior.dim or m1.decoder.output_dim != m2.decoder.output_dim:
        return EqualityEvidence(np.zeros((0, 1)), np.inf, np.inf, "distinct", tolerance,
                                notes=("dimensions differ",))
    m = m1.prior.dim
    if m not in (1, 2):
        raise DimensionMismatch("equality checks are implemented for m = n in {1, 2}")
    X = _grid((m1, m2), n_points)
    notes = []
    atom_diff = None
    if m1.noise_sigma > 0 and m2.noise_sigma > 0:
        if m != 1:
            raise DimensionMismatch("noisy equality checks are 1D only")
        d1, d2 = noisy_density(m1, X[:, 0]), noisy_density(m2, X[:, 0])
        valid = np.ones(len(X), dtype=bool)
    elif m1.noise_sigma == 0 and m2.noise_sigma == 0:
        d1, v1 = grid_density(m1.decoder, m1.prior, X)
        d2, v2 = grid_density(m2.decoder, m2.prior, X)
        valid = v1 & v2
        if m == 1:
            a1, a2 = atoms_1d(m1.decoder, m1.prior), atoms_1d(m2.decoder, m2.prior)
            atom_diff = _atom_distance(a1, a2)
            for loc, _ in a1 + a2:
                valid &= np.abs(X[:, 0] - loc) > ATOM_EXCLUSION
        else:
            notes.append("singular parts from rank-deficient pieces are not compared in 2D")
    else:
        return EqualityEvidence(X, np.inf, np.inf, "distinct", tolerance,
                                notes=("one model is noisy and the other is not",))
    diff = np.abs(d1 - d2)[valid]
    scale = np.maximum(np.abs(d1), np.abs(d2))[valid]
    max_abs = float(diff.max()) if diff.size else 0.0
    rel = diff[scale > 1e-300] / scale[scale > 1e-300]
    max_rel = float(rel.max()) if rel.size else 0.0
    equal = max_abs < tolerance and (atom_diff is None or atom_diff < tolerance)
    return EqualityEvidence(X, max_abs, max_rel, "equal" if equal else "distinct", tolerance,
                            int((~valid).sum()), atom_diff, tuple(notes))


def _atom_distance(a1, a2):
    locs = sorted({round(l, 9) for l, _ in a1 + a2})
    mass = lambda atoms, x: sum(w for l, w in atoms if abs(l - x) < 1e-9)
    return max((abs(mass(a1, x) - mass(a2, x)) for x in locs), default=0.0)


# --------------------------------------------------------------------------- witnesses

def recover_affine_witness(p, q, tolerance=WITNESS_TOL):
    """First ``h`` (lexicographic component matching) with ``h♯p = q``, else ``None``."""
    if p.dim != q.dim or p.n_components != q.n_components:
        return None
    for matching in component_matchings(p.n_components):
        for h in affine_candidates(p, q, matching):
            if h.condition() < 1e12 and maps_onto(p, q, h, matching, tolerance):
                return h
    return None


def verify_npmix_theorem(m1, m2, tolerance=1e-8, witness_tol=WITNESS_TOL):
    """Unequal pushforwards, or an affine map relating the priors.

    Raises :class:`PrerequisiteViolated` when a decoder is not certified
    weakly injective.
    """
    for name, mdl in (("first", m1), ("second", m2)):
        verdict = classify_injectivity(mdl.decoder)
        if level_rank(verdict.level) < level_rank("weakly_injective"):
            raise PrerequisiteViolated(
                f"{name} decoder is {verdict.level}; the theorem needs weak injectivity")
    ev = verify_pushforward_equality(m1, m2, tolerance)
    if ev.verdict == "distinct":
        return True
    return recover_affine_witness(m1.prior, m2.prior, witness_tol) is not None


# --------------------------------------------------------------------------- recovery pipeline

def observed_latent_mixture(model, piece=None):
    """Pull the prior through one full-rank piece, returning a mixture in ``R^m``.

    This plays the role of the oracle that hands over the observed mixture
    on a region where the decoder is invertible. For ``n > m`` the image is
    expressed in an orthonormal basis of the piece's column space.
    """
    f, m = model.decoder, model.prior.dim
    if piece is None:
        full = [k for k, p in enumerate(f.pieces) if p.rank() == m]
        if not full:
            raise AssumptionViolated("decoder has no full-rank piece").with_stage("oracle")
        piece = full[0]
    p = f.pieces[piece]
    A, b = p.A, p.b
    if A.shape[0] > m:
        Q, _ = np.linalg.qr(A)
        A, b = Q.T @ A, Q.T @ b
    return affine_pushforward(model.prior, AffineMap(A, b))


def end_to_end_recovery(observed, structure=None, truth=None, piece=None):
    """Recover the latent mixture up to permutation, scaling and translation.

    Returns ``(z_gmm, report)``; errors carry the stage at which they arose.
    """
    try:
        y = observed_latent_mixture(observed, piece)
    except MixIdError as exc:
        raise exc if exc.stage else exc.with_stage("oracle")
    try:
        z, result = recover_latent(y, truth=truth)
    except (NoValidPair, RepeatedSingularValues) as exc:
        raise AssumptionViolated(str(exc)).with_stage("unmixing") from exc
    except MixIdError as exc:
        raise exc.with_stage("unmixing")
    report = {"pair": list(result.pair), "singular_values": result.singular_values.tolist(),
              "conditionally_factorial": True}
    if result.residual is not None:
        report["residual"] = result.residual
    if structure is not None:
        report["subset_condition"] = check_subset_condition(structure)
    return z, report


# --------------------------------------------------------------------------- random constructions

def random_invertible(m, rng, max_cond=50.0):
    while True:
        A = rng.normal(size=(m, m))
        if np.linalg.cond(A) < max_cond:
            return AffineMap(A, rng.normal(size=m))


def random_gmm(m, K, rng, diagonal=False, spread=2.0):
    w = rng.dirichlet(np.full(K, 2.0))
    mus = rng.normal(scale=spread, size=(K, m))
    covs = []
    for _ in range(K):
        if diagonal:
            covs.append(np.diag(rng.uniform(0.3, 2.0, size=m)))
        else:
            B = rng.normal(size=(m, m))
            covs.append(B @ B.T / m + 0.3 * np.eye(m))
    return gmm_from_arrays(w, mus, np.array(covs))


def random_decoder(m, rng, max_tries=50):
    """Random compiled network classified at least weakly injective."""
    for _ in range(max_tries):
        if m == 1:
            width = int(rng.integers(2, 4))
            act = "relu" if rng.random() < 0.5 else "leaky_relu"
            layers = (Layer(rng.normal(size=(width, 1)), rng.normal(size=width), act, 0.3),
                      Layer(rng.normal(size=(1, width)), rng.normal(size=1), "identity"))
        else:
            layers = (Layer(rng.normal(size=(m, m)), rng.normal(size=m), "leaky_relu", 0.3),
                      Layer(rng.normal(size=(m, m)), rng.normal(size=m), "identity"))
        net = NetworkSpec(layers)
        f = compile_network(net)
        verdict = classify_injectivity(f)
        if level_rank(verdict.level) >= level_rank("weakly_injective"):
            return net, f, verdict
    raise AssumptionViolated("no weakly injective decoder found")


def constructed_pair(seed):
    """``(P, f)`` and ``(h♯P, f ∘ h^{-1})`` for a seeded random weakly injective ``f``."""
    rng = np.random.default_rng(seed)
    m = 1 + seed % 2
    K = int(rng.integers(1, 4))
    P = random_gmm(m, K, rng)
    _, f, verdict = random_decoder(m, rng)
    h = random_invertible(m, rng)
    m1 = GenerativeModel(P, f)
    m2 = GenerativeModel(affine_pushforward(P, h), f.precompose(h.inverse()))
    return m1, m2, h, verdict


def theorem_sweep(trials=50, seed=0):
    """Per-trial outcomes of the theorem check on constructed equivalent pairs."""
    rows = []
    for t in range(trials):
        m1, m2, h, verdict = constructed_pair(seed + t)
        ok = verify_npmix_theorem(m1, m2)
        witness = recover_affine_witness(m1.prior, m2.prior)
        err = (delta_l2(affine_pushforward(m1.prior, witness), m2.prior)
               if witness is not None else float("inf"))
        rows.append({"trial": t, "seed": seed + t, "dim": m1.prior.dim,
                     "components": m1.prior.n_components, "pieces": len(m1.decoder),
                     "level": verdict.level, "holds": bool(ok),
                     "witness_found": witness is not None, "witness_delta_l2": float(err)})
    return rows


# --------------------------------------------------------------------------- case reports

def case_fold_priors():
    a, b = folded_models(1.0)
    ev = verify_pushforward_equality(a, b, 1e-10)
    w = recover_affine_witness(a.prior, b.prior, WITNESS_TOL)
    try:
        verify_npmix_theorem(a, b)
        theorem = "applies"
    except PrerequisiteViolated as exc:
        theorem = f"not applicable: {exc}"
    return {"case": "folded-priors", "equality": ev.to_dict(), "witness": None if w is None else w.to_dict(),
            "theorem": theorem, "passed": ev.verdict == "equal" and w is None}


def case_fold_decoders():
    from .likelihood import affine_equivalent
    a, b = fold_pair_models()
    ev = verify_pushforward_equality(a, b, 1e-10)
    eq, h = affine_equivalent(a, b)
    levels = [classify_injectivity(m.decoder).level for m in (a, b)]
    return {"case": "fold-pair", "equality": ev.to_dict(), "affine_equivalent": eq,
            "witness": None if h is None else h.to_dict(), "injectivity": levels,
            "passed": ev.verdict == "equal" and not eq}


def case_half_abs(n_probes=100):
    net = half_abs_network()
    f = compile_network(net)
    x = np.linspace(-5.0, 5.0, n_probes)
    err = float(np.max(np.abs(evaluate(f, x) - np.abs(x) / 2)))
    verdict = classify_injectivity(f)
    arch = architecture_check(net)
    return {"case": "half-abs", "max_abs_error": err, "pieces": len(f),
            "injectivity": verdict.to_dict(), "architecture": arch.to_dict(),
            "passed": err < 1e-12 and verdict.level == "not_weakly_injective"
            and arch.level == "unknown"}


def run_case(name, trials=50, seed=0):
    if name == "folded-priors":
        return case_fold_priors()
    if name == "fold-pair":
        return case_fold_decoders()
    if name == "half-abs":
        return case_half_abs()
    if name == "sweep":
        rows = theorem_sweep(trials, seed)
        return {"case": "sweep", "trials": len(rows), "holds": sum(r["holds"] for r in rows),
                "max_witness_delta_l2": max(r["witness_delta_l2"] for r in rows),
                "passed": all(r["holds"] and r["witness_delta_l2"] < 1e-6 for r in rows)}
    raise ValueError(f"unknown case {name!r}")
