"""Exact likelihoods for noisy piecewise-affine decoders and grid-search MLE.

Within an affine piece ``f(z) = a z + c`` the integrand ``prior(z) N(x; f(z), σ²)``
is a product of Gaussians, so the marginal density is a sum of closed-form
terms weighted by normal CDF differences over each piece's interval.
"""
from dataclasses import dataclass, field
import itertools
from typing import Optional, Sequence
import warnings

import numpy as np
from scipy.special import ndtr

from .errors import DimensionMismatch, GridTooLarge, NumericalUnderflow
from .gmm import (AffineMap, GaussianMixture, affine_candidates, component_matchings,
                  make_gmm, maps_onto)
from .pwa import (Layer, NetworkSpec, PiecewiseAffineFunction, compile_network, evaluate)
from .pwa import pushforward_density as _pwa_pushforward
from .quadrature import composite_nodes

MAX_CELLS = 10 ** 7
MINIMIZER_TOL = 1e-9
EQUIV_TOL = 1e-6
DENSITY_FLOOR = 1e-300
ENVELOPE_SD = 8.0
PARAM_NAMES = ("alpha1", "alpha2", "beta1", "beta2", "pi1", "pi2")

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True, eq=False)
class GenerativeModel:
    """``x = f(z) + eps`` with ``z ~ prior`` and ``eps ~ N(0, noise_sigma^2 I)``."""

    prior: GaussianMixture
    decoder: PiecewiseAffineFunction
    noise_sigma: float = 0.0
    params: Optional[dict] = field(default=None, compare=False)

    def __post_init__(self):
        if isinstance(self.decoder, NetworkSpec):
            object.__setattr__(self, "decoder", compile_network(self.decoder))
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.decoder.input_dim != self.prior.dim:
            raise DimensionMismatch(f"decoder input dim {self.decoder.input_dim} "
                                    f"vs prior dim {self.prior.dim}")


def single_layer_decoder(alpha, beta, pi):
    """``z -> alpha1 ReLU(beta1 z + pi1) + alpha2 ReLU(beta2 z + pi2)``."""
    hidden = Layer(np.array(beta, dtype=float).reshape(2, 1), np.array(pi, dtype=float), "relu")
    out = Layer(np.array(alpha, dtype=float).reshape(1, 2), np.zeros(1), "identity")
    return compile_network(NetworkSpec((hidden, out)))


def pushforward_density(model, x):
    """Noiseless density of ``f(Z)`` at a generic point (change of variables)."""
    return _pwa_pushforward(model.decoder, model.prior, x)


# --------------------------------------------------------------------------- closed-form pieces

def _piece_mass(x, lo, hi, a, c, mu, s2, sigma):
    """``∫_lo^hi N(z; mu, s2) N(x; a z + c, sigma^2) dz`` with full broadcasting."""
    vx = sigma ** 2 + a * a * s2
    mx = a * mu + c
    r = x - mx
    g = np.exp(-0.5 * r * r / vx - _LOG_SQRT_2PI) / np.sqrt(vx)
    m_post = mu + a * s2 * r / vx
    sd_post = np.sqrt(s2 * sigma ** 2 / vx)
    with np.errstate(invalid="ignore"):
        u = (hi - m_post) / sd_post
        l = (lo - m_post) / sd_post
    u = np.where(np.isposinf(hi), np.inf, u)
    l = np.where(np.isneginf(lo), -np.inf, l)
    # difference in the tail where it is most accurate
    mass = np.where(l > 0, ndtr(-l) - ndtr(-u), ndtr(u) - ndtr(l))
    mass = np.where(hi > lo, mass, 0.0)
    return g * np.maximum(mass, 0.0)


def decoder_intervals(decoder):
    """``(lo, hi, slope, intercept)`` arrays of a 1D decoder's pieces."""
    if decoder.input_dim != 1 or decoder.output_dim != 1:
        raise DimensionMismatch("interval form needs a 1D -> 1D decoder")
    rows = [(*p.interval(), p.A[0, 0], p.b[0]) for p in decoder.pieces]
    return tuple(np.array(col, dtype=float) for col in zip(*rows))


def noisy_density(model, x):
    """Density of ``f(Z) + eps`` at ``x`` (scalar or 1D array), 1D latent and observation."""
    if model.noise_sigma <= 0:
        raise ValueError("noisy density needs noise_sigma > 0")
    lo, hi, a, c = decoder_intervals(model.decoder)
    xa = np.asarray(x, dtype=float)
    X = xa.reshape(-1)[:, None, None]
    w = model.prior.weights
    mu = model.prior.means[:, 0]
    s2 = model.prior.covs[:, 0, 0]
    terms = _piece_mass(X, lo[None, :, None], hi[None, :, None], a[None, :, None],
                        c[None, :, None], mu[None, None, :], s2[None, None, :], model.noise_sigma)
    out = np.einsum("npk,k->n", terms, w)
    return float(out[0]) if xa.ndim == 0 else out.reshape(xa.shape)


def observable_envelope(model, nsd=ENVELOPE_SD):
    """Interval carrying all but a negligible part of the observable density."""
    zlo, zhi = model.prior.envelope(nsd)
    zlo, zhi = float(np.ravel(zlo)[0]), float(np.ravel(zhi)[0])
    lo, hi, _, _ = decoder_intervals(model.decoder)
    knots = np.concatenate([[zlo, zhi], lo[(lo > zlo) & (lo < zhi)], hi[(hi > zlo) & (hi < zhi)]])
    vals = np.asarray(evaluate(model.decoder, knots))
    return float(vals.min() - nsd * model.noise_sigma), float(vals.max() + nsd * model.noise_sigma)


def nll_nodes(gt, panel_sd=2.0):
    """Quadrature nodes, weights and ground-truth density for expectations under ``gt``."""
    lo, hi = observable_envelope(gt)
    panels = int(np.ceil((hi - lo) / (panel_sd * gt.noise_sigma)))
    x, w = composite_nodes(lo, hi, panels)
    return x, w, noisy_density(gt, x)


def _cross_entropy(q, w, p):
    low = q < DENSITY_FLOOR
    if np.any(low & (p * w > 0)):
        warnings.warn("model density below 1e-300 floored", NumericalUnderflow, stacklevel=3)
    return -np.dot(w * p, np.log(np.maximum(q, DENSITY_FLOOR)))


def population_nll(candidate, ground_truth, nodes=None):
    """Cross-entropy ``E_{x ~ gt}[-log candidate(x)]`` by composite Gauss-Legendre."""
    for mdl in (candidate, ground_truth):
        if mdl.prior.dim != 1 or mdl.decoder.output_dim != 1:
            raise DimensionMismatch("population NLL is implemented for 1D models")
        if mdl.noise_sigma <= 0:
            raise ValueError("population NLL needs noise_sigma > 0")
    x, w, p = nodes if nodes is not None else nll_nodes(ground_truth)
    return float(_cross_entropy(noisy_density(candidate, x), w, p))


# --------------------------------------------------------------------------- grids

def _values(lo, hi, step):
    if not step > 0:
        raise ValueError("grid steps must be positive")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(float(lo) + float(step) * np.arange(n), 12)


def simplex_grid(J, step):
    """All weight vectors with entries in ``step * N`` summing to one."""
    n = int(round(1.0 / step))
    if abs(n * step - 1.0) > 1e-9:
        raise ValueError(f"lambda step {step} does not divide 1")
    out = [np.array(c, dtype=float) / n
           for c in itertools.product(range(n + 1), repeat=J) if sum(c) == n]
    return np.array(out)


@dataclass(frozen=True)
class GridSpec:
    """Parameter grids; ranges are inclusive ``(lo, hi, step)`` triples."""

    J_choices: Sequence[int] = (2, 3)
    lambda_step: float = 0.1
    mu: tuple = (-4.0, 4.0, 0.5)
    alpha: tuple = (-2.0, 2.0, 0.5)
    beta: tuple = (-2.0, 2.0, 0.5)
    pi: tuple = (-2.0, 2.0, 0.5)
    prior_var: float = 1.0
    noise_sigma: float = 0.5

    def __post_init__(self):
        if any(J not in (1, 2, 3) for J in self.J_choices):
            raise ValueError("J must be in {1, 2, 3}")
        for name in ("mu", "alpha", "beta", "pi"):
            lo, hi, step = getattr(self, name)
            if not step > 0 or hi < lo:
                raise ValueError(f"bad {name} range {getattr(self, name)}")
        if not self.lambda_step > 0:
            raise ValueError("lambda step must be positive")

    def values(self, name):
        return _values(*getattr(self, name))

    def decoder_table(self):
        """Every ``(alpha1, alpha2, beta1, beta2, pi1, pi2)`` combination."""
        a, b, p = self.values("alpha"), self.values("beta"), self.values("pi")
        return np.array(list(itertools.product(a, a, b, b, p, p)))

    def prior_table(self, J):
        """``(lambdas, mu_index)`` rows for ``J`` components."""
        lams = simplex_grid(J, self.lambda_step)
        idx = np.array(list(itertools.product(range(len(self.values("mu"))), repeat=J)))
        return [(lam, ix) for lam in lams for ix in idx]

    def n_cells(self):
        nd = len(self.values("alpha")) ** 2 * len(self.values("beta")) ** 2 * len(self.values("pi")) ** 2
        nmu = len(self.values("mu"))
        return sum(len(simplex_grid(J, self.lambda_step)) * nmu ** J for J in self.J_choices) * nd


def relu_pair_intervals(dec):
    """Vectorised pieces of ``alpha1 ReLU(beta1 z + pi1) + alpha2 ReLU(beta2 z + pi2)``.

    ``dec`` is ``(D, 6)``; returns four ``(D, 3)`` arrays ``lo, hi, slope, intercept``
    (empty intervals have ``lo == hi``).
    """
    al, be, pi = dec[:, 0:2], dec[:, 2:4], dec[:, 4:6]
    with np.errstate(divide="ignore", invalid="ignore"):
        brk = np.where(be != 0, -pi / np.where(be != 0, be, 1.0), np.inf)
    brk = np.sort(brk, axis=1)
    s1, s2 = brk[:, 0], brk[:, 1]
    lo = np.column_stack([np.full_like(s1, -np.inf), s1, s2])
    hi = np.column_stack([s1, s2, np.full_like(s1, np.inf)])
    rep = np.empty_like(lo)
    rep[:, 0] = np.where(np.isfinite(s1), s1 - 1.0, 0.0)
    rep[:, 1] = np.where(np.isfinite(s2), 0.5 * (s1 + s2), np.where(np.isfinite(s1), s1 + 1.0, 0.0))
    rep[:, 2] = np.where(np.isfinite(s2), s2 + 1.0, 0.0)
    rep = np.where(np.isfinite(rep), rep, 0.0)
    pre = be[:, None, :] * rep[:, :, None] + pi[:, None, :]
    act = (pre > 0).astype(float)
    slope = np.sum(al[:, None, :] * be[:, None, :] * act, axis=2)
    icpt = np.sum(al[:, None, :] * pi[:, None, :] * act, axis=2)
    hi = np.where(hi < lo, lo, hi)
    return lo, hi, slope, icpt


def _component_table(dec, mus, var, sigma, x):
    """``G[d, v, n]``: mass of decoder ``d`` with unit-weight component ``N(mus[v], var)`` at ``x[n]``."""
    lo, hi, a, c = relu_pair_intervals(dec)
    G = np.zeros((dec.shape[0], len(mus), len(x)))
    for k in range(3):
        G += _piece_mass(x[None, None, :], lo[:, k, None, None], hi[:, k, None, None],
                         a[:, k, None, None], c[:, k, None, None], mus[None, :, None], var, sigma)
    return G


def nll_table(gt, dec, weight_rows, mus, var, sigma, nodes=None, chunk=256):
    """NLL for every (weight row, decoder) pair.

    ``weight_rows[c, v]`` is the prior weight placed on ``N(mus[v], var)``.
    Returns an array of shape ``(len(weight_rows), len(dec))``.
    """
    x, w, p = nodes if nodes is not None else nll_nodes(gt)
    wp = w * p
    out = np.empty((weight_rows.shape[0], dec.shape[0]))
    underflow = False
    for s in range(0, dec.shape[0], chunk):
        G = _component_table(dec[s:s + chunk], mus, var, sigma, x)
        Q = np.einsum("cv,dvn->cdn", weight_rows, G)
        underflow |= bool(np.any(Q < DENSITY_FLOOR))
        out[:, s:s + chunk] = -np.log(np.maximum(Q, DENSITY_FLOOR)) @ wp
    if underflow:
        warnings.warn("model density below 1e-300 floored", NumericalUnderflow, stacklevel=2)
    return out


def params_model(params, prior_var, noise_sigma):
    """Model from a ``{"lambda", "mu", "alpha", "beta", "pi"}`` parameter dict.

    Zero-weight components are dropped from the prior.
    """
    comps = [(l, m, prior_var) for l, m in zip(params["lambda"], params["mu"]) if l > 0]
    prior = make_gmm(comps)
    dec = single_layer_decoder(params["alpha"], params["beta"], params["pi"])
    return GenerativeModel(prior, dec, noise_sigma, params=dict(params))


@dataclass(frozen=True, eq=False)
class Landscape:
    """Every evaluated cell: parameters and NLL, in deterministic index order."""

    J: np.ndarray
    lambdas: np.ndarray
    mus: np.ndarray
    decoders: np.ndarray
    nll: np.ndarray
    mode: str = "full"

    def __len__(self):
        return len(self.nll)

    def params(self, i):
        J = int(self.J[i])
        return {"J": J, "lambda": self.lambdas[i, :J].tolist(), "mu": self.mus[i, :J].tolist(),
                "alpha": self.decoders[i, 0:2].tolist(), "beta": self.decoders[i, 2:4].tolist(),
                "pi": self.decoders[i, 4:6].tolist()}

    def rows(self):
        for i in range(len(self)):
            yield self.params(i), float(self.nll[i])

    def header(self):
        lam = [f"lambda{j + 1}" for j in range(3)]
        mu = [f"mu{j + 1}" for j in range(3)]
        return ["J", *lam, *mu, *PARAM_NAMES, "nll"]

    def table(self):
        """Rows as lists matching :meth:`header`; absent components are left blank."""
        for i in range(len(self)):
            J = int(self.J[i])
            lam = [repr(float(v)) if j < J else "" for j, v in enumerate(self.lambdas[i])]
            mu = [repr(float(v)) if j < J else "" for j, v in enumerate(self.mus[i])]
            yield [str(J), *lam, *mu, *(repr(float(v)) for v in self.decoders[i]),
                   repr(float(self.nll[i]))]


def gt_params_vector(params):
    return np.array([*params["alpha"], *params["beta"], *params["pi"]], dtype=float)


def grid_search(gt, grid, tol=MINIMIZER_TOL):
    """Exhaustive population-NLL scan.

    Returns ``(minimizers, landscape, reference)`` where ``reference`` is the
    ground truth's own NLL (its entropy), the floor every cell must respect.
    """
    if abs(gt.noise_sigma - grid.noise_sigma) > 1e-15:
        raise ValueError("grid noise must equal the ground-truth noise (sigma is known)")
    cells = grid.n_cells()
    if cells > MAX_CELLS:
        raise GridTooLarge(f"{cells} cells exceeds {MAX_CELLS}")
    nodes = nll_nodes(gt)
    dec = grid.decoder_table()
    mus = grid.values("mu")
    Js, lams, mus_all, decs, nlls = [], [], [], [], []
    for J in grid.J_choices:
        table = grid.prior_table(J)
        W = np.zeros((len(table), len(mus)))
        for r, (lam, ix) in enumerate(table):
            np.add.at(W[r], ix, lam)
        vals = nll_table(gt, dec, W, mus, grid.prior_var, grid.noise_sigma, nodes)
        lam_pad = np.zeros((len(table), 3))
        mu_pad = np.zeros((len(table), 3))
        for r, (lam, ix) in enumerate(table):
            lam_pad[r, :J] = lam
            mu_pad[r, :J] = mus[ix]
        nC, nD = vals.shape
        Js.append(np.full(nC * nD, J))
        lams.append(np.repeat(lam_pad, nD, axis=0))
        mus_all.append(np.repeat(mu_pad, nD, axis=0))
        decs.append(np.tile(dec, (nC, 1)))
        nlls.append(vals.ravel())
    land = Landscape(np.concatenate(Js), np.vstack(lams), np.vstack(mus_all), np.vstack(decs),
                     np.concatenate(nlls))
    reference = population_nll(gt, gt, nodes)
    best = land.nll.min()
    idx = np.flatnonzero(land.nll <= best + tol)
    minimizers = [params_model(land.params(i), grid.prior_var, grid.noise_sigma) for i in idx]
    return minimizers, land, reference


def grid_slice(gt, grid, name):
    """Vary one parameter over its grid with the others held at the ground truth.

    ``name`` is one of ``alpha1 .. pi2`` or ``mu1 .. muJ``.
    """
    params = gt.params
    if params is None:
        raise ValueError("slice mode needs a ground truth built from parameters")
    nodes = nll_nodes(gt)
    J = len(params["lambda"])
    base_dec = gt_params_vector(params)
    lam = np.array(params["lambda"], dtype=float)
    mu = np.array(params["mu"], dtype=float)
    if name in PARAM_NAMES:
        k = PARAM_NAMES.index(name)
        grid_vals = grid.values(name[:-1])
        dec = np.tile(base_dec, (len(grid_vals), 1))
        dec[:, k] = grid_vals
        W = lam[None, :]
        vals = nll_table(gt, dec, W, mu, grid.prior_var, grid.noise_sigma, nodes)[0]
        lam_rows = np.tile(lam, (len(grid_vals), 1))
        mu_rows = np.tile(mu, (len(grid_vals), 1))
    elif name.startswith("mu"):
        k = int(name[2:]) - 1
        grid_vals = grid.values("mu")
        mu_rows = np.tile(mu, (len(grid_vals), 1))
        mu_rows[:, k] = grid_vals
        vals = np.empty(len(grid_vals))
        for r, row in enumerate(mu_rows):
            vals[r] = nll_table(gt, base_dec[None, :], lam[None, :], row, grid.prior_var,
                                grid.noise_sigma, nodes)[0, 0]
        dec = np.tile(base_dec, (len(grid_vals), 1))
        lam_rows = np.tile(lam, (len(grid_vals), 1))
    else:
        raise ValueError(f"unknown slice parameter {name!r}")
    pad = lambda a: np.hstack([a, np.zeros((a.shape[0], 3 - a.shape[1]))])
    return Landscape(np.full(len(vals), J), pad(lam_rows), pad(mu_rows), dec, vals, mode=f"slice:{name}")


# --------------------------------------------------------------------------- equivalence

def _latent_probes(prior, n=200, seed=0):
    from .gmm import sample
    half = n // 2
    pts = sample(prior, half, seed)
    lo, hi = prior.envelope()
    rng = np.random.default_rng(seed + 1)
    spread = rng.uniform(lo, hi, size=(n - half, prior.dim))
    return np.vstack([pts, spread])


def affine_equivalent(model1, model2, tol=EQUIV_TOL, n_probes=200, seed=0):
    """Search for ``h`` with ``prior2 = h♯prior1`` and ``decoder2 = decoder1 ∘ h^{-1}``."""
    p, q = model1.prior, model2.prior
    if p.dim != q.dim or p.n_components != q.n_components:
        return False, None
    if abs(model1.noise_sigma - model2.noise_sigma) > tol:
        return False, None
    probes = _latent_probes(q, n_probes, seed)
    f2 = np.atleast_2d(np.asarray(evaluate(model2.decoder, probes))).reshape(len(probes), -1)
    scale = max(1.0, float(np.max(np.abs(f2))))
    for matching in component_matchings(p.n_components):
        for h in affine_candidates(p, q, matching):
            if h.condition() >= 1e12 or not maps_onto(p, q, h, matching, tol):
                continue
            back = h.inverse()(probes)
            f1 = np.atleast_2d(np.asarray(evaluate(model1.decoder, back))).reshape(len(probes), -1)
            if np.max(np.abs(f1 - f2)) <= tol * scale:
                return True, h
    return False, None


def random_ground_truth(grid, J, rng, dead_component=False, dead_unit=False, max_tries=1000):
    """Draw on-grid ground-truth parameters with a weakly injective decoder.

    Live components get distinct means and equal weights. ``dead_component``
    appends a zero-weight component; ``dead_unit`` zeroes ``alpha2``, the
    misspecified single-neuron case.
    """
    from .pwa import classify_injectivity, level_rank
    mus, a_vals = grid.values("mu"), grid.values("alpha")
    b_vals, p_vals = grid.values("beta"), grid.values("pi")
    live = J - 1 if dead_component else J
    lam = simplex_grid(live, grid.lambda_step)
    for _ in range(max_tries):
        mu = rng.choice(mus, size=J, replace=J > len(mus))
        if len(set(mu[:live].tolist())) < live:
            continue
        weights = lam[rng.integers(len(lam))]
        if np.any(weights == 0):
            continue
        alpha = rng.choice(a_vals, size=2)
        beta = rng.choice(b_vals, size=2)
        pi = rng.choice(p_vals, size=2)
        if dead_unit:
            alpha[1] = 0.0
        elif np.any(alpha == 0) or np.any(beta == 0):
            continue
        params = {"lambda": [*weights.tolist(), *([0.0] if dead_component else [])],
                  "mu": mu.tolist(), "alpha": alpha.tolist(), "beta": beta.tolist(),
                  "pi": pi.tolist()}
        model = params_model(params, grid.prior_var, grid.noise_sigma)
        if level_rank(classify_injectivity(model.decoder).level) >= level_rank("weakly_injective"):
            return model
    raise ValueError("no admissible ground truth on this grid")
