import warnings

import numpy as np
import pytest
from scipy import integrate, stats

from mixid.errors import GridTooLarge
from mixid.gmm import AffineMap, affine_pushforward, make_gmm
from mixid.likelihood import (GenerativeModel, GridSpec, affine_equivalent, grid_search,
                              grid_slice, noisy_density, observable_envelope, params_model,
                              population_nll, pushforward_density, random_ground_truth,
                              relu_pair_intervals, simplex_grid, single_layer_decoder)
from mixid.pwa import PiecewiseAffineFunction, evaluate
from mixid.suite import abs_decoder, fold_pair_models, folded_priors

STD = make_gmm([(1.0, 0.0, 1.0)])


def relu(x):
    return np.maximum(x, 0.0)


def quad_noisy_density(prior, fn, sigma, x, breaks):
    """Adaptive quadrature of prior(z) * N(x; fn(z), sigma^2) over the latent line."""
    w, mu, s2 = prior.weights, prior.means[:, 0], prior.covs[:, 0, 0]
    pz = lambda z: float(np.sum(w * stats.norm.pdf(z, mu, np.sqrt(s2))))
    f = lambda z: pz(z) * stats.norm.pdf(x, fn(z), sigma)
    lo, hi = mu.min() - 12 * np.sqrt(s2.max()), mu.max() + 12 * np.sqrt(s2.max())
    return integrate.quad(f, lo, hi, points=breaks, limit=400, epsabs=1e-14, epsrel=1e-12)[0]


def model(params, sigma=0.5):
    return params_model(params, 1.0, sigma)


GT = {"lambda": [0.5, 0.5], "mu": [-2.0, 2.0], "alpha": [1.0, -1.0],
      "beta": [1.0, 1.0], "pi": [0.0, -1.0]}


# --------------------------------------------------------------------------- decoders

def test_decoder_single_relu():
    f = single_layer_decoder((1, 0), (1, 0), (0, 0))
    z = np.linspace(-3, 3, 61)
    np.testing.assert_allclose(evaluate(f, z), relu(z), atol=1e-15)


def test_decoder_abs():
    f = single_layer_decoder((1, 1), (1, -1), (0, 0))
    z = np.linspace(-3, 3, 61)
    np.testing.assert_allclose(evaluate(f, z), np.abs(z), atol=1e-15)


def test_decoder_two_kinks():
    f = single_layer_decoder((1, 1), (1, 1), (0, -1))
    z = np.array([-2.0, 0.0, 0.5, 1.0, 3.0])
    np.testing.assert_allclose(evaluate(f, z), [0.0, 0.0, 0.5, 1.0, 5.0], atol=1e-15)


def test_relu_pair_intervals_agree_with_compiled():
    rng = np.random.default_rng(0)
    z = rng.normal(scale=3, size=400)
    for _ in range(20):
        a, b, p = rng.choice([-1.0, -0.5, 0.0, 0.5, 1.0], size=(3, 2))
        dec = np.array([*a, *b, *p])
        lo, hi, s, c = relu_pair_intervals(dec[None, :])
        expect = a[0] * relu(b[0] * z + p[0]) + a[1] * relu(b[1] * z + p[1])
        got = np.zeros_like(z)
        for k in range(lo.shape[1]):
            inside = (z >= lo[0, k]) & (z < hi[0, k])
            got[inside] = s[0, k] * z[inside] + c[0, k]
        np.testing.assert_allclose(got, expect, atol=1e-12)


# --------------------------------------------------------------------------- noiseless density

def test_pushforward_identity():
    m = GenerativeModel(STD, PiecewiseAffineFunction.from_intervals([(-np.inf, np.inf, 1.0, 0.0)]))
    assert pushforward_density(m, 0.7) == pytest.approx(stats.norm.pdf(0.7), rel=1e-14)


def test_pushforward_doubling():
    m = GenerativeModel(STD, PiecewiseAffineFunction.from_intervals([(-np.inf, np.inf, 2.0, 0.0)]))
    assert pushforward_density(m, 0.0) == pytest.approx(stats.norm.pdf(0.0) / 2, rel=1e-14)


def test_pushforward_abs_folded_priors_agree():
    P, Q = folded_priors(1.0)
    a = pushforward_density(GenerativeModel(P, abs_decoder()), 1.5)
    b = pushforward_density(GenerativeModel(Q, abs_decoder()), 1.5)
    assert a == pytest.approx(b, rel=1e-13)


# --------------------------------------------------------------------------- noisy density

def test_noisy_identity_is_convolution():
    m = GenerativeModel(STD, PiecewiseAffineFunction.from_intervals([(-np.inf, np.inf, 1.0, 0.0)]), 1.0)
    x = np.linspace(-4, 4, 17)
    np.testing.assert_allclose(noisy_density(m, x), stats.norm.pdf(x, 0, np.sqrt(2)), atol=1e-10)


@pytest.mark.parametrize("x", [-3.0, -0.2, 0.0, 1.3])
def test_noisy_relu_against_quadrature(x):
    m = GenerativeModel(STD, single_layer_decoder((1, 0), (1, 0), (0, 0)), 0.5)
    assert noisy_density(m, x) == pytest.approx(quad_noisy_density(STD, relu, 0.5, x, [0.0]), abs=1e-8)


def test_noisy_two_unit_against_quadrature():
    m = model(GT)
    fn = lambda z: relu(z) - relu(z - 1)
    for x in (-1.0, 0.3, 0.9, 2.0):
        ref = quad_noisy_density(m.prior, fn, 0.5, x, [0.0, 1.0])
        assert noisy_density(m, x) == pytest.approx(ref, abs=1e-8)


def test_noisy_small_sigma_limit():
    f = single_layer_decoder((2, 1), (1, -1), (0, 0))
    x = 1.1
    exact = pushforward_density(GenerativeModel(STD, f), x)
    errs = [abs(noisy_density(GenerativeModel(STD, f, s), x) - exact) for s in (1e-2, 1e-3)]
    assert errs[1] < errs[0] and errs[1] < 1e-2


def test_noisy_density_integrates_to_one():
    m = model(GT)
    lo, hi = observable_envelope(m)
    total = integrate.quad(lambda x: noisy_density(m, x), lo, hi, limit=200, epsabs=1e-12)[0]
    assert total == pytest.approx(1.0, abs=1e-6)


# --------------------------------------------------------------------------- population NLL

def test_nll_of_truth_is_entropy():
    m = model(GT)
    lo, hi = observable_envelope(m)
    ent = integrate.quad(lambda x: -noisy_density(m, x) * np.log(noisy_density(m, x)), lo, hi,
                         limit=200, epsabs=1e-12)[0]
    assert population_nll(m, m) == pytest.approx(ent, abs=1e-8)


def test_nll_gibbs_random_candidates():
    gt = model(GT)
    ref = population_nll(gt, gt)
    rng = np.random.default_rng(1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for _ in range(30):
            cand = {"lambda": list(rng.dirichlet([1, 1])), "mu": list(rng.uniform(-3, 3, 2)),
                    "alpha": list(rng.uniform(-2, 2, 2)), "beta": list(rng.uniform(-2, 2, 2)),
                    "pi": list(rng.uniform(-2, 2, 2))}
            assert population_nll(model(cand), gt) >= ref - 1e-9


def test_nll_reparameterisation_invariant():
    gt = model(GT)
    ref = population_nll(gt, gt)
    rng = np.random.default_rng(2)
    for _ in range(20):
        h = AffineMap([[rng.choice([-1, 1]) * rng.uniform(0.3, 3)]], [rng.normal()])
        alt = GenerativeModel(affine_pushforward(gt.prior, h), gt.decoder.precompose(h.inverse()), 0.5)
        assert population_nll(alt, gt) == pytest.approx(ref, abs=1e-8)


def test_nll_reparameterisation_by_parameters():
    # h(z) = 2z + 1 scales the prior and rescales the hidden layer
    gt = model(GT)
    alt_params = {"lambda": GT["lambda"], "mu": [2 * m + 1 for m in GT["mu"]], "alpha": GT["alpha"],
                  "beta": [b / 2 for b in GT["beta"]],
                  "pi": [p - b / 2 for p, b in zip(GT["pi"], GT["beta"])]}
    alt = params_model(alt_params, 4.0, 0.5)
    assert population_nll(alt, gt) == pytest.approx(population_nll(gt, gt), abs=1e-9)


def test_nll_perturbed_mean_is_worse():
    gt = model(GT)
    bumped = dict(GT, mu=[GT["mu"][0] + 0.5, GT["mu"][1]])
    assert population_nll(model(bumped), gt) > population_nll(gt, gt) + 1e-4


# --------------------------------------------------------------------------- grids

SMALL = GridSpec(J_choices=(2,), lambda_step=0.5, mu=(-2, 2, 2), alpha=(-1, 1, 1),
                 beta=(-1, 1, 1), pi=(-1, 1, 1))


def test_simplex_grid():
    g = simplex_grid(3, 0.5)
    assert len(g) == 6
    np.testing.assert_allclose(g.sum(axis=1), 1.0)


def test_grid_cell_count_and_cap():
    assert SMALL.n_cells() == 3 * 9 * 3 ** 6
    with pytest.raises(GridTooLarge):
        grid_search(model(GT), GridSpec())


def test_grid_rejects_noise_mismatch():
    with pytest.raises(ValueError):
        grid_search(model(GT, sigma=0.3), SMALL)


def test_grid_search_finds_truth():
    gt = model({"lambda": [0.5, 0.5], "mu": [-2.0, 2.0], "alpha": [1.0, -1.0],
                "beta": [1.0, 1.0], "pi": [0.0, -1.0]})
    minimizers, land, ref = grid_search(gt, SMALL)
    assert len(land) == SMALL.n_cells()
    assert np.all(land.nll >= ref - 1e-9)
    assert land.nll.min() == pytest.approx(ref, abs=1e-9)
    assert any(m.params["mu"] == gt.params["mu"] and m.params["alpha"] == gt.params["alpha"]
               and m.params["beta"] == gt.params["beta"] and m.params["pi"] == gt.params["pi"]
               for m in minimizers)
    for m in minimizers:
        assert affine_equivalent(m, gt)[0]


def test_grid_search_dead_component():
    grid = GridSpec(J_choices=(3,), lambda_step=0.5, mu=(-2, 2, 2), alpha=(-1, 1, 1),
                    beta=(-1, 1, 1), pi=(-1, 1, 1))
    gt = random_ground_truth(grid, 3, np.random.default_rng(1), dead_component=True)
    minimizers, land, ref = grid_search(gt, grid)
    assert len(minimizers) > 1
    assert all(affine_equivalent(m, gt)[0] for m in minimizers)


def test_grid_search_off_grid_truth():
    gt = model(dict(GT, mu=[-1.7, 2.2]))
    minimizers, land, ref = grid_search(gt, SMALL)
    assert land.nll.min() > ref
    best = minimizers[0]
    assert best.params["mu"] == [-2.0, 2.0]


def test_grid_slice():
    gt = model(GT)
    land = grid_slice(gt, SMALL, "alpha1")
    np.testing.assert_array_equal(land.decoders[:, 0], [-1.0, 0.0, 1.0])
    assert land.params(int(np.argmin(land.nll)))["alpha"][0] == 1.0
    land = grid_slice(gt, SMALL, "mu2")
    assert land.params(int(np.argmin(land.nll)))["mu"][1] == 2.0
    with pytest.raises(ValueError):
        grid_slice(gt, SMALL, "gamma")


def test_landscape_table_shape():
    land = grid_slice(model(GT), SMALL, "pi1")
    rows = list(land.table())
    assert all(len(r) == len(land.header()) for r in rows)
    assert rows[0][3] == ""


# --------------------------------------------------------------------------- equivalence

def test_affine_equivalent_constructed():
    gt = model(GT)
    h = AffineMap([[3.0]], [-2.0])
    alt = GenerativeModel(affine_pushforward(gt.prior, h), gt.decoder.precompose(h.inverse()), 0.5)
    ok, w = affine_equivalent(gt, alt)
    assert ok
    np.testing.assert_allclose(w.matrix, [[3.0]], atol=1e-8)
    np.testing.assert_allclose(w.offset, [-2.0], atol=1e-8)


def test_affine_equivalent_identity():
    gt = model(GT)
    ok, w = affine_equivalent(gt, gt)
    assert ok
    np.testing.assert_allclose(w.matrix, [[1.0]], atol=1e-12)


def test_affine_equivalent_fold_pair_false():
    m1, m2 = fold_pair_models()
    assert affine_equivalent(m1, m2) == (False, None)


def test_affine_equivalent_different_decoders():
    gt = model(GT)
    other = model(dict(GT, alpha=[1.0, 1.0]))
    assert not affine_equivalent(gt, other)[0]


def test_random_ground_truth_flags():
    grid = GridSpec(J_choices=(2,), lambda_step=0.5, mu=(-2, 2, 2), alpha=(-1, 1, 1),
                    beta=(-1, 1, 1), pi=(-1, 1, 1))
    rng = np.random.default_rng(3)
    m = random_ground_truth(grid, 2, rng, dead_unit=True)
    assert m.params["alpha"][1] == 0.0
    m = random_ground_truth(grid, 3, rng, dead_component=True)
    assert m.params["lambda"][2] == 0.0 and m.prior.n_components == 2
