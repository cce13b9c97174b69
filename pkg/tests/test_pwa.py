import numpy as np
import pytest

from mixid.errors import (DimensionMismatch, NotGenericPoint, RegionCapExceeded,
                          UnsupportedActivation)
from mixid.gmm import make_gmm
from mixid.pwa import (Layer, NetworkSpec, PiecewiseAffineFunction, architecture_check,
                       classify_injectivity, compile_network, continuity_defect, evaluate,
                       is_generic, level_rank, preimage, preimage_count_ext,
                       pushforward_density)
from mixid.suite import abs_decoder, fold_pair_decoders, half_abs_network


def relu_net():
    return NetworkSpec((Layer([[1.0]], [0.0], "relu"), Layer([[1.0]], [0.0], "identity")))


def random_net(widths, act, rng, slope=0.2):
    layers = []
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        last = i == len(widths) - 2
        layers.append(Layer(rng.normal(size=(b, a)), rng.normal(size=b),
                            "identity" if last else act, slope))
    return NetworkSpec(tuple(layers))


def brute_preimage_1d(spec, x):
    """Solve each interval piece by hand and keep in-region roots."""
    out = []
    for lo, hi, a, c in spec:
        if a == 0:
            continue
        z = (x - c) / a
        if lo <= z <= hi:
            out.append(z)
    return sorted(set(np.round(out, 12)))


FOLD_F = [(2.0, np.inf, 1.0, -4.0), (-2.0, 2.0, -1.0, 0.0), (-4.0, -2.0, 1.0, 4.0),
          (-np.inf, -4.0, 0.2, 0.8)]


# --------------------------------------------------------------------------- networks

def test_leaky_slope_validated():
    with pytest.raises(UnsupportedActivation):
        Layer([[1.0]], [0.0], "leaky_relu", 1.0)
    with pytest.raises(UnsupportedActivation):
        Layer([[1.0]], [0.0], "tanh")


def test_final_layer_must_be_affine():
    with pytest.raises(UnsupportedActivation):
        NetworkSpec((Layer([[1.0]], [0.0], "relu"),))


def test_layer_shapes_must_chain():
    with pytest.raises(DimensionMismatch):
        NetworkSpec((Layer(np.ones((2, 1)), np.zeros(2)), Layer(np.ones((1, 3)), [0.0], "identity")))


# --------------------------------------------------------------------------- compilation

def test_relu_compiles_to_two_pieces():
    f = compile_network(relu_net())
    assert len(f) == 2
    slopes = sorted(p.A[0, 0] for p in f.pieces)
    assert slopes == [0.0, 1.0]
    assert evaluate(f, -3.0) == 0.0 and evaluate(f, 2.5) == 2.5


def test_half_abs_network_values():
    f = compile_network(half_abs_network())
    x = np.array([-2.0, -1.0, 1.0, 2.0])
    np.testing.assert_allclose(evaluate(f, x), np.abs(x) / 2, atol=1e-15)


def test_identity_network_single_piece():
    f = compile_network(NetworkSpec((Layer(np.eye(2), np.zeros(2), "identity"),)))
    assert len(f) == 1
    np.testing.assert_array_equal(f.pieces[0].A, np.eye(2))


@pytest.mark.parametrize("widths,act", [((2, 4, 4, 3), "leaky_relu"), ((2, 5, 2), "relu"),
                                        ((1, 3, 3, 1), "relu"), ((3, 4, 2), "leaky_relu")])
def test_compile_matches_forward(widths, act):
    rng = np.random.default_rng(sum(widths))
    net = random_net(widths, act, rng)
    f = compile_network(net)
    z = rng.normal(scale=2.0, size=(1000, widths[0]))
    direct = net.forward(z)
    got = evaluate(f, z if widths[0] > 1 else z[:, 0])
    np.testing.assert_allclose(np.asarray(got).reshape(direct.shape), direct, atol=1e-12)


@pytest.mark.parametrize("widths,act", [((2, 4, 4, 3), "leaky_relu"), ((2, 5, 2), "relu")])
def test_compiled_pieces_are_continuous(widths, act):
    f = compile_network(random_net(widths, act, np.random.default_rng(3)))
    assert continuity_defect(f, per_facet=100, seed=0) < 1e-9


def test_hidden_unit_cap():
    net = NetworkSpec((Layer(np.ones((25, 1)), np.zeros(25)), Layer(np.ones((1, 25)), [0.0], "identity")))
    with pytest.raises(RegionCapExceeded):
        compile_network(net)


def test_region_cap():
    net = random_net((2, 6, 1), "relu", np.random.default_rng(0))
    with pytest.raises(RegionCapExceeded):
        compile_network(net, region_cap=3)


def test_pwa_round_trip_list():
    f = compile_network(random_net((2, 3, 2), "relu", np.random.default_rng(1)))
    g = PiecewiseAffineFunction.from_list(f.to_list())
    z = np.random.default_rng(2).normal(size=(200, 2))
    np.testing.assert_array_equal(evaluate(f, z), evaluate(g, z))


# --------------------------------------------------------------------------- evaluation

def test_fold_function_values():
    f, _ = fold_pair_decoders()
    assert evaluate(f, 3.0) == pytest.approx(-1.0)
    assert evaluate(f, -3.0) == pytest.approx(1.0)


def test_evaluate_dimension_check():
    f = compile_network(random_net((2, 3, 1), "relu", np.random.default_rng(0)))
    with pytest.raises(DimensionMismatch):
        evaluate(f, np.zeros((4, 3)))


def test_ties_go_to_lowest_index():
    f = PiecewiseAffineFunction.from_intervals([(-np.inf, 0.0, 1.0, 0.0), (0.0, np.inf, 2.0, 0.0)])
    assert f.locate(np.array([[0.0]]))[0] == 0


# --------------------------------------------------------------------------- preimages

def test_relu_preimage_positive():
    pre = preimage(compile_network(relu_net()), 2.0)
    assert not pre.infinite
    np.testing.assert_allclose(pre.points[:, 0], [2.0])


def test_abs_preimage():
    pre = preimage(abs_decoder(), 1.0)
    np.testing.assert_allclose(sorted(pre.points[:, 0]), [-1.0, 1.0])


def test_constant_piece_gives_infinite_preimage():
    assert preimage(compile_network(relu_net()), 0.0).infinite


def test_fold_preimage_matches_brute_force():
    f, _ = fold_pair_decoders()
    for x in (-1.5, -0.5, 0.7, 1.9, 3.0, -3.0):
        pre = sorted(np.round(preimage(f, x).points[:, 0], 12))
        assert pre == brute_preimage_1d(FOLD_F, x)


def test_genericity():
    relu = compile_network(relu_net())
    assert not is_generic(relu, 0.0)
    assert is_generic(relu, 1.0)
    assert not is_generic(abs_decoder(), 0.0)
    assert is_generic(abs_decoder(), 0.3)


def test_pushforward_density_scaling():
    f = PiecewiseAffineFunction.from_intervals([(-np.inf, np.inf, 2.0, 0.0)])
    prior = make_gmm([(1.0, 0.0, 1.0)])
    assert pushforward_density(f, prior, 0.0) == pytest.approx(0.3989422804014327 / 2, rel=1e-14)


def test_pushforward_density_rejects_kink():
    with pytest.raises(NotGenericPoint):
        pushforward_density(abs_decoder(), make_gmm([(1.0, 0.0, 1.0)]), 0.0)


# --------------------------------------------------------------------------- preimage counting

def test_count_affine():
    f = PiecewiseAffineFunction.from_intervals([(-np.inf, np.inf, -3.0, 1.0)])
    assert preimage_count_ext(f, make_gmm([(1.0, 0.0, 1.0)]), 0.4, 1e-3) == 1


def test_count_abs():
    assert preimage_count_ext(abs_decoder(), make_gmm([(1.0, 0.0, 1.0)]), 1.0, 1e-3) == 2


def test_count_fold():
    f, _ = fold_pair_decoders()
    prior = make_gmm([(0.5, -2.0, 1.0), (0.5, 2.0, 1.0)])
    assert preimage_count_ext(f, prior, -1.5, 1e-3) == 3
    assert len(brute_preimage_1d(FOLD_F, -1.5)) == 3


def test_count_rejects_non_generic():
    with pytest.raises(NotGenericPoint):
        preimage_count_ext(abs_decoder(), make_gmm([(1.0, 0.0, 1.0)]), 0.0, 1e-3)


def test_count_rejects_too_large_ball():
    with pytest.raises(NotGenericPoint):
        preimage_count_ext(abs_decoder(), make_gmm([(1.0, 0.0, 1.0)]), 0.1, 1.0)


def test_count_2d_leaky():
    rng = np.random.default_rng(4)
    f = compile_network(random_net((2, 2, 2), "leaky_relu", rng))
    prior = make_gmm([(1.0, [0.0, 0.0], np.eye(2))])
    z = rng.normal(size=2)
    x = np.atleast_1d(evaluate(f, z))
    assert preimage_count_ext(f, prior, x, 1e-4) == len(preimage(f, x))


# --------------------------------------------------------------------------- injectivity

def test_relu_observably_injective():
    v = classify_injectivity(compile_network(relu_net()))
    assert v.level == "observably_injective"


def test_abs_not_weakly_injective_with_witness():
    v = classify_injectivity(abs_decoder())
    assert v.level == "not_weakly_injective"
    z1, z2 = (np.atleast_1d(w)[0] for w in v.witness)
    assert z1 != z2 and abs(abs(z1) - abs(z2)) <= 1e-10


def test_fold_weakly_but_not_observably_injective():
    f, g = fold_pair_decoders()
    assert classify_injectivity(f).level == "weakly_injective"
    assert classify_injectivity(g).level == "weakly_injective"


def test_affine_injective():
    f = PiecewiseAffineFunction.from_intervals([(-np.inf, np.inf, 2.0, 1.0)])
    assert classify_injectivity(f).level == "injective"


def test_half_abs_not_weakly_injective():
    v = classify_injectivity(compile_network(half_abs_network()))
    assert v.level == "not_weakly_injective"
    z1, z2 = (np.atleast_1d(w) for w in v.witness)
    f = compile_network(half_abs_network())
    assert abs(evaluate(f, z1[0]) - evaluate(f, z2[0])) <= 1e-10 and z1[0] != z2[0]


def test_2d_leaky_injective_by_pairs():
    f = compile_network(random_net((2, 2, 2), "leaky_relu", np.random.default_rng(8)))
    v = classify_injectivity(f)
    assert v.level == "injective" and v.method == "static"


def test_2d_fold_detected():
    # folding the plane along x = 0
    net = NetworkSpec((Layer([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]], np.zeros(4), "relu"),
                       Layer([[1.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, -1.0]], np.zeros(2), "identity")))
    f = compile_network(net)
    v = classify_injectivity(f)
    # every generic point has two preimages; the exact check cannot rule out a
    # uniquely covered region, so it must stop short of weak injectivity
    assert level_rank(v.level) < level_rank("weakly_injective")
    z1, z2 = (np.asarray(w) for w in v.witness)
    assert np.linalg.norm(z1 - z2) > 0.1
    np.testing.assert_allclose(evaluate(f, z1), evaluate(f, z2), atol=1e-10)


def test_sampling_never_certifies_injective():
    from mixid.pwa import _classify_sampling
    f = compile_network(random_net((2, 2, 2), "leaky_relu", np.random.default_rng(8)))
    v = _classify_sampling(f, 200, 0)
    assert v.method == "sampling"
    assert level_rank(v.level) <= level_rank("weakly_injective")


def test_verdict_deterministic_across_seeds():
    f = compile_network(random_net((2, 4, 2), "relu", np.random.default_rng(5)))
    levels = {classify_injectivity(f, seed=s).level for s in range(3)}
    assert len(levels) == 1


def test_architecture_check_levels():
    rng = np.random.default_rng(0)
    assert architecture_check(random_net((2, 4, 4, 4), "leaky_relu", rng)).level == "injective"
    assert architecture_check(random_net((2, 4, 4), "relu", rng)).level == "observably_injective"
    # a narrowing last layer cannot have full column rank
    assert architecture_check(random_net((2, 4, 4, 3), "leaky_relu", rng)).level == "unknown"
    assert architecture_check(random_net((2, 4, 3), "relu", rng)).level == "unknown"
    assert architecture_check(half_abs_network()).level == "unknown"
