import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedgcf.errors import ContractError, NumericError
from fedgcf.gnn import (GCN, GIN, AdamState, DualBranchModel, GraphBatch, ModelParams, ModelSpec,
                        adam_step, forward, forward_batch, fused_loss_and_grad, fused_predict, init_params,
                        loss_and_grad, node_spec, struct_spec)
from fedgcf.graphs import ClassSpec, Graph, SyntheticSpec, generate_synthetic
from fedgcf.struct_encode import annotate
from oracles import central_differences, max_relative_error, stencil_is_smooth


@pytest.fixture(scope="module")
def dataset():
    spec = SyntheticSpec(classes=(ClassSpec("ring", 0), ClassSpec("chain", 1), ClassSpec("star", 2)),
                         graphs_per_class=6, min_nodes=4, max_nodes=7, feature_dim=3)
    return annotate(generate_synthetic(spec, 0))


def perturbed(spec, rng, scale=0.3):
    p = init_params(spec, rng)
    return ModelParams(p.values + scale * rng.standard_normal(p.size), p.manifest)


def set_params(spec, **arrays):
    p = ModelParams(np.zeros(sum(int(np.prod(s)) for _, s in spec.manifest())), spec.manifest())
    for name, value in arrays.items():
        p.arrays()[name][...] = value
    return p


def test_manifest_size_invariant():
    spec = ModelSpec(GCN, 5, 3, hidden_dim=4, num_layers=3)
    p = init_params(spec, np.random.default_rng(0))
    assert p.size == 5 * 4 + 4 + 2 * (4 * 4 + 4) + 4 * 3 + 3
    with pytest.raises(ContractError):
        ModelParams(np.zeros(3), spec.manifest())


def test_serialisation_round_trip(tmp_path):
    p = init_params(node_spec(4, 2, hidden_dim=3), np.random.default_rng(1))
    p.save(tmp_path / "m.bin")
    raw = (tmp_path / "m.bin").read_bytes()
    assert len(raw) == 8 * p.size
    np.testing.assert_array_equal(np.frombuffer(raw, dtype="<f8"), p.values)
    assert ModelParams.load(tmp_path / "m.bin") == p


def test_isolated_node_zero_weights_gives_head_bias():
    g = Graph(1, [], np.array([[2.0, -1.0]]), 0)
    spec = node_spec(2, 3, hidden_dim=4)
    p = set_params(spec, **{"head.bias": [0.5, -1.0, 2.0]})
    np.testing.assert_array_equal(forward(p, spec, g), [0.5, -1.0, 2.0])


def two_node_graph():
    return Graph(2, [(0, 1)], np.array([[1.0], [2.0]]), 0, node_struct=np.array([[1.0], [2.0]]))


def test_hand_computed_gin():
    # A + I = [[1,1],[1,1]], so every layer sees the sum of both node states
    g = two_node_graph()
    spec = ModelSpec(GIN, 1, 2, hidden_dim=1, num_layers=3)
    p = set_params(spec, **{
        "layer0.weight": [[1.0]], "layer0.bias": [0.0],     # 3 -> 3
        "layer1.weight": [[0.5]], "layer1.bias": [-1.0],    # 6 -> 2
        "layer2.weight": [[-1.0]], "layer2.bias": [3.0],    # 4 -> relu(-1) = 0
        "head.weight": [[1.0, -1.0]], "head.bias": [0.0, 0.5],
    })
    np.testing.assert_allclose(forward(p, spec, g), [0.0, 0.5])
    p.arrays()["layer2.bias"][...] = 5.0                    # 4 -> 1
    np.testing.assert_allclose(forward(p, spec, g), [1.0, -0.5])


def test_hand_computed_gcn():
    # symmetric normalisation with self-loops: every entry of A_hat is 1/2
    g = two_node_graph()
    spec = ModelSpec(GCN, 1, 2, hidden_dim=1, num_layers=3)
    p = set_params(spec, **{
        "layer0.weight": [[1.0]], "layer0.bias": [0.0],     # 1.5 -> 1.5
        "layer1.weight": [[2.0]], "layer1.bias": [-1.0],    # 1.5 -> 2
        "layer2.weight": [[1.0]], "layer2.bias": [0.25],    # 2 -> 2.25
        "head.weight": [[1.0, -1.0]], "head.bias": [0.0, 0.5],
    })
    np.testing.assert_allclose(forward(p, spec, g), [2.25, -1.75], rtol=1e-12)


def test_dimension_mismatch_names_layer(dataset):
    spec = node_spec(5, 3)
    p = init_params(spec, np.random.default_rng(0))
    with pytest.raises(ContractError, match="layer0"):
        forward(p, spec, dataset.graphs[0])


@pytest.mark.parametrize("arch", [GCN, GIN])
def test_permutation_invariance(dataset, arch):
    rng = np.random.default_rng(3)
    spec = node_spec(3, 3, 8) if arch == GCN else struct_spec(32, 3, 8)
    p = perturbed(spec, rng)
    for g in dataset.graphs[:6]:
        perm = rng.permutation(g.num_nodes)
        np.testing.assert_allclose(forward(p, spec, g.permuted(perm)), forward(p, spec, g), atol=1e-12)


def test_uniform_logits_loss_is_ln2():
    g = Graph(3, [(0, 1)], np.ones((3, 2)), 1)
    spec = node_spec(2, 2, hidden_dim=4)
    p = set_params(spec)
    loss, _ = loss_and_grad(p, spec, [g])
    assert loss == pytest.approx(math.log(2), abs=1e-15)


@pytest.mark.parametrize("arch", [GCN, GIN])
def test_gradient_matches_finite_differences(dataset, arch):
    rng = np.random.default_rng(7)
    spec = node_spec(3, 3, 6) if arch == GCN else struct_spec(32, 3, 6)
    batch = GraphBatch(list(dataset.graphs[:2]))
    p = perturbed(spec, rng)
    while not stencil_is_smooth(lambda v: forward_batch(ModelParams(v, p.manifest), spec, batch, cache=True), p.values):
        p = perturbed(spec, rng)
    _, grad = loss_and_grad(p, spec, batch)
    numeric = central_differences(lambda v: loss_and_grad(ModelParams(v, p.manifest), spec, batch)[0], p.values)
    assert max_relative_error(grad.values, numeric) < 1e-3


def test_duplicated_batch_same_loss_and_grad(dataset):
    spec = struct_spec(32, 3, 6)
    p = perturbed(spec, np.random.default_rng(0))
    batch = list(dataset.graphs[:4])
    l1, g1 = loss_and_grad(p, spec, batch)
    l2, g2 = loss_and_grad(p, spec, batch + batch)
    assert l2 == pytest.approx(l1, rel=1e-13)
    np.testing.assert_allclose(g2.values, g1.values, rtol=1e-11, atol=1e-14)


def test_nonfinite_loss_reports_graph(dataset):
    spec = node_spec(3, 3, 4)
    p = init_params(spec, np.random.default_rng(0))
    bad = Graph(2, [(0, 1)], np.array([[np.nan, 0, 0], [0, 0, 0]]), 0)
    with pytest.raises(NumericError) as info:
        loss_and_grad(p, spec, [dataset.graphs[0], bad])
    assert info.value.graph_index == 1


class TestAdam:
    def test_zero_gradient(self):
        p = ModelParams(np.array([1.0, -2.0]), (("w", (2,)),))
        new, state = adam_step(p, p.zeros_like(), None, 0.001)
        assert new == p and state.step == 1

    def test_first_step(self):
        p = ModelParams(np.ones(3), (("w", (3,)),))
        g = ModelParams(np.array([0.5, -2.0, 1e-3]), p.manifest)
        new, state = adam_step(p, g, AdamState.zeros(p), 0.1)
        # m_hat = g, v_hat = g^2 after bias correction
        expected = 1.0 - 0.1 * g.values / (np.abs(g.values) + 1e-8)
        np.testing.assert_allclose(new.values, expected, rtol=0, atol=1e-15)
        np.testing.assert_allclose(new.values, [0.900000002, 1.0999999995, 0.90000099990001], atol=1e-12)

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        p = ModelParams(rng.standard_normal(5), (("w", (5,)),))
        grads = [ModelParams(rng.standard_normal(5), p.manifest) for _ in range(4)]

        def run():
            q, s = p, None
            for g in grads:
                q, s = adam_step(q, g, s, 0.01)
            return q, s
        (a, sa), (b, sb) = run(), run()
        assert a == b and np.array_equal(sa.m, sb.m) and sa.step == sb.step == 4

    def test_manifest_mismatch(self):
        p = ModelParams(np.ones(2), (("w", (2,)),))
        with pytest.raises(ContractError):
            adam_step(p, ModelParams(np.ones(2), (("v", (2,)),)), None, 0.1)


class TestFusion:
    @pytest.fixture
    def setup(self, dataset):
        rng = np.random.default_rng(11)
        specs = (node_spec(3, 3, 8), struct_spec(32, 3, 8))
        return specs, perturbed(specs[0], rng), perturbed(specs[1], rng)

    def test_endpoints_bit_equal(self, dataset, setup):
        specs, pn, ps = setup
        for g in dataset.graphs[:5]:
            assert np.array_equal(fused_predict(DualBranchModel(pn, ps, 1.0), specs, g), forward(ps, specs[1], g))
            assert np.array_equal(fused_predict(DualBranchModel(pn, ps, 0.0), specs, g), forward(pn, specs[0], g))

    def test_midpoint(self):
        g = Graph(1, [], np.zeros((1, 1)), 0, node_struct=np.zeros((1, 1)))
        specs = (ModelSpec(GCN, 1, 2, 2, 1), ModelSpec(GIN, 1, 2, 2, 1))
        pn = set_params(specs[0], **{"head.bias": [0.0, 2.0]})
        ps = set_params(specs[1], **{"head.bias": [2.0, 0.0]})
        np.testing.assert_array_equal(fused_predict(DualBranchModel(pn, ps, 0.5), specs, g), [1.0, 1.0])

    def test_affine_in_ratio(self, dataset, setup):
        specs, pn, ps = setup
        g = dataset.graphs[2]
        f1 = fused_predict(DualBranchModel(pn, ps, 1.0), specs, g)
        f0 = fused_predict(DualBranchModel(pn, ps, 0.0), specs, g)

        @settings(max_examples=25, deadline=None)
        @given(lam=st.floats(0.0, 1.0))
        def check(lam):
            np.testing.assert_allclose(fused_predict(DualBranchModel(pn, ps, lam), specs, g),
                                       lam * f1 + (1 - lam) * f0, rtol=0, atol=1e-12)
        check()

    def test_ratio_validation(self, setup):
        _, pn, ps = setup
        with pytest.raises(ContractError):
            DualBranchModel(pn, ps, 1.5)
        with pytest.raises(ContractError):
            DualBranchModel(None, ps, 0.5)

    @pytest.mark.parametrize("lam", [0.3, 0.8])
    def test_fused_gradient(self, dataset, setup, lam):
        specs, pn, ps = setup
        batch = list(dataset.graphs[:3])
        _, gn, gs = fused_loss_and_grad(DualBranchModel(pn, ps, lam), specs, batch)

        def loss_n(v):
            return fused_loss_and_grad(DualBranchModel(ModelParams(v, pn.manifest), ps, lam), specs, batch)[0]

        def loss_s(v):
            return fused_loss_and_grad(DualBranchModel(pn, ModelParams(v, ps.manifest), lam), specs, batch)[0]
        assert max_relative_error(gn.values, central_differences(loss_n, pn.values)) < 1e-3
        assert max_relative_error(gs.values, central_differences(loss_s, ps.values)) < 1e-3

    def test_independent_training_uses_branch_losses(self, dataset, setup):
        specs, pn, ps = setup
        batch = list(dataset.graphs[:3])
        _, gn, gs = fused_loss_and_grad(DualBranchModel(pn, ps, 0.5), specs, batch, joint=False)
        np.testing.assert_allclose(gn.values, loss_and_grad(pn, specs[0], batch)[1].values)
        np.testing.assert_allclose(gs.values, loss_and_grad(ps, specs[1], batch)[1].values)


def test_one_layer_model_fits_separable_set():
    spec_ = SyntheticSpec(classes=(ClassSpec("random", 0), ClassSpec("random", 1)), graphs_per_class=20,
                          feature_dim=2, feature_signal=2.0, feature_noise=0.5)
    ds = generate_synthetic(spec_, 1)
    spec = ModelSpec(GCN, 2, 2, hidden_dim=8, num_layers=1)
    p, state = init_params(spec, np.random.default_rng(0)), None
    batch = GraphBatch(ds.graphs)
    for _ in range(500):
        _, g = loss_and_grad(p, spec, batch)
        p, state = adam_step(p, g, state, 0.01)
        if np.all(forward_batch(p, spec, batch).argmax(axis=1) == batch.labels):
            break
    assert np.all(forward_batch(p, spec, batch).argmax(axis=1) == batch.labels)
