import numpy as np
import pytest

from seisdon.autodiff import Tensor, gradient
from seisdon.deeponet import (
    AmplitudeSeparatedModel,
    DeepONetModel,
    amplitude_separated_eval,
    build_amplitude_separated,
    build_variant,
    count_parameters,
    deeponet_eval,
    deeponet_predict,
    load_model,
    save_model,
    scale_ladder,
)
from seisdon.neural import DenseNet, MultiscaleNet


def constant_output_deeponet(branch_value, trunk_value, bias_value, m=2):
    """p=1 model with constant branch/trunk outputs for dot-product arithmetic."""
    branch = DenseNet.create([m, 1], "identity", seed_or_rng=0)
    branch.weights[0].data[:] = 0.0
    branch.biases[0].data[:] = branch_value
    trunk = DenseNet.create([1, 1], "identity", seed_or_rng=0)
    trunk.weights[0].data[:] = 0.0
    trunk.biases[0].data[:] = trunk_value
    bias = Tensor(np.array([bias_value]), requires_grad=True)
    return DeepONetModel(branch=branch, trunk=trunk, bias=bias, variant="bFCN-tFCN")


class TestScaleLadder:
    def test_integer_ladder(self):
        np.testing.assert_allclose(scale_ladder(3), 1.0 + 2.0 * np.pi * np.arange(4))

    def test_pinned_count_keeps_endpoints(self):
        scales = scale_ladder(100, 100)
        assert scales.size == 100
        assert scales[0] == pytest.approx(1.0)
        assert scales[-1] == pytest.approx(1.0 + 200 * np.pi)

    def test_validation(self):
        with pytest.raises(ValueError):
            scale_ladder(0)
        with pytest.raises(ValueError):
            scale_ladder(5, 0)


class TestBuildVariant:
    def test_fcn_fcn_is_plain_dense(self):
        model = build_variant("bFCN-tFCN", m=20, p=1000)
        assert isinstance(model.branch, DenseNet)
        assert isinstance(model.trunk, DenseNet)
        assert model.latent_size == 1000

    def test_reference_trunk_ms_output(self):
        model = build_variant("bFCN-tMS", m=20)
        assert isinstance(model.trunk, MultiscaleNet)
        assert len(model.trunk.subnets) == 100
        assert model.trunk.output_size == 1000
        assert model.trunk.subnets[0].layer_sizes == [1, 10, 10, 10, 10, 10]

    def test_sides_swap_between_variants(self):
        a = build_variant("bMS-tFCN", m=10, p=100,
                          branch_scales=scale_ladder(4), trunk_hidden=40)
        b = build_variant("bFCN-tMS", m=10, p=100,
                          trunk_scales=scale_ladder(4), branch_hidden=40)
        assert isinstance(a.branch, MultiscaleNet) and isinstance(a.trunk, DenseNet)
        assert isinstance(b.branch, DenseNet) and isinstance(b.trunk, MultiscaleNet)

    def test_scales_rejected_for_fcn_side(self):
        with pytest.raises(ValueError):
            build_variant("bFCN-tFCN", m=10, p=100, trunk_scales=scale_ladder(4))
        with pytest.raises(ValueError):
            build_variant("bFCN-tMS", m=10, p=100, trunk_scales=scale_ladder(4),
                          branch_scales=scale_ladder(4))

    def test_indivisible_latent_rejected(self):
        with pytest.raises(ValueError):
            build_variant("bFCN-tMS", m=10, p=100, trunk_scales=scale_ladder(2))  # 3 subnets

    def test_branch_activation_override(self):
        model = build_variant("bFCN-tMS", m=10, p=20, trunk_scales=scale_ladder(4),
                              trunk_neurons=4, branch_hidden=8, branch_activation="relu")
        assert model.branch.activation == "relu"
        assert model.trunk.subnets[0].activation == "sin"


class TestDeepONetEval:
    def test_zero_branch_returns_bias(self):
        model = build_variant("bFCN-tFCN", m=4, p=8, trunk_hidden=6, branch_hidden=6,
                              n_outputs=2, seed=3)
        model.branch.weights[-1].data[:] = 0.0
        model.branch.biases[-1].data[:] = 0.0
        model.bias.data[:] = [0.25, -1.0]
        out = deeponet_eval(model, np.ones(4), 0.3)
        np.testing.assert_allclose(out, [0.25, -1.0])

    def test_dot_product_arithmetic(self):
        model = constant_output_deeponet(2.0, 3.0, 0.5)
        assert deeponet_eval(model, np.zeros(2), 0.7)[0] == pytest.approx(6.5)

    def test_seven_floor_output(self):
        model = build_variant("bFCN-tMS", m=12, p=4, n_outputs=7,
                              trunk_scales=scale_ladder(3), trunk_neurons=4,
                              branch_hidden=8, seed=1)
        out = deeponet_eval(model, np.linspace(-1, 1, 12), 0.5)
        assert out.shape == (7,)
        batch = deeponet_predict(model, np.ones((3, 12)), np.linspace(0, 1, 5))
        assert batch.shape == (3, 5, 7)

    def test_predict_matches_eval(self):
        model = build_variant("bFCN-tMS", m=6, p=6, trunk_scales=scale_ladder(2),
                              trunk_neurons=3, branch_hidden=9, seed=5)
        rng = np.random.default_rng(0)
        U = rng.standard_normal((4, 6))
        times = np.linspace(0, 1, 7)
        grid = deeponet_predict(model, U, times)
        for i in (0, 3):
            for j in (0, 6):
                np.testing.assert_allclose(
                    grid[i, j], deeponet_eval(model, U[i], times[j]), rtol=1e-12)

    def test_latent_permutation_invariance(self):
        model = build_variant("bFCN-tFCN", m=5, p=6, n_outputs=2,
                              trunk_hidden=7, branch_hidden=7, seed=9)
        u = np.linspace(-1, 1, 5)
        before = deeponet_eval(model, u, 0.4)
        perm = np.random.default_rng(1).permutation(6)
        model.branch.weights[-1].data = model.branch.weights[-1].data[:, perm]
        model.branch.biases[-1].data = model.branch.biases[-1].data[perm]
        full_perm = np.concatenate([perm, perm + 6])  # same shuffle in each floor block
        model.trunk.weights[-1].data = model.trunk.weights[-1].data[:, full_perm]
        model.trunk.biases[-1].data = model.trunk.biases[-1].data[full_perm]
        np.testing.assert_allclose(deeponet_eval(model, u, 0.4), before, rtol=1e-12)

    def test_time_normalization(self):
        a = build_variant("bFCN-tMS", m=4, p=6, trunk_scales=scale_ladder(2),
                          trunk_neurons=3, branch_hidden=5, t_scale=1.0, seed=4)
        b = build_variant("bFCN-tMS", m=4, p=6, trunk_scales=scale_ladder(2),
                          trunk_neurons=3, branch_hidden=5, t_scale=2.0, seed=4)
        u = np.ones(4)
        np.testing.assert_allclose(deeponet_eval(a, u, 0.3), deeponet_eval(b, u, 0.6),
                                   rtol=1e-12)

    def test_arity_mismatch(self):
        model = constant_output_deeponet(1.0, 1.0, 0.0, m=3)
        with pytest.raises(ValueError):
            deeponet_eval(model, np.zeros(4), 0.0)


class TestAmplitudeSeparated:
    def build_constant_tiers(self, values, epsilon):
        tiers = [constant_output_deeponet(0.0, 0.0, v) for v in values]
        return AmplitudeSeparatedModel(epsilon=epsilon, tiers=tiers)

    def test_geometric_tier_sum(self):
        model = self.build_constant_tiers([1.0, 2.0, 3.0], epsilon=0.1)
        out = amplitude_separated_eval(model, np.zeros(2), 0.0)
        assert out[0] == pytest.approx(1.0 + 0.1 * 2.0 + 0.01 * 3.0)

    def test_epsilon_zero_collapses_to_first_tier(self):
        model = self.build_constant_tiers([4.0, 100.0, -50.0], epsilon=0.0)
        assert amplitude_separated_eval(model, np.zeros(2), 0.0)[0] == pytest.approx(4.0)

    def test_single_tier_matches_plain_model(self):
        tier = build_variant("bFCN-tMS", m=5, p=6, trunk_scales=scale_ladder(2),
                             trunk_neurons=3, branch_hidden=6, seed=2)
        model = AmplitudeSeparatedModel(epsilon=0.1, tiers=[tier])
        u = np.linspace(0, 1, 5)
        np.testing.assert_allclose(amplitude_separated_eval(model, u, 0.2),
                                   deeponet_eval(tier, u, 0.2))

    def test_default_build_shape(self):
        model = build_amplitude_separated(m=16, tier_caps=(2.0, 4.0, 6.0),
                                          subnet_neurons=4, branch_hidden=8, seed=0)
        assert len(model.tiers) == 3
        assert [len(t.trunk.subnets) for t in model.tiers] == [3, 5, 7]
        out = amplitude_separated_eval(model, np.zeros(16), 0.1)
        assert out.shape == (1,)

    def test_multifloor_subnet_out_rounded(self):
        model = build_amplitude_separated(m=8, n_outputs=3, tier_caps=(2.0, 4.0),
                                          subnet_neurons=4, branch_hidden=8, seed=0)
        for tier in model.tiers:
            assert tier.trunk.output_size % 3 == 0

    def test_caps_must_ascend(self):
        with pytest.raises(ValueError):
            build_amplitude_separated(m=8, tier_caps=(10.0, 5.0))

    def test_epsilon_validated(self):
        tier = constant_output_deeponet(0.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            AmplitudeSeparatedModel(epsilon=1.0, tiers=[tier])


class TestCountParameters:
    def test_monolithic_comparator_sizing(self):
        # trunk: 100 subnets, 4 hidden layers x 24 neurons, 10 outputs each;
        # branch: 4 hidden layers x 384 neurons
        model = build_variant("bFCN-tMS", m=100, p=1000,
                              trunk_scales=scale_ladder(100, 100), trunk_neurons=24,
                              branch_hidden=384, branch_activation="relu", seed=0)
        subnet = (1 * 24 + 24) + 3 * (24 * 24 + 24) + (24 * 10 + 10)
        trunk = 100 * subnet
        branch = (100 * 384 + 384) + 3 * (384 * 384 + 384) + (384 * 1000 + 1000)
        assert count_parameters(model) == trunk + branch + 1

    def test_amplitude_model_sums_tiers(self):
        model = build_amplitude_separated(m=8, tier_caps=(2.0, 3.0),
                                          subnet_neurons=4, branch_hidden=8, seed=0)
        assert count_parameters(model) == sum(count_parameters(t) for t in model.tiers)


class TestGradients:
    def test_forward_rows_gradient_matches_finite_differences(self):
        from test_autodiff import fd_grads, max_rel_error

        model = build_variant("bMS-tMS", m=3, p=4, n_outputs=2,
                              trunk_scales=scale_ladder(3), branch_scales=np.array([1.0, 3.0]),
                              trunk_neurons=3, branch_neurons=3, seed=6)
        params = model.parameters()
        U = np.array([[0.2, -0.4, 0.1], [0.5, 0.0, -0.3]])
        times = np.array([0.1, 0.6, 0.9])
        target = np.random.default_rng(2).standard_normal((4, 3))

        def build():
            diff = model.forward_rows(Tensor(U), times) - target
            return (diff * diff).sum()

        def loss_fn():
            return float(build().data)

        assert max_rel_error(gradient(params, build()), fd_grads(params, loss_fn)) < 1e-5


class TestModelCheckpoint:
    def test_deeponet_round_trip(self, tmp_path):
        model = build_variant("bMS-tFCN", m=6, p=6, branch_scales=scale_ladder(2),
                              branch_neurons=3, trunk_hidden=9, seed=8)
        path = tmp_path / "model.npz"
        save_model(path, model, extra_meta={"note": "unit"})
        loaded, extra = load_model(path)
        assert extra["note"] == "unit"
        assert loaded.variant == "bMS-tFCN"
        u = np.linspace(-1, 1, 6)
        np.testing.assert_array_equal(deeponet_eval(loaded, u, 0.7),
                                      deeponet_eval(model, u, 0.7))
        for a, b in zip(loaded.parameters(), model.parameters()):
            np.testing.assert_array_equal(a.data, b.data)

    def test_amplitude_round_trip(self, tmp_path):
        model = build_amplitude_separated(m=5, tier_caps=(2.0, 4.0), subnet_neurons=3,
                                          branch_hidden=6, epsilon=0.2, seed=1)
        path = tmp_path / "amp.npz"
        save_model(path, model)
        loaded, _ = load_model(path)
        assert isinstance(loaded, AmplitudeSeparatedModel)
        assert loaded.epsilon == pytest.approx(0.2)
        u = np.linspace(0, 1, 5)
        np.testing.assert_array_equal(amplitude_separated_eval(loaded, u, 0.4),
                                      amplitude_separated_eval(model, u, 0.4))
