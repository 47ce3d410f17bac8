import numpy as np
import pytest

from mixopt import (
    DomainError,
    FlatNetwork,
    LatticePoint,
    MlpSurrogate,
    TrainConfig,
    TrainingError,
    cross_validate,
    fit_surrogate,
    forward,
    forward_single,
    init_network,
    load_surrogate,
    loss_and_grad,
    make_sample,
    mse_loss,
    param_count,
    r_squared,
    save_surrogate,
    train_network,
)


def margin_instance(seed, n_in=6, n_out=4, hidden=(8, 7), n=12, margin=1e-3):
    """Random (net, X, Y) whose pre-activations stay clear of the ReLU kink.

    Central differences are only a valid derivative estimate away from
    the kink, so instances are redrawn until every pre-activation has
    |z| > margin.
    """
    for attempt in range(100):
        s = seed + 1000 * attempt
        rng = np.random.default_rng(s)
        net = init_network(n_in, n_out, hidden=hidden, seed=s)
        X = rng.random((n, n_in))
        Y = rng.random((n, n_out))
        A = X
        ok = True
        for W, b in net.layers()[:-1]:
            Z = A @ W + b
            if np.min(np.abs(Z)) <= margin:
                ok = False
                break
            A = np.maximum(Z, 0.0)
        if ok:
            return net, X, Y
    raise AssertionError("no kink-free instance found")


class TestInit:
    def test_deterministic(self):
        a = init_network(6, 4, seed=3)
        b = init_network(6, 4, seed=3)
        assert np.array_equal(a.flat, b.flat)

    def test_seeds_differ(self):
        assert not np.array_equal(init_network(6, 4, seed=0).flat, init_network(6, 4, seed=1).flat)

    def test_parameter_count_reference_architecture(self):
        # independent count for (13 -> 100 -> 100 -> 10):
        expected = (13 * 100 + 100) + (100 * 100 + 100) + (100 * 10 + 10)
        assert expected == 12_510
        net = init_network(13, 10, seed=0)
        assert net.flat.size == param_count(net.dims) == expected

    def test_biases_zero_weights_bounded(self):
        net = init_network(5, 3, hidden=(10, 10), seed=7)
        for W, b in net.layers():
            assert np.all(b == 0.0)
            bound = 1.0 / np.sqrt(W.shape[0])
            assert np.all(np.abs(W) <= bound)

    def test_zero_network_forward_is_output_bias(self):
        dims = (4, 8, 8, 3)
        net = FlatNetwork(dims, np.zeros(param_count(dims)))
        X = np.random.default_rng(0).random((5, 4))
        assert np.array_equal(forward(net, X), np.zeros((5, 3)))


class TestForward:
    def test_hand_network_pass_through(self):
        # 1 -> 1 -> 1 with unit weights and zero biases relays positive inputs
        dims = (1, 1, 1)
        net = FlatNetwork(dims, np.zeros(param_count(dims)))
        (W1, b1), (W2, b2) = net.layers()
        W1[...] = 1.0
        W2[...] = 1.0
        assert forward(net, [[0.5]])[0, 0] == 0.5
        assert forward(net, [[-0.5]])[0, 0] == 0.0  # ReLU gate

    def test_matches_straight_line_reimplementation(self):
        net = init_network(6, 4, hidden=(9, 5), seed=11)
        rng = np.random.default_rng(1)
        X = rng.random((7, 6))
        got = forward(net, X)
        layers = net.layers()
        for r in range(X.shape[0]):
            a = X[r].tolist()
            for li, (W, b) in enumerate(layers):
                z = [sum(a[i] * W[i, j] for i in range(W.shape[0])) + b[j] for j in range(W.shape[1])]
                a = [max(v, 0.0) for v in z] if li < len(layers) - 1 else z
            assert np.allclose(got[r], a, atol=1e-12)

    def test_forward_single_validates(self):
        net = init_network(4, 2, seed=0)
        p = np.array([0.5, 0.25, 0.25])
        out = forward_single(net, p, 0.5)
        assert out.shape == (2,)
        with pytest.raises(DomainError):
            forward_single(net, np.array([0.5, 0.5]), 0.5)  # wrong m
        with pytest.raises(DomainError):
            forward_single(net, p, 0.0)  # step_norm out of range

    def test_dimension_mismatch(self):
        net = init_network(6, 4, seed=0)
        with pytest.raises(DomainError):
            forward(net, np.zeros((3, 5)))


class TestGradients:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_central_differences(self, seed):
        net, X, Y = margin_instance(seed)
        _, grad = loss_and_grad(net, X, Y)
        h = 1e-5
        for i in range(net.flat.size):
            saved = net.flat[i]
            net.flat[i] = saved + h
            lp = mse_loss(net, X, Y)
            net.flat[i] = saved - h
            lm = mse_loss(net, X, Y)
            net.flat[i] = saved
            fd = (lp - lm) / (2 * h)
            rel = abs(fd - grad[i]) / max(abs(fd), abs(grad[i]), 1e-8)
            assert rel < 1e-4, f"param {i}: analytic {grad[i]}, fd {fd}"


class TestTraining:
    def test_memorizes_single_point(self):
        X = np.tile([[0.3, 0.7, 0.5]], (4, 1))
        Y = np.tile([[0.2, 0.9]], (4, 1))
        net = init_network(3, 2, hidden=(16, 16), seed=0)
        cfg = TrainConfig(learning_rate=1e-2, steps=2000, seed=0)
        trained, history = train_network(net, X, Y, cfg)
        assert history[-1] < 1e-6

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        X, Y = rng.random((20, 4)), rng.random((20, 2))
        net = init_network(4, 2, hidden=(8,), seed=5)
        cfg = TrainConfig(learning_rate=1e-3, steps=50, seed=5)
        a, _ = train_network(net, X, Y, cfg)
        b, _ = train_network(net, X, Y, cfg)
        assert np.array_equal(a.flat, b.flat)

    def test_default_config_does_not_increase_loss(self):
        rng = np.random.default_rng(2)
        X, Y = rng.random((30, 4)), rng.random((30, 3))
        net = init_network(4, 3, hidden=(16, 16), seed=2)
        trained, history = train_network(net, X, Y, TrainConfig())
        assert history[-1] <= history[0]

    def test_divergence_reports_step(self):
        rng = np.random.default_rng(3)
        X, Y = rng.random((10, 3)), rng.random((10, 2))
        net = init_network(3, 2, hidden=(8,), seed=3)
        with np.errstate(over="ignore", invalid="ignore"), pytest.raises(TrainingError) as err:
            train_network(net, X, Y, TrainConfig(learning_rate=1e160, steps=10))
        assert err.value.step is not None

    def test_input_net_unchanged(self):
        rng = np.random.default_rng(4)
        X, Y = rng.random((10, 3)), rng.random((10, 2))
        net = init_network(3, 2, hidden=(8,), seed=4)
        before = net.flat.copy()
        train_network(net, X, Y, TrainConfig(learning_rate=1e-3, steps=20))
        assert np.array_equal(net.flat, before)


class TestRSquared:
    def test_perfect(self):
        y = np.array([[0.1, 0.4], [0.9, 0.3], [0.5, 0.6]])
        assert r_squared(y, y) == pytest.approx(1.0)

    def test_mean_prediction_scores_zero(self):
        y = np.array([[0.0], [1.0]])
        assert r_squared(np.full((2, 1), 0.5), y) == pytest.approx(0.0)

    def test_hand_values(self):
        y = np.array([[0.0], [1.0]])
        assert r_squared(np.array([[0.5], [0.5]]), y) == pytest.approx(0.0)
        assert r_squared(np.array([[0.25], [0.75]]), y) == pytest.approx(0.75)

    def test_constant_actual_rejected(self):
        with pytest.raises(DomainError):
            r_squared(np.array([[0.1], [0.2]]), np.array([[0.5], [0.5]]))

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            r_squared(np.zeros((3, 2)), np.zeros((3, 3)))


def oracle_free_samples(n_mixtures, score_fn, m=3, b=6, T=1000, seed=0):
    from mixopt import sample_lattice, to_proportions

    pts = sample_lattice(m, b, n_mixtures, seed=seed)
    samples = []
    for pt in pts:
        p = to_proportions(pt)
        for t in (250, 500, 750, 1000):
            samples.append(make_sample(pt, t, T, score_fn(p, t / T)))
    return samples


class TestCrossValidate:
    def test_one_mixture_per_fold(self):
        samples = oracle_free_samples(10, lambda p, tn: [0.2 + 0.5 * p[0] * tn, 0.3 + 0.2 * tn])
        cfg = TrainConfig(learning_rate=1e-3, steps=5)
        result = cross_validate(samples, folds=10, cfg=cfg, seed=0)
        assert result.fold_sizes == (4,) * 10

    def test_deterministic(self):
        samples = oracle_free_samples(12, lambda p, tn: [0.5 * p[0] + 0.1, 0.3 * tn + 0.2])
        cfg = TrainConfig(learning_rate=1e-3, steps=5)
        a = cross_validate(samples, folds=4, cfg=cfg, seed=9)
        b = cross_validate(samples, folds=4, cfg=cfg, seed=9)
        assert a.fold_r2 == b.fold_r2

    def test_too_few_mixtures(self):
        samples = oracle_free_samples(5, lambda p, tn: [0.5, 0.5])
        with pytest.raises(DomainError):
            cross_validate(samples, folds=10)

    def test_recovers_affine_targets(self):
        # targets inside the hypothesis class: R^2 >= 0.99 out of fold
        def affine(p, tn):
            return [
                0.1 + 0.3 * p[0] + 0.2 * p[1] + 0.2 * tn,
                0.5 - 0.2 * p[2] + 0.1 * tn,
            ]

        samples = oracle_free_samples(25, affine)
        cfg = TrainConfig(learning_rate=1e-2, steps=400, seed=0)
        result = cross_validate(samples, folds=10, cfg=cfg, seed=0)
        assert result.mean_r2 >= 0.99


class TestEstimator:
    def test_sklearn_contract(self):
        from sklearn.base import clone

        est = MlpSurrogate(hidden=(8,), learning_rate=1e-3, steps=10, seed=1)
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_predict_before_fit(self):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            MlpSurrogate().predict(np.zeros((1, 3)))

    def test_fit_predict_shapes(self):
        rng = np.random.default_rng(0)
        X, Y = rng.random((16, 4)), rng.random((16, 3))
        est = MlpSurrogate(hidden=(8,), learning_rate=1e-3, steps=20, seed=0).fit(X, Y)
        assert est.predict(X).shape == (16, 3)
        assert isinstance(est.score(X, Y), float)


class TestCheckpointFiles:
    def test_round_trip_bit_exact(self, tmp_path):
        samples = oracle_free_samples(8, lambda p, tn: [0.4 * p[0] + 0.1, 0.2 * tn + 0.3])
        model = fit_surrogate(samples, TrainConfig(learning_rate=1e-3, steps=30, seed=2))
        path = tmp_path / "model.json"
        save_surrogate(model, path)
        back = load_surrogate(path)
        assert back.network_.dims == model.network_.dims
        assert np.array_equal(back.network_.flat, model.network_.flat)
        X = np.random.default_rng(1).random((5, 4))
        assert np.array_equal(back.predict(X), model.predict(X))

    def test_rejects_other_kinds(self, tmp_path):
        from mixopt import SchemaError

        path = tmp_path / "model.json"
        path.write_text('{"schema": 1, "kind": "oracle"}')
        with pytest.raises(SchemaError):
            load_surrogate(path)
