import json

import numpy as np
import pytest

from gdw.errors import DataError, ShapeError
from gdw.labels import UNKNOWN, LabelVector
from gdw.learn import (SignModel, SplitSpec, TrainConfig, accuracy, forward, load_model,
                       loss_and_grads, per_class_split, random_split, save_model, train)
from gdw.operators import FeatureBank

from oracles import max_group_rel_error, small_instance


def toy(rng, n=200, sep=5.0, noise=0.1):
    y = LabelVector(np.repeat([0, 1], n // 2), 2)
    X = np.where(y.values[:, None] == 1, sep, -sep) * np.ones((n, 2)) + noise * rng.standard_normal((n, 2))
    return FeatureBank([X], []), y


class TestForward:
    def test_zero_params_uniform(self, rng):
        bank = FeatureBank([rng.standard_normal((7, 3))] * 2, ["a"])
        P = forward(SignModel.zeros(2, 3, 5, 4), bank)
        assert np.array_equal(P, np.full((7, 4), 0.25))

    def test_rows_sum_to_one(self, rng):
        model, bank, _ = small_instance(rng)
        for B in bank.blocks:
            B *= 50  # large logits exercise the max shift
        P = forward(model, bank)
        assert np.all(np.abs(P.sum(1) - 1) < 1e-12)
        assert np.all(np.isfinite(P))

    def test_logistic_degeneration(self, rng):
        X = np.abs(rng.standard_normal((20, 3)))
        model = SignModel.zeros(1, 3, 3, 2)
        model.thetas[0][:] = np.eye(3)
        model.omega[:] = rng.standard_normal((3, 2))
        model.omega_bias[:] = rng.standard_normal(2)
        w = model.omega[:, 1] - model.omega[:, 0]
        c = model.omega_bias[1] - model.omega_bias[0]
        p1 = 1 / (1 + np.exp(-(X @ w + c)))
        assert np.allclose(forward(model, FeatureBank([X], []))[:, 1], p1, atol=1e-14)

    def test_shape_mismatch(self, rng):
        model, bank, _ = small_instance(rng, r=2)
        with pytest.raises(ShapeError):
            forward(model, FeatureBank(bank.blocks[:2], ["x"]))


class TestLoss:
    def test_ln_c_at_zero(self, rng):
        bank = FeatureBank([rng.standard_normal((9, 2))], [])
        y = LabelVector(rng.integers(0, 5, 9), 5)
        loss, _ = loss_and_grads(SignModel.zeros(1, 2, 4, 5), bank, y, np.arange(9))
        assert loss == np.log(5)

    def test_decay_term(self, rng):
        model, bank, y = small_instance(rng)
        base, _ = loss_and_grads(model, bank, y, np.arange(10))
        dec, _ = loss_and_grads(model, bank, y, np.arange(10), weight_decay=0.3)
        sq = sum(np.sum(t ** 2) for t in model.thetas) + np.sum(model.omega ** 2)
        assert dec - base == pytest.approx(0.15 * sq, rel=1e-12)

    def test_gradient_check(self, rng):
        for _ in range(5):
            model, bank, y = small_instance(rng)
            idx = rng.choice(10, size=7, replace=False)
            assert max_group_rel_error(model, bank, y, idx, weight_decay=0.01) < 1e-4

    def test_duplicate_doubles_contribution(self, rng):
        model, bank, y = small_instance(rng)
        _, g1 = loss_and_grads(model, bank, y, [0])
        _, g2 = loss_and_grads(model, bank, y, [1])
        _, g = loss_and_grads(model, bank, y, [0, 0, 1])
        for a, b, c in zip(g1.parameters(), g2.parameters(), g.parameters()):
            assert np.allclose(c, (2 * a + b) / 3, atol=1e-15)

    def test_unknown_label(self, rng):
        model, bank, y = small_instance(rng)
        vals = y.values.copy()
        vals[3] = UNKNOWN
        with pytest.raises(DataError):
            loss_and_grads(model, bank, LabelVector(vals, y.num_classes), [1, 3])

    def test_nonnegative(self, rng):
        model, bank, y = small_instance(rng)
        assert loss_and_grads(model, bank, y, np.arange(10))[0] >= 0


class TestSplits:
    def test_per_class(self, rng):
        y = LabelVector(rng.integers(0, 4, 500), 4)
        s = per_class_split(y, 20, 0.15, seed=1)
        assert np.all(np.bincount(y.values[s.train], minlength=4) == 20)
        assert s.val.size == 75
        assert s.train.size + s.val.size + s.test.size == 500

    def test_disjoint_required(self):
        with pytest.raises(DataError):
            SplitSpec([0, 1], [1], [2])

    def test_random_split(self):
        s = random_split(100, 0.5, 0.25, seed=3)
        assert (s.train.size, s.val.size, s.test.size) == (50, 25, 25)

    def test_roundtrip(self):
        s = random_split(20, seed=1)
        t = SplitSpec.from_dict(json.loads(json.dumps(s.to_dict())))
        assert np.array_equal(s.test, t.test)


class TestTrain:
    def test_separable_toy(self, rng):
        bank, y = toy(rng)
        split = random_split(200, 0.5, 0.25, seed=2)
        model, hist = train(bank, y, split, TrainConfig(max_epochs=200, patience=200, hidden=8))
        assert accuracy(model, bank, y, split.train) == 1.0

    def test_patience_one_lr_zero(self, rng):
        bank, y = toy(rng)
        split = random_split(200, seed=2)
        cfg = TrainConfig(lr=0.0, patience=1, hidden=8, seed=4)
        model, hist = train(bank, y, split, cfg)
        assert hist.epochs == 2 and hist.best_epoch == 1
        init = SignModel.init(1, 2, 8, 2, seed=4)
        for a, b in zip(model.parameters(), init.parameters()):
            assert np.array_equal(a, b)

    def test_deterministic(self, rng):
        model, bank, y = small_instance(rng, n=60)
        split = random_split(60, seed=3)
        cfg = TrainConfig(max_epochs=50, hidden=4, seed=9)
        a = train(bank, y, split, cfg)
        b = train(bank, y, split, cfg)
        assert a[1].to_dict() == b[1].to_dict()
        for p, q in zip(a[0].parameters(), b[0].parameters()):
            assert np.array_equal(p, q)

    def test_empty_sets(self, rng):
        bank, y = toy(rng)
        with pytest.raises(DataError):
            train(bank, y, SplitSpec([0, 1], [], [2]), TrainConfig())

    def test_bad_config(self):
        with pytest.raises(DataError):
            TrainConfig(patience=0)
        with pytest.raises(DataError):
            TrainConfig.from_dict({"learning_rate": 0.1})

    def test_init_scale(self):
        m = SignModel.init(3, 16, 8, 4, seed=1)
        assert all(np.max(np.abs(t)) <= 1 / np.sqrt(16) for t in m.thetas)
        assert np.max(np.abs(m.omega)) <= 1 / np.sqrt(24)
        assert all(not b.any() for b in m.theta_biases) and not m.omega_bias.any()

    def test_permutation_equivariance(self, rng):
        from gdw.synth import gen_class_features
        n = 120
        y = LabelVector(rng.integers(0, 3, n), 3)
        X = gen_class_features(y, 4, 1.0, 1.0, seed=5)
        bank = FeatureBank([X, X ** 2], ["sq"])
        split = random_split(n, 0.5, 0.25, seed=6)
        cfg = TrainConfig(max_epochs=100, patience=30, hidden=8, seed=7)
        m1, _ = train(bank, y, split, cfg)
        perm = rng.permutation(n)
        inv = np.empty(n, dtype=int)
        inv[perm] = np.arange(n)
        pbank = FeatureBank([B[perm] for B in bank.blocks], bank.specs)
        py = LabelVector(y.values[perm], 3)
        psplit = SplitSpec(inv[split.train], inv[split.val], inv[split.test])
        m2, _ = train(pbank, py, psplit, cfg)
        assert accuracy(m1, bank, y, split.test) == accuracy(m2, pbank, py, psplit.test)
        assert accuracy(m1, bank, y, split.val) == accuracy(m2, pbank, py, psplit.val)

    def test_model_json_roundtrip(self, tmp_path, rng):
        model, bank, _ = small_instance(rng)
        save_model(tmp_path / "m.json", model)
        back = load_model(tmp_path / "m.json")
        for a, b in zip(model.parameters(), back.parameters()):
            assert np.array_equal(a, b)
        obj = json.loads((tmp_path / "m.json").read_text())
        assert obj["omega"]["shape"] == list(model.omega.shape)
