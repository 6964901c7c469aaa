"""Tests for the embedder forward/backward, optimizer, schedule,
checkpointing, and the training loop."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from modalmetric import (
    AdamState,
    ConfigError,
    LossConfig,
    NumericError,
    SyntheticConfig,
    TrainConfig,
    TripletKind,
    ablation_variants,
    adam_step,
    cosine_lr,
    embed_backward,
    embed_forward,
    finite_diff_check,
    generate_synthetic,
    init_params,
    load_checkpoint,
    log_columns,
    mathm_loss,
    save_checkpoint,
    softmax_ce,
    train,
)
from modalmetric.model import EmbedderParams


def small_dataset(seed=5):
    return generate_synthetic(
        SyntheticConfig(n_classes=4, samples_per_class_per_modality=6,
                        d_in=8, sigma=0.2, offset_norm=0.5, seed=seed)
    )


def small_config(method, iters=30, **kw):
    kw.setdefault("d_emb", 4)
    kw.setdefault("classes_per_batch", 3)
    kw.setdefault("samples_per_class", 2)
    kw.setdefault("total_iters", iters)
    return TrainConfig(method=method, **kw)


class TestEmbedForward:
    def _identity_embedder(self):
        return EmbedderParams(
            W=np.eye(2), b=np.zeros(2), modality_offset=np.zeros((2, 2))
        )

    def test_normalized_affine(self):
        params = self._identity_embedder()
        e, cache = embed_forward(params, np.array([[3.0, 4.0]]), np.array([0]))
        assert_allclose(e, [[0.6, 0.8]], rtol=1e-12)
        assert_allclose(cache.norms, [5.0], rtol=1e-12)
        assert_allclose(cache.pre_norm, [[3.0, 4.0]], rtol=1e-12)

    def test_offset_selected_by_modality(self):
        params = self._identity_embedder()
        params.modality_offset = np.array([[0.0, 0.0], [10.0, 0.0]])
        x = np.array([[0.0, 1.0], [0.0, 1.0]])
        e, _ = embed_forward(params, x, np.array([0, 1]))
        assert_allclose(e[0], [0.0, 1.0], atol=1e-12)
        assert_allclose(e[1], np.array([10.0, 1.0]) / np.sqrt(101.0), rtol=1e-12)

    def test_unit_rows(self):
        rng = np.random.default_rng(0)
        params = init_params(6, 4, 3, rng)
        x = rng.standard_normal((20, 6))
        mods = rng.integers(0, 2, size=20)
        e, _ = embed_forward(params.embedder, x, mods)
        assert_allclose(np.linalg.norm(e, axis=1), np.ones(20), atol=1e-12)

    def test_feature_shape_error(self):
        params = self._identity_embedder()
        with pytest.raises(ValueError, match=r"\(B, 2\)"):
            embed_forward(params, np.zeros((3, 5)), np.zeros(3, dtype=int))


class TestEmbedBackward:
    def _setup(self, seed=1, b=12):
        rng = np.random.default_rng(seed)
        params = init_params(5, 3, 2, rng).embedder
        x = rng.standard_normal((b, 5))
        mods = rng.integers(0, 2, size=b)
        return params, x, mods

    def test_parallel_upstream_vanishes(self):
        # gradient components along the embedding direction are projected
        # out by the normalization Jacobian
        params, x, mods = self._setup()
        e, cache = embed_forward(params, x, mods)
        grads = embed_backward(cache, 3.0 * e)
        for g in grads.values():
            assert_allclose(g, np.zeros_like(g), atol=1e-12)

    def test_zero_upstream(self):
        params, x, mods = self._setup()
        _, cache = embed_forward(params, x, mods)
        grads = embed_backward(cache, np.zeros_like(cache.embeddings))
        for g in grads.values():
            assert_array_equal(g, np.zeros_like(g))

    def test_finite_diff_linear_readout(self):
        # smooth scalar functional of the embeddings: tight agreement
        params, x, mods = self._setup(seed=2)
        rng = np.random.default_rng(3)
        r = rng.standard_normal((len(x), 3))

        def loss_of(name, value):
            p = EmbedderParams(params.W.copy(), params.b.copy(),
                               params.modality_offset.copy())
            setattr(p, name, value)
            e, _ = embed_forward(p, x, mods)
            return float((e * r).sum())

        e, cache = embed_forward(params, x, mods)
        grads = embed_backward(cache, r)
        for attr, key in [("W", "W"), ("b", "b"),
                          ("modality_offset", "modality_offset")]:
            err = finite_diff_check(
                lambda v, a=attr: loss_of(a, v), getattr(params, attr), grads[key]
            )
            assert err < 1e-6, attr

    def test_finite_diff_through_triplet_pipeline(self):
        params, x, _ = self._setup(seed=4)
        labels = np.repeat(np.arange(3), 4)
        mods = np.tile([0, 0, 1, 1], 3)
        cfg = LossConfig(margin=0.5)

        def loss_of_w(w):
            p = EmbedderParams(w, params.b.copy(), params.modality_offset.copy())
            e, _ = embed_forward(p, x, mods)
            return mathm_loss(e, labels, mods, cfg).combined_value

        e, cache = embed_forward(params, x, mods)
        bundle = mathm_loss(e, labels, mods, cfg)
        grads = embed_backward(cache, bundle.combined_grad)
        err = finite_diff_check(loss_of_w, params.W, grads["W"])
        assert err < 1e-4

    def test_shape_error(self):
        params, x, mods = self._setup()
        _, cache = embed_forward(params, x, mods)
        with pytest.raises(ValueError, match="grad_output"):
            embed_backward(cache, np.zeros((2, 3)))


class TestAdamStep:
    def test_zero_gradient_is_identity(self):
        p = {"a": np.array([1.0, -2.0])}
        adam_step(p, {"a": np.zeros(2)}, AdamState(), 0.1)
        assert_array_equal(p["a"], [1.0, -2.0])

    def test_first_step_magnitude(self):
        # bias correction makes the first step ~lr regardless of scale
        p = {"a": np.array([1.0])}
        adam_step(p, {"a": np.array([1.0])}, AdamState(), 0.1)
        assert_allclose(p["a"], [0.9], atol=1e-8)

    def test_in_place_update(self):
        arr = np.array([1.0])
        p = {"a": arr}
        out, _ = adam_step(p, {"a": np.array([0.5])}, AdamState(), 0.1)
        assert out["a"] is arr
        assert arr[0] != 1.0

    def test_missing_gradient_leaves_param(self):
        p = {"a": np.array([1.0]), "b": np.array([2.0])}
        adam_step(p, {"a": np.array([1.0])}, AdamState(), 0.1)
        assert p["b"][0] == 2.0

    def test_deterministic(self):
        def run():
            p = {"a": np.array([1.0, 2.0])}
            s = AdamState()
            rng = np.random.default_rng(0)
            for _ in range(10):
                adam_step(p, {"a": rng.standard_normal(2)}, s, 0.05)
            return p["a"]

        assert_array_equal(run(), run())

    def test_non_finite_gradient(self):
        p = {"a": np.array([1.0])}
        with pytest.raises(NumericError, match="a"):
            adam_step(p, {"a": np.array([np.nan])}, AdamState(), 0.1)

    def test_shape_mismatch(self):
        p = {"a": np.array([1.0])}
        with pytest.raises(ValueError, match="shape"):
            adam_step(p, {"a": np.zeros(2)}, AdamState(), 0.1)


class TestCosineLr:
    def test_endpoints_and_midpoint(self):
        assert cosine_lr(0.1, 0, 100) == 0.1
        assert_allclose(cosine_lr(0.1, 100, 100), 0.0, atol=1e-17)
        assert_allclose(cosine_lr(0.1, 50, 100), 0.05, rtol=1e-12)

    def test_monotone_decay(self):
        vals = [cosine_lr(1.0, t, 40) for t in range(41)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_range_check(self):
        with pytest.raises(ValueError):
            cosine_lr(0.1, -1, 100)
        with pytest.raises(ValueError):
            cosine_lr(0.1, 101, 100)


class TestInitParams:
    def test_shapes(self):
        params = init_params(10, 4, 7, np.random.default_rng(0))
        assert params.embedder.W.shape == (10, 4)
        assert params.embedder.b.shape == (4,)
        assert_array_equal(params.embedder.modality_offset, np.zeros((2, 4)))
        assert params.classifier.W_c.shape == (7, 4)
        assert params.discriminator.w_d.shape == (4,)
        assert params.discriminator.b_d.shape == ()

    def test_deterministic(self):
        a = init_params(6, 3, 4, np.random.default_rng(9))
        b = init_params(6, 3, 4, np.random.default_rng(9))
        for name, arr in a.tensors().items():
            assert_array_equal(arr, b.tensors()[name])

    def test_d_emb_floor(self):
        with pytest.raises(ValueError):
            init_params(6, 1, 4, np.random.default_rng(0))


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        params = init_params(5, 3, 4, np.random.default_rng(2))
        meta = {"seed": 3, "note": "x"}
        path = tmp_path / "ckpt.json"
        save_checkpoint(path, params, meta)
        loaded, got_meta = load_checkpoint(path)
        assert got_meta == meta
        for name, arr in params.tensors().items():
            assert_array_equal(loaded.tensors()[name], arr)

    def test_save_load_save_byte_identical(self, tmp_path):
        params = init_params(5, 3, 4, np.random.default_rng(2))
        p1 = tmp_path / "a.json"
        p2 = tmp_path / "b.json"
        save_checkpoint(p1, params, {"seed": 0})
        loaded, meta = load_checkpoint(p1)
        save_checkpoint(p2, loaded, meta)
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_other_json(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text('{"format": "something-else"}')
        with pytest.raises(ValueError, match="not a"):
            load_checkpoint(path)


class TestTrainConfig:
    def test_validation(self):
        with pytest.raises(ConfigError, match="unknown method"):
            TrainConfig(method="resnet")
        with pytest.raises(ConfigError):
            TrainConfig(total_iters=0)
        with pytest.raises(ConfigError):
            TrainConfig(base_lr=0.0)
        with pytest.raises(ConfigError):
            TrainConfig(d_emb=1)
        with pytest.raises(ConfigError):
            TrainConfig(disc_lr_scale=0.0)

    def test_recipes(self):
        assert TrainConfig(method="cls-only").recipe() == ((), False, False)
        assert TrainConfig(method="baseline").recipe() == (
            (TripletKind.CROSS,), False, False)
        kinds, weighting, adversarial = TrainConfig(method="mathm").recipe()
        assert kinds == (TripletKind.CROSS, TripletKind.WITHIN,
                         TripletKind.HYBRID)
        assert weighting and not adversarial
        assert TrainConfig(method="gan").recipe() == (
            (TripletKind.CROSS,), False, True)

    def test_recipe_overrides(self):
        cfg = TrainConfig(method="mathm", triplet_kinds=(TripletKind.CROSS,),
                          use_weighting=False)
        assert cfg.recipe() == ((TripletKind.CROSS,), False, False)

    def test_log_columns(self):
        assert log_columns(TrainConfig(method="cls-only")) == [
            "iter", "lr", "l_cls", "l_total"]
        assert log_columns(TrainConfig(method="baseline")) == [
            "iter", "lr", "l_cls", "l_cross", "g_cross", "l_total"]
        assert log_columns(TrainConfig(method="mathm")) == [
            "iter", "lr", "l_cls", "l_cross", "l_in", "l_hyb",
            "g_cross", "g_in", "g_hyb", "w_cross", "w_in", "w_hyb", "l_total"]
        assert log_columns(TrainConfig(method="gan")) == [
            "iter", "lr", "l_cls", "l_cross", "g_cross",
            "l_adv_g", "l_adv_d", "l_total"]


class TestTrain:
    def test_log_rows_match_columns(self):
        ds = small_dataset()
        for method in ("cls-only", "baseline", "mathm", "gan"):
            cfg = small_config(method, iters=3)
            result = train(ds, cfg)
            assert len(result.log) == 3
            for row in result.log:
                assert list(row.keys()) == log_columns(cfg)

    def test_deterministic(self):
        ds = small_dataset()
        a = train(ds, small_config("mathm", iters=10))
        b = train(ds, small_config("mathm", iters=10))
        for name, arr in a.params.tensors().items():
            assert_array_equal(arr, b.params.tensors()[name])
        assert a.log == b.log

    def test_weighting_identities_in_log(self):
        # per-row invariant: active contributions w*g agree and sum to
        # the active g total; dead losses carry weight zero
        ds = small_dataset()
        result = train(ds, small_config("mathm", iters=25))
        eps = result.config.loss.eps_g
        for row in result.log:
            g = np.array([row["g_cross"], row["g_in"], row["g_hyb"]])
            w = np.array([row["w_cross"], row["w_in"], row["w_hyb"]])
            active = g > eps
            assert_array_equal(w[~active], 0.0)
            if active.any():
                contrib = (w * g)[active]
                assert np.abs(contrib - contrib[0]).max() <= 1e-12
                assert abs(contrib.sum() - g[active].sum()) <= 1e-12

    def test_lambda_zero_matches_cls_only(self):
        # a zero embedding weight scales those gradients away entirely,
        # and neither mining nor weighting consumes rng draws
        ds = small_dataset()
        mathm = train(ds, small_config("mathm", iters=15,
                                       loss=LossConfig(lam=0.0)))
        cls = train(ds, small_config("cls-only", iters=15))
        for name, arr in mathm.params.tensors().items():
            assert_array_equal(arr, cls.params.tensors()[name])

    def test_discriminator_only_moves_for_gan(self):
        ds = small_dataset()
        init = init_params(ds.d_in, 4, ds.n_classes, np.random.default_rng(0))
        plain = train(ds, small_config("mathm", iters=5, seed=0))
        assert_array_equal(plain.params.discriminator.w_d, init.discriminator.w_d)
        gan = train(ds, small_config("gan", iters=5, seed=0))
        assert np.abs(gan.params.discriminator.w_d - init.discriminator.w_d).max() > 0

    def test_classification_accuracy(self):
        # easy, well-separated classes: the classification head must
        # essentially solve the train set
        ds = generate_synthetic(
            SyntheticConfig(n_classes=4, samples_per_class_per_modality=8,
                            d_in=16, sigma=0.05, offset_norm=0.3, seed=1)
        )
        cfg = TrainConfig(method="cls-only", d_emb=8, classes_per_batch=4,
                          samples_per_class=4, base_lr=1e-3, total_iters=400,
                          seed=0)
        result = train(ds, cfg)
        e, _ = embed_forward(result.params.embedder, ds.features, ds.modalities)
        pred = np.argmax(e @ result.params.classifier.W_c.T, axis=1)
        assert (pred == ds.labels).mean() > 0.95

    def test_train_class_ids_recorded(self):
        ds = small_dataset()
        result = train(ds, small_config("baseline", iters=2))
        assert result.train_class_ids == tuple(range(4))

    def test_non_finite_loss_raises(self, monkeypatch):
        ds = small_dataset()

        def bad_softmax(logits, labels):
            report = softmax_ce(logits, labels)
            report.value = float("inf")
            return report

        monkeypatch.setattr("modalmetric.training.softmax_ce", bad_softmax)
        with pytest.raises(NumericError, match="iteration 0"):
            train(ds, small_config("cls-only", iters=2))


class TestAblationVariants:
    def test_eight_rows(self):
        base = TrainConfig(method="mathm")
        variants = ablation_variants(base)
        names = [name for name, _ in variants]
        assert names == ["cls-only", "cross", "within", "hybrid",
                         "cross+within", "cross+hybrid", "all", "all+gw"]

    def test_recipes_per_row(self):
        cross, within, hybrid = (TripletKind.CROSS, TripletKind.WITHIN,
                                 TripletKind.HYBRID)
        want = {
            "cls-only": ((), False),
            "cross": ((cross,), False),
            "within": ((within,), False),
            "hybrid": ((hybrid,), False),
            "cross+within": ((cross, within), False),
            "cross+hybrid": ((cross, hybrid), False),
            "all": ((cross, within, hybrid), False),
            "all+gw": ((cross, within, hybrid), True),
        }
        for name, cfg in ablation_variants(TrainConfig(method="mathm")):
            kinds, weighting, adversarial = cfg.recipe()
            assert (kinds, weighting) == want[name]
            assert not adversarial
            assert cfg.method == ("cls-only" if not kinds else "mathm")

    def test_preserves_other_knobs(self):
        base = TrainConfig(method="mathm", d_emb=6, total_iters=123, seed=11)
        for _, cfg in ablation_variants(base):
            assert cfg.d_emb == 6
            assert cfg.total_iters == 123
            assert cfg.seed == 11
