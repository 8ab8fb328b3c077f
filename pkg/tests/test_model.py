import hashlib
import json

import numpy as np
import pytest

from tokenprune import tensor as T
from tokenprune.model import (
    ModelFormatError,
    ViTConfig,
    ViTModel,
    embed_tokens,
    expected_shapes,
    forward,
    generate_random_model,
    load_config,
    load_model,
    mean_pool_model,
    model_hash,
    save_config,
    save_model,
)
from tokenprune.pruning import TokenPruner
from tokenprune.serialization import decode_tensors, encode_tensors

GOLDEN_CONFIG = ViTConfig(depth=2, embed_dim=64, num_heads=4, mlp_ratio=4.0, num_tokens=17,
                          num_special_tokens=1, num_classes=10)
# recorded from the first generation of this config with seed 0
GOLDEN_WEIGHTS_SHA256 = "81ce936d0488c4fd6794f6e19c69acf491e32c1a50c1578644f8fbd0f414d97d"


class TestConfig:
    def test_rejects_indivisible_heads(self):
        with pytest.raises(ValueError, match="divisible"):
            ViTConfig(depth=12, embed_dim=100, num_heads=3)

    @pytest.mark.parametrize("special", [-1, 17])
    def test_rejects_bad_special_count(self, special):
        with pytest.raises(ValueError):
            ViTConfig(depth=1, embed_dim=8, num_heads=2, num_tokens=17, num_special_tokens=special)

    def test_head_dim(self):
        assert ViTConfig(depth=12, embed_dim=192, num_heads=3).head_dim == 64

    def test_json_round_trip(self, tmp_path, tiny_config):
        save_config(tiny_config, tmp_path / "c.json")
        assert load_config(tmp_path / "c.json") == tiny_config

    def test_json_missing_key(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"depth": 2}))
        with pytest.raises(ValueError, match="missing keys"):
            load_config(tmp_path / "c.json")


class TestWeights:
    def test_generation_is_deterministic(self, tiny_config):
        a = generate_random_model(tiny_config, 3)
        b = generate_random_model(tiny_config, 3)
        for name in a.weights:
            np.testing.assert_array_equal(a.weights[name], b.weights[name])

    def test_seeds_differ(self, tiny_config):
        a = generate_random_model(tiny_config, 3)
        b = generate_random_model(tiny_config, 4)
        assert not np.array_equal(a.weights["blocks.0.attn.qkv.weight"],
                                  b.weights["blocks.0.attn.qkv.weight"])

    def test_golden_checksum(self):
        model = generate_random_model(GOLDEN_CONFIG, 0)
        digest = hashlib.sha256(encode_tensors(model.weights)).hexdigest()
        assert digest == GOLDEN_WEIGHTS_SHA256

    def test_shapes_follow_config(self, tiny_model, tiny_config):
        for name, shape in expected_shapes(tiny_config).items():
            assert tiny_model.weights[name].shape == shape

    def test_weights_are_read_only(self, tiny_model):
        with pytest.raises(ValueError):
            tiny_model.weights["head.bias"][0] = 1.0

    def test_shape_mismatch_names_tensor(self, tiny_model, tiny_config):
        weights = dict(tiny_model.weights)
        weights["blocks.1.mlp.fc1.weight"] = np.zeros((3, 3), dtype=np.float32)
        with pytest.raises(ModelFormatError, match="blocks.1.mlp.fc1.weight"):
            ViTModel(tiny_config, weights)

    def test_save_load_round_trip_bit_identical(self, tmp_path):
        config = ViTConfig(depth=12, embed_dim=192, num_heads=3, mlp_ratio=4.0, num_tokens=197,
                           num_special_tokens=1, num_classes=1000)
        model = generate_random_model(config, 0)
        save_model(model, tmp_path / "w.vitw")
        loaded = load_model(config, tmp_path / "w.vitw")
        assert list(loaded.weights) == list(model.weights)
        for name, arr in model.weights.items():
            assert loaded.weights[name].tobytes() == arr.tobytes()
        assert model_hash(loaded) == model_hash(model)

    def test_truncated_tensor_is_named(self, tmp_path, tiny_model, tiny_config):
        blob = encode_tensors(tiny_model.weights)
        (tmp_path / "w.vitw").write_bytes(blob[:-10])
        with pytest.raises(ModelFormatError, match="head.bias"):
            load_model(tiny_config, tmp_path / "w.vitw")

    def test_bad_magic(self, tmp_path, tiny_config):
        (tmp_path / "w.vitw").write_bytes(b"NOPE" + bytes(10))
        with pytest.raises(ModelFormatError, match="magic"):
            load_model(tiny_config, tmp_path / "w.vitw")

    def test_header_mismatch_with_config(self, tmp_path, tiny_model):
        save_model(tiny_model, tmp_path / "w.vitw")
        other = ViTConfig(depth=4, embed_dim=16, num_heads=4, mlp_ratio=2.0, num_tokens=17,
                          num_special_tokens=1, num_classes=5)
        with pytest.raises(ModelFormatError, match="shape"):
            load_model(other, tmp_path / "w.vitw")

    def test_format_layout(self):
        blob = encode_tensors({"ab": np.array([[1.0, 2.0]], dtype=np.float32)})
        # magic, version=1 (u16), count=1 (u32), name_len=2, "ab", rank=2, dims 1,2, payload
        expected = (b"VITW" + (1).to_bytes(2, "little") + (1).to_bytes(4, "little")
                    + (2).to_bytes(4, "little") + b"ab" + (2).to_bytes(4, "little")
                    + (1).to_bytes(4, "little") + (2).to_bytes(4, "little")
                    + np.array([1.0, 2.0], dtype="<f4").tobytes())
        assert blob == expected
        assert list(decode_tensors(blob)) == ["ab"]


class TestForward:
    def test_logits_shape_and_determinism(self, tiny_model, tiny_config):
        x = embed_tokens(None, tiny_config, batch=3, seed=1)
        a = forward(tiny_model, x)
        assert a.shape == (3, tiny_config.num_classes)
        np.testing.assert_array_equal(a, forward(tiny_model, x))

    def test_identity_hook_is_bit_identical(self, tiny_model, tiny_config):
        x = embed_tokens(None, tiny_config, batch=2, seed=2)
        hooked = forward(tiny_model, x, lambda cap, h: h, hook_layer=1)
        np.testing.assert_array_equal(hooked, forward(tiny_model, x))

    def test_copying_hook_is_bit_identical(self, tiny_model, tiny_config):
        x = embed_tokens(None, tiny_config, batch=2, seed=2)
        hooked = forward(tiny_model, x, lambda cap, h: h.copy(), hook_layer=1)
        np.testing.assert_array_equal(hooked, forward(tiny_model, x))

    def test_r_zero_pruner_matches_baseline(self, tiny_model, tiny_config):
        x = embed_tokens(None, tiny_config, batch=2, seed=3)
        np.testing.assert_allclose(forward(tiny_model, x, TokenPruner(0, 1)),
                                   forward(tiny_model, x), atol=1e-6)

    def test_half_pruning_downstream_count(self, tiny_model, tiny_config):
        n = tiny_config.num_tokens
        r = (n - 1) // 2
        seen = {}

        def hook(capture, x):
            seen["in"] = x.shape[1]
            seen["attn"] = capture.attn.shape
            out = TokenPruner(r, 3)(capture, x)
            seen["out"] = out.shape[1]
            return out

        x = embed_tokens(None, tiny_config, batch=2, seed=4)
        logits = forward(tiny_model, x, hook, hook_layer=3)
        assert logits.shape == (2, tiny_config.num_classes)
        assert seen["in"] == n
        assert seen["attn"] == (2, tiny_config.num_heads, n, n)
        assert seen["out"] == n - r + 1

    def test_hook_sees_reduced_tokens_downstream(self, tiny_model, tiny_config, monkeypatch):
        """Layers after the prune layer attend over N - R + 1 tokens."""
        import tokenprune.model as model_mod

        counts = []
        original = model_mod._attention

        def spy(model, w, x, layer):
            counts.append(x.shape[1])
            return original(model, w, x, layer)

        monkeypatch.setattr(model_mod, "_attention", spy)
        forward(tiny_model, embed_tokens(None, tiny_config, seed=5), TokenPruner(8, 1))
        assert counts == [17, 17, 10, 10]

    def test_attention_rows_sum_to_one(self, tiny_model, tiny_config):
        rows = []

        def hook(capture, x):
            rows.append(capture.attn.sum(axis=-1))
            return x

        x = embed_tokens(None, tiny_config, batch=2, seed=6)
        for layer in range(tiny_config.depth):
            forward(tiny_model, x, hook, hook_layer=layer)
        for r in rows:
            np.testing.assert_allclose(r, 1.0, atol=1e-5)

    def test_accepts_fewer_tokens(self, tiny_model, tiny_config):
        for n in (2, 9, 17):
            out = forward(tiny_model, embed_tokens(None, tiny_config, num_tokens=n, seed=n))
            assert out.shape == (1, tiny_config.num_classes)

    def test_rejects_too_few_tokens(self, tiny_model, tiny_config):
        with pytest.raises(ValueError):
            forward(tiny_model, np.zeros((1, 1, tiny_config.embed_dim)))

    def test_hook_wrong_dim(self, tiny_model, tiny_config):
        with pytest.raises(T.ShapeError):
            forward(tiny_model, embed_tokens(None, tiny_config), lambda c, x: x[:, :, :4],
                    hook_layer=0)

    def test_hook_removing_special_token(self, tiny_model, tiny_config):
        with pytest.raises(ValueError, match="special"):
            forward(tiny_model, embed_tokens(None, tiny_config), lambda c, x: x[:, 1:],
                    hook_layer=0)

    def test_hook_layer_out_of_range(self, tiny_model, tiny_config):
        with pytest.raises(ValueError):
            forward(tiny_model, embed_tokens(None, tiny_config), lambda c, x: x, hook_layer=9)


def test_mean_pool_model_predicts_pooled_feature():
    config = ViTConfig(depth=3, embed_dim=8, num_heads=2, mlp_ratio=1.0, num_tokens=9,
                       num_special_tokens=1, num_classes=3)
    model = mean_pool_model(config)
    x = np.zeros((3, 9, 8), dtype=np.float32)
    x[:, 1:] = np.random.default_rng(0).standard_normal((3, 8, 8)) * 0.1
    for label in range(3):
        x[label, 1:, label] += 2.0
    assert list(np.argmax(forward(model, x), axis=-1)) == [0, 1, 2]


def test_embed_tokens_validates(tiny_config):
    with pytest.raises(T.ShapeError):
        embed_tokens(np.zeros((1, 5, 3)), tiny_config)
    x = embed_tokens(np.ones((5, tiny_config.embed_dim)), tiny_config)
    assert x.shape == (1, 5, tiny_config.embed_dim)
    np.testing.assert_array_equal(embed_tokens(None, tiny_config, seed=1),
                                  embed_tokens(None, tiny_config, seed=1))
