import numpy as np
import pytest

from feature_exporter.backbones import (BackboneUnavailable, HashAudioEncoder,
                                        HashImageEncoder, HashTextEmbedder,
                                        resolve_audio, resolve_text,
                                        resolve_video, tokenize)


class TestTokenize:
    def test_lowercases_and_splits(self):
        assert tokenize("Could you HELP me?") == ["could", "you", "help", "me"]

    def test_keeps_mask_token(self):
        assert tokenize("a [MASK] b") == ["a", "[mask]", "b"]

    def test_apostrophes(self):
        assert tokenize("don't stop") == ["don't", "stop"]


class TestHashText:
    def test_width_matches_named_backbone(self):
        assert HashTextEmbedder("bert-base-uncased").width == 768
        assert HashTextEmbedder("bert-large-uncased").width == 1024

    def test_deterministic_per_token(self):
        a = HashTextEmbedder("bert-base-uncased")
        b = HashTextEmbedder("bert-base-uncased")
        np.testing.assert_array_equal(a.token_vector("hello"), b.token_vector("hello"))
        assert not np.array_equal(a.token_vector("hello"), a.token_vector("world"))

    def test_embed_includes_cls_row(self):
        bb = HashTextEmbedder("bert-base-uncased")
        tokens, feats = bb.embed("three word sentence", max_tokens=12)
        assert tokens == ["three", "word", "sentence"]
        assert feats.shape == (4, 768)

    def test_truncation(self):
        bb = HashTextEmbedder("bert-base-uncased")
        tokens, feats = bb.embed("a b c d e f", max_tokens=3)
        assert tokens == ["a", "b", "c"]
        assert feats.shape == (4, 768)

    def test_unknown_name(self):
        with pytest.raises(BackboneUnavailable):
            HashTextEmbedder("bert-huge")


class TestHashImage:
    def test_deterministic_and_sized(self, tmp_path):
        from conftest import write_frames
        write_frames(tmp_path, (100, 10, 10), count=1, seed=0)
        from PIL import Image
        bb = HashImageEncoder("swin_b")
        with Image.open(next(tmp_path.iterdir())) as img:
            one = bb.encode_frame(img)
            two = bb.encode_frame(img)
        assert one.shape == (1024,)
        np.testing.assert_array_equal(one, two)


class TestHashAudio:
    def test_window_count_and_determinism(self):
        bb = HashAudioEncoder("wav2vec2-base-960h")
        rng = np.random.default_rng(0)
        signal = rng.standard_normal(4000).astype(np.float32)
        one = bb.encode_windows(signal, 7)
        two = bb.encode_windows(signal, 7)
        assert one.shape == (7, 768)
        np.testing.assert_array_equal(one, two)

    def test_empty_signal_rejected(self):
        bb = HashAudioEncoder("wav2vec2-base-960h")
        with pytest.raises(ValueError):
            bb.encode_windows(np.zeros(0), 3)


class TestResolve:
    def test_offline_backend_forces_stub(self):
        assert resolve_text("bert-base-uncased", "offline").kind == "offline"
        assert resolve_video("swin_b", "offline").kind == "offline"
        assert resolve_audio("wav2vec2-base-960h", "offline").kind == "offline"

    def test_auto_falls_back_when_real_unavailable(self):
        # in this sandbox no weights are cached, so auto lands on the stand-in
        bb = resolve_text("bert-base-uncased", "auto")
        assert bb.width == 768

    def test_real_backend_raises_without_weights(self):
        resolved = resolve_text("bert-base-uncased", "auto")
        if resolved.kind == "offline":
            with pytest.raises(BackboneUnavailable):
                resolve_text("bert-base-uncased", "real")
