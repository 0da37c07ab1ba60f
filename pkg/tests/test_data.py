import numpy as np
import pytest

from promptfuse.data import (LABEL_ID_BASE, SynthConfig, combine_motifs,
                             generate_synthetic, motif_vectors, nearest_motif)
from promptfuse.errors import ConfigError

from oracles import mutual_information_nats


def decode_split(samples, video_dirs, audio_dirs):
    """Nearest-motif decode of every sample's (video, audio) motif pair."""
    pairs = []
    for s in samples:
        pairs.append((nearest_motif(s.video_feats, s.true_lens[1], video_dirs),
                      nearest_motif(s.audio_feats, s.true_lens[2], audio_dirs)))
    return pairs


class TestGeneration:
    def test_balance_exact_when_divisible(self):
        ds = generate_synthetic(SynthConfig(num_labels=4, train_size=256,
                                            val_size=64, test_size=64, seed=1))
        labels = [s.label for s in ds.splits["train"]]
        assert sorted(np.bincount(labels, minlength=4).tolist()) == [64, 64, 64, 64]

    def test_balance_within_one_otherwise(self):
        ds = generate_synthetic(SynthConfig(num_labels=3, train_size=32,
                                            val_size=10, test_size=7, seed=1))
        for split in ("train", "val", "test"):
            counts = np.bincount([s.label for s in ds.splits[split]], minlength=3)
            assert counts.max() - counts.min() <= 1

    def test_determinism(self):
        cfg = SynthConfig(train_size=32, val_size=8, test_size=8, seed=7)
        a = generate_synthetic(cfg)
        b = generate_synthetic(cfg)
        for split in ("train", "val", "test"):
            for sa, sb in zip(a.splits[split], b.splits[split]):
                assert sa.text_ids.tobytes() == sb.text_ids.tobytes()
                assert sa.video_feats.tobytes() == sb.video_feats.tobytes()
                assert sa.audio_feats.tobytes() == sb.audio_feats.tobytes()
                assert sa.label == sb.label and sa.true_lens == sb.true_lens

    def test_lengths_in_upper_half_and_padding_zero(self):
        ds = generate_synthetic(SynthConfig(train_size=64, val_size=8, test_size=8,
                                            seed=2))
        m = ds.manifest
        for s in ds.splits["train"]:
            lt, lv, la = s.true_lens
            assert (m.l_t + 1) // 2 <= lt <= m.l_t
            assert (m.l_v + 1) // 2 <= lv <= m.l_v
            assert (m.l_a + 1) // 2 <= la <= m.l_a
            assert (s.text_ids[lt:] == 0).all()
            assert (s.video_feats[lv:] == 0).all()
            assert (s.audio_feats[la:] == 0).all()

    def test_config_errors(self):
        with pytest.raises(ConfigError):
            generate_synthetic(SynthConfig(num_labels=40, text_vocab_size=32))
        with pytest.raises(ConfigError):
            SynthConfig(rho_v=1.5).validate()
        with pytest.raises(ConfigError):
            SynthConfig(noise_std=-0.1).validate()
        with pytest.raises(ConfigError):
            SynthConfig(num_labels=1).validate()


class TestPlantedSignal:
    def test_uninformative_video_has_near_zero_mi(self):
        cfg = SynthConfig(num_labels=4, train_size=1000, val_size=8, test_size=8,
                          rho_v=0.0, rho_a=1.0, synergy=False, seed=5)
        ds = generate_synthetic(cfg)
        dirs = motif_vectors(cfg.d_v, cfg.num_labels, cfg.seed)
        motifs = [nearest_motif(s.video_feats, s.true_lens[1], dirs)
                  for s in ds.splits["train"]]
        labels = [s.label for s in ds.splits["train"]]
        assert mutual_information_nats(motifs, labels) < 0.02

    def test_informative_audio_has_high_mi(self):
        cfg = SynthConfig(num_labels=4, train_size=1000, val_size=8, test_size=8,
                          rho_v=0.0, rho_a=1.0, synergy=False, seed=5)
        ds = generate_synthetic(cfg)
        dirs = motif_vectors(cfg.d_a, cfg.num_labels, cfg.seed + 1)
        motifs = [nearest_motif(s.audio_feats, s.true_lens[2], dirs)
                  for s in ds.splits["train"]]
        labels = [s.label for s in ds.splits["train"]]
        assert mutual_information_nats(motifs, labels) > 1.0

    def test_text_signal_rate_tracks_rho_t(self):
        cfg = SynthConfig(num_labels=4, train_size=2000, val_size=8, test_size=8,
                          rho_t=0.3, seed=11)
        ds = generate_synthetic(cfg)
        label_lo, label_hi = LABEL_ID_BASE, LABEL_ID_BASE + cfg.num_labels
        hits = 0
        for s in ds.splits["train"]:
            words = s.text_ids[:s.true_lens[0]]
            has = ((words >= label_lo) & (words < label_hi)).any()
            if has:
                assert words[(words >= label_lo) & (words < label_hi)][0] \
                    == LABEL_ID_BASE + s.label
                hits += 1
        assert 0.25 < hits / 2000 < 0.35

    def test_synergy_joint_decoder_strong_single_weak(self):
        joint_acc, video_acc = [], []
        for seed in range(5):
            cfg = SynthConfig(num_labels=4, train_size=64, val_size=8, test_size=256,
                              synergy=True, noise_std=0.1, seed=seed)
            ds = generate_synthetic(cfg)
            v_dirs = motif_vectors(cfg.d_v, cfg.num_labels, cfg.seed)
            a_dirs = motif_vectors(cfg.d_a, cfg.num_labels, cfg.seed + 1)
            pairs = decode_split(ds.splits["test"], v_dirs, a_dirs)
            labels = [s.label for s in ds.splits["test"]]
            joint = [combine_motifs(mv, ma, 4) for mv, ma in pairs]
            joint_acc.append(np.mean([p == y for p, y in zip(joint, labels)]))
            # best fixed map from the video motif alone is chance under XOR
            video_acc.append(np.mean([mv == y for (mv, _), y in zip(pairs, labels)]))
        assert np.mean(joint_acc) >= 0.95
        assert np.mean(video_acc) <= 0.30
        assert np.mean(video_acc) <= 1.0 / 4 + 0.05

    def test_non_power_of_two_labels_still_synergistic(self):
        cfg = SynthConfig(num_labels=3, train_size=300, val_size=8, test_size=8,
                          synergy=True, seed=3)
        ds = generate_synthetic(cfg)
        v_dirs = motif_vectors(cfg.d_v, 3, cfg.seed)
        a_dirs = motif_vectors(cfg.d_a, 3, cfg.seed + 1)
        pairs = decode_split(ds.splits["train"], v_dirs, a_dirs)
        labels = [s.label for s in ds.splits["train"]]
        joint = [combine_motifs(mv, ma, 3) for mv, ma in pairs]
        assert np.mean([p == y for p, y in zip(joint, labels)]) >= 0.95
