import math

import numpy as np
import pytest

from promptfuse.errors import ConfigError, DegenerateInputError, VocabularyError
from promptfuse.losses import (LossReport, cls_loss, cross_entropy,
                               interleave_pairs, nt_xent, total_loss)
from promptfuse.tensor import Tensor

from oracles import nt_xent_double_loop

F64 = np.float64


class _LinearShim:
    def __init__(self, w, b):
        self.w = Tensor(w, dtype=F64)
        self.b = Tensor(b, dtype=F64)

    def apply(self, x):
        return x @ self.w + self.b


class TestNtXent:
    def test_single_pair_loss_is_zero(self, rng):
        tokens = Tensor(rng.standard_normal((2, 5)), dtype=F64)
        assert nt_xent(tokens, tau=0.3).item() == 0.0

    def test_matches_double_loop_oracle_n2(self):
        e1 = [1.0, 0.0]
        e2 = [0.0, 1.0]
        tokens = np.array([e1, e1, e2, e2])
        ours = nt_xent(Tensor(tokens, dtype=F64), tau=1.0).item()
        assert abs(ours - nt_xent_double_loop(tokens, 1.0)) < 1e-9

    def test_matches_double_loop_oracle_random(self, rng):
        for n in (2, 3, 4, 8):
            tokens = rng.standard_normal((2 * n, 6))
            for tau in (0.07, 0.5, 1.0):
                ours = nt_xent(Tensor(tokens, dtype=F64), tau).item()
                ref = nt_xent_double_loop(tokens, tau)
                assert abs(ours - ref) < 1e-6

    def test_scale_invariance(self, rng):
        tokens = rng.standard_normal((8, 4))
        base = nt_xent(Tensor(tokens, dtype=F64), 0.2).item()
        for c in (0.1, 10.0):
            scaled = nt_xent(Tensor(c * tokens, dtype=F64), 0.2).item()
            assert abs(scaled - base) < 1e-6

    def test_high_temperature_limit(self, rng):
        for n in (2, 4):
            tokens = rng.standard_normal((2 * n, 5))
            loss = nt_xent(Tensor(tokens, dtype=F64), tau=1e6).item()
            assert abs(loss - math.log(2 * n - 1)) < 1e-3

    def test_monotone_alignment(self):
        # rotating the partner toward its anchor strictly lowers the loss
        others = np.array([[0.0, 1.0, 0.0], [0.5, 0.5, 0.0]])
        last = None
        for angle in (0.9, 0.6, 0.3, 0.05):
            partner = [math.cos(angle), math.sin(angle), 0.0]
            tokens = np.vstack([[1.0, 0.0, 0.0], partner, others])
            loss = nt_xent(Tensor(tokens, dtype=F64), 0.5).item()
            if last is not None:
                assert loss < last
            last = loss

    def test_temperature_guard(self, rng):
        with pytest.raises(ConfigError):
            nt_xent(Tensor(rng.standard_normal((4, 3))), tau=0.0)

    def test_zero_norm_guard(self):
        tokens = np.array([[1.0, 0.0], [0.0, 0.0], [1.0, 1.0], [0.5, 0.5]])
        with pytest.raises(DegenerateInputError):
            nt_xent(Tensor(tokens, dtype=F64), 0.5)

    def test_odd_row_count_rejected(self, rng):
        with pytest.raises(ConfigError):
            nt_xent(Tensor(rng.standard_normal((3, 4))), 0.5)

    def test_interleave_order(self, rng):
        masks = rng.standard_normal((3, 4))
        labels = rng.standard_normal((3, 4))
        out = interleave_pairs(Tensor(masks, dtype=F64), Tensor(labels, dtype=F64))
        np.testing.assert_array_equal(out.data[0::2], masks)
        np.testing.assert_array_equal(out.data[1::2], labels)


class TestClassification:
    def test_uniform_logits_log_i(self):
        pooled = Tensor(np.zeros((3, 4)), dtype=F64)
        shim = _LinearShim(np.zeros((4, 20)), np.zeros((1, 20)))
        loss = cls_loss(pooled, np.array([0, 7, 19]), shim)
        assert abs(loss.item() - math.log(20)) < 1e-9

    def test_margin_drives_loss_to_zero(self):
        losses = []
        for margin in (1.0, 5.0, 20.0):
            logits = np.zeros((2, 3))
            logits[0, 1] = margin
            logits[1, 2] = margin
            loss = cross_entropy(Tensor(logits, dtype=F64), np.array([1, 2])).item()
            losses.append(loss)
        assert losses[0] > losses[1] > losses[2]
        assert losses[-1] < 1e-6

    def test_matches_log_softmax_oracle(self, rng):
        logits = rng.standard_normal((6, 5))
        labels = rng.integers(0, 5, size=6)
        ours = cross_entropy(Tensor(logits, dtype=F64), labels).item()
        ref = 0.0
        for row, y in zip(logits, labels):
            e = np.exp(row - row.max())
            ref -= math.log(e[y] / e.sum())
        assert abs(ours - ref / 6) < 1e-9

    def test_label_out_of_range(self, rng):
        with pytest.raises(VocabularyError):
            cross_entropy(Tensor(rng.standard_normal((2, 3))), np.array([0, 3]))

    def test_loss_nonnegative(self, rng):
        for _ in range(20):
            logits = rng.standard_normal((4, 6)) * 5
            labels = rng.integers(0, 6, size=4)
            assert cross_entropy(Tensor(logits, dtype=F64), labels).item() >= 0.0


class TestTotal:
    @pytest.mark.parametrize("con,cls_,expected", [
        (0.0, 1.3, 1.3), (0.7, 0.0, 0.7), (0.4, 1.1, 1.5)])
    def test_total_is_sum(self, con, cls_, expected):
        out = total_loss(Tensor([[con]], dtype=F64), Tensor([[cls_]], dtype=F64))
        assert abs(out.item() - expected) < 1e-12

    def test_report_total(self):
        report = LossReport(0.25, 1.0)
        assert report.total == 1.25
