"""Acceptance suite: one test per criterion, one printed pass/fail line each.

Criteria 7-9 train real models on the synergy benchmark (I=4, 1024/256/256,
default hyperparameters, 5 seeds per setting); those runs are shared through
a session cache and executed on a 2-process pool. Run with `-s` to stream
the per-criterion lines. Expect roughly half an hour end to end on two cores.
"""

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor

import multiprocessing

import numpy as np
import pytest

from promptfuse import tensor as tt
from promptfuse.alignment import SoftAligner, similarity_matrix
from promptfuse.archive import read_feature_archive, write_feature_archive
from promptfuse.config import TrainConfig
from promptfuse.data import TEST, SynthConfig, generate_synthetic
from promptfuse.experiments import (ABLATION_SETTINGS, CSV_COLUMNS,
                                    ExperimentRow, read_rows_csv, write_rows_csv)
from promptfuse.losses import nt_xent
from promptfuse.metrics import compute_metrics
from promptfuse.tensor import Tensor, grad_check
from promptfuse.trainer import evaluate, load_checkpoint, save_checkpoint, train

from oracles import metrics_oracle, nt_xent_double_loop

SEEDS = (0, 1, 2, 3, 4)
ACCEPT_SYNTH = SynthConfig()        # the synergy dataset: I=4, 1024/256/256

SETTINGS = {
    "full": {},
    "text_only": {"map_on": False, "zero_nonverbal": True},
    "no_sbma": {"sbma_on": False},
    "no_map": {"map_on": False},
    "no_tcl": {"tcl_on": False},
    "handcraft_1": {"prompt_mode": "handcraft_1"},
    "handcraft_2": {"prompt_mode": "handcraft_2"},
    "mask": {"prompt_mode": "mask"},
}


def _report(criterion: int, name: str, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {criterion:>2} [{name}]: {status} - {detail}", flush=True)
    assert ok, f"criterion {criterion} ({name}): {detail}"


def _train_job(item):
    setting, seed = item
    dataset = generate_synthetic(ACCEPT_SYNTH)
    cfg = TrainConfig(seed=seed, **SETTINGS[setting])
    started = time.time()
    checkpoint, history = train(cfg, dataset)
    elapsed = time.time() - started
    report = evaluate(checkpoint, dataset.splits[TEST])
    return setting, seed, report.as_dict(), elapsed, len(history)


@pytest.fixture(scope="session")
def run_cache():
    """Test accuracy for every (setting, seed), trained once per session."""
    jobs = [(setting, seed) for setting in SETTINGS for seed in SEEDS]
    results = {}
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=2, mp_context=ctx) as pool:
        for setting, seed, metrics, elapsed, epochs in pool.map(_train_job, jobs):
            results[(setting, seed)] = {"metrics": metrics, "seconds": elapsed,
                                        "epochs": epochs}
    return results


def _mean_acc(cache, setting):
    return float(np.mean([cache[(setting, s)]["metrics"]["acc"] for s in SEEDS]))


def _rows_from_cache(cache, settings) -> list[ExperimentRow]:
    rows = []
    for setting in settings:
        per_metric = {m: [cache[(setting, s)]["metrics"][m] for s in SEEDS]
                      for m in ("acc", "wf1", "wp", "r")}
        rows.append(ExperimentRow(
            setting=setting, seeds=list(SEEDS),
            mean={m: float(np.mean(v)) for m, v in per_metric.items()},
            std={m: float(np.std(v)) for m, v in per_metric.items()}))
    return rows


class TestCriterion1Gradients:
    def test_gradient_suite(self, tiny_model, tiny_dataset):
        started = time.time()
        model = tiny_model
        bundles = tiny_dataset.splits["train"][:4]
        arrays = model.arrays_from_bundles(bundles)
        probe_rng = np.random.default_rng(0xACCE)
        probe = Tensor(probe_rng.standard_normal((4, 16)))

        checks = {}

        def run(name, fn, params, n=24):
            err = grad_check(fn, params, n_coords=max(n, 20), h=1e-5,
                             rng=np.random.default_rng(hash(name) % 2**32))
            checks[name] = err

        run("run_sbma",
            lambda: tt.mean_all(tt.square(model.align_batch(arrays).v_hat))
            + tt.mean_all(model.align_batch(arrays).a_hat),
            [model.prompt_tokens] + model.aligner.params())
        run("generate_prompt",
            lambda: tt.mean_all(tt.square(
                model.generator.generate(model.align_batch(arrays), arrays.size))),
            model.generator.params() + model.aligner.params())
        run("gate_encoder",
            lambda: tt.mean_all(
                model.forward_batch(bundles, with_augmented=False).mask_token * probe),
            model.encoder.params(), n=24)
        tokens64 = tt.Param(np.random.default_rng(7).standard_normal((8, 12)),
                            "z", dtype=np.float64)
        run("nt_xent", lambda: nt_xent(tokens64, 0.07), [tokens64])
        run("cls_loss",
            lambda: tt.mean_all(tt.square(
                model.classifier.apply(model.forward_batch(bundles).pooled))),
            model.classifier.params())
        run("full_objective", lambda: model.batch_loss(bundles)[0],
            model.trainable_params(), n=40)

        elapsed = time.time() - started
        worst = max(checks.values())
        ok = worst <= 1e-4 and elapsed <= 60.0
        detail = (f"max rel err {worst:.2e} over {len(checks)} functions "
                  f"({', '.join(f'{k}={v:.1e}' for k, v in checks.items())}), "
                  f"{elapsed:.1f}s")
        _report(1, "gradient suite", ok, detail)


class TestCriterion2NtXent:
    def test_nt_xent_oracle(self):
        rng = np.random.default_rng(22)
        worst = 0.0
        batches = 0
        while batches < 50:
            for n in (1, 2, 4, 8):
                tokens = rng.standard_normal((2 * n, 8))
                ours = nt_xent(Tensor(tokens, dtype=np.float64), 0.3).item()
                ref = nt_xent_double_loop(tokens, 0.3)
                worst = max(worst, abs(ours - ref))
                batches += 1

        single = nt_xent(Tensor(rng.standard_normal((2, 5)), dtype=np.float64),
                         0.07).item()
        base_tokens = rng.standard_normal((8, 6))
        base = nt_xent(Tensor(base_tokens, dtype=np.float64), 0.2).item()
        scale_err = max(abs(nt_xent(Tensor(c * base_tokens, dtype=np.float64),
                                    0.2).item() - base) for c in (0.1, 10.0))
        temp_err = 0.0
        for n in (2, 4, 8):
            loss = nt_xent(Tensor(rng.standard_normal((2 * n, 7)),
                                  dtype=np.float64), 1e6).item()
            temp_err = max(temp_err, abs(loss - math.log(2 * n - 1)))

        ok = worst <= 1e-6 and single == 0.0 and scale_err <= 1e-6 and temp_err <= 1e-3
        _report(2, "NT-Xent oracle", ok,
                f"{batches} batches, max oracle gap {worst:.2e}, N=1 loss {single}, "
                f"scale gap {scale_err:.2e}, temperature-limit gap {temp_err:.2e}")


class TestCriterion3Alignment:
    def test_alignment_invariants(self):
        rng = np.random.default_rng(33)
        bound_ok = True
        softmax_ok = True
        for _ in range(100):
            alpha = float(rng.uniform(0.2, 3.0))
            scale = 10.0 ** rng.uniform(-3, 3)
            t = Tensor(rng.standard_normal((4, 6)) * scale, dtype=np.float64)
            x = Tensor(rng.standard_normal((4, 6)) * scale, dtype=np.float64)
            m = similarity_matrix(t, x, alpha)
            bound_ok &= bool(np.abs(m.data).max() <= alpha + 1e-9)
            w = tt.softmax_rows(m)
            softmax_ok &= bool(np.allclose(w.data.sum(axis=1), 1.0, atol=1e-6))
        # zero-input guard
        z = similarity_matrix(Tensor(np.zeros((3, 4)), dtype=np.float64),
                              Tensor(np.zeros((3, 4)), dtype=np.float64), 1.0)
        bound_ok &= bool(np.isfinite(z.data).all())

        aligner = SoftAligner(5, 3, "t", dtype=np.float64)
        aligner.weight.data = rng.standard_normal((5, 3))
        pad_ok = True
        for _ in range(200):
            true_len = int(rng.integers(1, 8))
            x = rng.standard_normal((8, 5))
            base = aligner.apply(Tensor(x, dtype=np.float64), true_len).data
            noisy = x.copy()
            noisy[true_len:] = rng.standard_normal((8 - true_len, 5)) * 1e3
            out = aligner.apply(Tensor(noisy, dtype=np.float64), true_len).data
            pad_ok &= bool((out == base).all())

        ok = bound_ok and softmax_ok and pad_ok
        _report(3, "alignment invariants", ok,
                f"bound {bound_ok}, row-stochastic {softmax_ok}, "
                f"padding-insensitive over 200 trials {pad_ok}")


class TestCriterion4Pairs:
    def test_pair_invariants(self):
        from promptfuse.pairs import EmbeddingTable, SequenceAssembler
        rng = np.random.default_rng(44)
        table = EmbeddingTable(24, 6, 4, rng, dtype=np.float64)
        assembler = SequenceAssembler(table, text_len=5, prompt_len=3, rng=rng,
                                      dtype=np.float64)
        ok = True
        for _ in range(200):
            with_prompt = bool(rng.random() < 0.5)
            ids = rng.integers(0, 24, size=5).astype(np.int32)
            text_emb, mask = assembler.embed_text(ids, int(rng.integers(1, 6)))
            prompt = (Tensor(rng.standard_normal((3, 6)), dtype=np.float64)
                      if with_prompt else None)
            z, z_tilde = assembler.build_pair(text_emb, prompt,
                                              int(rng.integers(0, 4)), mask)
            want = 5 + 1 + 3 + 1 if with_prompt else 5 + 2
            ok &= z.embeddings.rows == want == z_tilde.embeddings.rows
            ok &= z.special_pos == want - 1 == z_tilde.special_pos
            other = np.delete(np.arange(want), z.special_pos)
            diff = z.embeddings.data[other] - z_tilde.embeddings.data[other]
            ok &= bool((diff == 0).all())
            ok &= bool(np.abs(z.embeddings.data[z.special_pos]
                              - z_tilde.embeddings.data[z.special_pos]).max() > 0)
        _report(4, "pair construction", ok,
                "200 randomized trials: lengths and special-position-only diffs hold")


class TestCriterion5Branches:
    def test_branch_consistency(self):
        from promptfuse.encoder import AdaptationGate, SharedEncoder
        from promptfuse.pairs import BatchSequences
        rng = np.random.default_rng(55)
        gate = AdaptationGate(5, 6, 1.0, rng, dtype=np.float64)
        gate.w_m.data = np.zeros_like(gate.w_m.data)
        encoder = SharedEncoder(6, 2, 2, gate, 0, rng, dtype=np.float64)
        worst = 0.0
        for _ in range(50):
            blocks = int(rng.integers(1, 4))
            seq_len = int(rng.integers(2, 7))
            mask = rng.random((blocks, seq_len)) > 0.2
            mask[:, 0] = True
            seqs = BatchSequences(
                Tensor(rng.standard_normal((blocks * seq_len, 6)), dtype=np.float64),
                seq_len, blocks, seq_len - 1, mask)
            v_hat = Tensor(rng.standard_normal((blocks * 3, 5)), dtype=np.float64)
            a_hat = Tensor(rng.standard_normal((blocks * 3, 5)), dtype=np.float64)
            normal = encoder.encode_normal(seqs, v_hat, a_hat).data
            augmented = encoder.encode_augmented(seqs).data
            worst = max(worst, float(np.abs(normal - augmented).max()))
        _report(5, "branch consistency", worst <= 1e-6,
                f"zero-gate max branch gap {worst:.2e} over 50 random sequences")


class TestCriterion6Metrics:
    def test_metrics_oracle(self):
        rng = np.random.default_rng(66)
        exact = True
        for _ in range(100):
            size = int(rng.integers(2, 7))
            confusion = rng.integers(0, 25, size=(size, size))
            if confusion.sum() == 0:
                confusion[0, 0] = 1
            report = compute_metrics(confusion)
            oracle = metrics_oracle(confusion)
            for key, val in oracle.items():
                exact &= math.isclose(getattr(report, key), val, rel_tol=0,
                                      abs_tol=1e-12)
        perfect = compute_metrics(np.diag([7, 9, 4]))
        exact &= (perfect.acc, perfect.wf1, perfect.wp, perfect.r) == (1, 1, 1, 1)
        constant = np.zeros((4, 4), dtype=int)
        constant[:, 2] = 10
        report = compute_metrics(constant)
        exact &= report.acc == 0.25 and report.r == 0.25
        _report(6, "metrics oracle", exact,
                "100 random confusions + perfect/constant predictors, exact match")


class TestCriterion7Learning:
    def test_synthetic_learning(self, run_cache):
        full = _mean_acc(run_cache, "full")
        text = _mean_acc(run_cache, "text_only")
        per_seed_seconds = [run_cache[("full", s)]["seconds"] for s in SEEDS]
        ok = full >= 0.90 and text <= 0.55 and max(per_seed_seconds) <= 300.0
        _report(7, "synthetic learning", ok,
                f"full mean acc {full:.4f} (>= 0.90), text-only {text:.4f} (<= 0.55), "
                f"slowest seed {max(per_seed_seconds):.0f}s (<= 300s)")


class TestCriterion8Ablation:
    def test_ablation_ordering(self, run_cache, tmp_path):
        full = _mean_acc(run_cache, "full")
        margins = {s: full - _mean_acc(run_cache, s)
                   for s in ("no_sbma", "no_map", "no_tcl")}
        ordering_ok = all(m >= -0.01 for m in margins.values())

        rows = _rows_from_cache(run_cache, ABLATION_SETTINGS)
        path = write_rows_csv(rows, tmp_path / "ablation.csv")
        parsed = read_rows_csv(path)
        structure_ok = ([r["setting"] for r in parsed] == list(ABLATION_SETTINGS)
                        and ABLATION_SETTINGS == ("full", "no_sbma", "no_map", "no_tcl")
                        and all(set(CSV_COLUMNS) == set(r) for r in parsed))
        detail = ", ".join(f"full-{k}={v:+.4f}" for k, v in margins.items())
        _report(8, "ablation ordering", ordering_ok and structure_ok,
                f"margins vs -0.01 floor: {detail}; table structure "
                f"{'ok' if structure_ok else 'bad'}")


class TestCriterion9Prompts:
    def test_prompt_ordering(self, run_cache):
        ma = _mean_acc(run_cache, "full")     # modality_aware is the default mode
        hc = float(np.mean([_mean_acc(run_cache, "handcraft_1"),
                            _mean_acc(run_cache, "handcraft_2")]))
        mask = _mean_acc(run_cache, "mask")
        ok = (ma >= hc - 0.01) and (hc >= mask - 0.01)
        _report(9, "prompt ordering", ok,
                f"modality_aware {ma:.4f} >= handcraft {hc:.4f} - 0.01; "
                f"handcraft >= mask {mask:.4f} - 0.01")


class TestCriterion10Persistence:
    def test_determinism_and_persistence(self, tmp_path):
        dataset = generate_synthetic(ACCEPT_SYNTH)
        cfg = TrainConfig(epochs=3, patience=3, seed=123)
        ckpt_a, hist_a = train(cfg, dataset)
        ckpt_b, hist_b = train(cfg, dataset)
        history_ok = json.dumps(hist_a) == json.dumps(hist_b)
        params_ok = all(ckpt_a.params[k].tobytes() == ckpt_b.params[k].tobytes()
                        for k in ckpt_a.params)

        before = evaluate(ckpt_a, dataset.splits[TEST])
        save_checkpoint(ckpt_a, tmp_path / "ckpt")
        loaded = load_checkpoint(tmp_path / "ckpt")
        after = evaluate(loaded, dataset.splits[TEST])
        ckpt_ok = (before.as_dict() == after.as_dict()
                   and all(loaded.params[k].tobytes() == ckpt_a.params[k].tobytes()
                           for k in ckpt_a.params))

        write_feature_archive(dataset, tmp_path / "arch")
        back = read_feature_archive(tmp_path / "arch")
        archive_ok = True
        for split in ("train", "val", "test"):
            for x, y in zip(dataset.splits[split], back.splits[split]):
                archive_ok &= (x.text_ids.tobytes() == y.text_ids.tobytes()
                               and x.video_feats.tobytes() == y.video_feats.tobytes()
                               and x.audio_feats.tobytes() == y.audio_feats.tobytes()
                               and x.label == y.label and x.true_lens == y.true_lens)

        ok = history_ok and params_ok and ckpt_ok and archive_ok
        _report(10, "determinism & persistence", ok,
                f"history bit-identical {history_ok}, params identical {params_ok}, "
                f"checkpoint round-trip {ckpt_ok}, archive round-trip {archive_ok}")
