"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the report lines.
"""
import os
import time

import numpy as np
import pytest

from oracles import additive_attention, crf_enumerate, crf_path_score
from psatag import psa
from psatag.config import DEFAULT_ETA0, TrainConfig
from psatag.crf import CrfParams, log_partition, viterbi_decode
from psatag.experiments import run_overfit, run_synthetic_comparison, smoke_protocol
from psatag.gradcheck import run_gradcheck
from psatag.psa import PsaParams, gaussian_bias, rel_index
from psatag.tensor import Tensor
from psatag.trainer import checkpoint_bytes, train


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}")
        assert ok, detail

    return emit


def test_1_gradient_fidelity(report):
    started = time.perf_counter()
    rep = run_gradcheck(seed=0)
    seconds = time.perf_counter() - started
    frac = rep.pass_fraction
    report(1, "gradient fidelity", frac >= 0.99 and seconds < 60,
           f"{frac:.2%} of {rep.n_checked} coordinates within 1e-4, {seconds:.1f}s")


def test_2_crf_exactness(report):
    rng = np.random.default_rng(2024)
    worst, argmax_misses = 0.0, 0
    for trial in range(1000):
        n, L, D = int(rng.integers(1, 6)), int(rng.integers(1, 5)), int(rng.integers(1, 5))
        p = CrfParams.init(L, D, rng, factorized=bool(trial % 2))
        for t in p.named().values():
            t.data[:] = rng.normal(size=t.shape)
        Z = rng.normal(size=(n, D))
        _, scores, logz = crf_enumerate(Z, p)
        worst = max(worst, abs(log_partition(Z, p).item() - logz))
        path, _ = viterbi_decode(Z, p)
        argmax_misses += crf_path_score(Z, path, p) != scores.max()
    report(2, "CRF exactness", worst <= 1e-8 and argmax_misses == 0,
           f"max |logZ error| {worst:.2e}, viterbi below brute-force max in {argmax_misses}/1000")


def test_3_attention_invariants(report):
    rng = np.random.default_rng(7)
    worst_row, bad_diag, bad_gauss, bad_rel = 0.0, 0, 0, 0
    for _ in range(1000):
        n, d, k = int(rng.integers(2, 31)), int(rng.integers(1, 9)), int(rng.integers(1, 16))
        p = PsaParams.init(d, rng, k=k)
        for t in (p.W1, p.W2, p.w, p.b, p.W3):
            t.data[:] = rng.normal(size=t.shape)
        A = psa.attention_weights(rng.normal(scale=2.0, size=(n, d)), p).data
        worst_row = max(worst_row, np.abs(A.sum(axis=1) - 1).max())
        bad_diag += int(np.any(np.diag(A) != 0.0))
        i, j, s = (int(v) for v in rng.integers(0, 60, size=3))
        g = gaussian_bias(i, j, p.epsilon)
        bad_gauss += g != gaussian_bias(j, i, p.epsilon) or g != gaussian_bias(i + s, j + s, p.epsilon)
        far = n + p.r + int(rng.integers(0, 10))
        bad_rel += rel_index(0, far, p.r) != 0 or rel_index(far, 0, p.r) != 2 * p.r
    ok = worst_row <= 1e-6 and not (bad_diag or bad_gauss or bad_rel)
    report(3, "attention invariants", ok,
           f"max |row sum - 1| {worst_row:.1e}; nonzero diagonals {bad_diag}, "
           f"gaussian violations {bad_gauss}, rel_index violations {bad_rel} over 1000 instances")


def test_4_reduction_oracle(report):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(100):
        n, d = int(rng.integers(2, 16)), int(rng.integers(1, 9))
        W1, W2 = rng.normal(size=(d, d)), rng.normal(size=(d, d))
        w, b = rng.normal(size=d), rng.normal(size=d)
        p = PsaParams(Tensor(W1), Tensor(W2), Tensor(w), Tensor(b), Tensor(rng.normal(size=(21, d))),
                      k=10, alphas=(1.0, 0.0, 0.0), use_mask=False)
        X = rng.normal(size=(n, d))
        worst = max(worst, np.abs(psa.attention_weights(X, p).data - additive_attention(X, W1, W2, w, b)).max())
    report(4, "reduction to additive attention", worst <= 1e-10, f"max elementwise difference {worst:.1e}")


@pytest.mark.slow
def test_5_overfit_fixture(report):
    res = run_overfit()
    ok = res.accuracy >= 0.99 and res.epochs <= 200 and res.seconds < 300
    report(5, "overfit fixture", ok,
           f"train token accuracy {res.accuracy:.4f} at epoch {res.epochs}, {res.seconds:.0f}s")


@pytest.mark.slow
def test_6_synthetic_dependency(report):
    full, plain = run_synthetic_comparison()
    ok = full.test_accuracy >= 0.97 and full.test_accuracy >= plain.test_accuracy
    report(6, "synthetic distance-8 dependency", ok,
           f"PSA test marker accuracy {full.test_accuracy:.3f} ({full.epochs} epochs), "
           f"no-fusion baseline {plain.test_accuracy:.3f} ({plain.epochs} epochs)")


def test_7_determinism(report):
    from psatag.data import read_conll
    from psatag.experiments import OVERFIT_FIXTURE

    corpus = read_conll(OVERFIT_FIXTURE)
    cfg = TrainConfig(task="ner", max_epochs=3).shrunk(4)
    blobs = [checkpoint_bytes(train(cfg, corpus, corpus)[0]) for _ in range(2)]
    report(7, "determinism", blobs[0] == blobs[1], f"two runs, checkpoints of {len(blobs[0])} bytes "
           + ("identical" if blobs[0] == blobs[1] else "differ"))


SMOKE_ENV = ("CONLL03_TRAIN", "CONLL03_DEV", "EMBEDDINGS_100D")


def test_8_ner_smoke_protocol(report, capsys):
    missing = [v for v in SMOKE_ENV if not os.environ.get(v)]
    if missing:
        with capsys.disabled():
            print(f"\n[SKIP] criterion 8: NER smoke protocol -- needs {', '.join(missing)} "
                  "(licensed corpus; see scripts/smoke_conll03.py)")
        pytest.skip("licensed corpus not supplied")
    res = smoke_protocol(*(os.environ[v] for v in SMOKE_ENV))
    report(8, "NER smoke protocol", res.passed,
           f"dev F1 after 10 epochs, mean of 3 seeds: PSA {res.psa_mean:.4f} vs no-fusion {res.baseline_mean:.4f}")


def test_9_hyperparameter_audit(report):
    c = TrainConfig()
    checks = {
        "lr ner": TrainConfig(task="ner").lr0 == 0.015,
        "lr chunk": TrainConfig(task="chunk").lr0 == 0.015,
        "lr pos": TrainConfig(task="pos").lr0 == 0.01,
        "table": DEFAULT_ETA0 == {"ner": 0.015, "chunk": 0.015, "pos": 0.01},
        "momentum": c.momentum == 0.9,
        "batch": c.batch_size == 10,
        "rho": c.rho == 0.05,
        "clip": c.clip == 5.0,
        "dropout": (c.dropout_lstm, c.dropout_attn) == (0.55, 0.2),
        "k": c.k == 10,
        "epsilon": c.epsilon == c.k / 2,
        "r": c.r == c.k,
        "hidden": (c.char_hidden, c.word_hidden) == (100, 300),
        "embeddings": (c.word_emb, c.char_emb) == (100, 30),
        "psa epsilon/r": (PsaParams.init(2, 0).epsilon, PsaParams.init(2, 0).r) == (5.0, 10),
    }
    wrong = [k for k, ok in checks.items() if not ok]
    report(9, "hyperparameter audit", not wrong, "all defaults match" if not wrong else f"mismatched: {wrong}")
