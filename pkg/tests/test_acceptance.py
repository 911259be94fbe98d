"""Acceptance suite.

Each test prints one ``[PASS]`` / ``[FAIL]`` line with the measured value and
the tolerance it is held to.  The lines are collected and repeated in the
pytest terminal summary; running this file directly prints them as well.
"""

import math
import random
import time

import numpy as np
import pytest

from tabseq.autograd import Tensor, no_grad, numerical_gradient
from tabseq.bench import ratios, run_bench
from tabseq.codec import CodecConfig, TagSet, bio_tags, decode_entities, decode_relations, encode, roundtrip_check
from tabseq.data import make_splits
from tabseq.metrics import score_ner, score_re
from tabseq.model import ModelConfig, model_loss
from tabseq.sequence_encoder import DotProductAttention, TableGuidedAttention
from tabseq.synth import generate
from tabseq.table_encoder import DIRECTIONS, MdGruCell, lambda_gates, run_direction
from tabseq.training import OptimConfig, build_model, clip_grad_norm, learning_rate, probe, train

from conftest import ENTITY_TYPES, RELATION_TYPES, oracle_relations, random_sentence, random_spans, random_table

RESULTS = []


def report(name, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    RESULTS.append(line)
    print(line)
    return ok


# -- 1 ------------------------------------------------------------------------

GRAD_TOL = 1e-5
GRAD_FLOOR = 1e-6  # relative error denominator floor for near-zero gradients


def test_c1_gradient_integrity():
    t0 = time.perf_counter()
    sents = [s for s in generate(40, seed=5) if len(s.tokens) >= 3][:1]
    sent = sents[0]
    sent = type(sent)(sent.tokens[:3], [e for e in sent.entities if e.end <= 3],
                      [r for r in sent.relations if r.head.end <= 3 and r.tail.end <= 3])
    config = ModelConfig(layers=1, hidden=8, heads=2, directions="bi-ac", token_emb_dim=6, char_emb_dim=4)
    model = build_model(config, generate(40, seed=5), seed=0)
    model.eval()

    def loss():
        return model_loss(model, [sent], model([sent.tokens]))

    loss().backward()
    params = [p for p in model.parameters() if p.grad is not None]
    rng = np.random.default_rng(0)
    sizes = np.array([p.size for p in params], dtype=float)
    errs, abs_errs = [], []
    for _ in range(50):
        p = params[rng.choice(len(params), p=sizes / sizes.sum())]
        idx = tuple(int(rng.integers(s)) for s in p.shape)
        ana = float(p.grad[idx])
        num = numerical_gradient(loss, p, idx, step=1e-6)
        errs.append(abs(ana - num) / max(abs(ana), abs(num), GRAD_FLOOR))
        abs_errs.append(abs(ana - num))
    worst = max(errs)
    # cancellation noise of a central difference: about eps * |L| / step
    noise = np.finfo(float).eps * abs(loss().item()) / 1e-6
    elapsed = time.perf_counter() - t0
    ok = report("C1 gradient integrity", worst < GRAD_TOL and elapsed < 60,
                f"N=3 H=8 A=2 bi-ac, 50 entries, step 1e-6: max rel err {worst:.2e} (< {GRAD_TOL:g}), "
                f"{sum(e >= GRAD_TOL for e in errs)}/50 over; max abs err {max(abs_errs):.1e} vs "
                f"difference-quotient noise ~{noise:.1e}; {elapsed:.1f}s (< 60s)")
    assert ok


# -- 2 ------------------------------------------------------------------------


def test_c2_schedule_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    for trial in range(100):
        n = int(rng.integers(1, 11))
        d_in, h = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        cell = MdGruCell(d_in, h, rng)
        x = Tensor(rng.normal(size=(1, n, n, d_in)))
        t_layer = Tensor(rng.normal(size=(1, n, n, h))) if trial % 2 else None
        direction = "abcd"[trial % 4]
        with no_grad():
            a = run_direction(cell, x, t_layer, direction, "naive").data
            b = run_direction(cell, x, t_layer, direction, "wavefront").data
        worst = max(worst, float(np.max(np.abs(a - b))))
    rows = run_bench((32, 64, 128), hidden=32, repeats=2)
    r = ratios(rows)
    wf_over_naive = [1.0 / r[n] for n in (32, 64, 128)]
    decreasing = wf_over_naive[0] > wf_over_naive[1] > wf_over_naive[2]
    elapsed = time.perf_counter() - t0
    ok = report("C2 schedule equivalence", worst <= 1e-12 and decreasing and elapsed < 300,
                f"100 inputs N<=10 max-abs diff {worst:.1e} (<= 1e-12); wavefront/naive time at N=32,64,128 = "
                + ", ".join(f"{v:.3f}" for v in wf_over_naive)
                + f" (strictly decreasing: {decreasing}); {elapsed:.0f}s (< 300s)")
    assert ok


# -- 3 ------------------------------------------------------------------------


def test_c3_direction_causality():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    failures = checks = 0
    n = 6
    for name, d in DIRECTIONS.items():
        cell = MdGruCell(3, 2, rng)
        for _ in range(20):
            x = rng.normal(size=(1, n, n, 3))
            t_layer = rng.normal(size=(1, n, n, 2))
            p, q = (int(v) for v in rng.integers(n, size=2))
            x2, t2 = x.copy(), t_layer.copy()
            x2[0, p, q] += rng.normal(size=3)
            t2[0, p, q] += rng.normal(size=2)
            for schedule in ("naive", "wavefront"):
                with no_grad():
                    base = run_direction(cell, Tensor(x), Tensor(t_layer), name, schedule).data
                    moved = run_direction(cell, Tensor(x2), Tensor(t2), name, schedule).data
                for i in range(n):
                    for j in range(n):
                        if d.row_sign * (i - p) < 0 or d.col_sign * (j - q) < 0:
                            checks += 1
                            failures += not np.array_equal(base[0, i, j], moved[0, i, j])
    elapsed = time.perf_counter() - t0
    ok = report("C3 direction causality", failures == 0 and elapsed < 60,
                f"4 directions x 20 perturbations x 2 schedules, {checks} out-of-cone cells, "
                f"{failures} changed (exact equality required), {elapsed:.1f}s (< 60s)")
    assert ok


# -- 4 ------------------------------------------------------------------------


def test_c4_codec_oracle():
    t0 = time.perf_counter()
    tagset = TagSet(ENTITY_TYPES, RELATION_TYPES)
    config = CodecConfig()
    rng = np.random.default_rng(3)
    pyrng = random.Random(3)
    mismatches = 0
    for trial in range(1000):
        n = pyrng.randint(1, 6)
        ents = random_spans(pyrng, n, max_entities=3)
        p = random_table(rng, n, len(tagset.re_tags), peaked=trial % 2 == 0)
        mismatches += set(decode_relations(p, ents, tagset, config)) != oracle_relations(p, ents, tagset, config)
    roundtrip_failures = sum(not roundtrip_check(random_sentence(pyrng, n_max=10), tagset, config)
                             for _ in range(1000))
    elapsed = time.perf_counter() - t0
    ok = report("C4 codec oracle", mismatches == 0 and roundtrip_failures == 0 and elapsed < 60,
                f"1000 tables N<=6 <=3 entities: {mismatches} mismatches vs exhaustive search; "
                f"1000 roundtrips: {roundtrip_failures} failures; {elapsed:.1f}s (< 60s)")
    assert ok


# -- 5 ------------------------------------------------------------------------


def test_c5_overfit():
    t0 = time.perf_counter()
    sents = generate(50, seed=0)
    config = ModelConfig(layers=2, hidden=64)
    optim = OptimConfig(epochs=300)
    result = train(config, optim, sents, seed=0, stop_at_perfect_train=True, eval_train_every=10)
    elapsed = time.perf_counter() - t0
    last = result.history[-1]["train"]
    ner, rep = last["ner"]["micro"]["f1"], last["re_plus"]["micro"]["f1"]
    epochs = len(result.history)

    again = train(config, OptimConfig(epochs=2), sents, seed=0)
    deterministic = [h["loss"] for h in again.history] == [h["loss"] for h in result.history[:2]]

    layers = probe(result.model, sents)
    probe_f1 = []
    for layer in range(config.layers):
        ents = [per[layer][0] for per in layers]
        rels = [per[layer][1] for per in layers]
        probe_f1.append((score_ner(ents, [s.entities for s in sents]).f1,
                         score_re(rels, [s.relations for s in sents], strict=True).f1))
    probes = ", ".join(f"L{k + 1} NER {a * 100:.1f} RE+ {b * 100:.1f}" for k, (a, b) in enumerate(probe_f1))
    ok = report("C5 overfit oracle", ner == 1.0 and rep == 1.0 and epochs <= 300 and deterministic and elapsed < 300,
                f"50 sentences L=2 H=64 default optimiser: train NER {ner * 100:.1f} RE+ {rep * 100:.1f} "
                f"at epoch {epochs} (<= 300), deterministic={deterministic}, {elapsed:.0f}s (< 300s); "
                f"probe (recorded only): {probes}")
    assert ok


# -- 6 ------------------------------------------------------------------------

ABLATION_OPTIM = dict(epochs=30, batch_size=8, warmup_steps=100)


def test_c6_ablation_interaction():
    t0 = time.perf_counter()
    train_set, dev_set = make_splits(generate(100, seed=0), seed=0, frac=0.2)
    scores = {True: [], False: []}
    for seed in range(3):
        for interaction in (True, False):
            config = ModelConfig(layers=2, hidden=64, interaction=interaction)
            result = train(config, OptimConfig(**ABLATION_OPTIM), train_set.sentences, dev_set.sentences, seed=seed)
            scores[interaction].append(result.history[result.best_epoch - 1]["dev"]["re"]["micro"]["f1"] * 100)
    default, ablated = np.mean(scores[True]), np.mean(scores[False])
    elapsed = time.perf_counter() - t0
    ok = report("C6 ablation (interaction)", default >= ablated - 1.0,
                f"dev RE F1 over 3 seeds: default {default:.2f} {['%.1f' % v for v in scores[True]]} vs "
                f"no-interaction {ablated:.2f} {['%.1f' % v for v in scores[False]]}; "
                f"gap {default - ablated:+.2f} (fail below -1.00); {elapsed:.0f}s")
    assert ok


# -- 7 ------------------------------------------------------------------------

DEFAULTS = {"batch_size": 24, "lr": 1e-3, "warmup_steps": 1000, "dropout": 0.5, "layers": 3, "heads": 8,
            "hidden": 200, "token_emb_dim": 100, "char_emb_dim": 30, "clip": 5.0}


def test_c7_hyperparameter_fidelity():
    merged = {**ModelConfig().to_json(), **OptimConfig().to_json()}
    wrong = {k: merged.get(k) for k, v in DEFAULTS.items() if merged.get(k) != v}
    lr = learning_rate(1000, OptimConfig())
    lr_ok = abs(lr - 1e-3 / 1.05) <= 1e-12
    ok = report("C7 hyperparameter fidelity", not wrong and lr_ok,
                f"defaults mismatching: {wrong or 'none'}; lr(1000) = {lr!r} vs 1e-3/1.05 "
                f"(|diff| {abs(lr - 1e-3 / 1.05):.1e} <= 1e-12)")
    assert ok


# -- 8 ------------------------------------------------------------------------


def test_c8_invariants():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    pyrng = random.Random(8)
    tagset = TagSet(ENTITY_TYPES, RELATION_TYPES)
    fails = dict.fromkeys(("lambda", "attention", "symmetry", "bio", "clip"), 0)
    trials = 250
    for _ in range(trials):
        n, h = int(rng.integers(1, 7)), int(rng.integers(1, 5))
        cell = MdGruCell(3, h, rng)
        with no_grad():
            lam = lambda_gates(cell, *(Tensor(rng.normal(scale=4, size=(n, k))) for k in (3, h, h, h))).data
        fails["lambda"] += not (np.all(lam >= 0) and np.allclose(lam.sum(-2), 1.0, atol=1e-12))

        cls = TableGuidedAttention if rng.random() < 0.5 else DotProductAttention
        att = cls(4, 2, rng)
        mask = np.ones((1, n))
        mask[0, int(rng.integers(1, n + 1)):] = 0.0
        with no_grad():
            w = att.weights(Tensor(rng.normal(size=(1, n, 4))), Tensor(rng.normal(size=(1, n, n, 4))), mask).data
        fails["attention"] += not (np.all(w >= 0) and np.allclose(w.sum(-1), 1.0, atol=1e-12)
                                   and np.all(w[..., mask[0] == 0] == 0))

        table = encode(random_sentence(pyrng), tagset).re
        flip = {"->": "<-", "<-": "->"}
        sym = all(
            (table[i][j] == table[j][i] == "<none>") if table[i][j] == "<none>"
            else table[j][i] == flip[table[i][j][:2]] + table[i][j][2:]
            for i in range(len(table)) for j in range(len(table))
        )
        fails["symmetry"] += not sym

        ents = decode_entities(rng.random(size=(n, len(tagset.ner_tags))), tagset)
        tags = bio_tags(n, ents)
        fails["bio"] += any(cur.startswith("I-") and (prev == "O" or prev[2:] != cur[2:])
                            for prev, cur in zip(["O"] + tags, tags))

        grads = [rng.normal(size=int(rng.integers(1, 6))) * 10 ** rng.uniform(-3, 3) for _ in range(3)]
        params = [Tensor(np.zeros_like(g)) for g in grads]
        for p, g in zip(params, grads):
            p.grad = g.copy()
        clip_grad_norm(params, 5.0)
        fails["clip"] += math.sqrt(sum(float((p.grad ** 2).sum()) for p in params)) > 5.0 + 1e-9
    elapsed = time.perf_counter() - t0
    ok = report("C8 invariant suite", sum(fails.values()) == 0 and elapsed < 120,
                f"{trials} instances each, failures {fails}, {elapsed:.1f}s (< 120s)")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
