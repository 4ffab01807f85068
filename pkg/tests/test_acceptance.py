"""Acceptance criteria 1-9.  Each test prints one PASS/FAIL line."""
import time

import numpy as np
import pytest

from seqtag.checkpoint import load_checkpoint
from seqtag.cli import main
from seqtag.crf import CostSpec, CrfParams, log_partition_augmented, margin_loss, viterbi
from seqtag.data import build_vocabularies, chunk_f1, subsample
from seqtag.numerics import (Rng, grad_check, logsumexp, logsumexp_backward, matmul,
                             matmul_backward, sigmoid, sigmoid_backward, tanh_backward, tanh_op)
from seqtag.training import AdaGradState, TrainConfig, train_joint
from seqtag.transfer import LabelMapping, TaskSpec, build_joint_model, shared_parameter_names

import synthetic
from oracles import brute_chunk_f1, brute_log_partition, brute_viterbi, plain_crf_nll
from toy import pair_model, small_config, write_pair

SEEDS = range(5)


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}")
        return ok
    return emit


# 1 ------------------------------------------------------------------------

LAYERS = ("char_emb", "char_gru", "word_emb", "word_gru", "crf.emission", "crf.transitions",
          "crf.initial")


def _layer(role):
    for name in LAYERS:
        if role == name or role.startswith(name + "."):
            return name
    raise KeyError(role)


def _primitive_errors(rng):
    a, b, w = rng.uniform(-1, 1, (3, 4)), rng.uniform(-1, 1, (4, 2)), rng.uniform(-1, 1, (3, 2))
    x, v = rng.uniform(-3, 3, (5,)), rng.uniform(-1, 1, (5,))

    def f_mm(t):
        g = np.zeros_like(t)
        matmul_backward(t, b, w, d_a=g)
        return float((matmul(t, b) * w).sum()), g

    def f_sig(t):
        y = sigmoid(t)
        return float((y * v).sum()), sigmoid_backward(y, v)

    def f_tanh(t):
        y = tanh_op(t)
        return float((y * v).sum()), tanh_backward(y, v)

    return [grad_check(f_mm, a, rng), grad_check(f_sig, x, rng), grad_check(f_tanh, x, rng),
            grad_check(lambda t: (logsumexp(t), logsumexp_backward(t, 1.0)), x, rng)]


def test_criterion_1_gradients(report):
    start = time.perf_counter()
    worst = {name: 0.0 for name in LAYERS}
    worst_prim = 0.0
    for seed in SEEDS:
        model, enc_t, _ = pair_model("none", seed=seed)
        view, batch = model.target, enc_t[:2]
        params = view.named_params()
        rng = Rng(seed).derive("grad-check")
        for role, param in params:
            def f(theta, param=param):
                saved = param.value.copy()
                param.value[...] = theta
                for _, p in params:
                    p.zero_grad()
                loss = view.loss_and_backward(batch, CostSpec(weight=1.0))
                param.value[...] = saved
                return loss, param.grad.copy()
            err = grad_check(f, param.value.copy(), rng, max_coords=12)
            worst[_layer(role)] = max(worst[_layer(role)], err)
        worst_prim = max([worst_prim] + _primitive_errors(rng))
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) < 1e-4 and worst_prim < 1e-6 and elapsed < 30
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    report(1, ok, f"{detail}; primitives {worst_prim:.1e}; {elapsed:.1f}s")
    assert ok


# 2, 3 -----------------------------------------------------------------------

def _crf_instance(rng):
    T, L = 1 + rng.randbelow(4), 1 + rng.randbelow(4)
    e, A, init = rng.uniform(-2, 2, (T, L)), rng.uniform(-2, 2, (L, L)), rng.uniform(-2, 2, (L,))
    if rng.random() < 0.3:  # coarse integer scores make exact ties common
        e, A, init = np.floor(e), np.floor(A), np.floor(init)
    return T, L, e, A, init


def test_criterion_2_crf_enumeration(report):
    start = time.perf_counter()
    rng = Rng(2)
    worst, mismatches = 0.0, 0
    for _ in range(500):
        T, L, e, A, init = _crf_instance(rng)
        p = CrfParams(np.eye(L), A, init)
        gold = [rng.randbelow(L) for _ in range(T)]
        for w in (0.0, 0.5, 1.0):
            got = log_partition_augmented(p, e, gold, CostSpec(weight=w))
            worst = max(worst, abs(got - brute_log_partition(e, A, init, gold, w)))
        mismatches += viterbi(p, e)[0] != brute_viterbi(e, A, init)[0]
    elapsed = time.perf_counter() - start
    ok = worst < 1e-8 and mismatches == 0 and elapsed < 10
    report(2, ok, f"max |logZ diff| {worst:.1e}, viterbi mismatches {mismatches}/500, {elapsed:.1f}s")
    assert ok


def test_criterion_3_softmax_margin_reduction(report):
    rng = Rng(3)
    worst = 0.0
    for _ in range(100):
        T, L, e, A, init = _crf_instance(rng)
        gold = [rng.randbelow(L) for _ in range(T)]
        got = margin_loss(CrfParams(np.eye(L), A, init), e, gold, CostSpec(weight=0.0))
        worst = max(worst, abs(got - plain_crf_nll(e, A, init, gold)))
    ok = worst < 1e-10
    report(3, ok, f"max |margin - NLL| {worst:.1e} over 100 instances")
    assert ok


# 4 ------------------------------------------------------------------------

def test_criterion_4_isolation(report):
    notes, ok = [], True
    shared = {}
    for kind in ("T-A", "T-B", "T-C"):
        model, _, enc_s = pair_model(kind, seed=4)
        reg = model.registry
        before = {n: reg[n].value.copy() for n in reg}
        reg.zero_grad()
        model.source.loss_and_backward(enc_s[:4])
        opt = AdaGradState()
        for n in reg.task_names("source"):
            opt.step(n, reg[n].value, reg[n].grad, 0.01)
        target_same = all(reg[n].value.tobytes() == before[n].tobytes() for n in reg.names("target"))
        shared_moved = any(not np.array_equal(reg[n].value, before[n]) for n in reg.names("shared"))
        ok &= target_same and shared_moved
        shared[kind] = set(shared_parameter_names(reg, kind))
        notes.append(f"{kind} target-unchanged={target_same} shared-moved={shared_moved}")
    ordered = shared["T-C"] < shared["T-B"] < shared["T-A"]
    ok &= ordered
    sizes = "/".join(str(len(shared[k])) for k in ("T-C", "T-B", "T-A"))
    report(4, ok, "; ".join(notes) + f"; shared sets nested ({sizes}) = {ordered}")
    assert ok


# 5 ------------------------------------------------------------------------

def test_criterion_5_overfit(report):
    start = time.perf_counter()
    raw = synthetic.toy_corpus(0)
    vocab = build_vocabularies({"target": raw}, share_words=False, share_chars=False)["target"]
    batch_size = 4
    epoch = len(raw) // batch_size
    cfg = TrainConfig(char_emb_dim=10, word_emb_dim=10, char_hidden=16, word_hidden=16,
                      learning_rate=0.05, batch_size=batch_size, eval_interval=epoch,
                      patience=20, max_steps=200 * epoch, seed=0)
    spec = TaskSpec("toy", vocab.tags.itos, vocab.words, vocab.chars)
    model = build_joint_model("none", None, spec, cfg, Rng(cfg.seed))
    sents = [model.target.to_sentence(r) for r in raw]
    res = train_joint(model, sents, sents, cfg)
    elapsed = time.perf_counter() - start
    ok = len(vocab.tags) == 4 and res.best_metric == 1.0 and elapsed < 120
    report(5, ok, f"train accuracy {res.best_metric:.4f} at epoch {res.best_step // epoch} "
                  f"(of 200), {elapsed:.1f}s")
    assert ok


# 6, 7 -----------------------------------------------------------------------

TRANSFER_CONFIG = dict(char_emb_dim=10, word_emb_dim=10, char_hidden=16, word_hidden=16,
                       learning_rate=0.05, max_steps=600, eval_interval=25, patience=10)
LABELING_RATE = 0.05


def transfer_run(kind, seed):
    """Target dev accuracy for one architecture on the synthetic pair."""
    data = synthetic.make_pair(seed)
    config = TrainConfig(seed=seed, labeling_rate=LABELING_RATE, **TRANSFER_CONFIG)
    tgt = subsample(data["target_train"], LABELING_RATE, Rng(seed).derive("labeling-rate"))
    src, dev = data["source_train"], data["target_dev"]
    sets = {"target": tgt} if kind == "none" else {"source": src, "target": tgt}
    vocabs = build_vocabularies(sets, share_words=kind in ("T-A", "T-B"), share_chars=kind != "none")
    tags = lambda ss: sorted({t for s in ss for t in s.tags})
    mapping = LabelMapping(data["mapping"]) if kind == "T-A" else None
    target = TaskSpec("target", tags(tgt + dev), vocabs["target"].words, vocabs["target"].chars,
                      mapping=mapping)
    source = None
    if kind != "none":
        source = TaskSpec("source", tags(src), vocabs["source"].words, vocabs["source"].chars)
    model = build_joint_model(kind, source, target, config, Rng(seed))
    train_t = [model.target.to_sentence(s) for s in tgt]
    dev_t = [model.target.to_sentence(s) for s in dev]
    train_s = [model.source.to_sentence(s) for s in src] if source else None
    return train_joint(model, train_t, dev_t, config, train_s).best_metric


@pytest.fixture(scope="module")
def transfer_results():
    results, seconds = {}, {}
    for kind in ("none", "T-A", "T-B", "T-C"):
        for seed in SEEDS:
            start = time.perf_counter()
            results[kind, seed] = transfer_run(kind, seed)
            seconds[kind, seed] = time.perf_counter() - start
    return results, seconds


def test_criterion_6_transfer_trend(report, transfer_results):
    acc, secs = transfer_results
    wins = sum(acc["T-B", s] > acc["none", s] for s in SEEDS)
    elapsed = sum(secs[k, s] for k in ("none", "T-B") for s in SEEDS)
    pairs = " ".join(f"{acc['T-B', s]:.4f}/{acc['none', s]:.4f}" for s in SEEDS)
    ok = wins >= 4 and elapsed < 600
    report(6, ok, f"T-B beats none in {wins}/5 seeds (T-B/none: {pairs}), {elapsed:.0f}s")
    assert ok


def test_criterion_7_architecture_order(report, transfer_results):
    acc, _ = transfer_results
    mean = {k: 100 * np.mean([acc[k, s] for s in SEEDS]) for k in ("T-A", "T-B", "T-C")}
    ok = mean["T-A"] >= mean["T-B"] >= mean["T-C"] - 0.5
    report(7, ok, "mean dev accuracy T-A {T-A:.2f}, T-B {T-B:.2f}, T-C {T-C:.2f} "
                  "(need T-A >= T-B >= T-C - 0.5)".format(**mean))
    assert ok


# 8 ------------------------------------------------------------------------

def test_criterion_8_chunk_f1(report):
    rng = Rng(8)
    tags = ["O", "B-A", "I-A", "B-B", "I-B"]
    disagreements = 0
    for _ in range(200):
        n = 1 + rng.randbelow(10)
        gold = [tags[rng.randbelow(5)] for _ in range(n)]
        pred = [tags[rng.randbelow(5)] for _ in range(n)]
        disagreements += tuple(chunk_f1(gold, pred)) != brute_chunk_f1([gold], [pred])
    gold = ["B-PER", "I-PER", "O"]
    zero = tuple(chunk_f1(gold, ["B-PER", "O", "O"])) == (0.0, 0.0, 0.0)
    one = tuple(chunk_f1(gold, gold)) == (1.0, 1.0, 1.0)
    ok = disagreements == 0 and zero and one
    report(8, ok, f"oracle disagreements {disagreements}/200, (0,0,0) case {zero}, (1,1,1) case {one}")
    assert ok


# 9 ------------------------------------------------------------------------

CLI_SET = ["--set", "char_emb_dim=6", "--set", "word_emb_dim=6", "--set", "char_hidden=8",
           "--set", "word_hidden=8", "--set", "learning_rate=0.05", "--set", "max_steps=60",
           "--set", "eval_interval=10", "--set", "patience=3"]


def _cli_train(files, path, arch, *extra):
    argv = ["train", "--arch", arch, "--task", "pos", "--train", files["target_train"],
            "--dev", files["target_dev"], "--seed", "7", "--checkpoint", str(path), *CLI_SET, *extra]
    if arch != "none":
        argv += ["--source-train", files["source_train"], "--source-dev", files["source_dev"]]
    return main(argv)


def _target_params_by_token(path):
    """Target-view parameters keyed by role; embedding rows keyed by token."""
    model, _, _ = load_checkpoint(str(path))
    view = model.target
    out = {}
    for role, p in view.named_params():
        if role in ("char_emb", "word_emb"):
            vocab = view.chars if role == "char_emb" else view.words
            for tok in vocab.itos:
                out[role, tok] = p.value[vocab.index(tok)].tobytes()
        else:
            out[role] = p.value.tobytes()
    return out


def test_criterion_9_determinism(report, tmp_path, capsys):
    files = write_pair(tmp_path, seed=9)
    codes = [_cli_train(files, tmp_path / f"run{i}.ck", "none") for i in (1, 2)]
    codes.append(_cli_train(files, tmp_path / "tb.ck", "T-B", "--source-prob", "0.0"))
    capsys.readouterr()
    same_ck = (tmp_path / "run1.ck").read_bytes() == (tmp_path / "run2.ck").read_bytes()
    same_log = (tmp_path / "run1.ck.log").read_bytes() == (tmp_path / "run2.ck.log").read_bytes()
    none = _target_params_by_token(tmp_path / "run1.ck")
    tb = _target_params_by_token(tmp_path / "tb.ck")
    differing = [k for k, v in none.items() if tb.get(k) != v]
    ok = codes == [0, 0, 0] and same_ck and same_log and not differing
    report(9, ok, f"repeat checkpoint identical {same_ck}, log identical {same_log}; "
                  f"T-B p_s=0 vs none: {len(none) - len(differing)}/{len(none)} target tensors/rows "
                  "bitwise equal")
    assert ok
