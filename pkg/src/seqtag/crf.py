"""Linear-chain CRF output layer with a Hamming-cost-augmented partition
function.

A tag sequence y for features h scores

    f(h, y) = initial[y_1] + sum_t emit_t[y_t] + sum_{t>=2} transitions[y_{t-1}, y_t]

with ``emit_t = emission @ h_t`` (plus ``extra @ e_t`` when per-token extra
features are present).  The training loss is

    log sum_{y'} exp(f(h, y') + w * hamming(y, y')) - f(h, y)

Hamming cost decomposes per position, so the augmented sum is an ordinary
forward recursion over emissions raised by ``w`` on every non-gold label.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, DimensionError, DomainError
from .numerics import GradPair, glorot_uniform


@dataclass
class CostSpec:
    kind: str = "hamming"
    weight: float = 1.0

    def __post_init__(self):
        if self.kind != "hamming":
            raise ConfigError(f"unsupported cost kind {self.kind!r}; only 'hamming'")
        if not self.weight >= 0:
            raise ConfigError(f"cost weight must be nonnegative, got {self.weight}")


class CrfParams:
    def __init__(self, emission, transitions, initial, extra=None):
        wrap = lambda a: a if isinstance(a, GradPair) or a is None else GradPair(a)
        self.emission = wrap(emission)
        self.transitions = wrap(transitions)
        self.initial = wrap(initial)
        self.extra = wrap(extra)
        L = self.num_labels
        if L < 1:
            raise DimensionError("a CRF needs at least one label")
        if self.transitions.shape != (L, L) or self.initial.shape != (L,):
            raise DimensionError(
                f"transitions {self.transitions.shape} / initial {self.initial.shape} "
                f"do not match {L} labels")
        if self.extra is not None and self.extra.shape[0] != L:
            raise DimensionError(f"extra projection has {self.extra.shape[0]} rows, expected {L}")

    @classmethod
    def initialize(cls, rng, key, num_labels, feature_dim, extra_dim=0, extra_key=None):
        extra = None
        if extra_dim:
            extra = glorot_uniform(rng.derive(extra_key or f"{key}.extra"), (num_labels, extra_dim))
        return cls(
            glorot_uniform(rng.derive(f"{key}.emission"), (num_labels, feature_dim)),
            glorot_uniform(rng.derive(f"{key}.transitions"), (num_labels, num_labels)),
            np.zeros(num_labels),
            extra,
        )

    @property
    def num_labels(self):
        return self.emission.shape[0]

    @property
    def feature_dim(self):
        return self.emission.shape[1]

    @property
    def extra_dim(self):
        return 0 if self.extra is None else self.extra.shape[1]

    def named_params(self, prefix="crf"):
        out = [(f"{prefix}.emission", self.emission),
               (f"{prefix}.transitions", self.transitions),
               (f"{prefix}.initial", self.initial)]
        if self.extra is not None:
            out.append((f"{prefix}.extra", self.extra))
        return out

    def emissions(self, h, extra=None):
        h = np.asarray(h, dtype=np.float64)
        if h.shape[-1] != self.feature_dim:
            raise DimensionError(f"feature width {h.shape[-1]} != CRF input {self.feature_dim}")
        e = h @ self.emission.value.T
        if self.extra is not None:
            if extra is None:
                raise DimensionError("this CRF expects extra features")
            e = e + np.asarray(extra, dtype=np.float64) @ self.extra.value.T
        return e


def _check(p, T, y):
    if T < 1:
        raise DomainError("empty sequence")
    if y is None:
        return
    if len(y) != T:
        raise DomainError(f"tag sequence length {len(y)} != feature length {T}")
    for t, tag in enumerate(y):
        if not 0 <= tag < p.num_labels:
            raise DomainError(f"tag {tag} at position {t} outside [0, {p.num_labels})")


def _gold_score(p, e, y):
    y = np.asarray(y, dtype=np.int64)
    A = p.transitions.value
    return p.initial.value[y[0]] + e[np.arange(len(y)), y].sum() + A[y[:-1], y[1:]].sum()


def score_sequence(p, h, y, extra=None):
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    _check(p, h.shape[0], y)
    return float(_gold_score(p, p.emissions(h, extra), y))


def _augment(e, y, weight):
    aug = e + weight
    aug[np.arange(len(y)), y] -= weight
    return aug


def log_partition_augmented(p, h, y_gold, cost=CostSpec(), extra=None):
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    _check(p, h.shape[0], y_gold)
    e = _augment(p.emissions(h, extra), np.asarray(y_gold), cost.weight)
    log_z, _, _ = kernels.crf_forward_backward(
        np.ascontiguousarray(e[None]), np.array([len(y_gold)]),
        p.transitions.value, p.initial.value)
    return float(log_z[0])


def margin_loss(p, h, y_gold, cost=CostSpec(), extra=None):
    return log_partition_augmented(p, h, y_gold, cost, extra) - score_sequence(p, h, y_gold, extra)


def margin_loss_and_grad(p, h, y_gold, cost=CostSpec(), extra=None):
    """Loss of one sentence; adds parameter gradients into ``p`` and returns
    ``(loss, dL/dh)``."""
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    _check(p, h.shape[0], y_gold)
    tags = np.asarray(y_gold, dtype=np.int64)[None]
    ex = None if extra is None else np.asarray(extra, dtype=np.float64)[None]
    losses, d_h = batch_margin_loss(p, h[None], [h.shape[0]], tags, cost, ex, scale=1.0)
    return float(losses[0]), d_h[0]


def batch_margin_loss(p, hs, lengths, tags, cost=CostSpec(), extras=None, scale=None):
    """Per-sentence losses for a padded batch.

    Parameter gradients of ``scale * sum(losses)`` (default scale 1/B, i.e.
    the batch mean) are added into ``p``; the matching gradient with respect
    to ``hs`` is returned.
    """
    B, T, _ = hs.shape
    lengths = np.asarray(lengths, dtype=np.int64)
    tags = np.asarray(tags, dtype=np.int64)
    L = p.num_labels
    if scale is None:
        scale = 1.0 / B
    valid = np.arange(T)[None, :] < lengths[:, None]
    for b in range(B):
        _check(p, int(lengths[b]), tags[b, :lengths[b]])
    gold = np.zeros((B, T, L))
    bb, tt = np.nonzero(valid)
    gold[bb, tt, tags[bb, tt]] = 1.0

    e = p.emissions(hs, extras)
    aug = np.ascontiguousarray((e + cost.weight * (1.0 - gold)) * valid[..., None])
    log_z, node, edge = kernels.crf_forward_backward(
        aug, lengths, p.transitions.value, p.initial.value)

    A = p.transitions.value
    gold_scores = np.zeros(B)
    gold_edges = np.zeros((L, L))
    for b in range(B):
        n = int(lengths[b])
        y = tags[b, :n]
        gold_scores[b] = _gold_score(p, e[b, :n], y)
        np.add.at(gold_edges, (y[:-1], y[1:]), 1.0)
    losses = log_z - gold_scores

    d_e = (node - gold) * scale
    d_e *= valid[..., None]
    p.transitions.grad += (edge - gold_edges) * scale
    p.initial.grad += (node[:, 0] - gold[:, 0]).sum(axis=0) * scale
    F = hs.shape[-1]
    p.emission.grad += d_e.reshape(-1, L).T @ hs.reshape(-1, F)
    if p.extra is not None:
        ex = np.asarray(extras, dtype=np.float64)
        p.extra.grad += d_e.reshape(-1, L).T @ ex.reshape(-1, ex.shape[-1])
    return losses, d_e @ p.emission.value


def viterbi(p, h, extra=None):
    """Highest-scoring tag sequence and its score.

    At every backpointer decision, and for the final tag, ties go to the
    lowest label index.
    """
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    _check(p, h.shape[0], None)
    ex = None if extra is None else np.asarray(extra, dtype=np.float64)[None]
    tags, scores = viterbi_batch(p, h[None], [h.shape[0]], ex)
    return [int(t) for t in tags[0]], float(scores[0])


def viterbi_batch(p, hs, lengths, extras=None):
    lengths = np.asarray(lengths, dtype=np.int64)
    if lengths.min(initial=1) < 1:
        raise DomainError("empty sequence")
    e = np.ascontiguousarray(p.emissions(hs, extras))
    return kernels.crf_viterbi(e, lengths, p.transitions.value, p.initial.value)
