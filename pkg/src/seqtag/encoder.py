"""Embedding tables and bidirectional two-layer GRU stacks.

The batched functions take zero-padded ``(B, T, D)`` inputs with per-row
lengths; the backward direction of each layer runs on a per-row reversal so
both directions share one recurrence kernel.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionError, DomainError
from .numerics import GradPair, glorot_uniform, sigmoid, tanh_op

GATES = ("W_rx", "W_rh", "W_zx", "W_zh", "W_hx", "W_hh")
PAD_INDEX = 0
UNK_INDEX = 1


def embedding_rows(rng, key, tokens, dim):
    """Initial embedding matrix with one independently seeded row per token.

    Row values depend only on (seed, key, token), never on the vocabulary
    size or index order.  The padding row is zero.
    """
    bound = math.sqrt(3.0 / dim)
    out = np.zeros((len(tokens), dim))
    for i, tok in enumerate(tokens):
        if i == PAD_INDEX:
            continue
        out[i] = rng.derive(f"{key}|{tok}").uniform(-bound, bound, (dim,))
    return out


class EmbeddingTable:
    def __init__(self, weights, unk_index=UNK_INDEX, pad_index=PAD_INDEX):
        self.weights = weights if isinstance(weights, GradPair) else GradPair(weights)
        self.unk_index = unk_index
        self.pad_index = pad_index

    @property
    def vocab_size(self):
        return self.weights.value.shape[0]

    @property
    def dim(self):
        return self.weights.value.shape[1]

    def lookup(self, ids):
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise DomainError(f"embedding index out of range [0, {self.vocab_size})")
        return self.weights.value[ids]

    def backward(self, ids, d_rows):
        np.add.at(self.weights.grad, np.asarray(ids, dtype=np.int64), d_rows)


@dataclass
class GruCellParams:
    W_rx: GradPair
    W_rh: GradPair
    W_zx: GradPair
    W_zh: GradPair
    W_hx: GradPair
    W_hh: GradPair

    @classmethod
    def from_arrays(cls, **arrays):
        return cls(**{name: GradPair(arrays[name]) for name in GATES})

    @classmethod
    def initialize(cls, rng, key, input_dim, hidden):
        mats = {}
        for name in GATES:
            cols = input_dim if name.endswith("x") else hidden
            mats[name] = GradPair(glorot_uniform(rng.derive(f"{key}.{name}"), (hidden, cols)))
        return cls(**mats)

    @property
    def hidden(self):
        return self.W_rh.value.shape[0]

    @property
    def input_dim(self):
        return self.W_rx.value.shape[1]

    def items(self):
        return [(name, getattr(self, name)) for name in GATES]

    def validate(self):
        h, d = self.hidden, self.input_dim
        for name, p in self.items():
            want = (h, d) if name.endswith("x") else (h, h)
            if p.value.shape != want:
                raise DimensionError(f"{name} has shape {p.value.shape}, expected {want}")


class BiGruStack:
    """Two bidirectional GRU layers; layer 2 reads the concatenated layer-1 states."""

    def __init__(self, layers):
        if len(layers) != 2:
            raise DimensionError(f"a stack has exactly 2 layers, got {len(layers)}")
        self.layers = [tuple(pair) for pair in layers]
        hidden = self.layers[0][0].hidden
        for fwd, bwd in self.layers:
            for cell in (fwd, bwd):
                cell.validate()
                if cell.hidden != hidden:
                    raise DimensionError("all cells in a stack must share the hidden size")
        if self.layers[1][0].input_dim != 2 * hidden:
            raise DimensionError(
                f"layer-2 input dim {self.layers[1][0].input_dim} != 2 x hidden ({2 * hidden})")
        self.hidden_dim = hidden

    @classmethod
    def initialize(cls, rng, key, input_dim, hidden):
        layers = []
        for layer, d_in in enumerate((input_dim, 2 * hidden)):
            layers.append((
                GruCellParams.initialize(rng, f"{key}.{layer}.fwd", d_in, hidden),
                GruCellParams.initialize(rng, f"{key}.{layer}.bwd", d_in, hidden),
            ))
        return cls(layers)

    @property
    def input_dim(self):
        return self.layers[0][0].input_dim

    def named_params(self, prefix):
        out = []
        for layer, (fwd, bwd) in enumerate(self.layers):
            for direction, cell in (("fwd", fwd), ("bwd", bwd)):
                for name, p in cell.items():
                    out.append((f"{prefix}.{layer}.{direction}.{name}", p))
        return out


def gru_step(p, x_t, h_prev):
    """One GRU update; ``p`` holds the six gate matrices."""
    x_t = np.asarray(x_t, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    hidden = h_prev.shape[0]
    for name, gp in p.items():
        cols = x_t.shape[0] if name.endswith("x") else hidden
        if gp.value.shape != (hidden, cols):
            raise DimensionError(
                f"{name} has shape {gp.value.shape}, expected {(hidden, cols)}")
    r = sigmoid(p.W_rx.value @ x_t + p.W_rh.value @ h_prev)
    z = sigmoid(p.W_zx.value @ x_t + p.W_zh.value @ h_prev)
    h_cand = tanh_op(p.W_hx.value @ x_t + p.W_hh.value @ (r * h_prev))
    return z * h_prev + (1.0 - z) * h_cand


def reverse_index(lengths, T):
    """Index array reversing each row within its length; an involution."""
    idx = np.tile(np.arange(T), (len(lengths), 1))
    for b, n in enumerate(lengths):
        idx[b, :n] = np.arange(n - 1, -1, -1)
    return idx


def _gather(X, idx):
    return X[np.arange(X.shape[0])[:, None], idx]


def gru_layer_forward(p, X, lengths):
    xr = np.ascontiguousarray(X @ p.W_rx.value.T)
    xz = np.ascontiguousarray(X @ p.W_zx.value.T)
    xh = np.ascontiguousarray(X @ p.W_hx.value.T)
    h, r, z, hc = kernels.gru_forward(xr, xz, xh, p.W_rh.value, p.W_zh.value,
                                      p.W_hh.value, lengths)
    return h, (X, h, r, z, hc)


def gru_layer_backward(p, cache, d_h, lengths):
    X, h, r, z, hc = cache
    dxr, dxz, dxh = kernels.gru_backward(
        h, r, z, hc, lengths, p.W_rh.value, p.W_zh.value, p.W_hh.value,
        np.ascontiguousarray(d_h), p.W_rh.grad, p.W_zh.grad, p.W_hh.grad)
    d_in = X.shape[-1]
    Xf = X.reshape(-1, d_in)
    H = h.shape[-1]
    for d_pre, W in ((dxr, p.W_rx), (dxz, p.W_zx), (dxh, p.W_hx)):
        W.grad += d_pre.reshape(-1, H).T @ Xf
    return dxr @ p.W_rx.value + dxz @ p.W_zx.value + dxh @ p.W_hx.value


def bigru_forward_batch(stack, X, lengths):
    """Run the stack on padded input ``X`` (B, T, D); returns (B, T, 2H) and a cache."""
    lengths = np.asarray(lengths, dtype=np.int64)
    if X.shape[1] == 0 or lengths.min(initial=1) < 1:
        raise DomainError("bidirectional GRU needs nonempty sequences")
    rev = reverse_index(lengths, X.shape[1])
    valid = (np.arange(X.shape[1])[None, :] < lengths[:, None])[:, :, None]
    caches = []
    inp = X
    for fwd, bwd in stack.layers:
        h_f, c_f = gru_layer_forward(fwd, inp, lengths)
        h_b_rev, c_b = gru_layer_forward(bwd, np.ascontiguousarray(_gather(inp, rev)), lengths)
        out = np.concatenate([h_f, _gather(h_b_rev, rev)], axis=-1) * valid
        caches.append((c_f, c_b))
        inp = out
    return inp, (lengths, rev, caches)


def bigru_backward_batch(stack, cache, d_out):
    """Accumulate parameter gradients and return dL/dX."""
    lengths, rev, caches = cache
    H = stack.hidden_dim
    d = d_out
    for (fwd, bwd), (c_f, c_b) in zip(reversed(stack.layers), reversed(caches)):
        d_in = gru_layer_backward(fwd, c_f, d[..., :H], lengths)
        d_in_rev = gru_layer_backward(bwd, c_b, _gather(d[..., H:], rev), lengths)
        d = d_in + _gather(d_in_rev, rev)
    return d


def bigru_forward(stack, xs):
    """Single-sequence convenience wrapper: ``xs`` is (T, D), returns (T, 2H)."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise DomainError("bigru_forward needs a nonempty (T, D) sequence")
    out, _ = bigru_forward_batch(stack, xs[None], [xs.shape[0]])
    return out[0]


def pad_ids(seqs):
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    ids = np.zeros((len(seqs), int(lengths.max(initial=0))), dtype=np.int64)
    for b, s in enumerate(seqs):
        ids[b, :len(s)] = s
    return ids, lengths


def encode_words_batch(char_table, char_stack, char_seqs):
    """Fixed-width representation for each character sequence: the final
    forward state and final backward state of the top layer, concatenated."""
    if any(len(s) == 0 for s in char_seqs):
        raise DomainError("empty character sequence")
    ids, lengths = pad_ids(char_seqs)
    X = char_table.lookup(ids) * (ids != PAD_INDEX)[..., None]
    out, cache = bigru_forward_batch(char_stack, X, lengths)
    H = char_stack.hidden_dim
    rows = np.arange(len(char_seqs))
    reps = np.concatenate([out[rows, lengths - 1, :H], out[:, 0, H:]], axis=-1)
    return reps, (ids, lengths, out.shape, cache)


def encode_words_backward(char_table, char_stack, cache, d_reps):
    ids, lengths, out_shape, bcache = cache
    H = char_stack.hidden_dim
    d_out = np.zeros(out_shape)
    rows = np.arange(ids.shape[0])
    d_out[rows, lengths - 1, :H] += d_reps[:, :H]
    d_out[:, 0, H:] += d_reps[:, H:]
    dX = bigru_backward_batch(char_stack, bcache, d_out)
    mask = np.arange(ids.shape[1])[None, :] < lengths[:, None]
    char_table.backward(ids[mask], dX[mask])


def encode_word_chars(char_table, char_stack, chars):
    if len(chars) == 0:
        raise DomainError("empty character sequence")
    reps, _ = encode_words_batch(char_table, char_stack, [list(chars)])
    return reps[0]


class Encoder:
    """Character-level stack feeding a word-level stack."""

    def __init__(self, char_table, char_stack, word_table, word_stack):
        self.char_table = char_table
        self.char_stack = char_stack
        self.word_table = word_table
        self.word_stack = word_stack
        want = 2 * char_stack.hidden_dim + word_table.dim
        if word_stack.input_dim != want:
            raise DimensionError(
                f"word stack input dim {word_stack.input_dim} != 2 x char hidden + word dim ({want})")

    @property
    def output_dim(self):
        return 2 * self.word_stack.hidden_dim

    def forward(self, sentences):
        """Encode a batch of sentences; returns (B, T, 2H_word) and a cache.

        Each distinct character sequence in the batch is encoded once, in
        order of first appearance.
        """
        if any(len(s.word_ids) == 0 for s in sentences):
            raise DomainError("empty sentence")
        slot = {}
        uniq = []
        token_slots = []
        for s in sentences:
            row = []
            for chars in s.char_ids:
                key = tuple(chars)
                if key not in slot:
                    slot[key] = len(uniq)
                    uniq.append(list(chars))
                row.append(slot[key])
            token_slots.append(row)
        reps, char_cache = encode_words_batch(self.char_table, self.char_stack, uniq)

        word_ids, lengths = pad_ids([s.word_ids for s in sentences])
        slots, _ = pad_ids(token_slots)
        valid = np.arange(word_ids.shape[1])[None, :] < lengths[:, None]
        X = np.concatenate([reps[slots], self.word_table.lookup(word_ids)], axis=-1)
        X = np.ascontiguousarray(X * valid[..., None])
        hs, word_cache = bigru_forward_batch(self.word_stack, X, lengths)
        return hs, (char_cache, len(uniq), word_ids, slots, valid, word_cache)

    def backward(self, cache, d_hs):
        char_cache, n_uniq, word_ids, slots, valid, word_cache = cache
        dX = bigru_backward_batch(self.word_stack, word_cache, d_hs)
        c = 2 * self.char_stack.hidden_dim
        self.word_table.backward(word_ids[valid], dX[..., c:][valid])
        d_reps = np.zeros((n_uniq, c))
        np.add.at(d_reps, slots[valid], dX[..., :c][valid])
        encode_words_backward(self.char_table, self.char_stack, char_cache, d_reps)


def encode_sentence(encoder, sentence):
    hs, _ = encoder.forward([sentence])
    return hs[0]
