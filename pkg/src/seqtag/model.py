"""A task's view of the network: encoder plus CRF, with the vocabularies
needed to turn raw sentences into index form and predictions back into tag
names."""
import numpy as np

from .crf import CostSpec, batch_margin_loss, viterbi_batch
from .data import Sentence
from .errors import DimensionError, DomainError


class Tagger:
    def __init__(self, name, encoder, crf, words, chars, labels, metric="accuracy",
                 mapping=None, lowercase=False):
        self.name = name
        self.encoder = encoder
        self.crf = crf
        self.words = words
        self.chars = chars
        self.labels = labels
        self.metric = metric
        self.mapping = mapping
        self.lowercase = lowercase
        self.task_labels = list(labels.itos)
        if crf.feature_dim != encoder.output_dim:
            raise DimensionError(
                f"CRF input width {crf.feature_dim} != encoder output {encoder.output_dim}")
        if crf.num_labels != len(labels):
            raise DimensionError(f"CRF has {crf.num_labels} labels, label set has {len(labels)}")

    def named_params(self):
        """Parameters by role name (independent of how they are shared)."""
        enc = self.encoder
        out = [("char_emb", enc.char_table.weights)]
        out += enc.char_stack.named_params("char_gru")
        out.append(("word_emb", enc.word_table.weights))
        out += enc.word_stack.named_params("word_gru")
        out += self.crf.named_params("crf")
        return out

    def to_sentence(self, raw, extra=None, with_tags=True):
        tokens = raw.tokens
        tag_ids = None
        if with_tags and raw.tags is not None:
            tags = raw.tags
            if self.mapping is not None:
                tags = [self.mapping.target_to_shared(t) for t in tags]
            tag_ids = [self.labels.index(t) for t in tags]
        if self.crf.extra_dim:
            if extra is None:
                raise DimensionError(f"task {self.name} expects {self.crf.extra_dim} extra features")
            if extra.shape != (len(tokens), self.crf.extra_dim):
                raise DimensionError(
                    f"extra features of shape {extra.shape}, expected "
                    f"({len(tokens)}, {self.crf.extra_dim})")
        return Sentence(
            tokens=tokens,
            char_ids=[[self.chars.index(c) for c in tok] for tok in tokens],
            word_ids=[self.words.index(tok.lower() if self.lowercase else tok) for tok in tokens],
            tag_ids=tag_ids,
            extra_features=extra if self.crf.extra_dim else None,
        )

    def _extras(self, batch, T):
        if not self.crf.extra_dim:
            return None
        ex = np.zeros((len(batch), T, self.crf.extra_dim))
        for b, s in enumerate(batch):
            ex[b, :len(s.tokens)] = s.extra_features
        return ex

    def loss_and_backward(self, batch, cost=CostSpec(), backward=True):
        """Mean cost-augmented margin loss over ``batch``; when ``backward``
        is set, its gradient is added into every parameter of this view."""
        if any(s.tag_ids is None for s in batch):
            raise DomainError("training sentences need tags")
        hs, cache = self.encoder.forward(batch)
        B, T, _ = hs.shape
        lengths = np.array([len(s.tokens) for s in batch])
        tags = np.zeros((B, T), dtype=np.int64)
        for b, s in enumerate(batch):
            tags[b, :len(s.tag_ids)] = s.tag_ids
        if not backward:
            saved = [(p, p.grad.copy()) for _, p in self.crf.named_params()]
        losses, d_hs = batch_margin_loss(self.crf, hs, lengths, tags, cost, self._extras(batch, T))
        if backward:
            self.encoder.backward(cache, d_hs)
        else:
            for p, g in saved:
                p.grad[...] = g
        return float(losses.mean())

    def predict(self, sentences, batch_size=64):
        """Viterbi tag ids for each sentence."""
        out = []
        for start in range(0, len(sentences), batch_size):
            batch = sentences[start:start + batch_size]
            hs, _ = self.encoder.forward(batch)
            lengths = np.array([len(s.tokens) for s in batch])
            tags, _ = viterbi_batch(self.crf, hs, lengths, self._extras(batch, hs.shape[1]))
            out.extend([int(t) for t in tags[b, :n]] for b, n in enumerate(lengths))
        return out

    def tag_names(self, ids, task_space=True):
        """Label names for ids; with ``task_space`` the inverse label mapping
        is applied so names are in this task's own tag set."""
        names = [self.labels.itos[i] for i in ids]
        if task_space and self.mapping is not None:
            names = [self.mapping.shared_to_target(n) for n in names]
        return names
