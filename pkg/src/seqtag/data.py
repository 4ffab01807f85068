"""Corpus reading and writing, vocabularies, subsampling, pretrained
embeddings and evaluation metrics."""
import io
import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .encoder import PAD_INDEX, UNK_INDEX
from .errors import ConfigError, DomainError, ParseError

log = logging.getLogger(__name__)

PAD = "<pad>"
UNK = "<unk>"


class Vocabulary:
    """Token <-> index map.  Word and character vocabularies reserve index 0
    for padding and 1 for unknown tokens; label vocabularies reserve none."""

    def __init__(self, tokens=(), reserved=True):
        self.reserved = reserved
        self.itos = [PAD, UNK] if reserved else []
        self.stoi = {t: i for i, t in enumerate(self.itos)}
        self.frozen = False
        for tok in tokens:
            self.add(tok)

    @classmethod
    def from_counts(cls, counts, reserved=True, min_count=1):
        """Index assignment by descending count, then lexicographic order."""
        ordered = sorted((kv for kv in counts.items() if kv[1] >= min_count),
                         key=lambda kv: (-kv[1], kv[0]))
        vocab = cls((tok for tok, _ in ordered), reserved=reserved)
        vocab.frozen = True
        return vocab

    def add(self, token):
        if token in self.stoi:
            return self.stoi[token]
        if self.frozen:
            raise DomainError(f"vocabulary is frozen; cannot add {token!r}")
        self.stoi[token] = len(self.itos)
        self.itos.append(token)
        return self.stoi[token]

    def index(self, token):
        idx = self.stoi.get(token)
        if idx is not None:
            return idx
        if not self.reserved:
            raise DomainError(f"unknown label {token!r}")
        return UNK_INDEX

    def __contains__(self, token):
        return token in self.stoi

    def __len__(self):
        return len(self.itos)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.itos == other.itos

    @property
    def unk_index(self):
        return UNK_INDEX if self.reserved else None

    @property
    def pad_index(self):
        return PAD_INDEX if self.reserved else None

    def known(self):
        """Tokens excluding the reserved entries."""
        return self.itos[2:] if self.reserved else list(self.itos)


@dataclass
class RawSentence:
    columns: list
    token_col: int = 0
    tag_col: int = -1
    sep: str = " "

    @property
    def tokens(self):
        return [row[self.token_col] for row in self.columns]

    @property
    def tags(self):
        if self.tag_col is None:
            return None
        return [row[self.tag_col] for row in self.columns]

    def __len__(self):
        return len(self.columns)


@dataclass
class Sentence:
    tokens: list
    char_ids: list
    word_ids: list
    tag_ids: list = None
    extra_features: np.ndarray = None

    def __post_init__(self):
        n = len(self.tokens)
        if n == 0:
            raise DomainError("empty sentence")
        if len(self.word_ids) != n or len(self.char_ids) != n:
            raise DomainError("tokens, word ids and char ids differ in length")
        if self.tag_ids is not None and len(self.tag_ids) != n:
            raise DomainError(f"{len(self.tag_ids)} tags for {n} tokens")
        if any(len(c) == 0 for c in self.char_ids):
            raise DomainError("empty token")


def _open_text(path_or_file):
    if isinstance(path_or_file, io.TextIOBase):
        return path_or_file, False
    return open(path_or_file, encoding="utf-8", newline=""), True


def read_conll(path, token_col=0, tag_col=-1):
    """Sentences from a column file; blank lines separate sentences and
    ``-DOCSTART-`` lines are dropped.  Pass ``tag_col=None`` for untagged
    input.  The first data line fixes the column count."""
    fh, close = _open_text(path)
    try:
        text = fh.read()
    finally:
        if close:
            fh.close()
    if tag_col is None:
        need = token_col + 1
    elif tag_col >= 0:
        need = max(token_col, tag_col) + 1
    else:
        need = max(token_col + 1 - tag_col, 2)
    sentences, rows = [], []
    ncols = None
    sep = None
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip():
            if rows:
                sentences.append(RawSentence(rows, token_col, tag_col, sep or " "))
                rows = []
            continue
        if sep is None:
            sep = "\t" if "\t" in line else " "
        cols = line.split("\t") if sep == "\t" else line.split()
        if cols[0] == "-DOCSTART-":
            continue
        if ncols is None:
            ncols = len(cols)
            if ncols < need:
                raise ParseError(f"expected at least {need} columns, found {ncols}", path, lineno)
        elif len(cols) != ncols:
            raise ParseError(f"expected {ncols} columns, found {len(cols)}", path, lineno)
        rows.append(cols)
    if rows:
        sentences.append(RawSentence(rows, token_col, tag_col, sep or " "))
    return sentences


def format_conll(sentences, extra_column=None):
    """Serialise sentences; each is followed by one blank line.  When
    ``extra_column`` is given it holds one list of strings per sentence that is
    appended as a final column."""
    out = []
    for i, s in enumerate(sentences):
        for j, row in enumerate(s.columns):
            cols = list(row)
            if extra_column is not None:
                cols.append(extra_column[i][j])
            out.append(s.sep.join(cols) + "\n")
        out.append("\n")
    return "".join(out)


def write_conll(sentences, path, extra_column=None):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_conll(sentences, extra_column))


def read_features(path):
    """Per-token numeric vectors from a sidecar file with the CoNLL blank-line
    layout; returns one (T, E) array per sentence."""
    sentences, rows = [], []
    width = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                if rows:
                    sentences.append(np.array(rows, dtype=np.float64))
                    rows = []
                continue
            try:
                vec = [float(v) for v in line.split()]
            except ValueError as exc:
                raise ParseError(f"non-numeric feature value ({exc})", path, lineno) from None
            if width is None:
                width = len(vec)
            elif len(vec) != width:
                raise ParseError(f"expected {width} feature values, found {len(vec)}", path, lineno)
            rows.append(vec)
    if rows:
        sentences.append(np.array(rows, dtype=np.float64))
    return sentences


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def subsample(sentences, rate, rng):
    """Keep ``round(rate * N)`` sentences chosen uniformly without
    replacement, in their original order."""
    if not 0.0 < rate <= 1.0:
        raise ConfigError(f"labeling rate must lie in (0, 1], got {rate}")
    n = len(sentences)
    k = _round_half_up(rate * n)
    if k >= n:
        return list(sentences)
    order = list(range(n))
    # partial Fisher-Yates: the first k slots are a uniform sample
    for i in range(k):
        j = i + rng.randbelow(n - i)
        order[i], order[j] = order[j], order[i]
    keep = sorted(order[:k])
    return [sentences[i] for i in keep]


def split_counts(n):
    dev = _round_half_up(0.1 * n)
    test = _round_half_up(0.1 * n)
    return n - dev - test, dev, test


def split_corpus(sentences, rng):
    """Seeded 80/10/10 split; the rounding remainder goes to train.  Each
    part keeps the original sentence order."""
    n_train, n_dev, n_test = split_counts(len(sentences))
    order = list(range(len(sentences)))
    rng.shuffle(order)
    parts = (order[:n_train], order[n_train:n_train + n_dev], order[n_train + n_dev:])
    return tuple([sentences[i] for i in sorted(p)] for p in parts)


@dataclass
class TaskVocabs:
    words: Vocabulary
    chars: Vocabulary
    tags: Vocabulary


def build_vocabularies(train_sets, share_words, share_chars=True, min_count=1, lowercase=False):
    """Vocabularies for each named training set.

    Shared vocabularies are built from the union of all training sets and
    the same object is handed to every task.  Tags are always per task and
    ordered lexicographically.
    """
    if not train_sets:
        raise ConfigError("at least one corpus is required")
    word_counts, char_counts = {}, {}
    for name, sents in train_sets.items():
        wc, cc = Counter(), Counter()
        for s in sents:
            for tok in s.tokens:
                wc[tok.lower() if lowercase else tok] += 1
                cc.update(tok)
        word_counts[name], char_counts[name] = wc, cc

    def union(counters):
        total = Counter()
        for c in counters.values():
            total.update(c)
        return total

    shared_words = Vocabulary.from_counts(union(word_counts), min_count=min_count) if share_words else None
    shared_chars = Vocabulary.from_counts(union(char_counts)) if share_chars else None
    out = {}
    for name, sents in train_sets.items():
        tags = sorted({t for s in sents for t in s.tags})
        tag_vocab = Vocabulary(tags, reserved=False)
        tag_vocab.frozen = True
        out[name] = TaskVocabs(
            shared_words or Vocabulary.from_counts(word_counts[name], min_count=min_count),
            shared_chars or Vocabulary.from_counts(char_counts[name]),
            tag_vocab,
        )
    return out


@dataclass
class EmbeddingReport:
    coverage: float
    loaded: int
    skipped: int = 0


def load_embeddings(path, vocab, table, lowercase=False):
    """Overwrite rows of ``table`` (an EmbeddingTable) for vocabulary words
    found in a ``word v1 ... vD`` text file.  A first line holding exactly two
    integers is treated as a header.  Coverage is the fraction of known
    vocabulary words that received a pretrained vector."""
    weights = table.weights.value
    dim = weights.shape[1]
    seen = set()
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if not line.strip():
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                continue
            word, values = parts[0], [v for v in parts[1:] if v]
            if len(values) != dim:
                raise ParseError(f"expected {dim} values for {word!r}, found {len(values)}",
                                 path, lineno)
            key = word.lower() if lowercase else word
            if key in vocab and vocab.index(key) not in (PAD_INDEX, UNK_INDEX):
                idx = vocab.index(key)
                if idx in seen:
                    continue
                weights[idx] = np.array(values, dtype=np.float64)
                seen.add(idx)
            else:
                skipped += 1
    known = len(vocab.known())
    report = EmbeddingReport(len(seen) / known if known else 0.0, len(seen), skipped)
    log.info("pretrained embeddings: %d rows loaded, coverage %.4f", report.loaded, report.coverage)
    return report


def token_accuracy(gold, pred):
    total = correct = 0
    for g, p in zip(gold, pred):
        if len(g) != len(p):
            raise DomainError(f"gold/pred length mismatch ({len(g)} vs {len(p)})")
        total += len(g)
        correct += sum(a == b for a, b in zip(g, p))
    if total == 0:
        raise DomainError("no tokens to evaluate")
    return correct / total


def _split_tag(tag, sent, pos):
    if tag == "O":
        return "O", None
    if len(tag) > 2 and tag[1] == "-" and tag[0] in "BI":
        return tag[0], tag[2:]
    raise DomainError(f"malformed BIO tag {tag!r} in sentence {sent} at position {pos}")


def extract_chunks(tags, sent=0):
    """Maximal spans as (type, start, end) with inclusive ends.  A chunk of
    type X starts at B-X, or at I-X not preceded by B-X/I-X."""
    chunks = []
    start = ctype = None
    for i, tag in enumerate(list(tags) + ["O"]):
        prefix, typ = _split_tag(tag, sent, i) if i < len(tags) else ("O", None)
        continues = prefix == "I" and typ == ctype
        if ctype is not None and not continues:
            chunks.append((ctype, start, i - 1))
            ctype = None
        if prefix == "B" or (prefix == "I" and not continues):
            start, ctype = i, typ
    return chunks


@dataclass(frozen=True)
class ChunkScore:
    precision: float
    recall: float
    f1: float

    def __iter__(self):
        return iter((self.precision, self.recall, self.f1))


@dataclass
class ChunkReport:
    overall: ChunkScore
    n_gold: int
    n_pred: int
    n_correct: int
    no_chunks: bool
    by_type: dict = field(default_factory=dict)


def _prf(correct, n_pred, n_gold):
    p = correct / n_pred if n_pred else 0.0
    r = correct / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return ChunkScore(p, r, f)


def _as_sentences(seqs):
    seqs = list(seqs)
    if seqs and isinstance(seqs[0], str):
        return [seqs]
    return seqs


def chunk_report(gold, pred):
    gold, pred = _as_sentences(gold), _as_sentences(pred)
    if len(gold) != len(pred):
        raise DomainError(f"{len(gold)} gold sentences vs {len(pred)} predicted")
    counts = {}
    for i, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise DomainError(f"sentence {i}: gold has {len(g)} tags, prediction {len(p)}")
        gc = set(extract_chunks(g, i))
        pc = set(extract_chunks(p, i))
        for chunk in gc:
            counts.setdefault(chunk[0], [0, 0, 0])[0] += 1
        for chunk in pc:
            counts.setdefault(chunk[0], [0, 0, 0])[1] += 1
        for chunk in gc & pc:
            counts[chunk[0]][2] += 1
    n_gold = sum(c[0] for c in counts.values())
    n_pred = sum(c[1] for c in counts.values())
    n_correct = sum(c[2] for c in counts.values())
    by_type = {t: _prf(c[2], c[1], c[0]) for t, c in sorted(counts.items())}
    return ChunkReport(_prf(n_correct, n_pred, n_gold), n_gold, n_pred, n_correct,
                       n_gold == 0 and n_pred == 0, by_type)


def chunk_f1(gold, pred):
    """Conlleval-style chunk precision, recall and F1 (zero when undefined)."""
    return chunk_report(gold, pred).overall
