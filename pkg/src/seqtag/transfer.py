"""Parameter sharing between a source and a target task.

Architectures:

* ``T-A``: every layer shared, one label space (target tags are mapped
  into it by a label mapping);
* ``T-B``: embeddings and both GRU stacks shared, a CRF per task;
* ``T-C``: only the character embeddings and character stack shared;
* ``none``: a single target task, nothing shared.

Initial values are keyed by role name, so a target-side tensor starts from
the same values whether or not it is shared.
"""
from dataclasses import dataclass, field

from .crf import CrfParams
from .data import Vocabulary
from .encoder import BiGruStack, EmbeddingTable, Encoder, embedding_rows
from .errors import ConfigError, DomainError, ParseError
from .model import Tagger
from .numerics import glorot_uniform

ARCHITECTURES = ("none", "T-A", "T-B", "T-C")
SHARED_COMPONENTS = {
    "none": frozenset(),
    "T-A": frozenset({"char_emb", "char_gru", "word_emb", "word_gru", "crf"}),
    "T-B": frozenset({"char_emb", "char_gru", "word_emb", "word_gru"}),
    "T-C": frozenset({"char_emb", "char_gru"}),
}
SCOPES = ("shared", "source", "target")
DIRECTIONS = ("source_to_target", "target_to_source")


@dataclass
class LabelMapping:
    """Tag pairs as written in the file (``left<TAB>right``).

    With ``source_to_target`` the left column holds source tags and the right
    column target tags; ``target_to_source`` swaps the roles.
    """
    pairs: list
    direction: str = "source_to_target"
    line_count: int = 0
    path: str = None

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"unknown mapping direction {self.direction!r}")
        self.forward = {}
        for left, right in self.pairs:
            self.forward.setdefault(left, right)
        if self.direction == "target_to_source":
            t2s = [(l, r) for l, r in self.pairs]
        else:
            t2s = [(r, l) for l, r in self.pairs]
        self._t2s, self._s2t = {}, {}
        for tgt, src in t2s:
            self._t2s.setdefault(tgt, src)
            self._s2t.setdefault(src, tgt)

    @classmethod
    def identity(cls, tags):
        return cls([(t, t) for t in tags])

    def __call__(self, tag):
        try:
            return self.forward[tag]
        except KeyError:
            where = f" ({self.path}, {self.line_count} lines)" if self.path else \
                f" ({self.line_count} lines)"
            raise DomainError(f"tag {tag!r} has no image in the label mapping{where}") from None

    def target_tags(self):
        return set(self._t2s)

    def target_to_shared(self, tag):
        try:
            return self._t2s[tag]
        except KeyError:
            raise DomainError(
                f"target tag {tag!r} has no image in the label mapping "
                f"({self.line_count} lines)") from None

    def shared_to_target(self, tag):
        """Inverse mapping for output; the first file pair wins when several
        target tags share an image, and unmapped shared tags pass through."""
        return self._s2t.get(tag, tag)


def read_label_mapping(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    direction = "source_to_target"
    pairs = []
    first = True
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        if first and line.startswith("!"):
            key, _, value = line[1:].partition(":")
            if key.strip() != "direction" or value.strip() not in DIRECTIONS:
                raise ParseError(f"bad header {line!r}", path, lineno)
            direction = value.strip()
            first = False
            continue
        first = False
        cols = line.split("\t")
        if len(cols) != 2 or not all(c.strip() for c in cols):
            raise ParseError("expected 'source_tag<TAB>target_tag'", path, lineno)
        pairs.append((cols[0].strip(), cols[1].strip()))
    return LabelMapping(pairs, direction, len(lines), str(path))


def map_labels(mapping, tags):
    return [mapping(t) for t in tags]


@dataclass
class RegistryEntry:
    param: object
    scope: str


class ParameterRegistry:
    """Every trainable tensor, registered once under a unique name."""

    def __init__(self):
        self.entries = {}
        self._ids = set()

    def register(self, name, param, scope):
        if scope not in SCOPES:
            raise ConfigError(f"unknown scope {scope!r}")
        if name in self.entries:
            raise ConfigError(f"parameter {name!r} registered twice")
        if id(param) in self._ids:
            raise ConfigError(f"tensor for {name!r} is already registered under another name")
        self.entries[name] = RegistryEntry(param, scope)
        self._ids.add(id(param))

    def __getitem__(self, name):
        return self.entries[name].param

    def __contains__(self, name):
        return name in self.entries

    def __iter__(self):
        return iter(sorted(self.entries))

    def __len__(self):
        return len(self.entries)

    def scope(self, name):
        return self.entries[name].scope

    def names(self, scope=None):
        return sorted(n for n, e in self.entries.items() if scope is None or e.scope == scope)

    def task_names(self, task):
        """Everything a step on ``task`` may update: shared entries plus its own."""
        return sorted(n for n, e in self.entries.items() if e.scope in ("shared", task))

    def zero_grad(self, names=None):
        for n in (self.entries if names is None else names):
            self.entries[n].param.zero_grad()


def shared_parameter_names(registry, kind=None):
    return registry.names("shared")


@dataclass
class TaskSpec:
    name: str
    labels: list
    words: Vocabulary
    chars: Vocabulary
    metric: str = "accuracy"
    extra_dim: int = 0
    mapping: LabelMapping = None


@dataclass
class JointModel:
    kind: str
    registry: ParameterRegistry
    views: dict = field(default_factory=dict)

    @property
    def target(self):
        return self.views["target"]

    @property
    def source(self):
        return self.views.get("source")


def _label_vocab(tags):
    v = Vocabulary(sorted(set(tags)), reserved=False)
    v.frozen = True
    return v


def build_joint_model(kind, source, target, config, rng):
    """Create the registry and one Tagger view per task.

    Shared components are single objects referenced by both views.
    """
    if kind not in ARCHITECTURES:
        raise ConfigError(f"unknown architecture {kind!r}; choose from {ARCHITECTURES}")
    if kind == "none":
        source = None
    elif source is None:
        raise ConfigError(f"architecture {kind} needs a source task")
    shared = SHARED_COMPONENTS[kind]
    tasks = {"target": target} if source is None else {"source": source, "target": target}

    if "word_emb" in shared and source.words != target.words:
        raise ConfigError("shared word embeddings need one vocabulary for both tasks")
    if "char_emb" in shared and source.chars != target.chars:
        raise ConfigError("shared character embeddings need one character vocabulary")

    labels = {name: _label_vocab(spec.labels) for name, spec in tasks.items()}
    target_mapping = None
    if kind == "T-A":
        if target.mapping is None:
            if set(source.labels) != set(target.labels):
                raise ConfigError(
                    "T-A needs a label mapping when the tag sets differ; "
                    "provide --label-map or use T-B")
            mapped = list(target.labels)
        else:
            target_mapping = target.mapping
            missing = [t for t in target.labels if t not in target_mapping.target_tags()]
            if missing:
                raise ConfigError(
                    f"label mapping has no image for target tag {missing[0]!r}; "
                    "use T-B for unmappable label sets")
            mapped = [target_mapping.target_to_shared(t) for t in target.labels]
        space = _label_vocab(list(source.labels) + mapped)
        labels = {"source": space, "target": space}

    registry = ParameterRegistry()
    cfg = config
    built = {}

    def component(role, task, make):
        if role in shared:
            if role not in built:
                built[role] = make(role)
            return built[role], "shared", role
        key = role if task == "target" else f"{task}/{role}"
        return make(key), task, f"{task}/{role}"

    views = {}
    for task, spec in tasks.items():
        char_table, s_ce, n_ce = component("char_emb", task, lambda key: EmbeddingTable(
            embedding_rows(rng, key, spec.chars.itos, cfg.char_emb_dim)))
        char_stack, s_cg, n_cg = component("char_gru", task, lambda key: BiGruStack.initialize(
            rng, key, cfg.char_emb_dim, cfg.char_hidden))
        word_table, s_we, n_we = component("word_emb", task, lambda key: EmbeddingTable(
            embedding_rows(rng, key, spec.words.itos, cfg.word_emb_dim)))
        word_stack, s_wg, n_wg = component("word_gru", task, lambda key: BiGruStack.initialize(
            rng, key, 2 * cfg.char_hidden + cfg.word_emb_dim, cfg.word_hidden))
        crf, s_crf, n_crf = component("crf", task, lambda key: CrfParams.initialize(
            rng, key, len(labels[task]), 2 * cfg.word_hidden))
        if spec.extra_dim:
            extra_key = "crf.extra" if task == "target" else f"{task}/crf.extra"
            # extra-feature weights are task-specific even when the CRF is shared
            extra = glorot_uniform(rng.derive(extra_key), (len(labels[task]), spec.extra_dim))
            crf = CrfParams(crf.emission, crf.transitions, crf.initial, extra)
        view = Tagger(spec.name, Encoder(char_table, char_stack, word_table, word_stack), crf,
                      spec.words, spec.chars, labels[task], spec.metric,
                      target_mapping if task == "target" else None,
                      getattr(cfg, "lowercase", False))
        view.task_labels = list(spec.labels)
        views[task] = view

        scoped = {"char_emb": (s_ce, n_ce), "char_gru": (s_cg, n_cg), "word_emb": (s_we, n_we),
                  "word_gru": (s_wg, n_wg), "crf": (s_crf, n_crf)}
        for role, param in view.named_params():
            if role == "crf.extra":
                scope, name = task, f"{task}/crf.extra"
            else:
                comp = role.split(".")[0]
                scope, base = scoped[comp]
                name = base + role[len(comp):]
            if scope == "shared" and name in registry:
                continue
            registry.register(name, param, scope)
    return JointModel(kind, registry, views)
