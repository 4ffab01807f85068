"""Joint source/target training with task sampling, AdaGrad and early
stopping on the target development metric."""
import hashlib
import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .crf import CostSpec
from .data import chunk_report, token_accuracy
from .errors import ConfigError, DomainError, TrainingError
from .numerics import Rng

log = logging.getLogger(__name__)

METRICS = ("accuracy", "chunk_f1")


@dataclass
class TrainConfig:
    char_emb_dim: int = 25
    word_emb_dim: int = 50
    char_hidden: int = 80
    word_hidden: int = 300
    learning_rate: float = 0.01
    source_prob: float = 0.5
    batch_size: int = 16
    cost_weight: float = 1.0
    max_steps: int = 20000
    patience: int = 10
    eval_interval: int = 100
    seed: int = 0
    labeling_rate: float = 1.0
    fine_tune_embeddings: bool = True
    clip_norm: float = 0.0
    min_count: int = 1
    lowercase: bool = False
    debug_checks: bool = False

    def __post_init__(self):
        for name in ("char_emb_dim", "word_emb_dim", "char_hidden", "word_hidden",
                     "batch_size", "max_steps", "patience", "eval_interval", "min_count"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.source_prob <= 1.0:
            raise ConfigError(f"source_prob must lie in [0, 1], got {self.source_prob}")
        if not 0.0 < self.labeling_rate <= 1.0:
            raise ConfigError(f"labeling_rate must lie in (0, 1], got {self.labeling_rate}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not self.cost_weight >= 0:
            raise ConfigError(f"cost_weight must be nonnegative, got {self.cost_weight}")
        if not self.clip_norm >= 0:
            raise ConfigError(f"clip_norm must be nonnegative, got {self.clip_norm}")

    @classmethod
    def field_types(cls):
        return {f.name: f.type for f in fields(cls)}

    def to_dict(self):
        return asdict(self)


class AdaGradState:
    eps = 1e-8

    def __init__(self):
        self.accum = {}

    def step(self, name, theta, grad, lr):
        G = self.accum.get(name)
        if G is None:
            G = self.accum[name] = np.zeros_like(theta)
        adagrad_step(theta, grad, G, lr, self.eps)


def adagrad_step(theta, grad, accum, lr, eps=1e-8):
    """In place: accum += g*g; theta -= lr * g / (sqrt(accum) + eps)."""
    accum += grad * grad
    theta -= lr * grad / (np.sqrt(accum) + eps)
    return theta


def sample_task(rng, source_prob):
    if not 0.0 <= source_prob <= 1.0:
        raise ConfigError(f"source probability must lie in [0, 1], got {source_prob}")
    return "source" if rng.random() < source_prob else "target"


class EpochBatcher:
    """Batches drawn without replacement from a per-epoch shuffled order."""

    def __init__(self, sentences, batch_size, rng):
        if not sentences:
            raise DomainError("cannot batch an empty training set")
        self.sentences = sentences
        self.batch_size = batch_size
        self.rng = rng
        self.epoch = 0
        self._order = []
        self._pos = 0

    def next(self):
        if self._pos >= len(self._order):
            self._order = list(range(len(self.sentences)))
            self.rng.shuffle(self._order)
            self._pos = 0
            self.epoch += 1
        idx = self._order[self._pos:self._pos + self.batch_size]
        self._pos += len(idx)
        return [self.sentences[i] for i in idx]


@dataclass
class Evaluation:
    value: float
    predictions: list
    report: object = None


def evaluate(view, sentences, metric="accuracy"):
    """Viterbi-decode ``sentences`` and score them against their tags."""
    if not sentences:
        raise DomainError("nothing to evaluate")
    if metric not in METRICS:
        raise ConfigError(f"unknown metric {metric!r}; choose from {METRICS}")
    pred = view.predict(sentences)
    gold = [s.tag_ids for s in sentences]
    if metric == "accuracy":
        return Evaluation(token_accuracy(gold, pred), pred)
    report = chunk_report([view.tag_names(g, task_space=False) for g in gold],
                          [view.tag_names(p, task_space=False) for p in pred])
    return Evaluation(report.overall.f1, pred, report)


@dataclass
class EarlyStopState:
    best_metric: float = -math.inf
    best_step: int = 0
    best_values: dict = None
    bad_evals: int = 0

    def update(self, step, metric, registry):
        if metric > self.best_metric:
            self.best_metric = metric
            self.best_step = step
            self.best_values = {n: registry[n].value.copy() for n in registry}
            self.bad_evals = 0
            return True
        self.bad_evals += 1
        return False


@dataclass
class TrainResult:
    best_step: int
    best_metric: float
    steps: int
    log_lines: list = field(default_factory=list)
    task_counts: dict = field(default_factory=dict)
    epochs: dict = field(default_factory=dict)


def _checksum(registry, names):
    h = hashlib.sha256()
    for n in names:
        h.update(registry[n].value.tobytes())
    return h.hexdigest()


def _fmt(x):
    return "-" if x is None else f"{x:.6f}"


def train_joint(model, target_train, target_dev, config, source_train=None, source_dev=None,
                source_metric=None, step_callback=None):
    """Train ``model`` (a JointModel) and restore its best target-dev state.

    Each step samples a task, takes that task's next batch, and applies
    AdaGrad to every parameter in the task's view (shared plus its own).
    ``source_metric`` optionally replaces evaluation on ``source_dev``; it is
    logged only and never affects stopping.
    """
    registry = model.registry
    views = model.views
    if not target_train:
        raise DomainError("target training set is empty")
    if not target_dev:
        raise DomainError("target development set is empty")
    joint = "source" in views
    if joint and not source_train:
        raise DomainError("source training set is empty")

    root = Rng(config.seed)
    task_rng = root.derive("task-sampling")
    batchers = {"target": EpochBatcher(target_train, config.batch_size, root.derive("batches/target"))}
    if joint:
        batchers["source"] = EpochBatcher(source_train, config.batch_size,
                                          root.derive("batches/source"))
    names = {task: registry.task_names(task) for task in views}
    if not config.fine_tune_embeddings:
        frozen = {n for n in registry if n.split("/")[-1] == "word_emb"}
        names = {task: [n for n in ns if n not in frozen] for task, ns in names.items()}
    private = {task: registry.names(task) for task in views}
    cost = CostSpec(weight=config.cost_weight)
    opt = AdaGradState()
    stop = EarlyStopState()
    counts = {task: 0 for task in views}
    ema = None
    result = TrainResult(0, -math.inf, 0)
    debug = config.debug_checks or log.isEnabledFor(logging.DEBUG)

    for step in range(1, config.max_steps + 1):
        task = sample_task(task_rng, config.source_prob if joint else 0.0)
        counts[task] += 1
        batch = batchers[task].next()
        other = "target" if task == "source" else "source"
        before = _checksum(registry, private[other]) if debug and other in views else None

        registry.zero_grad(names[task])
        loss = views[task].loss_and_backward(batch, cost)
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite loss {loss} at step {step} on task {task}")
        if config.clip_norm:
            norm = math.sqrt(sum(float((registry[n].grad ** 2).sum()) for n in names[task]))
            if norm > config.clip_norm:
                for n in names[task]:
                    registry[n].grad *= config.clip_norm / norm
        for n in names[task]:
            p = registry[n]
            opt.step(n, p.value, p.grad, config.learning_rate)
        if before is not None and _checksum(registry, private[other]) != before:
            raise TrainingError(f"step {step} on task {task} modified {other}-specific parameters")
        ema = loss if ema is None else 0.9 * ema + 0.1 * loss
        if step_callback is not None:
            step_callback(step, task, loss)

        if step % config.eval_interval == 0 or step == config.max_steps:
            dev = evaluate(views["target"], target_dev, views["target"].metric).value
            src = None
            if source_metric is not None:
                src = source_metric(views.get("source"))
            elif joint and source_dev:
                src = evaluate(views["source"], source_dev, views["source"].metric).value
            improved = stop.update(step, dev, registry)
            count_str = ",".join(f"{t}:{counts[t]}" for t in sorted(counts))
            line = "\t".join([str(step), count_str, _fmt(ema), _fmt(dev), _fmt(src)])
            result.log_lines.append(line)
            log.info("step %d  loss %.4f  target dev %.4f%s", step, ema, dev,
                     "  *" if improved else "")
            if stop.bad_evals >= config.patience:
                break

    result.steps = step
    if stop.best_values is not None:
        for n, v in stop.best_values.items():
            registry[n].value[...] = v
    result.best_step = stop.best_step
    result.best_metric = stop.best_metric
    result.task_counts = counts
    result.epochs = {t: b.epoch for t, b in batchers.items()}
    return result
