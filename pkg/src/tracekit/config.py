"""Run configuration: a flat ``key = value`` text format.

Lines are ``key = value``; ``#`` starts a comment and blank lines are
skipped. Repeatable keys (the generator's message lists, loss fractions)
accumulate in file order. Unknown keys are rejected, and every random
decision in a run flows from the single ``seed`` key through named
substreams, so there are no wall-clock defaults anywhere.

Example::

    seed = 42
    synth.traces = 20
    synth.duration = 1.0
    synth.periodic = B0 0.01 0.0
    synth.periodic = B2 0.02 0.05
    synth.triggered = 2C4 B0 0.3 0.002
    synth.rare = 340 1.0
    split.train = 15
    split.test = 5
    markov.order = 40
    lstm.unroll = 40
    train.rounds = 4
    loss.fractions = 5 10 15 20 25
    loss.mode = scattered
    loss.restorer = lstm
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .core import EventId
from .errors import ConfigError
from .ingest import SplitSpec
from .lstm import NetworkConfig, TrainingSchedule
from .restore import LossSpec
from .synth import GeneratorSpec, PeriodicMessage, RareMessage, TriggeredMessage

_REPEATABLE = {
    "synth.periodic",
    "synth.triggered",
    "synth.rare",
}

_KNOWN_KEYS = _REPEATABLE | {
    "seed",
    "out_dir",
    "synth.traces",
    "synth.duration",
    "synth.duration_step",
    "synth.label",
    "split.train",
    "split.test",
    "markov.order",
    "lstm.dense_width",
    "lstm.lstm_width",
    "lstm.unroll",
    "lstm.input_dropout",
    "lstm.hidden_dropout",
    "lstm.recurrent_dropout",
    "lstm.horizon",
    "train.rounds",
    "train.epochs_flat",
    "train.epochs_decay",
    "train.base_lr",
    "train.decay",
    "loss.fractions",
    "loss.mode",
    "loss.burst_length",
    "loss.restorer",
    "mine.top_k",
    "eval.start",
}


def derive_seed(global_seed: int, name: str) -> int:
    """A named, platform-stable substream seed for one pipeline stage."""
    digest = hashlib.sha256(f"{global_seed}:{name}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") >> 1


@dataclass
class RunConfig:
    """Parsed configuration entries plus typed accessors for each stage."""

    entries: dict[str, list[str]] = field(default_factory=dict)
    source_text: str = ""

    # -- parsing -----------------------------------------------------------

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        entries: dict[str, list[str]] = {}
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {line_no}: expected `key = value`: {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _KNOWN_KEYS:
                raise ConfigError(f"line {line_no}: unknown key {key!r}")
            if not value:
                raise ConfigError(f"line {line_no}: empty value for {key!r}")
            if key in entries and key not in _REPEATABLE:
                raise ConfigError(f"line {line_no}: duplicate key {key!r}")
            entries.setdefault(key, []).append(value)
        return cls(entries=entries, source_text=text)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.parse(Path(path).read_text(encoding="utf-8"))

    def digest(self) -> str:
        return hashlib.sha256(self.source_text.encode("utf-8")).hexdigest()

    # -- scalar access -----------------------------------------------------

    def _one(self, key: str, default: str | None = None) -> str:
        values = self.entries.get(key)
        if values is None:
            if default is None:
                raise ConfigError(f"missing required key {key!r}")
            return default
        return values[0]

    def _int(self, key: str, default: int | None = None) -> int:
        raw = self._one(key, None if default is None else str(default))
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"key {key!r} must be an integer, got {raw!r}") from None

    def _float(self, key: str, default: float | None = None) -> float:
        raw = self._one(key, None if default is None else repr(default))
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"key {key!r} must be a number, got {raw!r}") from None

    @property
    def seed(self) -> int:
        return self._int("seed")

    @property
    def out_dir(self) -> str | None:
        return self.entries.get("out_dir", [None])[0]

    # -- stage specs ---------------------------------------------------------

    def synth_trace_count(self) -> int:
        return self._int("synth.traces", 20)

    def generator_spec(self, index: int) -> GeneratorSpec:
        """Spec for the index-th synthetic trace of the run.

        Each trace gets its own derived seed, and the duration can grow by
        ``synth.duration_step`` per trace so jitter-free runs still differ
        in length.
        """
        try:
            periodic = tuple(
                PeriodicMessage(EventId(i), float(p), float(j))
                for i, p, j in (v.split() for v in self.entries.get("synth.periodic", []))
            )
            triggered = tuple(
                TriggeredMessage(EventId(i), EventId(t), float(pr), float(d))
                for i, t, pr, d in (v.split() for v in self.entries.get("synth.triggered", []))
            )
            rare = tuple(
                RareMessage(EventId(i), float(r))
                for i, r in (v.split() for v in self.entries.get("synth.rare", []))
            )
        except ValueError as exc:
            raise ConfigError(f"bad synth message entry: {exc}") from exc
        duration = self._float("synth.duration", 1.0)
        duration += index * self._float("synth.duration_step", 0.0)
        label = self._one("synth.label", "synthetic")
        return GeneratorSpec(
            periodic=periodic,
            triggered=triggered,
            rare=rare,
            duration=duration,
            seed=derive_seed(self.seed, f"synth:{index}"),
            label=f"{label}_{index:03d}",
        )

    def split_spec(self) -> SplitSpec:
        return SplitSpec(
            train_count=self._int("split.train", 15),
            test_count=self._int("split.test", 5),
            shuffle_seed=derive_seed(self.seed, "split"),
        )

    def markov_order(self) -> int:
        return self._int("markov.order", 40)

    def network_config(self, vocab: int) -> NetworkConfig:
        return NetworkConfig(
            vocab=vocab,
            dense_width=self._int("lstm.dense_width", 2 * vocab),
            lstm_width=self._int("lstm.lstm_width", 8 * vocab),
            unroll_steps=self._int("lstm.unroll", 40),
            input_dropout=self._float("lstm.input_dropout", 0.2),
            hidden_dropout=self._float("lstm.hidden_dropout", 0.4),
            recurrent_dropout=self._float("lstm.recurrent_dropout", 0.4),
            direct_horizon=self._int("lstm.horizon", 1),
        )

    def training_schedule(self) -> TrainingSchedule:
        return TrainingSchedule(
            rounds=self._int("train.rounds", 4),
            epochs_flat=self._int("train.epochs_flat", 10),
            epochs_decay=self._int("train.epochs_decay", 20),
            base_lr=self._float("train.base_lr", 0.2),
            decay=self._float("train.decay", 1.0 / 1.1),
            seed=derive_seed(self.seed, "train"),
        )

    def loss_fractions(self) -> list[float]:
        """Loss levels as fractions in [0, 1); configured as percents."""
        raw = self._one("loss.fractions", "5 10 15 20 25")
        try:
            percents = [float(tok) for tok in raw.split()]
        except ValueError:
            raise ConfigError(f"loss.fractions must be numbers, got {raw!r}") from None
        return [p / 100.0 for p in percents]

    def loss_spec(self, fraction: float, trace_label: str) -> LossSpec:
        return LossSpec(
            fraction=fraction,
            mode=self._one("loss.mode", "scattered"),
            burst_length=self._int("loss.burst_length", 1),
            seed=derive_seed(self.seed, f"loss:{fraction!r}:{trace_label}"),
        )

    def restorer(self) -> str:
        value = self._one("loss.restorer", "lstm")
        if value not in ("lstm", "markov"):
            raise ConfigError(f"loss.restorer must be lstm or markov, got {value!r}")
        return value

    def mine_top_k(self) -> int:
        """0 disables dominant-instance ranking before comparison."""
        return self._int("mine.top_k", 0)

    def eval_start(self) -> int | None:
        if "eval.start" not in self.entries:
            return None
        return self._int("eval.start")
