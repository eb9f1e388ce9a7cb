"""Spike datasets: synthetic generator, event-file I/O, stratified splits.

Examples are event lists: sorted (input index, timestep) pairs plus an
integer class label. The synthetic task builds one prototype raster per
class (a shared scaffold displaced by small per-class channel shifts) and
emits noisy copies (Gaussian timing jitter, independent event drops), so
classes differ in spike *timing* rather than spike counts.

Event file format (UTF-8 text):

    #SPK v1 inputs=<n> T=<t> classes=<c>
    label <k>
    <neuron_index> <timestep>
    ...
    <blank line>

one ``label`` block per example, events as space-separated decimal
integers, every example terminated by exactly one blank line.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (IndexOutOfRangeError, InvalidRatiosError, InvalidSpecError,
                     ParseError)

HEADER_PREFIX = "#SPK v1"

# magnitude of the per-class channel time displacement in gen_synthetic;
# comparable to the jitter scale so single channels stay ambiguous
CLASS_SHIFT = 3


@dataclass(frozen=True)
class SpikeDataset:
    examples: tuple[tuple[tuple[tuple[int, int], ...], int], ...]
    input_size: int
    T: int
    n_classes: int

    def __len__(self) -> int:
        return len(self.examples)

    def validate(self) -> None:
        if self.input_size < 1 or self.T < 1 or self.n_classes < 1:
            raise InvalidSpecError("input_size, T and n_classes must be positive")
        for events, label in self.examples:
            if not 0 <= label < self.n_classes:
                raise IndexOutOfRangeError(f"label {label} outside [0, {self.n_classes})")
            for idx, t in events:
                if not 0 <= idx < self.input_size:
                    raise IndexOutOfRangeError(f"input index {idx} outside [0, {self.input_size})")
                if not 0 <= t < self.T:
                    raise IndexOutOfRangeError(f"timestep {t} outside [0, {self.T})")

    def labels(self) -> np.ndarray:
        return np.array([label for _, label in self.examples], dtype=np.int64)

    def subset(self, indices) -> "SpikeDataset":
        return SpikeDataset(examples=tuple(self.examples[i] for i in indices),
                            input_size=self.input_size, T=self.T,
                            n_classes=self.n_classes)

    def rasters(self, indices=None) -> np.ndarray:
        """Binary (B, input_size, T) raster batch."""
        if indices is None:
            indices = range(len(self.examples))
        idx = list(indices)
        out = np.zeros((len(idx), self.input_size, self.T))
        for b, i in enumerate(idx):
            events, _ = self.examples[i]
            for neuron, t in events:
                out[b, neuron, t] = 1.0
        return out


def _sorted_events(pairs) -> tuple[tuple[int, int], ...]:
    return tuple(sorted({(int(i), int(t)) for i, t in pairs}))


def gen_synthetic(classes: int, input_size: int, T: int, jitter: float,
                  drop_prob: float, n_per_class: int, seed: int) -> SpikeDataset:
    """Jittered-prototype spike patterns, fully determined by the seed.

    Every channel carries the same number of spikes (three when T allows) in
    every class, so classes are indistinguishable from per-channel spike
    counts. Class identity lives in small timing shifts: one random scaffold
    of spike times is shared by all classes, and each class displaces each
    channel's spikes together by a per-channel offset of at most CLASS_SHIFT
    steps. With timing noise of comparable scale the classes overlap heavily
    in any single channel and can only be separated by integrating timing
    evidence across channels. Horizons too short for shifts fall back to an
    independent random prototype per class.

    An example jitters each prototype spike time by N(0, jitter) rounded and
    clamped to [0, T), then drops each event independently with drop_prob.
    Coincident events collapse (binary raster semantics).
    """
    if classes < 1 or input_size < 1 or T < 1 or n_per_class < 1:
        raise InvalidSpecError("counts must be positive")
    if jitter < 0 or not 0.0 <= drop_prob < 1.0:
        raise InvalidSpecError("jitter must be >= 0 and drop_prob in [0, 1)")
    spikes_per_channel = min(3, T)
    shift = min(CLASS_SHIFT, (T - spikes_per_channel) // 2)
    rng = np.random.Generator(np.random.PCG64(seed))
    prototypes = []
    if shift > 0:
        # scaffold times keep a margin of `shift` so displaced spikes never
        # clip (clipping would pile spikes on the border and leak counts)
        base = [rng.choice(np.arange(shift, T - shift), size=spikes_per_channel,
                           replace=False) for _ in range(input_size)]
        for _ in range(classes):
            proto = []
            for ch in range(input_size):
                delta = int(rng.integers(-shift, shift + 1))
                proto.extend((ch, int(t) + delta) for t in base[ch])
            prototypes.append(proto)
    else:
        for _ in range(classes):
            proto = []
            for ch in range(input_size):
                for t in rng.choice(T, size=spikes_per_channel, replace=False):
                    proto.append((ch, int(t)))
            prototypes.append(proto)
    examples = []
    for label, proto in enumerate(prototypes):
        for _ in range(n_per_class):
            kept = []
            for ch, t in proto:
                if rng.random() < drop_prob:
                    continue
                tj = int(np.clip(np.rint(t + rng.normal(0.0, jitter)), 0, T - 1))
                kept.append((ch, tj))
            examples.append((_sorted_events(kept), label))
    ds = SpikeDataset(examples=tuple(examples), input_size=input_size, T=T,
                      n_classes=classes)
    ds.validate()
    return ds


def save_events(ds: SpikeDataset, path) -> None:
    lines = [f"{HEADER_PREFIX} inputs={ds.input_size} T={ds.T} classes={ds.n_classes}"]
    for events, label in ds.examples:
        lines.append(f"label {label}")
        for neuron, t in events:
            lines.append(f"{neuron} {t}")
        lines.append("")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_events(path) -> SpikeDataset:
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    if not lines or not lines[0].startswith(HEADER_PREFIX + " "):
        raise ParseError(f"missing '{HEADER_PREFIX}' header", lineno=1)
    try:
        fields = dict(item.split("=", 1) for item in lines[0][len(HEADER_PREFIX):].split())
        input_size = int(fields["inputs"])
        T = int(fields["T"])
        classes = int(fields["classes"])
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad header: {exc}", lineno=1) from None
    examples = []
    events: list[tuple[int, int]] = []
    label: int | None = None
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            if label is not None:
                examples.append((tuple(events), label))
                events, label = [], None
            continue
        if line.startswith("label "):
            if label is not None:
                raise ParseError("example not terminated by a blank line", lineno=lineno)
            try:
                label = int(line.split()[1])
            except (IndexError, ValueError):
                raise ParseError(f"bad label line {line!r}", lineno=lineno) from None
            continue
        if label is None:
            raise ParseError(f"event line {line!r} outside an example", lineno=lineno)
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"expected '<neuron> <timestep>', got {line!r}", lineno=lineno)
        try:
            events.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ParseError(f"non-integer event {line!r}", lineno=lineno) from None
    if label is not None:
        examples.append((tuple(events), label))
    ds = SpikeDataset(examples=tuple(examples), input_size=input_size, T=T,
                      n_classes=classes)
    ds.validate()
    return ds


def split_indices(ds: SpikeDataset, ratios, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Index arrays (into ds) of a stratified (train, valid, test) partition.

    Per class, examples are shuffled and counts assigned by largest
    remainder so each split's per-class share matches the ratios within one
    example; the three parts are disjoint and exhaustive. Exposed separately
    from split() so callers can keep parent-dataset example ids (the search
    audit trail checks train/validation disjointness by id).
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise InvalidRatiosError(f"need three non-negative ratios, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidRatiosError(f"ratios must sum to 1, got sum {sum(ratios)}")
    rng = np.random.Generator(np.random.PCG64(seed))
    labels = ds.labels()
    parts: tuple[list[int], list[int], list[int]] = ([], [], [])
    for cls in range(ds.n_classes):
        members = np.flatnonzero(labels == cls)
        rng.shuffle(members)
        m = len(members)
        exact = np.array(ratios) * m
        counts = np.floor(exact).astype(int)
        rem = exact - counts
        for _ in range(m - counts.sum()):
            j = int(np.argmax(rem))
            counts[j] += 1
            rem[j] = -1.0
        stop = np.cumsum(counts)
        parts[0].extend(members[:stop[0]])
        parts[1].extend(members[stop[0]:stop[1]])
        parts[2].extend(members[stop[1]:stop[2]])
    return tuple(np.array(sorted(p), dtype=np.int64) for p in parts)  # type: ignore[return-value]


def split(ds: SpikeDataset, ratios, seed: int) -> tuple[SpikeDataset, SpikeDataset, SpikeDataset]:
    """Stratified (train, valid, test) partition, deterministic in seed."""
    return tuple(ds.subset(idx) for idx in split_indices(ds, ratios, seed))  # type: ignore[return-value]
