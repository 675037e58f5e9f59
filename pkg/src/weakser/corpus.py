"""Corpora, taxonomies, deterministic splits, and weak-label persistence.

Manifests are JSON-lines files, one flat object per utterance with required
keys ``id`` and ``transcript`` and optional ``audio``, ``duration_s``,
``speaker``, ``label``.  Taxonomies are plain-text sidecar files, one label
per line, order significant.  Weak labels are JSON-lines files as well (see
:func:`write_weak_labels`).
"""

from __future__ import annotations

import hashlib
import itertools
import json
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

__all__ = [
    "ALLOWED_FRACTIONS",
    "Corpus",
    "ManifestError",
    "SplitAssignment",
    "Taxonomy",
    "Utterance",
    "WeakLabelRecord",
    "load_manifest",
    "load_taxonomy",
    "normalize_label",
    "read_weak_labels",
    "split_corpus",
    "train_fraction_subset",
    "write_manifest",
    "write_weak_labels",
]

# Fine-tuning data fractions supported by the label-efficiency protocol.
ALLOWED_FRACTIONS = (0.10, 0.30, 0.50, 0.70, 1.00)

_WS = re.compile(r"\s+")


class ManifestError(ValueError):
    """Raised for malformed manifest, taxonomy, or weak-label files."""


def normalize_label(label: str) -> str:
    """Lowercase, trim, and collapse internal whitespace of a label."""
    return _WS.sub(" ", label.strip().lower())


@dataclass(frozen=True)
class Taxonomy:
    """An ordered set of emotion labels.

    Order is significant: it defines argmax tie-breaking and the index of
    each label in a classifier's output head.  Labels are normalized
    (lowercase, single-spaced) at construction.
    """

    name: str
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        normalized = tuple(normalize_label(l) for l in self.labels)
        object.__setattr__(self, "labels", normalized)
        if not self.labels:
            raise ValueError("taxonomy must have at least one label")
        if any(not l for l in self.labels):
            raise ValueError("taxonomy labels must be nonempty strings")
        if len(set(self.labels)) != len(self.labels):
            dupes = sorted({l for l in self.labels if self.labels.count(l) > 1})
            raise ValueError(f"duplicate taxonomy labels: {dupes}")

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self._index

    @cached_property
    def _index(self) -> dict[str, int]:
        return {l: i for i, l in enumerate(self.labels)}

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"label {label!r} not in taxonomy {self.name!r}") from None


def load_taxonomy(path: str | Path, name: str | None = None) -> Taxonomy:
    """Load a taxonomy file: one label per line, order significant.

    Blank lines and lines starting with ``#`` are skipped.
    """
    path = Path(path)
    labels = []
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        labels.append(line)
    if not labels:
        raise ManifestError(f"taxonomy file {path} contains no labels")
    return Taxonomy(name=name or path.stem, labels=tuple(labels))


@dataclass(frozen=True)
class Utterance:
    """One speech segment: a transcript plus optional audio and metadata."""

    id: str
    transcript: str
    audio_ref: str | None = None
    duration_s: float | None = None
    speaker_id: str | None = None
    gt_label: str | None = None


@dataclass(frozen=True)
class Corpus:
    """An immutable collection of utterances with an optional taxonomy.

    The taxonomy must be present whenever any utterance carries a
    ground-truth label, and every such label must belong to it.
    """

    utterances: tuple[Utterance, ...]
    taxonomy: Taxonomy | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "utterances", tuple(self.utterances))
        seen: set[str] = set()
        for utt in self.utterances:
            if utt.id in seen:
                raise ValueError(f"duplicate utterance id {utt.id!r}")
            seen.add(utt.id)
        labeled = [u for u in self.utterances if u.gt_label is not None]
        if labeled and self.taxonomy is None:
            raise ValueError(
                "corpus has ground-truth labels but no taxonomy; pass the "
                "taxonomy the labels are drawn from"
            )
        if self.taxonomy is not None:
            for utt in labeled:
                if utt.gt_label not in self.taxonomy:
                    raise ValueError(
                        f"utterance {utt.id!r} has gt_label {utt.gt_label!r} "
                        f"outside taxonomy {self.taxonomy.name!r}"
                    )

    def __len__(self) -> int:
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    @cached_property
    def by_id(self) -> dict[str, Utterance]:
        return {u.id: u for u in self.utterances}

    def ids(self) -> list[str]:
        return [u.id for u in self.utterances]

    def subset(self, ids) -> "Corpus":
        """Corpus restricted to ``ids``, keeping this corpus's order."""
        wanted = set(ids)
        kept = tuple(u for u in self.utterances if u.id in wanted)
        return Corpus(utterances=kept, taxonomy=self.taxonomy)


_MANIFEST_KEYS = {"id", "transcript", "audio", "duration_s", "speaker", "label"}


def load_manifest(path: str | Path, taxonomy: Taxonomy | None = None) -> Corpus:
    """Load a JSONL manifest into a Corpus, preserving record order.

    ``taxonomy`` must be supplied when the manifest carries ground-truth
    labels.  Unknown keys are ignored so manifests may carry extra metadata.
    """
    path = Path(path)
    utterances: list[Utterance] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: malformed record: {exc}") from None
            if not isinstance(rec, dict):
                raise ManifestError(f"{path}:{lineno}: record is not an object")
            missing = {"id", "transcript"} - rec.keys()
            if missing:
                raise ManifestError(
                    f"{path}:{lineno}: missing required key(s) {sorted(missing)}"
                )
            uid = str(rec["id"])
            if uid in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate id {uid!r}")
            seen.add(uid)
            label = rec.get("label")
            if label is not None:
                label = normalize_label(str(label))
                if taxonomy is None:
                    raise ManifestError(
                        f"{path}:{lineno}: record has a gt label but no taxonomy "
                        "was supplied"
                    )
                if label not in taxonomy:
                    raise ManifestError(
                        f"{path}:{lineno}: gt_label {label!r} not in taxonomy "
                        f"{taxonomy.name!r}"
                    )
            duration = rec.get("duration_s")
            utterances.append(
                Utterance(
                    id=uid,
                    transcript=str(rec["transcript"]),
                    audio_ref=rec.get("audio"),
                    duration_s=float(duration) if duration is not None else None,
                    speaker_id=rec.get("speaker"),
                    gt_label=label,
                )
            )
    return Corpus(utterances=tuple(utterances), taxonomy=taxonomy)


def write_manifest(corpus: Corpus, path: str | Path) -> Path:
    """Write a corpus back out as a JSONL manifest."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for u in corpus:
            rec: dict = {"id": u.id, "transcript": u.transcript}
            if u.audio_ref is not None:
                rec["audio"] = u.audio_ref
            if u.duration_s is not None:
                rec["duration_s"] = u.duration_s
            if u.speaker_id is not None:
                rec["speaker"] = u.speaker_id
            if u.gt_label is not None:
                rec["label"] = u.gt_label
            fh.write(json.dumps(rec) + "\n")
    return path


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

_SPLIT_RATIOS = (0.6, 0.2, 0.2)


@dataclass(frozen=True)
class SplitAssignment:
    """A train/valid/test partition of utterance ids."""

    train: tuple[str, ...]
    valid: tuple[str, ...]
    test: tuple[str, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        parts = (set(self.train), set(self.valid), set(self.test))
        for a, b in itertools.combinations(parts, 2):
            if a & b:
                raise ValueError(f"split partitions overlap: {sorted(a & b)[:5]}")

    def part(self, name: str) -> tuple[str, ...]:
        if name not in ("train", "valid", "test"):
            raise ValueError(f"unknown split part {name!r}")
        return getattr(self, name)


def _stable_hash(seed: int, key: str) -> int:
    digest = hashlib.sha256(f"{seed}:{key}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _target_sizes(n: int) -> tuple[int, int, int]:
    n_train = round(_SPLIT_RATIOS[0] * n)
    n_valid = round(_SPLIT_RATIOS[1] * n)
    return n_train, n_valid, n - n_train - n_valid


def split_corpus(
    corpus: Corpus, seed: int, speaker_independent: bool = False
) -> SplitAssignment:
    """Partition a corpus 6:2:2 (train:valid:test), within one item of exact.

    The assignment is a pure function of the corpus, the seed, and the flag.
    Utterance ids are ranked by a seeded hash and cut at the target sizes.
    With ``speaker_independent`` every speaker's utterances land in a single
    partition; whole speakers are packed to get utterance counts as close to
    6:2:2 as the speaker layout allows (exact search up to 10 speakers, then
    a largest-first greedy fill).  Speaker packing itself does not depend on
    the seed: ties are broken by ascending speaker id so the best-effort
    optimum is stable.
    """
    if len(corpus) == 0:
        raise ValueError("cannot split an empty corpus")
    if speaker_independent:
        missing = [u.id for u in corpus if u.speaker_id is None]
        if missing:
            raise ValueError(
                "speaker-independent split requested but utterances lack "
                f"speaker_id: {missing[:5]}"
            )
        part_of_speaker = _pack_speakers(corpus)
        buckets: tuple[list[str], list[str], list[str]] = ([], [], [])
        for u in corpus:
            buckets[part_of_speaker[u.speaker_id]].append(u.id)
    else:
        ids = corpus.ids()
        ranked = sorted(ids, key=lambda uid: (_stable_hash(seed, uid), uid))
        n_train, n_valid, _ = _target_sizes(len(ids))
        chosen_train = set(ranked[:n_train])
        chosen_valid = set(ranked[n_train : n_train + n_valid])
        buckets = ([], [], [])
        for uid in ids:  # keep corpus order within each partition
            if uid in chosen_train:
                buckets[0].append(uid)
            elif uid in chosen_valid:
                buckets[1].append(uid)
            else:
                buckets[2].append(uid)
    return SplitAssignment(
        train=tuple(buckets[0]), valid=tuple(buckets[1]), test=tuple(buckets[2]), seed=seed
    )


_EXACT_PACK_MAX_SPEAKERS = 10


def _pack_speakers(corpus: Corpus) -> dict[str, int]:
    """Assign each speaker to a partition index (0=train, 1=valid, 2=test)."""
    counts: dict[str, int] = {}
    for u in corpus:
        counts[u.speaker_id] = counts.get(u.speaker_id, 0) + 1
    speakers = sorted(counts)
    n = len(corpus)
    targets = tuple(r * n for r in _SPLIT_RATIOS)

    if len(speakers) <= _EXACT_PACK_MAX_SPEAKERS:
        best_dev = None
        best_assign = None
        for assign in itertools.product((0, 1, 2), repeat=len(speakers)):
            sizes = [0.0, 0.0, 0.0]
            for spk, part in zip(speakers, assign):
                sizes[part] += counts[spk]
            dev = sum(abs(s - t) for s, t in zip(sizes, targets))
            if best_dev is None or dev < best_dev:
                best_dev = dev
                best_assign = assign
        return dict(zip(speakers, best_assign))

    # Greedy largest-first fill toward the biggest remaining deficit.
    order = sorted(speakers, key=lambda s: (-counts[s], s))
    sizes = [0.0, 0.0, 0.0]
    assignment: dict[str, int] = {}
    for spk in order:
        deficits = [t - s for s, t in zip(sizes, targets)]
        part = max(range(3), key=lambda p: (deficits[p], -p))
        assignment[spk] = part
        sizes[part] += counts[spk]
    return assignment


def train_fraction_subset(
    split: SplitAssignment, fraction: float, seed: int
) -> list[str]:
    """Deterministic nested subset of the train ids.

    Ids are ranked by a seeded hash and the first ``round(fraction * n)``
    are kept, so subsets for growing fractions of the same seed are nested.
    The returned list preserves the train list's order; at fraction 1.0 it
    is the train list itself.
    """
    if not any(abs(fraction - f) < 1e-9 for f in ALLOWED_FRACTIONS):
        raise ValueError(
            f"fraction {fraction} not in supported set {ALLOWED_FRACTIONS}"
        )
    train = list(split.train)
    size = round(fraction * len(train))
    ranked = sorted(train, key=lambda uid: (_stable_hash(seed, uid), uid))
    chosen = set(ranked[:size])
    return [uid for uid in train if uid in chosen]


# ---------------------------------------------------------------------------
# Weak-label records
# ---------------------------------------------------------------------------


def _argmax_first(scores: dict[str, float]) -> str:
    """Argmax over a score map, first key in mapping order on ties."""
    best_label = None
    best_score = None
    for label, score in scores.items():
        if best_score is None or score > best_score:
            best_label, best_score = label, score
    return best_label


@dataclass(frozen=True)
class WeakLabelRecord:
    """Per-utterance entailment scores over a taxonomy plus the argmax label.

    ``scores`` is keyed in taxonomy order; ``label`` must equal the argmax
    under the first-in-order tie-break.
    """

    utterance_id: str
    scores: dict[str, float]
    label: str
    prompt_id: str
    scorer_id: str
    taxonomy_name: str

    def validate(self, taxonomy: Taxonomy | None = None) -> None:
        if not self.scores:
            raise ValueError(f"record {self.utterance_id!r} has no scores")
        if taxonomy is not None:
            if tuple(self.scores) != taxonomy.labels:
                raise ValueError(
                    f"record {self.utterance_id!r} scores do not cover taxonomy "
                    f"{taxonomy.name!r} in order"
                )
        expected = _argmax_first(self.scores)
        if self.label != expected:
            raise ValueError(
                f"record {self.utterance_id!r} claims label {self.label!r} but "
                f"argmax of its scores is {expected!r}"
            )


def write_weak_labels(records, path: str | Path) -> Path:
    """Write weak-label records as JSONL; refuses records violating the
    argmax invariant."""
    path = Path(path)
    records = list(records)
    for rec in records:
        rec.validate()
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "utterance_id": rec.utterance_id,
                        "label": rec.label,
                        "prompt_id": rec.prompt_id,
                        "scorer_id": rec.scorer_id,
                        "taxonomy": rec.taxonomy_name,
                        "scores": rec.scores,
                    }
                )
                + "\n"
            )
    return path


def read_weak_labels(path: str | Path) -> list[WeakLabelRecord]:
    """Read weak-label records, preserving file order and score precision."""
    path = Path(path)
    out: list[WeakLabelRecord] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: malformed record: {exc}") from None
            try:
                record = WeakLabelRecord(
                    utterance_id=str(rec["utterance_id"]),
                    scores={str(k): float(v) for k, v in rec["scores"].items()},
                    label=str(rec["label"]),
                    prompt_id=str(rec["prompt_id"]),
                    scorer_id=str(rec["scorer_id"]),
                    taxonomy_name=str(rec["taxonomy"]),
                )
            except KeyError as exc:
                raise ManifestError(f"{path}:{lineno}: missing key {exc}") from None
            record.validate()
            out.append(record)
    return out
