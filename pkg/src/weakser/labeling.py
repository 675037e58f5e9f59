"""Weak-label generation: score every (transcript, prompted label) pair with
an entailment scorer and keep the argmax label.

The transcript plays the hypothesis role and the prompted label the premise
role by default; ``orientation="transcript-premise"`` swaps them, since
zero-shot NLI pipelines in the wild disagree on which way round to put the
pair.  Scorers are pluggable: a deterministic lexicon scorer for offline
work and tests, a seeded pseudo-random scorer, and an HTTP client for a
model-serving sidecar.
"""

from __future__ import annotations

import abc
import hashlib
import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import requests
from sklearn.base import BaseEstimator

from .corpus import Corpus, Taxonomy, WeakLabelRecord
from .prompts import PromptTemplate, builtin_catalog, render

__all__ = [
    "EntailmentScorer",
    "EntailmentWeakLabeler",
    "LabelingResult",
    "LexiconScorer",
    "RandomScorer",
    "RemoteEntailmentScorer",
    "RemoteProtocolError",
    "RemoteUnavailableError",
    "ScorePair",
    "label_corpus",
    "lexicon_score",
    "load_lexicon",
    "select_weak_label",
]

logger = logging.getLogger(__name__)

ORIENTATIONS = ("label-premise", "transcript-premise")

_TOKEN = re.compile(r"[\w']+")


def _tokens(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class ScorePair:
    """One premise/hypothesis pair submitted to an entailment scorer."""

    premise: str
    hypothesis: str

    def __post_init__(self) -> None:
        if not self.premise.strip() or not self.hypothesis.strip():
            raise ValueError("premise and hypothesis must be nonempty")


class EntailmentScorer(abc.ABC):
    """Scores premise/hypothesis pairs with values in [0, 1].

    Implementations must be deterministic for a fixed ``scorer_id`` and
    input, and must return one score per pair in input order.
    """

    scorer_id: str = "abstract"
    #: whether concurrent score_batch calls are safe
    supports_concurrency: bool = True

    @abc.abstractmethod
    def score_batch(self, pairs: list[ScorePair]) -> list[float]:
        ...


def select_weak_label(scores: dict[str, float], taxonomy: Taxonomy) -> str:
    """Argmax label of a score map, ties broken by taxonomy order.

    The map must cover exactly the taxonomy's labels.
    """
    if set(scores) != set(taxonomy.labels):
        missing = sorted(set(taxonomy.labels) - set(scores))
        extra = sorted(set(scores) - set(taxonomy.labels))
        raise ValueError(
            f"scores must cover taxonomy {taxonomy.name!r} exactly "
            f"(missing={missing}, extra={extra})"
        )
    best = taxonomy.labels[0]
    for label in taxonomy.labels[1:]:
        if scores[label] > scores[best]:
            best = label
    return best


# ---------------------------------------------------------------------------
# Lexicon scorer
# ---------------------------------------------------------------------------


def _recover_label(premise: str, labels: tuple[str, ...]) -> str:
    """Find the unique candidate label whose words occur in the premise."""
    ptoks = _tokens(premise)
    found = []
    for label in labels:
        ltoks = _tokens(label)
        n = len(ltoks)
        if any(ptoks[i : i + n] == ltoks for i in range(len(ptoks) - n + 1)):
            found.append(label)
    if len(found) != 1:
        raise ValueError(
            f"premise {premise!r} must contain exactly one candidate label, "
            f"found {found or 'none'}"
        )
    return found[0]


def lexicon_score(
    pair: ScorePair, lexicon: dict[str, dict[str, float]], labels: tuple[str, ...]
) -> float:
    """Mean association weight between hypothesis tokens and the premise label.

    Tokens absent from the lexicon contribute 0, so the score is always in
    [0, 1] for weights in [0, 1].
    """
    label = _recover_label(pair.premise, labels)
    toks = _tokens(pair.hypothesis)
    if not toks:
        return 0.0
    total = sum(lexicon.get(tok, {}).get(label, 0.0) for tok in toks)
    return total / len(toks)


class LexiconScorer(EntailmentScorer):
    """Deterministic word-association scorer.

    ``lexicon`` maps hypothesis words to per-label weights in [0, 1]; the
    candidate label is recovered from the premise text.  Useful as an
    offline stand-in for a served NLI model and as a test oracle.
    """

    def __init__(self, lexicon: dict[str, dict[str, float]], labels) -> None:
        for word, weights in lexicon.items():
            for label, w in weights.items():
                if not 0.0 <= w <= 1.0:
                    raise ValueError(
                        f"lexicon weight for ({word!r}, {label!r}) is {w}, "
                        "expected [0, 1]"
                    )
        self.lexicon = lexicon
        self.labels = tuple(labels)
        self.scorer_id = "lexicon"

    def score_batch(self, pairs: list[ScorePair]) -> list[float]:
        return [lexicon_score(p, self.lexicon, self.labels) for p in pairs]


def load_lexicon(path: str | Path) -> dict[str, dict[str, float]]:
    """Load a ``word<TAB>label<TAB>weight`` lexicon file."""
    path = Path(path)
    lexicon: dict[str, dict[str, float]] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 'word<TAB>label<TAB>weight'")
        word, label, weight = parts
        lexicon.setdefault(word.strip().lower(), {})[label.strip().lower()] = float(weight)
    return lexicon


def save_lexicon(lexicon: dict[str, dict[str, float]], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for word in sorted(lexicon):
            for label in sorted(lexicon[word]):
                fh.write(f"{word}\t{label}\t{lexicon[word][label]}\n")
    return path


class RandomScorer(EntailmentScorer):
    """Seeded pseudo-random scorer: a pure hash of (seed, premise, hypothesis).

    Scores are uniform in [0, 1) and independent of batching and ordering,
    which makes this useful for control experiments.
    """

    def __init__(self, seed: int) -> None:
        self.seed = int(seed)
        self.scorer_id = f"random:{self.seed}"

    def _score(self, pair: ScorePair) -> float:
        digest = hashlib.sha256(
            f"{self.seed}|{pair.premise}|{pair.hypothesis}".encode("utf-8")
        ).digest()
        return int.from_bytes(digest[:8], "big") / 2**64

    def score_batch(self, pairs: list[ScorePair]) -> list[float]:
        return [self._score(p) for p in pairs]


# ---------------------------------------------------------------------------
# Remote scorer (client for the serving sidecar)
# ---------------------------------------------------------------------------


class RemoteUnavailableError(RuntimeError):
    """The sidecar could not be reached after all retries.

    ``failed_indices`` holds the input positions whose scores were never
    obtained.
    """

    def __init__(self, message: str, failed_indices=()):
        super().__init__(message)
        self.failed_indices = tuple(failed_indices)


class RemoteProtocolError(RuntimeError):
    """The sidecar answered with a malformed or out-of-contract response."""


class RemoteEntailmentScorer(EntailmentScorer):
    """HTTP client for the entailment-scoring sidecar.

    Oversized requests are split to the server's advertised maximum batch
    and reassembled in order.  Network failures and 5xx responses are
    retried with exponential backoff up to ``retries`` extra attempts.
    """

    def __init__(
        self,
        endpoint: str,
        timeout_s: float = 30.0,
        retries: int = 2,
        backoff_s: float = 0.5,
        max_batch: int | None = None,
    ) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.timeout_s = timeout_s
        self.retries = retries
        self.backoff_s = backoff_s
        self._max_batch = max_batch
        self._model_id: str | None = None
        self.scorer_id = f"remote:{self.endpoint}"

    def info(self) -> dict:
        resp = requests.get(f"{self.endpoint}/v1/info", timeout=self.timeout_s)
        resp.raise_for_status()
        return resp.json()

    @property
    def max_batch(self) -> int:
        if self._max_batch is None:
            info = self._fetch_info_with_retry()
            self._max_batch = int(info["max_batch"])
            self._model_id = str(info.get("model_id", ""))
            if self._model_id:
                self.scorer_id = f"remote:{self._model_id}"
        return self._max_batch

    def _fetch_info_with_retry(self) -> dict:
        last_exc: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                return self.info()
            except (requests.RequestException, ValueError) as exc:
                last_exc = exc
                if attempt < self.retries:
                    time.sleep(self.backoff_s * 2**attempt)
        raise RemoteUnavailableError(
            f"could not fetch {self.endpoint}/v1/info after "
            f"{self.retries + 1} attempts: {last_exc}"
        )

    def _post_chunk(self, chunk: list[ScorePair]) -> list[float]:
        payload = {
            "pairs": [{"premise": p.premise, "hypothesis": p.hypothesis} for p in chunk]
        }
        resp = requests.post(
            f"{self.endpoint}/v1/entailment", json=payload, timeout=self.timeout_s
        )
        if resp.status_code >= 500:
            raise requests.HTTPError(f"server error {resp.status_code}", response=resp)
        if resp.status_code != 200:
            raise RemoteProtocolError(
                f"sidecar rejected request with status {resp.status_code}: "
                f"{resp.text[:200]}"
            )
        body = resp.json()
        scores = body.get("scores")
        if not isinstance(scores, list) or len(scores) != len(chunk):
            got = len(scores) if isinstance(scores, list) else "none"
            raise RemoteProtocolError(
                f"sidecar returned {got} scores for {len(chunk)} pairs"
            )
        scores = [float(s) for s in scores]
        bad = [s for s in scores if not 0.0 <= s <= 1.0]
        if bad:
            raise RemoteProtocolError(f"sidecar returned scores outside [0, 1]: {bad[:3]}")
        return scores

    def score_batch(self, pairs: list[ScorePair]) -> list[float]:
        pairs = list(pairs)
        if not pairs:
            return []
        size = self.max_batch
        out: list[float] = []
        for start in range(0, len(pairs), size):
            chunk = pairs[start : start + size]
            last_exc: Exception | None = None
            for attempt in range(self.retries + 1):
                try:
                    out.extend(self._post_chunk(chunk))
                    last_exc = None
                    break
                except (requests.RequestException,) as exc:
                    last_exc = exc
                    if attempt < self.retries:
                        time.sleep(self.backoff_s * 2**attempt)
            if last_exc is not None:
                raise RemoteUnavailableError(
                    f"scoring failed for pairs [{start}, {start + len(chunk)}) "
                    f"after {self.retries + 1} attempts: {last_exc}",
                    failed_indices=range(start, start + len(chunk)),
                )
        return out


# ---------------------------------------------------------------------------
# Corpus labeling
# ---------------------------------------------------------------------------


@dataclass
class LabelingResult:
    """Outcome of labeling a corpus: records plus skip/failure bookkeeping."""

    records: list[WeakLabelRecord]
    skipped_ids: tuple[str, ...] = ()
    failed_ids: tuple[str, ...] = ()


def _score_transcripts(
    transcripts: list[str],
    taxonomy: Taxonomy,
    prompt: PromptTemplate,
    scorer: EntailmentScorer,
    batch_size: int,
    orientation: str,
    max_workers: int,
    retries: int,
) -> tuple[list[dict[str, float] | None], list[int]]:
    """Score every (transcript, label) pair; returns per-transcript score
    maps (None where scoring failed) and the failed transcript indices."""
    if batch_size < 1:
        raise ValueError("batch_size must be a positive integer")
    if orientation not in ORIENTATIONS:
        raise ValueError(f"orientation must be one of {ORIENTATIONS}")
    premises = [render(prompt, y) for y in taxonomy.labels]
    k = len(taxonomy)

    pairs: list[ScorePair] = []
    for text in transcripts:
        for premise in premises:
            if orientation == "label-premise":
                pairs.append(ScorePair(premise=premise, hypothesis=text))
            else:
                pairs.append(ScorePair(premise=text, hypothesis=premise))

    chunks = [pairs[i : i + batch_size] for i in range(0, len(pairs), batch_size)]

    def run_chunk(chunk: list[ScorePair]) -> list[float] | Exception:
        last: Exception | None = None
        for _ in range(retries + 1):
            try:
                scores = scorer.score_batch(chunk)
                if len(scores) != len(chunk):
                    raise ValueError(
                        f"scorer {scorer.scorer_id!r} returned {len(scores)} "
                        f"scores for {len(chunk)} pairs"
                    )
                return scores
            except Exception as exc:  # noqa: BLE001 - surfaced per utterance
                last = exc
        return last

    workers = max_workers if scorer.supports_concurrency else 1
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_chunk, chunks))
    else:
        results = [run_chunk(c) for c in chunks]

    flat: list[float | None] = []
    for chunk, res in zip(chunks, results):
        if isinstance(res, Exception):
            logger.warning("scorer batch failed: %s", res)
            flat.extend([None] * len(chunk))
        else:
            flat.extend(res)

    score_maps: list[dict[str, float] | None] = []
    failed: list[int] = []
    for i in range(len(transcripts)):
        values = flat[i * k : (i + 1) * k]
        if any(v is None for v in values):
            score_maps.append(None)
            failed.append(i)
        else:
            score_maps.append(dict(zip(taxonomy.labels, values)))
    return score_maps, failed


def label_corpus(
    corpus: Corpus,
    taxonomy: Taxonomy,
    prompt: PromptTemplate,
    scorer: EntailmentScorer,
    batch_size: int = 64,
    orientation: str = "label-premise",
    max_workers: int = 1,
    retries: int = 0,
) -> LabelingResult:
    """Assign a weak label to every utterance with a nonempty transcript.

    Each utterance is scored against all taxonomy labels and labeled by
    argmax with taxonomy-order tie-break.  Results are independent of
    ``batch_size``, ``max_workers``, and utterance order.  Utterances with
    empty transcripts are skipped (not an error); utterances whose scorer
    batches ultimately failed are reported in ``failed_ids``.
    """
    eligible: list = []
    skipped: list[str] = []
    for utt in corpus:
        if utt.transcript.strip():
            eligible.append(utt)
        else:
            skipped.append(utt.id)
    if skipped:
        logger.info("skipping %d utterances with empty transcripts", len(skipped))

    score_maps, failed_idx = _score_transcripts(
        [u.transcript for u in eligible],
        taxonomy,
        prompt,
        scorer,
        batch_size,
        orientation,
        max_workers,
        retries,
    )

    records: list[WeakLabelRecord] = []
    for utt, scores in zip(eligible, score_maps):
        if scores is None:
            continue
        records.append(
            WeakLabelRecord(
                utterance_id=utt.id,
                scores=scores,
                label=select_weak_label(scores, taxonomy),
                prompt_id=prompt.id,
                scorer_id=scorer.scorer_id,
                taxonomy_name=taxonomy.name,
            )
        )
    failed = tuple(eligible[i].id for i in failed_idx)
    return LabelingResult(records=records, skipped_ids=tuple(skipped), failed_ids=failed)


class EntailmentWeakLabeler(BaseEstimator):
    """Zero-shot emotion classifier over transcripts, sklearn style.

    Stateless: ``fit`` only validates and records ``classes_``; ``predict``
    runs the prompt/scorer pipeline and returns one taxonomy label per
    transcript.

    Parameters
    ----------
    taxonomy : Taxonomy
        Candidate label space; order defines tie-breaking.
    scorer : EntailmentScorer
        Pluggable scoring backend.
    prompt : PromptTemplate, optional
        Defaults to the built-in default prompt.
    batch_size : int
        Pairs per scorer call; has no effect on results.
    orientation : str
        ``"label-premise"`` (default) or ``"transcript-premise"``.
    """

    def __init__(
        self,
        taxonomy: Taxonomy,
        scorer: EntailmentScorer,
        prompt: PromptTemplate | None = None,
        batch_size: int = 64,
        orientation: str = "label-premise",
        max_workers: int = 1,
        retries: int = 0,
    ) -> None:
        self.taxonomy = taxonomy
        self.scorer = scorer
        self.prompt = prompt
        self.batch_size = batch_size
        self.orientation = orientation
        self.max_workers = max_workers
        self.retries = retries

    def _resolved_prompt(self) -> PromptTemplate:
        if self.prompt is not None:
            return self.prompt
        from .prompts import DEFAULT_PROMPT_ID, get_prompt

        return get_prompt(DEFAULT_PROMPT_ID)

    def fit(self, X=None, y=None) -> "EntailmentWeakLabeler":
        self.classes_ = list(self.taxonomy.labels)
        return self

    def predict_scores(self, transcripts) -> list[dict[str, float]]:
        """Per-transcript score maps over the taxonomy, in taxonomy order."""
        transcripts = list(transcripts)
        if any(not t.strip() for t in transcripts):
            raise ValueError("transcripts must be nonempty; filter empties first")
        score_maps, failed = _score_transcripts(
            transcripts,
            self.taxonomy,
            self._resolved_prompt(),
            self.scorer,
            self.batch_size,
            self.orientation,
            self.max_workers,
            self.retries,
        )
        if failed:
            raise RuntimeError(f"scoring failed for {len(failed)} transcripts")
        return score_maps

    def predict(self, transcripts) -> list[str]:
        return [
            select_weak_label(scores, self.taxonomy)
            for scores in self.predict_scores(transcripts)
        ]

    def label_corpus(self, corpus: Corpus) -> LabelingResult:
        return label_corpus(
            corpus,
            self.taxonomy,
            self._resolved_prompt(),
            self.scorer,
            batch_size=self.batch_size,
            orientation=self.orientation,
            max_workers=self.max_workers,
            retries=self.retries,
        )
