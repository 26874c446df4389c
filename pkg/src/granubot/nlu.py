"""Lexicon-driven intent extraction and domain identification.

A deterministic slot gazetteer stands in for a learned tagger: every matched
term contributes a (label, canonical value) restrict and anything else is
ignored. An utterance with no restricts is chat, not a request.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CatalogError
from .kg import ServiceKG, _normalize_term

_TOKEN_RE = re.compile(r"[a-z0-9]+(?:\.[0-9]+)?", re.IGNORECASE)


@dataclass
class RestrictSet:
    """One slot label with the constraint values the user put on it."""

    label: str
    attributes: set[str]


@dataclass
class IntentionResult:
    """Concern groups of restrict sets; empty means the utterance is chat."""

    concerns: list[list[RestrictSet]] = field(default_factory=list)

    @property
    def is_chat(self) -> bool:
        return not self.concerns

    def merged(self) -> dict[str, set[str]]:
        out: dict[str, set[str]] = {}
        for concern in self.concerns:
            for rs in concern:
                out.setdefault(rs.label, set()).update(rs.attributes)
        return out

    def labels(self) -> set[str]:
        return set(self.merged())


@dataclass
class DomainRanking:
    """Service-type tags with normalized scores, best first."""

    ranked: list[tuple[str, float]] = field(default_factory=list)

    @property
    def is_empty(self) -> bool:
        return not self.ranked

    @property
    def top(self) -> str | None:
        return self.ranked[0][0] if self.ranked else None


class SlotLexicon:
    """Gazetteer mapping surface terms to (slot label, canonical value)."""

    def __init__(self, entries: dict[str, tuple[str, str]]):
        self.entries = {_normalize_term(term): value for term, value in entries.items()}
        self.max_words = max((len(term.split()) for term in self.entries), default=1)

    @classmethod
    def from_file(cls, path) -> "SlotLexicon":
        entries: dict[str, tuple[str, str]] = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise CatalogError(f"bad slot lexicon line: {line!r}")
            entries[parts[0]] = (parts[1], parts[2])
        return cls(entries)

    def labels(self) -> set[str]:
        return {label for label, _ in self.entries.values()}


def tokenize(utterance: str) -> list[str]:
    return [t.lower() for t in _TOKEN_RE.findall(utterance)]


def _scan(tokens: list[str], vocabulary, max_words: int):
    """Greedy longest-first n-gram matching; yields matched vocabulary keys."""
    i = 0
    while i < len(tokens):
        matched = None
        for n in range(min(max_words, len(tokens) - i), 0, -1):
            gram = " ".join(tokens[i : i + n])
            if gram in vocabulary:
                matched = (gram, n)
                break
        if matched:
            yield matched[0]
            i += matched[1]
        else:
            i += 1


def extract_intent(utterance: str, slot_lexicon: SlotLexicon) -> IntentionResult:
    """Collect restrict sets from every lexicon term found in the utterance.

    Matching is case-insensitive and set-valued: repeated terms collapse and
    several terms for one label merge into a single restrict set.
    """
    found: dict[str, set[str]] = {}
    order: list[str] = []
    for gram in _scan(tokenize(utterance), slot_lexicon.entries, slot_lexicon.max_words):
        label, canonical = slot_lexicon.entries[gram]
        if label not in found:
            found[label] = set()
            order.append(label)
        found[label].add(canonical)
    if not found:
        return IntentionResult()
    return IntentionResult([[RestrictSet(label, found[label]) for label in order]])


def build_domain_vocabulary(kg: ServiceKG) -> dict[str, str]:
    """Surface term -> service-type tag, from service/concept names and synonyms."""
    vocab: dict[str, str] = {}
    domain_entities = {
        e.id: e.domain
        for e in kg.entities.values()
        if e.kind in ("service", "concept") and e.domain
    }
    for surface, entity_id in kg.lexicon.items():
        domain = domain_entities.get(entity_id)
        if domain is not None:
            vocab.setdefault(surface, domain)
    return vocab


def identify_domain(utterance: str, kg: ServiceKG) -> DomainRanking:
    """Rank service types by normalized lexicon-hit counts, ties alphabetical."""
    vocab = build_domain_vocabulary(kg)
    max_words = max((len(term.split()) for term in vocab), default=1)
    counts: dict[str, int] = {}
    for gram in _scan(tokenize(utterance), vocab, max_words):
        domain = vocab[gram]
        counts[domain] = counts.get(domain, 0) + 1
    if not counts:
        return DomainRanking()
    total = sum(counts.values())
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return DomainRanking([(tag, hits / total) for tag, hits in ranked])


def is_follow_up(current: DomainRanking, saved: DomainRanking) -> bool:
    """A turn continues the session unless it clearly names a different domain.

    Pure answer turns carry no domain terms at all and inherit the saved
    domain instead of resetting the dialogue.
    """
    if current.is_empty:
        return True
    return current.top == saved.top
