"""Online session management and reply generation.

One session walks one policy tree. Slots already present in the user's
intention are consumed silently before any question is asked, every user
turn counts as a round, and reaching a leaf flips the end tag and renders
the ranked provider list.
"""

from __future__ import annotations

import json
import re
import secrets
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptyCandidates, Reprompt, SessionEnded
from .kg import filter_providers, infer_goal, resolve_candidates
from .nlu import DomainRanking, IntentionResult, RestrictSet, extract_intent, identify_domain, is_follow_up
from .policy import PolicyNode, PolicyTree, route
from .registry import Registry

_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?")

_NUMBER_WORDS = [
    "zero", "one", "two", "three", "four", "five",
    "six", "seven", "eight", "nine", "ten",
]


def spell_count(n: int) -> str:
    return _NUMBER_WORDS[n] if 0 <= n < len(_NUMBER_WORDS) else str(n)


def humanize(attr: str) -> str:
    return attr.replace("_", " ")


@dataclass
class Reply:
    kind: str  # "chat_deflection" | "question" | "final_recommendation"
    text: str
    options: list[dict] = field(default_factory=list)
    services: list[dict] = field(default_factory=list)
    end_tag: int = 0
    round: int = 1

    def to_doc(self) -> dict:
        return {
            "schema_version": 1,
            "kind": self.kind,
            "text": self.text,
            "options": self.options,
            "services": self.services,
            "end_tag": self.end_tag,
            "round": self.round,
        }


@dataclass
class Session:
    id: str
    saved_domain: DomainRanking
    intention: IntentionResult
    tree: PolicyTree
    cursor: PolicyNode
    round: int = 1
    end_tag: int = 0
    seed_candidates: list[int] = field(default_factory=list)

    @property
    def service_type(self) -> str:
        return self.tree.service_type


class DialogueEngine:
    """Stateless orchestration over a registry; sessions carry all state."""

    def __init__(self, registry: Registry, strategy: str | None = None,
                 transcript_path=None):
        self.registry = registry
        self.strategy = strategy or registry.default_strategy
        self.transcript_path = Path(transcript_path) if transcript_path else None

    # -- session lifecycle -------------------------------------------------

    def start_session(self, utterance: str) -> tuple[Session | None, Reply]:
        intent = extract_intent(utterance, self.registry.slot_lexicon)
        if intent.is_chat:
            reply = Reply("chat_deflection", self.registry.templates["chat.deflection"])
            self._log(None, 1, utterance, reply)
            return None, reply

        ranking = identify_domain(utterance, self.registry.kg)
        domain = ranking.top
        if domain is None:
            domain = self._infer_domain(intent)
            if domain is not None:
                ranking = DomainRanking([(domain, 1.0)])
        if domain is None or domain not in self.registry.service_types():
            text = self.registry.templates["clarify.domain"].format(
                domains=", ".join(humanize(t) for t in self.registry.service_types())
            )
            reply = Reply("question", text)
            self._log(None, 1, utterance, reply)
            return None, reply

        seed: list[int] = []
        try:
            candidates = filter_providers(resolve_candidates(intent, self.registry.kg),
                                          self.registry.kg)
            seed = list(candidates.members)
        except EmptyCandidates:
            pass

        session = Session(
            id=secrets.token_urlsafe(16),
            saved_domain=ranking,
            intention=intent,
            tree=self.registry.tree_for(domain, self.strategy),
            cursor=self.registry.tree_for(domain, self.strategy).root,
            seed_candidates=seed,
        )
        self._consume_known_slots(session)
        reply = self._reply_for_cursor(session)
        self._log(session, session.round, utterance, reply)
        return session, reply

    def handle_turn(self, session: Session, utterance: str) -> Reply:
        if session.end_tag:
            raise SessionEnded(f"session {session.id} already finished")
        ranking = identify_domain(utterance, self.registry.kg)
        if not is_follow_up(ranking, session.saved_domain):
            fresh, reply = self.start_session(utterance)
            if fresh is not None:
                self._adopt(session, fresh)
            return reply

        session.round += 1
        new_intent = extract_intent(utterance, self.registry.slot_lexicon)
        self._merge_intention(session, new_intent)

        answer = self._parse_answer(session, utterance, new_intent)
        if answer is None:
            reply = self._reprompt(session)
            self._log(session, session.round, utterance, reply)
            return reply
        try:
            session.cursor = route(session.cursor, answer, self.registry.fuzzy_terms)
        except Reprompt:
            reply = self._reprompt(session)
            self._log(session, session.round, utterance, reply)
            return reply
        if isinstance(answer, dict):
            self._record_answer(session, answer)
        self._consume_known_slots(session)
        reply = self._reply_for_cursor(session)
        self._log(session, session.round, utterance, reply)
        return reply

    def handle_option(self, session: Session, option: int) -> Reply:
        """Route by an explicit child index, as posted by the chat UI."""
        if session.end_tag:
            raise SessionEnded(f"session {session.id} already finished")
        session.round += 1
        try:
            session.cursor = route(session.cursor, option, self.registry.fuzzy_terms)
        except Reprompt:
            reply = self._reprompt(session)
            self._log(session, session.round, f"<option {option}>", reply)
            return reply
        self._consume_known_slots(session)
        reply = self._reply_for_cursor(session)
        self._log(session, session.round, f"<option {option}>", reply)
        return reply

    # -- rendering ---------------------------------------------------------

    def render_intermediate(self, tags: list[str], quantity: int | None = None) -> str:
        if not tags:
            raise Reprompt("cannot render a question without inquiring attributes")
        quantity = len(tags) if quantity is None else quantity
        if quantity == 1 and len(tags) == 1:
            return self.registry.templates["question.single"].format(
                attribute=humanize(tags[0])
            )
        names = [humanize(t) for t in tags]
        joined = " and ".join([", ".join(names[:-1]), names[-1]]) if len(names) > 2 else \
            " and ".join(names)
        return self.registry.templates["question.multi"].format(attributes=joined)

    def render_final(self, candidate_ids: list[str], n: int,
                     intention: IntentionResult | None = None,
                     service_type: str | None = None) -> tuple[str, list[dict]]:
        if not candidate_ids:
            return self.registry.templates["final.empty"], []
        ranked = self._rank_candidates(candidate_ids, intention, service_type)
        shown = ranked[:n]
        listing = "\n".join(self._service_line(i, rec) for i, rec in enumerate(shown, 1))
        if len(ranked) > n:
            text = self.registry.templates["final.overflow"].format(services=listing)
        else:
            text = self.registry.templates["final.within"].format(
                count=spell_count(len(shown)), services=listing
            )
        return text, shown

    # -- internals ----------------------------------------------------------

    def _infer_domain(self, intent: IntentionResult) -> str | None:
        if self.registry.embeddings is None:
            return None
        terms = [v for label, values in intent.merged().items() if label != "pro"
                 for v in sorted(values)]
        if not terms:
            return None
        try:
            ranked = infer_goal(terms, self.registry.kg, self.registry.embeddings, k=1)
        except Exception:
            return None
        if not ranked:
            return None
        return self.registry.kg.entities[ranked[0]].domain

    def _adopt(self, session: Session, fresh: Session) -> None:
        session.saved_domain = fresh.saved_domain
        session.intention = fresh.intention
        session.tree = fresh.tree
        session.cursor = fresh.cursor
        session.round = fresh.round
        session.end_tag = fresh.end_tag
        session.seed_candidates = fresh.seed_candidates

    def _merge_intention(self, session: Session, new_intent: IntentionResult) -> None:
        if new_intent.is_chat:
            return
        merged = session.intention.merged()
        for label, values in new_intent.merged().items():
            merged.setdefault(label, set()).update(values)
        session.intention = IntentionResult(
            [[RestrictSet(label, values) for label, values in merged.items()]]
        )

    def _answer_from_intention(self, session: Session) -> dict:
        merged = session.intention.merged()
        answer = {}
        for attr in session.cursor.inquiring:
            if attr in merged and merged[attr]:
                answer[attr] = sorted(merged[attr])[0]
        return answer

    def _consume_known_slots(self, session: Session) -> None:
        """Route past nodes whose questions the intention already answers."""
        while not session.cursor.leaf:
            answer = self._answer_from_intention(session)
            if not answer:
                break
            try:
                session.cursor = route(session.cursor, answer, self.registry.fuzzy_terms)
            except Reprompt:
                break
        if session.cursor.leaf:
            session.end_tag = 1

    def _parse_answer(self, session: Session, utterance: str,
                      new_intent: IntentionResult):
        stripped = utterance.strip()
        if re.fullmatch(r"\d+", stripped):
            index = int(stripped)
            if 1 <= index <= len(session.cursor.children):
                return index - 1
        answer: dict = {}
        merged = new_intent.merged() if not new_intent.is_chat else {}
        for attr in session.cursor.inquiring:
            if attr in merged and merged[attr]:
                answer[attr] = sorted(merged[attr])[0]
        numbers = [float(x) for x in _NUMBER_RE.findall(utterance)]
        if numbers:
            for attr in session.cursor.inquiring:
                if attr in answer:
                    continue
                facets = [d.facets[attr] for d, _ in session.cursor.children]
                if all(f.kind == "numeric" for f in facets):
                    answer[attr] = numbers.pop(0)
                    break
        return answer or None

    def _record_answer(self, session: Session, answer: dict) -> None:
        merged = session.intention.merged()
        for attr, value in answer.items():
            merged.setdefault(attr, set()).add(str(value))
        session.intention = IntentionResult(
            [[RestrictSet(label, values) for label, values in merged.items()]]
        )

    def _options_for(self, node: PolicyNode) -> list[dict]:
        options = []
        for index, (descriptor, child) in enumerate(node.children):
            attributes = {}
            for attr, facet in descriptor.facets.items():
                doc = {"kind": facet.kind, "centroid": facet.centroid, "rank": facet.rank}
                if facet.kind == "numeric":
                    doc["low"], doc["high"] = facet.low, facet.high
                else:
                    doc["categories"] = facet.categories
                attributes[attr] = doc
            options.append(
                {
                    "index": index,
                    "label": descriptor.summary(),
                    "attributes": attributes,
                    "candidates": len(child.candidates),
                }
            )
        return options

    def _reply_for_cursor(self, session: Session) -> Reply:
        if session.cursor.leaf:
            session.end_tag = 1
            text, services = self.render_final(
                session.cursor.candidates,
                session.tree.n_threshold,
                session.intention,
                session.service_type,
            )
            return Reply("final_recommendation", text, services=services,
                         end_tag=1, round=session.round)
        question = self.render_intermediate(session.cursor.inquiring)
        return Reply("question", question, options=self._options_for(session.cursor),
                     round=session.round)

    def _reprompt(self, session: Session) -> Reply:
        question = self.render_intermediate(session.cursor.inquiring)
        options = self._options_for(session.cursor)
        labels = "; ".join(f"{o['index'] + 1}) {o['label']}" for o in options)
        text = self.registry.templates["reprompt"].format(question=question, options=labels)
        return Reply("question", text, options=options, round=session.round)

    def _rank_candidates(self, candidate_ids: list[str],
                         intention: IntentionResult | None,
                         service_type: str | None) -> list[dict]:
        merged = intention.merged() if intention else {}
        matrix = self.registry.matrices.get(service_type) if service_type else None
        scored = []
        for pid in candidate_ids:
            record = self.registry.records_by_provider.get(pid)
            attrs = dict(record.attributes) if record else {}
            score = self._match_score(attrs, merged, matrix)
            scored.append((score, pid, attrs))
        scored.sort(key=lambda row: (-row[0], row[1]))
        return [
            {"provider_id": pid, "match_score": score, "attributes": _displayable(attrs)}
            for score, pid, attrs in scored
        ]

    def _match_score(self, attrs: dict, merged: dict, matrix) -> int:
        score = 0
        for label, values in merged.items():
            if label == "pro" or label not in attrs:
                continue
            value = attrs[label]
            cell = value if isinstance(value, tuple) else (value,)
            satisfied = False
            for wanted in values:
                if any(str(v).lower() == wanted.lower() for v in cell if isinstance(v, str)):
                    satisfied = True
                    break
                if isinstance(cell[0], float):
                    position = self._normalized_position(label, cell[0], matrix)
                    if wanted.lower() in self.registry.fuzzy_terms and position is not None:
                        if abs(position - self.registry.fuzzy_terms[wanted.lower()]) <= 1 / 3:
                            satisfied = True
                            break
                    else:
                        try:
                            target = float(wanted)
                        except ValueError:
                            continue
                        span = self._span(label, matrix)
                        if span and abs(cell[0] - target) <= 0.15 * span:
                            satisfied = True
                            break
            score += int(satisfied)
        return score

    def _normalized_position(self, attr: str, value: float, matrix):
        if matrix is None or attr not in matrix.norm_meta:
            return None
        meta = matrix.norm_meta[attr]
        if meta.vmax == meta.vmin:
            return 0.0
        return (value - meta.vmin) / (meta.vmax - meta.vmin)

    def _span(self, attr: str, matrix):
        if matrix is None or attr not in matrix.norm_meta:
            return None
        meta = matrix.norm_meta[attr]
        return meta.vmax - meta.vmin

    def _service_line(self, index: int, rec: dict) -> str:
        parts = [f"Name: '{rec['provider_id']}'"]
        for attr, value in rec["attributes"].items():
            parts.append(f"{humanize(attr).title()}: '{value}'")
        return f"{index}: {{{', '.join(parts)}}}"

    def _log(self, session: Session | None, round_no: int, utterance: str,
             reply: Reply) -> None:
        if self.transcript_path is None:
            return
        record = {
            "session": session.id if session else None,
            "round": round_no,
            "utterance": utterance,
            "kind": reply.kind,
            "node": session.cursor.node_id if session else None,
        }
        with self.transcript_path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def _displayable(attrs: dict) -> dict:
    out = {}
    for attr, value in attrs.items():
        if isinstance(value, tuple):
            out[attr] = "; ".join(value)
        elif isinstance(value, float):
            out[attr] = str(int(value)) if value.is_integer() else str(value)
        else:
            out[attr] = str(value)
    return out
