"""Flat-text serialization of dialog turns for sequence models.

A turn is rendered as a run of named sections, each wrapped in sentinel tag
lines and holding one record per line with fields joined by U+241F (the
symbol-for-unit-separator character, written ``SEP`` here).  The context
carries the previous turn's dialog state instead of the raw history, which
keeps inputs short and is what lets a model generalize across domains: the
schemas section describes slots and intents in plain language, so nothing in
the input is tied to a memorized domain.

Byte offsets of every section are tracked during construction; training
records expose the target span so a trainer can mask the loss to the exact
bytes it should learn to produce.  GRAMMAR.md at the repository root is the
normative description of this format.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .model import (
    Act,
    ActionFrame,
    DbResults,
    Dialogue,
    DialogState,
    DomainSchema,
    NONE_INTENT,
    Speaker,
    gold_state_at,
)

SEP = "␟"

CONTEXT_SECTIONS = ("prev_state", "user_utterance", "schemas", "db_results", "action_type_list")
TARGET_SECTIONS = ("dialog_state", "user_actions", "system_actions", "response")

DB_RECORD_CAP = 3
CATEGORICAL_VALUE_CAP = 10

_CONTROL = re.compile(r"[\r\n␟]")
_LINE_BREAKS = re.compile(r"[\r\n]")


def begin_tag(section: str) -> str:
    return f"<|begin_{section}|>"


def end_tag(section: str) -> str:
    return f"<|end_{section}|>"


def sanitize_atom(text: str) -> str:
    """Replace separator and newline characters so an atom stays one field."""
    return _CONTROL.sub(" ", text)


def sanitize_line(text: str) -> str:
    """Whole-line payloads (utterance, response) keep the field separator;
    embedded act annotations depend on it.  Only line structure is enforced."""
    return _LINE_BREAKS.sub(" ", text)


def _line(*fields: str) -> str:
    return SEP.join(sanitize_atom(f) for f in fields)


# ---------------------------------------------------------------------------
# Section assembly


class _SectionWriter:
    """Accumulates tagged sections and the byte span of each payload."""

    def __init__(self) -> None:
        self._pieces: list[str] = []
        self._nbytes = 0
        self.spans: dict[str, tuple[int, int]] = {}

    def _push(self, text: str) -> None:
        self._pieces.append(text)
        self._nbytes += len(text.encode("utf-8"))

    def add(self, section: str, payload_lines: Iterable[str]) -> None:
        self._push(begin_tag(section) + "\n")
        start = self._nbytes
        for line in payload_lines:
            self._push(line + "\n")
        self.spans[section] = (start, self._nbytes)
        self._push(end_tag(section) + "\n")

    def render(self) -> str:
        return "".join(self._pieces)


@dataclass(frozen=True, slots=True)
class ContextString:
    text: str
    section_spans: dict[str, tuple[int, int]] = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class TargetString:
    text: str
    section_spans: dict[str, tuple[int, int]] = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class TrainingRecord:
    context: ContextString
    target: TargetString
    full_text: str
    # Byte offsets of the target within full_text; the loss mask in training.
    target_span: tuple[int, int]


@dataclass(frozen=True, slots=True)
class ParsedTurnOutput:
    state: DialogState
    user_actions: ActionFrame
    system_actions: ActionFrame
    response: str
    warnings: tuple[str, ...] = ()


# ---------------------------------------------------------------------------
# Rendering

def _state_lines(state: DialogState) -> list[str]:
    lines = [_line("intent", state.active_intent or NONE_INTENT)]
    for domain, slot, values in state.slot_values:
        lines.append(_line("slot", domain, slot, *values))
    for domain, slot in sorted(state.requested_slots):
        lines.append(_line("req", domain, slot))
    return lines


def _act_lines(frame: ActionFrame) -> list[str]:
    return [
        _line("act", act.domain, act.act_type, act.slot or "", *act.values)
        for act in frame.acts
    ]


def render_act(act: Act) -> str:
    """One act as a grammar line; used both in targets and in embedded
    user-act annotations."""
    return _line("act", act.domain, act.act_type, act.slot or "", *act.values)


def _schema_lines(schemas: Sequence[DomainSchema], value_cap: int) -> list[str]:
    lines: list[str] = []
    for schema in sorted(schemas, key=lambda s: s.service_name):
        lines.append(_line("domain", schema.service_name, schema.description))
        for intent in schema.intents:
            lines.append(
                _line(
                    "intent",
                    intent.name,
                    intent.description,
                    "required=" + "|".join(intent.required_slots),
                    "optional=" + "|".join(f"{k}={v}" for k, v in intent.optional_slots.items()),
                    "result=" + "|".join(intent.result_slots),
                    "transactional=" + ("yes" if intent.is_transactional else "no"),
                )
            )
        for slot in schema.slots:
            fields = [
                "slot",
                slot.name,
                slot.description,
                "categorical=" + ("yes" if slot.is_categorical else "no"),
            ]
            if slot.possible_values:
                fields.append("values=" + "|".join(slot.possible_values[:value_cap]))
            lines.append(_line(*fields))
    return lines


def _db_lines(db: DbResults | None, record_cap: int) -> list[str]:
    if db is None:
        return []
    lines = [_line("query", db.query_intent), _line("count", str(len(db.records)))]
    for record in db.records[:record_cap]:
        lines.append(_line("result", *(f"{k}={v}" for k, v in sorted(record.items()))))
    return lines


def build_context(
    prev_state: DialogState,
    user_utterance: str,
    schemas: Sequence[DomainSchema],
    db: DbResults | None,
    action_types: Sequence[str],
    *,
    db_record_cap: int = DB_RECORD_CAP,
    categorical_value_cap: int = CATEGORICAL_VALUE_CAP,
) -> ContextString:
    """Render the model input for one turn.

    ``db=None`` means no query has been run yet (empty section), which is
    distinct from a query that returned zero records.
    """
    w = _SectionWriter()
    w.add("prev_state", _state_lines(prev_state))
    w.add("user_utterance", [sanitize_line(user_utterance)])
    w.add("schemas", _schema_lines(schemas, categorical_value_cap))
    w.add("db_results", _db_lines(db, db_record_cap))
    w.add("action_type_list", [_line(*action_types)] if action_types else [])
    return ContextString(text=w.render(), section_spans=w.spans)


def build_target(
    state: DialogState,
    user_actions: ActionFrame,
    system_actions: ActionFrame,
    response: str,
) -> TargetString:
    """Render the expected model output for one turn.

    The cascade order (state, then user actions, then system actions, then
    response) is fixed: each section conditions on everything before it.
    """
    if user_actions.actor is not Speaker.USER:
        raise ValueError("user_actions must carry actor USER")
    if system_actions.actor is not Speaker.SYSTEM:
        raise ValueError("system_actions must carry actor SYSTEM")
    w = _SectionWriter()
    w.add("dialog_state", _state_lines(state))
    w.add("user_actions", _act_lines(user_actions))
    w.add("system_actions", _act_lines(system_actions))
    w.add("response", [sanitize_line(response)] if response else [])
    return TargetString(text=w.render(), section_spans=w.spans)


def build_training_record(context: ContextString, target: TargetString) -> TrainingRecord:
    full_text = context.text + target.text
    start = len(context.text.encode("utf-8"))
    end = start + len(target.text.encode("utf-8"))
    return TrainingRecord(context=context, target=target, full_text=full_text, target_span=(start, end))


def build_full_history_context(
    history: Sequence[tuple[Speaker, str]],
    user_utterance: str,
    schemas: Sequence[DomainSchema],
    db: DbResults | None,
    action_types: Sequence[str],
    *,
    db_record_cap: int = DB_RECORD_CAP,
    categorical_value_cap: int = CATEGORICAL_VALUE_CAP,
) -> str:
    """Reference baseline that carries every prior utterance instead of the
    previous state.  Exists to measure how much the state summary saves."""
    w = _SectionWriter()
    w.add(
        "history",
        [_line(speaker.value, utterance) for speaker, utterance in history],
    )
    w.add("user_utterance", [sanitize_line(user_utterance)])
    w.add("schemas", _schema_lines(schemas, categorical_value_cap))
    w.add("db_results", _db_lines(db, db_record_cap))
    w.add("action_type_list", [_line(*action_types)] if action_types else [])
    return w.render()


# ---------------------------------------------------------------------------
# Parsing generated text

def _split_sections(
    text: str, known: Sequence[str], warnings: list[str]
) -> dict[str, list[str]]:
    begin_tags = {begin_tag(s): s for s in known}
    payloads: dict[str, list[str]] = {}
    current: str | None = None
    discard = False
    for line in text.split("\n"):
        section = begin_tags.get(line)
        if section is not None:
            if current is not None:
                warnings.append(f"section {current} not terminated")
            if section in payloads:
                warnings.append(f"duplicate section {section} ignored")
                current, discard = section, True
            else:
                payloads[section] = []
                current, discard = section, False
            continue
        if current is not None and line == end_tag(current):
            current = None
            continue
        if current is not None and not discard:
            payloads[current].append(line)
        # Lines outside any section (echoed context, chatter) are dropped.
    if current is not None:
        warnings.append(f"section {current} not terminated")
    return payloads


def _slot_name_index(schemas: Sequence[DomainSchema] | None) -> dict[str, list[str]]:
    index: dict[str, list[str]] = {}
    for schema in schemas or ():
        for slot in schema.slots:
            index.setdefault(slot.name, []).append(schema.service_name)
    return index


def _parse_state_lines(
    lines: Iterable[str],
    slot_index: Mapping[str, list[str]],
    domain_names: frozenset[str],
    warnings: list[str],
) -> DialogState:
    intent: str | None = None
    slots: dict[tuple[str, str], tuple[str, ...]] = {}
    requested: list[tuple[str, str]] = []
    for raw in lines:
        if not raw:
            continue
        parts = raw.split(SEP)
        kind = parts[0]
        if kind == "intent" and len(parts) == 2 and parts[1]:
            if intent is None:
                intent = parts[1]
            else:
                warnings.append("duplicate intent line ignored")
        elif kind == "slot":
            key_values = _read_slot_parts(parts, slot_index, domain_names, warnings)
            if key_values is None:
                continue
            key, values = key_values
            if key in slots:
                warnings.append(f"duplicate state entry for {key[0]}.{key[1]}; kept first")
            else:
                slots[key] = values
        elif kind == "req" and len(parts) == 3 and parts[1] and parts[2]:
            requested.append((parts[1], parts[2]))
        else:
            warnings.append(f"unparseable state line skipped: {raw[:60]!r}")
    return DialogState(
        active_intent=intent or NONE_INTENT,
        requested_slots=frozenset(requested),
        slot_values=tuple((d, s, vs) for (d, s), vs in slots.items()),
    )


def _read_slot_parts(
    parts: list[str],
    slot_index: Mapping[str, list[str]],
    domain_names: frozenset[str],
    warnings: list[str],
) -> tuple[tuple[str, str], tuple[str, ...]] | None:
    # Well-formed: slot, domain, name, value...
    if len(parts) >= 4 and parts[1] and parts[2]:
        return (parts[1], parts[2]), tuple(parts[3:])
    # Dropped domain (slot, name, value...): recover when the slot name maps
    # to exactly one known domain.
    if len(parts) >= 3 and parts[1] and parts[1] not in domain_names:
        owners = slot_index.get(parts[1], [])
        if len(owners) == 1:
            warnings.append(f"state line missing domain; inferred {owners[0]} for {parts[1]}")
            return (owners[0], parts[1]), tuple(parts[2:])
    warnings.append(f"malformed state line skipped: {SEP.join(parts)[:60]!r}")
    return None


def _parse_act_lines(
    lines: Iterable[str], actor: Speaker, warnings: list[str]
) -> ActionFrame:
    acts: list[Act] = []
    for raw in lines:
        if not raw:
            continue
        parts = raw.split(SEP)
        if parts[0] == "act" and len(parts) >= 4 and parts[1] and parts[2]:
            acts.append(
                Act(
                    domain=parts[1],
                    act_type=parts[2],
                    slot=parts[3] or None,
                    values=tuple(parts[4:]),
                )
            )
        else:
            warnings.append(f"malformed {actor.value.lower()} act line skipped: {raw[:60]!r}")
    return ActionFrame(actor=actor, acts=tuple(acts))


def parse_act_line(raw: str) -> Act | None:
    """Parse one act line, tolerating an empty domain field.  Returns None
    when the line is not an act line at all."""
    parts = raw.split(SEP)
    if parts[0] == "act" and len(parts) >= 4 and parts[2]:
        return Act(domain=parts[1], act_type=parts[2], slot=parts[3] or None, values=tuple(parts[4:]))
    return None


def parse_generation(
    text: str, schemas: Sequence[DomainSchema] | None = None
) -> ParsedTurnOutput:
    """Parse model output into structured turn predictions.

    Total by construction: any input yields a result.  Damage is reported in
    ``warnings`` rather than raised, and text with no section markers at all
    is treated as a bare response so surface metrics still apply.  Schemas,
    when given, are only used to repair state lines that dropped the domain
    field; they never make parsing stricter.
    """
    warnings: list[str] = []
    if not any(begin_tag(s) in text for s in TARGET_SECTIONS):
        return ParsedTurnOutput(
            state=DialogState(),
            user_actions=ActionFrame(actor=Speaker.USER),
            system_actions=ActionFrame(actor=Speaker.SYSTEM),
            response=text,
            warnings=("no section markers found; treated entire text as response",),
        )
    payloads = _split_sections(text, TARGET_SECTIONS, warnings)
    for section in TARGET_SECTIONS:
        if section not in payloads:
            warnings.append(f"missing section {section}")
    slot_index = _slot_name_index(schemas)
    domain_names = frozenset(s.service_name for s in schemas or ())
    state = _parse_state_lines(
        payloads.get("dialog_state", []), slot_index, domain_names, warnings
    )
    user_actions = _parse_act_lines(payloads.get("user_actions", []), Speaker.USER, warnings)
    system_actions = _parse_act_lines(
        payloads.get("system_actions", []), Speaker.SYSTEM, warnings
    )
    response = "\n".join(payloads.get("response", []))
    return ParsedTurnOutput(
        state=state,
        user_actions=user_actions,
        system_actions=system_actions,
        response=response,
        warnings=tuple(warnings),
    )


# ---------------------------------------------------------------------------
# Embedded user-act annotations
#
# Simulated user utterances carry their dialog acts inline, wrapped in white
# square brackets, so a text-only policy can recover them without a language
# understanding model.  Natural utterances simply have no block.

ANNOTATION_OPEN = "⟦"
ANNOTATION_CLOSE = "⟧"
_ACT_JOIN = "␞"
_ANNOTATION = re.compile(
    re.escape(ANNOTATION_OPEN) + "(.*?)" + re.escape(ANNOTATION_CLOSE), re.DOTALL
)


def render_user_annotation(acts: Sequence[Act]) -> str:
    return ANNOTATION_OPEN + _ACT_JOIN.join(render_act(a) for a in acts) + ANNOTATION_CLOSE


def extract_annotation_acts(utterance: str) -> tuple[Act, ...]:
    acts: list[Act] = []
    for match in _ANNOTATION.finditer(utterance):
        for chunk in match.group(1).split(_ACT_JOIN):
            act = parse_act_line(chunk)
            if act is not None:
                acts.append(act)
    return tuple(acts)


def strip_annotations(utterance: str) -> str:
    return _ANNOTATION.sub("", utterance).strip()


# ---------------------------------------------------------------------------
# Parsing contexts (used by text-only backends and by tooling)


@dataclass(frozen=True, slots=True)
class ParsedContext:
    prev_state: DialogState
    user_utterance: str
    db: DbResults | None
    # Total hit count advertised by the context; the record list itself is
    # capped, so this can exceed len(db.records).
    db_count: int | None
    action_types: tuple[str, ...]
    warnings: tuple[str, ...] = ()


def parse_context(text: str, schemas: Sequence[DomainSchema] | None = None) -> ParsedContext:
    """Inverse of build_context for everything a policy needs at run time.

    The schemas section is not reconstructed; a backend that needs schema
    detail holds its own copies.
    """
    warnings: list[str] = []
    payloads = _split_sections(text, CONTEXT_SECTIONS, warnings)
    slot_index = _slot_name_index(schemas)
    domain_names = frozenset(s.service_name for s in schemas or ())
    prev_state = _parse_state_lines(
        payloads.get("prev_state", []), slot_index, domain_names, warnings
    )
    utterance = "\n".join(payloads.get("user_utterance", []))

    db: DbResults | None = None
    db_count: int | None = None
    db_lines = [ln for ln in payloads.get("db_results", []) if ln]
    if db_lines:
        query_intent = ""
        records: list[dict[str, str]] = []
        for raw in db_lines:
            parts = raw.split(SEP)
            if parts[0] == "query" and len(parts) == 2:
                query_intent = parts[1]
            elif parts[0] == "count" and len(parts) == 2:
                try:
                    db_count = int(parts[1])
                except ValueError:
                    warnings.append(f"non-numeric db count: {parts[1]!r}")
            elif parts[0] == "result":
                record: dict[str, str] = {}
                for field_text in parts[1:]:
                    key, eq, value = field_text.partition("=")
                    if eq:
                        record[key] = value
                    else:
                        warnings.append(f"db field without '=' skipped: {field_text[:40]!r}")
                records.append(record)
            else:
                warnings.append(f"unparseable db line skipped: {raw[:60]!r}")
        db = DbResults(query_intent=query_intent, records=tuple(records))

    action_lines = [ln for ln in payloads.get("action_type_list", []) if ln]
    action_types: tuple[str, ...] = ()
    if action_lines:
        action_types = tuple(action_lines[0].split(SEP))
    return ParsedContext(
        prev_state=prev_state,
        user_utterance=utterance,
        db=db,
        db_count=db_count,
        action_types=action_types,
        warnings=tuple(warnings),
    )


# ---------------------------------------------------------------------------
# Gold contexts and training records


def gold_db_for_turn(dialogue: Dialogue, turn_index: int, service: str) -> DbResults | None:
    """Database results visible in the context at a user turn.

    Results of the most recent query for the service, counting a query the
    system runs while answering this very turn.  Once a query has run its
    results stay in context for the rest of the dialogue, matching how a
    live driver caches them.
    """
    latest: DbResults | None = None
    for i in range(1, min(turn_index + 2, len(dialogue.turns))):
        turn = dialogue.turns[i]
        if turn.speaker is not Speaker.SYSTEM:
            continue
        frame = turn.frame_for(service)
        if frame is not None and frame.service_results is not None:
            method = frame.service_call[0] if frame.service_call else ""
            latest = DbResults(query_intent=method, records=frame.service_results)
    return latest


def training_records_for_dialogue(
    dialogue: Dialogue,
    schemas: Sequence[DomainSchema],
    action_types: Sequence[str],
    *,
    db_record_cap: int = DB_RECORD_CAP,
    categorical_value_cap: int = CATEGORICAL_VALUE_CAP,
) -> list[TrainingRecord]:
    """One training record per (user turn, service) frame, gold throughout.

    Contexts carry the gold previous state; targets are the gold state, both
    action frames, and the following system utterance.  The last user turn
    of a dialogue that ends on the user side gets an empty system half.
    """
    by_name = {s.service_name: s for s in schemas}
    relevant = [by_name[svc] for svc in sorted(set(dialogue.services)) if svc in by_name]
    previous: dict[str, DialogState] = {}
    records: list[TrainingRecord] = []
    for index, turn in enumerate(dialogue.turns):
        if turn.speaker is not Speaker.USER:
            continue
        system_turn = None
        if index + 1 < len(dialogue.turns):
            candidate = dialogue.turns[index + 1]
            if candidate.speaker is Speaker.SYSTEM:
                system_turn = candidate
        for frame in turn.frames:
            if frame.state is None:
                continue
            service = frame.service
            state = gold_state_at(dialogue, index, service)
            user_actions = ActionFrame(actor=Speaker.USER, acts=frame.acts)
            system_acts: tuple[Act, ...] = ()
            response = ""
            if system_turn is not None:
                response = system_turn.utterance
                system_frame = system_turn.frame_for(service)
                if system_frame is not None:
                    system_acts = system_frame.acts
            context = build_context(
                previous.get(service, DialogState()),
                turn.utterance,
                relevant,
                gold_db_for_turn(dialogue, index, service),
                action_types,
                db_record_cap=db_record_cap,
                categorical_value_cap=categorical_value_cap,
            )
            target = build_target(
                state,
                user_actions,
                ActionFrame(actor=Speaker.SYSTEM, acts=system_acts),
                response,
            )
            records.append(build_training_record(context, target))
            previous[service] = state
    return records


# ---------------------------------------------------------------------------
# Training record files (newline-delimited JSON)


def training_record_to_json(record: TrainingRecord) -> dict:
    return {
        "full_text": record.full_text,
        "target_start": record.target_span[0],
        "target_end": record.target_span[1],
    }


def write_training_records(records: Iterable[TrainingRecord], path) -> int:
    """Write records as NDJSON; returns the number written."""
    import json

    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(training_record_to_json(record), ensure_ascii=False) + "\n")
            n += 1
    return n
