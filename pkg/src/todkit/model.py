"""Typed data model for schema-guided task-oriented dialog.

Value types for domain schemas, dialogues, dialog states, action frames and
database results, plus the comparison semantics (value normalization, state
diff/apply, schema validation) that every other layer builds on.  All types
are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .errors import NoSuchFrame

NONE_INTENT = "NONE"
DONTCARE = "dontcare"

_WS_RUN = re.compile(r"\s+")


def normalize_value(text: str) -> str:
    """Canonical comparison form: NFC, whitespace runs collapsed, casefolded."""
    return _WS_RUN.sub(" ", unicodedata.normalize("NFC", text)).strip().casefold()


def values_match(predicted: Iterable[str], gold: Iterable[str]) -> bool:
    """Any-of matching: some predicted value normalizes equal to some gold value.

    Gold annotations list every acceptable paraphrase of a value, so a single
    hit counts.  Two empty collections also count as a match.
    """
    pred = {normalize_value(v) for v in predicted}
    gold_set = {normalize_value(v) for v in gold}
    if not pred and not gold_set:
        return True
    return not pred.isdisjoint(gold_set)


class Speaker(str, Enum):
    USER = "USER"
    SYSTEM = "SYSTEM"


# ---------------------------------------------------------------------------
# Domain schemas


@dataclass(frozen=True, slots=True)
class SlotDef:
    name: str
    description: str = ""
    is_categorical: bool = False
    possible_values: tuple[str, ...] = ()


@dataclass(frozen=True, slots=True)
class IntentDef:
    name: str
    description: str = ""
    required_slots: tuple[str, ...] = ()
    # Slot name -> default value for slots the user may but need not constrain.
    optional_slots: Mapping[str, str] = field(default_factory=dict)
    result_slots: tuple[str, ...] = ()
    is_transactional: bool = False

    def constrainable_slots(self) -> tuple[str, ...]:
        return self.required_slots + tuple(self.optional_slots)


@dataclass(frozen=True, slots=True)
class DomainSchema:
    service_name: str
    description: str = ""
    slots: tuple[SlotDef, ...] = ()
    intents: tuple[IntentDef, ...] = ()

    def slot_by_name(self, name: str) -> SlotDef | None:
        for slot in self.slots:
            if slot.name == name:
                return slot
        return None

    def intent_by_name(self, name: str) -> IntentDef | None:
        for intent in self.intents:
            if intent.name == name:
                return intent
        return None


# ---------------------------------------------------------------------------
# Dialogues


@dataclass(frozen=True, slots=True)
class Act:
    """One dialog act: type plus optional slot and values, tied to a domain."""

    domain: str
    act_type: str
    slot: str | None = None
    values: tuple[str, ...] = ()


@dataclass(frozen=True, slots=True)
class StateAnnotation:
    """Per-frame gold state exactly as annotated, file order preserved."""

    active_intent: str = NONE_INTENT
    requested_slots: tuple[str, ...] = ()
    slot_values: tuple[tuple[str, tuple[str, ...]], ...] = ()


@dataclass(frozen=True, slots=True)
class Frame:
    service: str
    state: StateAnnotation | None = None
    acts: tuple[Act, ...] = ()
    # (method, ordered parameters) of the backend call issued on this turn.
    service_call: tuple[str, tuple[tuple[str, str], ...]] | None = None
    service_results: tuple[Mapping[str, str], ...] | None = None


@dataclass(frozen=True, slots=True)
class Turn:
    speaker: Speaker
    utterance: str
    frames: tuple[Frame, ...] = ()

    def frame_for(self, service: str) -> Frame | None:
        for frame in self.frames:
            if frame.service == service:
                return frame
        return None


@dataclass(frozen=True, slots=True)
class Dialogue:
    dialogue_id: str
    services: tuple[str, ...]
    turns: tuple[Turn, ...]


# ---------------------------------------------------------------------------
# Dialog state

# (domain, slot, acceptable values)
SlotTuple = tuple[str, str, tuple[str, ...]]


@dataclass(frozen=True, slots=True)
class DialogState:
    """Cumulative dialog state in canonical form.

    Slot tuples are merged per (domain, slot), values are sorted and
    de-duplicated, tuples are sorted by (domain, slot), and tuples whose
    value list would be empty are dropped.  Equality on two canonical states
    is therefore order-insensitive by construction.
    """

    active_intent: str = NONE_INTENT
    requested_slots: frozenset[tuple[str, str]] = frozenset()
    slot_values: tuple[SlotTuple, ...] = ()

    def __post_init__(self) -> None:
        merged: dict[tuple[str, str], set[str]] = {}
        for domain, slot, values in self.slot_values:
            merged.setdefault((domain, slot), set()).update(values)
        canonical = tuple(
            (domain, slot, tuple(sorted(values)))
            for (domain, slot), values in sorted(merged.items())
            if values
        )
        object.__setattr__(self, "slot_values", canonical)
        if not isinstance(self.requested_slots, frozenset):
            object.__setattr__(self, "requested_slots", frozenset(self.requested_slots))

    @property
    def value_map(self) -> dict[tuple[str, str], tuple[str, ...]]:
        return {(d, s): vs for d, s, vs in self.slot_values}

    def domains(self) -> set[str]:
        found = {d for d, _s, _vs in self.slot_values}
        found.update(d for d, _s in self.requested_slots)
        return found

    def filled_slots(self, domain: str) -> set[str]:
        return {s for d, s, _vs in self.slot_values if d == domain}

    def updated(
        self,
        *,
        intent: str | None = None,
        set_values: Mapping[tuple[str, str], Sequence[str]] | None = None,
        requested: Iterable[tuple[str, str]] | None = None,
    ) -> "DialogState":
        """Copy with the intent replaced, slot assignments overwritten, and
        the requested set replaced (requested does not accumulate)."""
        values = self.value_map
        if set_values:
            for key, vals in set_values.items():
                values[key] = tuple(vals)
        return DialogState(
            active_intent=self.active_intent if intent is None else intent,
            requested_slots=frozenset(requested) if requested is not None else self.requested_slots,
            slot_values=tuple((d, s, tuple(vs)) for (d, s), vs in values.items()),
        )


@dataclass(frozen=True, slots=True)
class StateDelta:
    """Difference between two states; apply_delta(prev, diff) restores curr."""

    intent_change: tuple[str, str] | None = None
    added: tuple[SlotTuple, ...] = ()
    changed: tuple[SlotTuple, ...] = ()
    removed: tuple[tuple[str, str], ...] = ()
    requested_added: frozenset[tuple[str, str]] = frozenset()
    requested_removed: frozenset[tuple[str, str]] = frozenset()

    @property
    def empty(self) -> bool:
        return (
            self.intent_change is None
            and not self.added
            and not self.changed
            and not self.removed
            and not self.requested_added
            and not self.requested_removed
        )


def state_diff(prev: DialogState, curr: DialogState) -> StateDelta:
    prev_map, curr_map = prev.value_map, curr.value_map
    added = tuple((d, s, vs) for (d, s), vs in sorted(curr_map.items()) if (d, s) not in prev_map)
    changed = tuple(
        (d, s, vs)
        for (d, s), vs in sorted(curr_map.items())
        if (d, s) in prev_map and prev_map[(d, s)] != vs
    )
    removed = tuple(sorted(key for key in prev_map if key not in curr_map))
    return StateDelta(
        intent_change=None
        if prev.active_intent == curr.active_intent
        else (prev.active_intent, curr.active_intent),
        added=added,
        changed=changed,
        removed=removed,
        requested_added=curr.requested_slots - prev.requested_slots,
        requested_removed=prev.requested_slots - curr.requested_slots,
    )


def apply_delta(prev: DialogState, delta: StateDelta) -> DialogState:
    values = prev.value_map
    for d, s in delta.removed:
        values.pop((d, s), None)
    for d, s, vs in delta.added + delta.changed:
        values[(d, s)] = vs
    intent = prev.active_intent if delta.intent_change is None else delta.intent_change[1]
    requested = (prev.requested_slots - delta.requested_removed) | delta.requested_added
    return DialogState(
        active_intent=intent,
        requested_slots=requested,
        slot_values=tuple((d, s, vs) for (d, s), vs in values.items()),
    )


@dataclass(frozen=True, slots=True)
class ActionFrame:
    """The dialog acts one actor expressed on a single turn, in utterance order."""

    actor: Speaker
    acts: tuple[Act, ...] = ()

    def act_types(self) -> tuple[str, ...]:
        return tuple(act.act_type for act in self.acts)

    def has(self, act_type: str) -> bool:
        return any(act.act_type == act_type for act in self.acts)


@dataclass(frozen=True, slots=True)
class DbResults:
    """Records returned for one query, in backend order."""

    query_intent: str
    records: tuple[Mapping[str, str], ...] = ()


# ---------------------------------------------------------------------------
# Gold lookups and validation


def gold_state_at(dialogue: Dialogue, turn_index: int, service: str) -> DialogState:
    """Gold cumulative state for one service at a user turn.

    Raises NoSuchFrame when the turn is out of range, is not a user turn, or
    carries no annotated frame for the service.
    """
    if not 0 <= turn_index < len(dialogue.turns):
        raise NoSuchFrame(f"{dialogue.dialogue_id}: turn {turn_index} out of range")
    turn = dialogue.turns[turn_index]
    if turn.speaker is not Speaker.USER:
        raise NoSuchFrame(f"{dialogue.dialogue_id}: turn {turn_index} is not a user turn")
    frame = turn.frame_for(service)
    if frame is None or frame.state is None:
        raise NoSuchFrame(
            f"{dialogue.dialogue_id}: turn {turn_index} has no state for {service!r}"
        )
    anno = frame.state
    return DialogState(
        active_intent=anno.active_intent,
        requested_slots=frozenset((service, s) for s in anno.requested_slots),
        slot_values=tuple((service, slot, values) for slot, values in anno.slot_values),
    )


def validate_state(state: DialogState, schemas: Sequence[DomainSchema]) -> list[str]:
    """Names in the state that do not resolve against the schemas.

    Returns human-readable violation strings; empty means fully resolvable.
    Categorical values are compared after normalization, with "dontcare"
    always admitted.
    """
    by_name = {schema.service_name: schema for schema in schemas}
    problems: list[str] = []
    for domain, slot, values in state.slot_values:
        schema = by_name.get(domain)
        if schema is None:
            problems.append(f"unknown domain {domain!r}")
            continue
        slot_def = schema.slot_by_name(slot)
        if slot_def is None:
            problems.append(f"{domain}: unknown slot {slot!r}")
            continue
        if slot_def.is_categorical:
            allowed = {normalize_value(v) for v in slot_def.possible_values}
            allowed.add(DONTCARE)
            for value in values:
                if normalize_value(value) not in allowed:
                    problems.append(f"{domain}.{slot}: {value!r} outside categorical range")
    for domain, slot in sorted(state.requested_slots):
        schema = by_name.get(domain)
        if schema is None:
            problems.append(f"unknown domain {domain!r} in requested slots")
        elif schema.slot_by_name(slot) is None:
            problems.append(f"{domain}: unknown requested slot {slot!r}")
    return problems


def validate_db_results(
    db: DbResults, domain: str, schemas: Sequence[DomainSchema]
) -> list[str]:
    """Record keys that are not result slots of the queried intent."""
    by_name = {schema.service_name: schema for schema in schemas}
    schema = by_name.get(domain)
    if schema is None:
        return [f"unknown domain {domain!r}"]
    intent = schema.intent_by_name(db.query_intent)
    if intent is None:
        return [f"{domain}: unknown intent {db.query_intent!r}"]
    allowed = set(intent.result_slots)
    problems = []
    for i, record in enumerate(db.records):
        for key in record:
            if key not in allowed:
                problems.append(f"{domain}: record {i} key {key!r} is not a result slot")
    return problems
