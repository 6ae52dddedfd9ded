"""Reading and writing schema-guided dialog corpora.

The on-disk format is the usual pair of JSON documents: a schema file holding
an array of service definitions, and dialogue files holding arrays of
dialogues with alternating USER/SYSTEM turns and per-service frames.  Unknown
keys are ignored everywhere so files from newer pipelines still load.
Parsing is strict about structure (wrong shapes raise) but annotation-level
problems such as unresolvable slot names are reported by the validators in
:mod:`todkit.model`, not treated as fatal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import (
    AnnotationViolation,
    MalformedDocument,
    SchemaViolation,
    UnclassifiedDomain,
    VariantMismatch,
)
from .model import (
    Act,
    Dialogue,
    DomainSchema,
    Frame,
    IntentDef,
    SlotDef,
    Speaker,
    StateAnnotation,
    Turn,
)


def _load_json(data: bytes | str, source: str) -> Any:
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedDocument(f"{source}: not valid UTF-8 ({exc})") from None
    try:
        return json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def _require(obj: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in obj:
        raise MalformedDocument(f"{where}: missing required key {key!r}")
    return obj[key]


def _str_list(value: Any, where: str) -> tuple[str, ...]:
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise MalformedDocument(f"{where}: expected a list of strings")
    return tuple(value)


# ---------------------------------------------------------------------------
# Schemas


def parse_schema_file(data: bytes | str, source: str = "<schema>") -> list[DomainSchema]:
    """Parse a schema document into domain schemas, enforcing invariants.

    Slot and intent names must be unique per service, categorical slots must
    list their values, and intents may only reference declared slots with
    disjoint required/optional sets.  Violations raise SchemaViolation naming
    the offending service and slot or intent.
    """
    doc = _load_json(data, source)
    if not isinstance(doc, list):
        raise MalformedDocument(f"{source}: top level must be an array of services")
    schemas: list[DomainSchema] = []
    seen_services: set[str] = set()
    for i, raw in enumerate(doc):
        where = f"{source}[{i}]"
        if not isinstance(raw, dict):
            raise MalformedDocument(f"{where}: service entry must be an object")
        name = _require(raw, "service_name", where)
        if not isinstance(name, str) or not name.strip():
            raise SchemaViolation(f"{where}: service_name must be a non-empty string")
        name = name.strip()
        if name in seen_services:
            raise SchemaViolation(f"{where}: duplicate service {name!r}")
        seen_services.add(name)

        slots: list[SlotDef] = []
        slot_names: set[str] = set()
        for j, raw_slot in enumerate(raw.get("slots", [])):
            s_where = f"{where}.slots[{j}]"
            slot_name = _require(raw_slot, "name", s_where)
            if not slot_name:
                raise SchemaViolation(f"{s_where}: empty slot name")
            if slot_name in slot_names:
                raise SchemaViolation(f"{name}: duplicate slot {slot_name!r}")
            slot_names.add(slot_name)
            is_cat = bool(raw_slot.get("is_categorical", False))
            possible = _str_list(raw_slot.get("possible_values", []), s_where)
            if is_cat and not possible:
                raise SchemaViolation(
                    f"{name}: categorical slot {slot_name!r} lists no possible values"
                )
            slots.append(
                SlotDef(
                    name=slot_name,
                    description=str(raw_slot.get("description", "")),
                    is_categorical=is_cat,
                    possible_values=possible,
                )
            )

        intents: list[IntentDef] = []
        intent_names: set[str] = set()
        for j, raw_intent in enumerate(raw.get("intents", [])):
            i_where = f"{where}.intents[{j}]"
            intent_name = _require(raw_intent, "name", i_where)
            if not intent_name:
                raise SchemaViolation(f"{i_where}: empty intent name")
            if intent_name in intent_names:
                raise SchemaViolation(f"{name}: duplicate intent {intent_name!r}")
            intent_names.add(intent_name)
            required = _str_list(raw_intent.get("required_slots", []), i_where)
            optional_raw = raw_intent.get("optional_slots", {})
            if not isinstance(optional_raw, dict):
                raise MalformedDocument(f"{i_where}: optional_slots must be an object")
            optional = {str(k): str(v) for k, v in optional_raw.items()}
            result = _str_list(raw_intent.get("result_slots", []), i_where)
            for slot_name in (*required, *optional, *result):
                if slot_name not in slot_names:
                    raise SchemaViolation(
                        f"{name}: intent {intent_name!r} references unknown slot {slot_name!r}"
                    )
            overlap = set(required) & set(optional)
            if overlap:
                raise SchemaViolation(
                    f"{name}: intent {intent_name!r} lists {sorted(overlap)} as both "
                    "required and optional"
                )
            intents.append(
                IntentDef(
                    name=intent_name,
                    description=str(raw_intent.get("description", "")),
                    required_slots=required,
                    optional_slots=optional,
                    result_slots=result,
                    is_transactional=bool(raw_intent.get("is_transactional", False)),
                )
            )

        schemas.append(
            DomainSchema(
                service_name=name,
                description=str(raw.get("description", "")),
                slots=tuple(slots),
                intents=tuple(intents),
            )
        )
    return schemas


def schemas_to_json(schemas: Sequence[DomainSchema]) -> list[dict[str, Any]]:
    """Inverse of parse_schema_file: parse(schemas_to_json(x)) == x."""
    out = []
    for schema in schemas:
        out.append(
            {
                "service_name": schema.service_name,
                "description": schema.description,
                "slots": [
                    {
                        "name": s.name,
                        "description": s.description,
                        "is_categorical": s.is_categorical,
                        "possible_values": list(s.possible_values),
                    }
                    for s in schema.slots
                ],
                "intents": [
                    {
                        "name": i.name,
                        "description": i.description,
                        "is_transactional": i.is_transactional,
                        "required_slots": list(i.required_slots),
                        "optional_slots": dict(i.optional_slots),
                        "result_slots": list(i.result_slots),
                    }
                    for i in schema.intents
                ],
            }
        )
    return out


# ---------------------------------------------------------------------------
# Dialogues


def _parse_acts(raw_actions: Any, service: str, where: str) -> tuple[Act, ...]:
    acts = []
    for k, raw in enumerate(raw_actions or []):
        if not isinstance(raw, dict):
            raise MalformedDocument(f"{where}.actions[{k}]: must be an object")
        act_type = _require(raw, "act", f"{where}.actions[{k}]")
        slot = raw.get("slot") or None
        values = _str_list(raw.get("values", []), f"{where}.actions[{k}]")
        acts.append(Act(domain=service, act_type=str(act_type), slot=slot, values=values))
    return tuple(acts)


def _parse_frame(raw: Mapping[str, Any], speaker: Speaker, where: str) -> Frame:
    service = _require(raw, "service", where)
    if not isinstance(service, str) or not service:
        raise AnnotationViolation(f"{where}: frame has no service name")

    state: StateAnnotation | None = None
    if speaker is Speaker.USER:
        raw_state = raw.get("state")
        if not isinstance(raw_state, dict):
            raise AnnotationViolation(f"{where}: user frame for {service!r} carries no state")
        raw_values = raw_state.get("slot_values", {})
        if not isinstance(raw_values, dict):
            raise MalformedDocument(f"{where}: slot_values must be an object")
        slot_values = tuple(
            (slot, _str_list(vals, f"{where}.slot_values[{slot!r}]"))
            for slot, vals in raw_values.items()
        )
        state = StateAnnotation(
            active_intent=str(raw_state.get("active_intent", "NONE")) or "NONE",
            requested_slots=_str_list(raw_state.get("requested_slots", []), where),
            slot_values=slot_values,
        )

    service_call = None
    raw_call = raw.get("service_call")
    if isinstance(raw_call, dict):
        params = raw_call.get("parameters", {})
        if not isinstance(params, dict):
            raise MalformedDocument(f"{where}: service_call parameters must be an object")
        service_call = (
            str(raw_call.get("method", "")),
            tuple((str(k), str(v)) for k, v in params.items()),
        )

    service_results = None
    raw_results = raw.get("service_results")
    if isinstance(raw_results, list):
        service_results = tuple(
            {str(k): str(v) for k, v in record.items()} for record in raw_results
        )

    return Frame(
        service=service,
        state=state,
        acts=_parse_acts(raw.get("actions"), service, where),
        service_call=service_call,
        service_results=service_results,
    )


def parse_dialogue_file(data: bytes | str, source: str = "<dialogues>") -> list[Dialogue]:
    """Parse a dialogue document.

    Enforces the turn discipline (USER first, strict alternation), that every
    frame names a service declared by the dialogue, and that user frames
    carry a state annotation.
    """
    doc = _load_json(data, source)
    if not isinstance(doc, list):
        raise MalformedDocument(f"{source}: top level must be an array of dialogues")
    dialogues = []
    for i, raw in enumerate(doc):
        where = f"{source}[{i}]"
        if not isinstance(raw, dict):
            raise MalformedDocument(f"{where}: dialogue entry must be an object")
        dialogue_id = str(_require(raw, "dialogue_id", where))
        services = _str_list(_require(raw, "services", where), where)
        declared = set(services)
        turns = []
        for t, raw_turn in enumerate(_require(raw, "turns", where)):
            t_where = f"{dialogue_id}[{t}]"
            speaker_raw = _require(raw_turn, "speaker", t_where)
            try:
                speaker = Speaker(speaker_raw)
            except ValueError:
                raise AnnotationViolation(f"{t_where}: unknown speaker {speaker_raw!r}") from None
            expected = Speaker.USER if t % 2 == 0 else Speaker.SYSTEM
            if speaker is not expected:
                raise AnnotationViolation(
                    f"{t_where}: expected {expected.value} turn, found {speaker.value}"
                )
            frames = tuple(
                _parse_frame(raw_frame, speaker, t_where)
                for raw_frame in raw_turn.get("frames", [])
            )
            for frame in frames:
                if frame.service not in declared:
                    raise AnnotationViolation(
                        f"{t_where}: frame service {frame.service!r} not declared by dialogue"
                    )
            turns.append(
                Turn(
                    speaker=speaker,
                    utterance=str(raw_turn.get("utterance", "")),
                    frames=frames,
                )
            )
        dialogues.append(Dialogue(dialogue_id=dialogue_id, services=services, turns=tuple(turns)))
    return dialogues


def dialogues_to_json(dialogues: Sequence[Dialogue]) -> list[dict[str, Any]]:
    """Inverse of parse_dialogue_file, field order matching the usual layout."""
    out = []
    for dlg in dialogues:
        turns = []
        for turn in dlg.turns:
            frames = []
            for frame in turn.frames:
                raw: dict[str, Any] = {"service": frame.service}
                if frame.state is not None:
                    raw["state"] = {
                        "active_intent": frame.state.active_intent,
                        "requested_slots": list(frame.state.requested_slots),
                        "slot_values": {s: list(vs) for s, vs in frame.state.slot_values},
                    }
                raw["actions"] = [
                    {"act": a.act_type, "slot": a.slot or "", "values": list(a.values)}
                    for a in frame.acts
                ]
                if frame.service_call is not None:
                    method, params = frame.service_call
                    raw["service_call"] = {"method": method, "parameters": dict(params)}
                if frame.service_results is not None:
                    raw["service_results"] = [dict(r) for r in frame.service_results]
                frames.append(raw)
            turns.append(
                {"speaker": turn.speaker.value, "utterance": turn.utterance, "frames": frames}
            )
        out.append(
            {"dialogue_id": dlg.dialogue_id, "services": list(dlg.services), "turns": turns}
        )
    return out


# ---------------------------------------------------------------------------
# Filesystem helpers


def load_schemas(path: str | Path) -> list[DomainSchema]:
    """Load a schema file, or the schema.json inside a directory."""
    p = Path(path)
    if p.is_dir():
        p = p / "schema.json"
    return parse_schema_file(p.read_bytes(), source=str(p))


def load_dialogues(path: str | Path) -> list[Dialogue]:
    """Load one dialogue file, or every dialogues_*.json / *.json in a directory.

    Directory loads skip schema.json and sort files by name so corpus order
    is stable across filesystems.
    """
    p = Path(path)
    if p.is_file():
        return parse_dialogue_file(p.read_bytes(), source=str(p))
    candidates = sorted(p.glob("dialogues_*.json")) or sorted(
        f for f in p.glob("*.json") if f.name != "schema.json"
    )
    if not candidates:
        raise MalformedDocument(f"{p}: no dialogue files found")
    dialogues: list[Dialogue] = []
    for f in candidates:
        dialogues.extend(parse_dialogue_file(f.read_bytes(), source=str(f)))
    return dialogues


# ---------------------------------------------------------------------------
# Seen/unseen splits


@dataclass(frozen=True, slots=True)
class DomainSplit:
    """Disjoint seen/unseen service sets used to partition evaluation."""

    seen: frozenset[str]
    unseen: frozenset[str]

    def __post_init__(self) -> None:
        overlap = self.seen & self.unseen
        if overlap:
            raise UnclassifiedDomain(f"services in both splits: {sorted(overlap)}")

    def classify(self, dialogue: Dialogue) -> str:
        """"seen" when every service is seen, else "unseen"; unknown services raise."""
        for service in dialogue.services:
            if service not in self.seen and service not in self.unseen:
                raise UnclassifiedDomain(
                    f"{dialogue.dialogue_id}: service {service!r} is in neither split"
                )
        if all(service in self.seen for service in dialogue.services):
            return "seen"
        return "unseen"


def load_split(data: bytes | str, source: str = "<split>") -> DomainSplit:
    doc = _load_json(data, source)
    if not isinstance(doc, dict):
        raise MalformedDocument(f"{source}: split file must be an object")
    return DomainSplit(
        seen=frozenset(_str_list(doc.get("seen", []), source)),
        unseen=frozenset(_str_list(doc.get("unseen", []), source)),
    )


@dataclass(frozen=True, slots=True)
class CorpusPartition:
    everything: tuple[Dialogue, ...]
    seen_only: tuple[Dialogue, ...]
    with_unseen: tuple[Dialogue, ...]


def partition_corpus(dialogues: Iterable[Dialogue], split: DomainSplit) -> CorpusPartition:
    """Split a corpus into seen-only dialogues and those touching unseen domains."""
    everything = tuple(dialogues)
    seen_only = tuple(d for d in everything if split.classify(d) == "seen")
    with_unseen = tuple(d for d in everything if split.classify(d) == "unseen")
    return CorpusPartition(everything=everything, seen_only=seen_only, with_unseen=with_unseen)


def load_schema_variants(
    base: Sequence[DomainSchema],
    variants: Mapping[int, Sequence[DomainSchema]],
) -> dict[int, tuple[DomainSchema, ...]]:
    """Check variant schema sets cover exactly the base services, keyed by level."""
    base_names = {s.service_name for s in base}
    out: dict[int, tuple[DomainSchema, ...]] = {}
    for level, schemas in sorted(variants.items()):
        names = {s.service_name for s in schemas}
        if names != base_names:
            missing = sorted(base_names - names)
            extra = sorted(names - base_names)
            raise VariantMismatch(
                f"variant {level}: services do not match base"
                + (f"; missing {missing}" if missing else "")
                + (f"; unexpected {extra}" if extra else "")
            )
        out[level] = tuple(schemas)
    return out
