"""Schema surface-variant sweeps.

A variant set renames slots and intents and rewrites their descriptions
while keeping structure (order, counts, categorical values, service names)
intact, the way published benchmark variants stress linguistic robustness.
Correspondence between base and variant vocabulary is positional, which is
also how dialogues annotated against the base schemas are remapped to each
variant before evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Mapping, Sequence

from .backends import INTENT_SLOT, GenerationBackend
from .corpus import load_schema_variants
from .errors import VariantMismatch
from .evaluation import EvalRun, evaluate_dialogues
from .metrics import EvalReport, VariantSummary, sgdx_aggregate
from .model import (
    Act,
    Dialogue,
    DomainSchema,
    Frame,
    IntentDef,
    SlotDef,
    StateAnnotation,
    Turn,
)
from .serialize import extract_annotation_acts, render_user_annotation, _ANNOTATION


def make_surface_variant(
    schemas: Sequence[DomainSchema], level: int
) -> tuple[DomainSchema, ...]:
    """Deterministic synthetic variant: every slot and intent name gets a
    level suffix and descriptions are restyled.  Useful where a corpus ships
    no hand-written variants."""
    out = []
    for schema in schemas:
        slots = tuple(
            SlotDef(
                name=f"{slot.name}_v{level}",
                description=f"Variant {level}: {slot.description}",
                is_categorical=slot.is_categorical,
                possible_values=slot.possible_values,
            )
            for slot in schema.slots
        )
        intents = tuple(
            IntentDef(
                name=f"{intent.name}_v{level}",
                description=f"Variant {level}: {intent.description}",
                required_slots=tuple(f"{s}_v{level}" for s in intent.required_slots),
                optional_slots={f"{s}_v{level}": v for s, v in intent.optional_slots.items()},
                result_slots=tuple(f"{s}_v{level}" for s in intent.result_slots),
                is_transactional=intent.is_transactional,
            )
            for intent in schema.intents
        )
        out.append(
            DomainSchema(
                service_name=schema.service_name,
                description=f"Variant {level}: {schema.description}",
                slots=slots,
                intents=intents,
            )
        )
    return tuple(out)


@dataclass(frozen=True, slots=True)
class RenameMap:
    slot_map: Mapping[str, str]
    intent_map: Mapping[str, str]


def build_rename_maps(
    base: Sequence[DomainSchema], variant: Sequence[DomainSchema]
) -> dict[str, RenameMap]:
    """Positional base-to-variant vocabulary maps per service."""
    variant_by_name = {s.service_name: s for s in variant}
    maps: dict[str, RenameMap] = {}
    for schema in base:
        counterpart = variant_by_name.get(schema.service_name)
        if counterpart is None:
            raise VariantMismatch(f"variant lacks service {schema.service_name!r}")
        if len(counterpart.slots) != len(schema.slots):
            raise VariantMismatch(
                f"{schema.service_name}: slot count differs "
                f"({len(schema.slots)} vs {len(counterpart.slots)})"
            )
        if len(counterpart.intents) != len(schema.intents):
            raise VariantMismatch(
                f"{schema.service_name}: intent count differs "
                f"({len(schema.intents)} vs {len(counterpart.intents)})"
            )
        maps[schema.service_name] = RenameMap(
            slot_map={
                b.name: v.name for b, v in zip(schema.slots, counterpart.slots)
            },
            intent_map={
                b.name: v.name for b, v in zip(schema.intents, counterpart.intents)
            },
        )
    return maps


def _remap_act(act: Act, rename: RenameMap) -> Act:
    slot = act.slot
    values = act.values
    if act.slot == INTENT_SLOT or act.act_type == "OFFER_INTENT":
        # The payload is an intent name, not a slot value.
        values = tuple(rename.intent_map.get(v, v) for v in act.values)
    elif act.slot:
        slot = rename.slot_map.get(act.slot, act.slot)
    return replace(act, slot=slot, values=values)


def _remap_utterance(utterance: str, rename: RenameMap) -> str:
    def rewrite(match) -> str:
        acts = extract_annotation_acts(match.group(0))
        return render_user_annotation([_remap_act(a, rename) for a in acts])

    return _ANNOTATION.sub(rewrite, utterance)


def _remap_frame(frame: Frame, maps: Mapping[str, RenameMap]) -> Frame:
    rename = maps.get(frame.service)
    if rename is None:
        raise VariantMismatch(f"no rename map for service {frame.service!r}")
    state = frame.state
    if state is not None:
        state = StateAnnotation(
            active_intent=rename.intent_map.get(state.active_intent, state.active_intent),
            requested_slots=tuple(
                rename.slot_map.get(s, s) for s in state.requested_slots
            ),
            slot_values=tuple(
                (rename.slot_map.get(slot, slot), values)
                for slot, values in state.slot_values
            ),
        )
    service_call = frame.service_call
    if service_call is not None:
        method, params = service_call
        service_call = (
            rename.intent_map.get(method, method),
            tuple((rename.slot_map.get(k, k), v) for k, v in params),
        )
    service_results = frame.service_results
    if service_results is not None:
        service_results = tuple(
            {rename.slot_map.get(k, k): v for k, v in record.items()}
            for record in service_results
        )
    return Frame(
        service=frame.service,
        state=state,
        acts=tuple(_remap_act(a, rename) for a in frame.acts),
        service_call=service_call,
        service_results=service_results,
    )


def remap_dialogue(dialogue: Dialogue, maps: Mapping[str, RenameMap]) -> Dialogue:
    """Rewrite a dialogue's annotations (and embedded act blocks in
    utterances) into a variant's vocabulary.  Natural utterance text is left
    alone; only structured mentions move."""
    turns = []
    for turn in dialogue.turns:
        rename = maps.get(turn.frames[0].service) if turn.frames else None
        utterance = _remap_utterance(turn.utterance, rename) if rename else turn.utterance
        turns.append(
            Turn(
                speaker=turn.speaker,
                utterance=utterance,
                frames=tuple(_remap_frame(f, maps) for f in turn.frames),
            )
        )
    return Dialogue(
        dialogue_id=dialogue.dialogue_id, services=dialogue.services, turns=tuple(turns)
    )


# ---------------------------------------------------------------------------
# Sweeps

BackendFactory = Callable[[Sequence[DomainSchema], Sequence[Dialogue]], GenerationBackend]


@dataclass(frozen=True, slots=True)
class SweepResult:
    reports: Mapping[int, EvalReport]
    runs: Mapping[int, EvalRun]
    summary: VariantSummary


def run_variant_sweep(
    dialogues: Sequence[Dialogue],
    base_schemas: Sequence[DomainSchema],
    variants: Mapping[int, Sequence[DomainSchema]],
    backend_factory: BackendFactory,
    *,
    prev_state_source: str = "predicted",
    workers: int = 1,
    db_record_cap: int = 3,
) -> SweepResult:
    """Evaluate one backend family across schema variants.

    For every level: check the variant matches the base services, remap the
    corpus, build a fresh backend from the factory (it receives the level's
    schemas and remapped dialogues), evaluate, and summarize per-metric mean
    and spread across levels.
    """
    checked = load_schema_variants(base_schemas, variants)
    reports: dict[int, EvalReport] = {}
    runs: dict[int, EvalRun] = {}
    for level, level_schemas in checked.items():
        maps = build_rename_maps(base_schemas, level_schemas)
        remapped = [remap_dialogue(d, maps) for d in dialogues]
        backend = backend_factory(level_schemas, remapped)
        try:
            run = evaluate_dialogues(
                remapped,
                level_schemas,
                backend,
                prev_state_source=prev_state_source,
                workers=workers,
                db_record_cap=db_record_cap,
            )
        finally:
            backend.close()
        runs[level] = run
        reports[level] = run.report()
    summary = sgdx_aggregate({lvl: rep.overall for lvl, rep in reports.items()})
    return SweepResult(reports=reports, runs=runs, summary=summary)
