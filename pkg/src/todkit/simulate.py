"""Goal-driven user simulation and synthetic corpus generation.

Three small transactional domains ship with the package so the whole loop
(goal sampling, database lookups, agenda-following user, rule agent on the
system side) runs out of the box and deterministically for a given seed.
The output is an ordinary corpus: parse it, serialize it, train on it, or
feed it back through evaluation.

Random draws are positional: categorical values are picked by index, goal
shape by per-slot coin flips in schema order.  Renaming schema surface
vocabulary therefore cannot shift the random stream, which is what the
robustness sweeps rely on.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Sequence

from .backends import (
    ACTION_TYPES,
    INTENT_SLOT,
    QUERY_ACT,
    BackendRequest,
    GenerationBackend,
    RuleAgentBackend,
    make_request_id,
)
from .backends.base import requery_request_id
from .corpus import parse_schema_file
from .errors import ConfigError, EmptySchema
from .model import (
    Act,
    ActionFrame,
    DbResults,
    DialogState,
    Dialogue,
    DomainSchema,
    DONTCARE,
    Frame,
    Speaker,
    StateAnnotation,
    Turn,
    normalize_value,
    values_match,
)
from .serialize import (
    TrainingRecord,
    build_context,
    parse_generation,
    render_user_annotation,
    training_records_for_dialogue,
)


def builtin_schemas() -> list[DomainSchema]:
    data = resources.files("todkit.data").joinpath("synthetic_schemas.json").read_bytes()
    return parse_schema_file(data, source="builtin synthetic domains")


# Value pools for non-categorical slots.  Headline pools are long enough to
# keep generated headline values unique within a domain.
_VALUE_POOLS: dict[tuple[str, str], tuple[str, ...]] = {
    ("RideShare_1", "driver_name"): (
        "Avery", "Blair", "Casey", "Devon", "Ellis", "Frankie",
        "Gray", "Harper", "Indigo", "Jules", "Kendall", "Lane",
    ),
    ("RideShare_1", "fare"): ("$9", "$12", "$16", "$21", "$27", "$34"),
    ("RideShare_1", "wait_minutes"): ("3", "5", "8", "12", "15"),
    ("StayFinder_1", "city"): ("Oslo", "Porto", "Kyoto", "Quito", "Lagos"),
    ("StayFinder_1", "hotel_name"): (
        "Harbor Light Inn", "Cedar Court", "The Juniper", "Atlas Rooms",
        "Velvet Pines", "Stonegate Suites", "Blue Finch Hotel",
        "Old Mill Lodge", "Aurora House", "Quay and Co", "Maple Crown", "Drift Hotel",
    ),
    ("StayFinder_1", "price_per_night"): ("$60", "$85", "$110", "$140", "$180"),
    ("StayFinder_1", "street_address"): (
        "12 Elm Street", "34 Canal Walk", "7 Hill Road",
        "89 Garden Lane", "150 Dock Avenue", "23 Birch Close",
    ),
    ("TableSpot_1", "restaurant_name"): (
        "Basil and Co", "Casa Verde", "The Copper Pot", "Lantern House",
        "Mole y Mar", "Injera Junction", "Noodle Barn", "Salt and Thyme",
        "Fig Tree", "Harbor Grill", "Pepper Lane", "Tuk Tuk Thai",
    ),
    ("TableSpot_1", "street_address"): (
        "5 Market Square", "41 Vine Street", "18 Ferry Road",
        "92 Long Lane", "63 Station Way", "8 Mill Court",
    ),
    ("TableSpot_1", "avg_price"): ("$15", "$25", "$40", "$60"),
}


def _pool(service: str, slot: str) -> tuple[str, ...]:
    return _VALUE_POOLS.get((service, slot)) or tuple(f"{slot} {i}" for i in range(1, 9))


# ---------------------------------------------------------------------------
# Synthetic database


@dataclass(frozen=True, slots=True)
class SyntheticDb:
    """Per-domain record tables; read-only after generation."""

    records: Mapping[str, tuple[Mapping[str, str], ...]]

    @classmethod
    def generate(
        cls,
        schemas: Sequence[DomainSchema],
        seed: int,
        records_per_domain: int = 10,
    ) -> "SyntheticDb":
        tables: dict[str, tuple[Mapping[str, str], ...]] = {}
        for schema in schemas:
            rng = random.Random(f"db:{seed}:{schema.service_name}")
            columns: list[str] = []
            headliners: set[str] = set()
            for intent in schema.intents:
                if intent.result_slots:
                    headliners.add(intent.result_slots[0])
                for slot in intent.result_slots:
                    if slot not in columns:
                        columns.append(slot)
            rows = []
            for i in range(records_per_domain):
                record: dict[str, str] = {}
                for slot_name in columns:
                    slot_def = schema.slot_by_name(slot_name)
                    if slot_name in headliners:
                        pool = _pool(schema.service_name, slot_name)
                        base = pool[i % len(pool)]
                        record[slot_name] = base if i < len(pool) else f"{base} {i}"
                    elif slot_def is not None and slot_def.is_categorical:
                        values = slot_def.possible_values
                        record[slot_name] = values[rng.randrange(len(values))]
                    else:
                        pool = _pool(schema.service_name, slot_name)
                        record[slot_name] = pool[rng.randrange(len(pool))]
                rows.append(record)
            tables[schema.service_name] = tuple(rows)
        return cls(records=tables)


def db_query(db: SyntheticDb, state: DialogState, domain: str | None = None) -> DbResults:
    """Filter a domain's records by the state's constraints.

    A record matches when every state slot present among its keys matches a
    constraint value; "dontcare" constraints and slots a record does not
    carry never filter.  The domain is inferred when the state names exactly
    one.
    """
    if domain is None:
        domains = state.domains()
        if len(domains) == 1:
            domain = next(iter(domains))
        elif len(db.records) == 1:
            domain = next(iter(db.records))
        else:
            raise ConfigError("db_query cannot infer the domain from this state")
    matched = []
    for record in db.records.get(domain, ()):
        keep = True
        for d, slot, values in state.slot_values:
            if d != domain or slot not in record:
                continue
            if all(normalize_value(v) == DONTCARE for v in values):
                continue
            if not values_match((record[slot],), values):
                keep = False
                break
        if keep:
            matched.append(record)
    return DbResults(query_intent=state.active_intent, records=tuple(matched))


# ---------------------------------------------------------------------------
# Goals


@dataclass(frozen=True, slots=True)
class UserGoal:
    domain: str
    intent: str
    is_transactional: bool
    # Ordered (slot, value): required slots in schema order, then any
    # sampled optional constraints.
    constraints: tuple[tuple[str, str], ...]
    requested: tuple[str, ...]
    patience: int


def _goal_value(schema: DomainSchema, slot_name: str, rng: random.Random) -> str:
    slot_def = schema.slot_by_name(slot_name)
    if slot_def is not None and slot_def.is_categorical:
        return slot_def.possible_values[rng.randrange(len(slot_def.possible_values))]
    pool = _pool(schema.service_name, slot_name)
    return pool[rng.randrange(len(pool))]


def sample_goal(schema: DomainSchema, seed: int) -> UserGoal:
    """Draw a goal: every required slot constrained, optional slots by coin
    flip, up to two result slots to ask about afterwards, and a patience
    budget of one to three rejected offers."""
    if not schema.intents:
        raise EmptySchema(f"{schema.service_name} declares no intents")
    rng = random.Random(f"goal:{seed}:{schema.service_name}")
    intent = schema.intents[rng.randrange(len(schema.intents))]
    constraints: list[tuple[str, str]] = []
    for slot_name in intent.required_slots:
        constraints.append((slot_name, _goal_value(schema, slot_name, rng)))
    for slot_name in intent.optional_slots:
        if rng.random() < 0.5:
            constraints.append((slot_name, _goal_value(schema, slot_name, rng)))
    headline = intent.result_slots[0] if intent.result_slots else None
    constrainable = set(intent.required_slots) | set(intent.optional_slots)
    candidates = [
        s for s in intent.result_slots if s != headline and s not in constrainable
    ]
    requested: tuple[str, ...] = ()
    if candidates:
        k = rng.randrange(min(2, len(candidates)) + 1)
        picked = sorted(rng.sample(range(len(candidates)), k))
        requested = tuple(candidates[j] for j in picked)
    return UserGoal(
        domain=schema.service_name,
        intent=intent.name,
        is_transactional=intent.is_transactional,
        constraints=tuple(constraints),
        requested=requested,
        patience=rng.randrange(1, 4),
    )


# ---------------------------------------------------------------------------
# User simulator


@dataclass(frozen=True, slots=True)
class SimUserTurn:
    utterance: str
    actions: ActionFrame
    state: DialogState
    ended: bool = False


def _humanize(intent_name: str) -> str:
    words = re.findall(r"[A-Z]?[a-z]+|[A-Z]+(?![a-z])|\d+", intent_name)
    return " ".join(w.lower() for w in words) or intent_name


class UserSimulator:
    """Agenda-following user for one dialogue.

    Reveals the intent plus one constraint up front, answers requests from
    the goal, rejects offers that conflict with any constraint until
    patience runs out, confirms transactions, asks its follow-up questions
    after success, and closes politely on success, failure, or exhaustion.
    The gold state it reports is exactly what it has revealed so far, with
    requested slots covering only the current turn.
    """

    def __init__(
        self,
        goal: UserGoal,
        db_rows: Sequence[Mapping[str, str]],
        headline_slot: str | None,
    ) -> None:
        self._goal = goal
        self._rows = tuple(db_rows)
        self._headline = headline_slot
        self._constraints = dict(goal.constraints)
        self._revealed: dict[str, str] = {}
        self._announced = False
        self._rejections = 0
        self._answered: set[str] = set()
        self._ended = False

    @property
    def goal(self) -> UserGoal:
        return self._goal

    @property
    def rejections(self) -> int:
        return self._rejections

    def _state(self, requested: Sequence[str]) -> DialogState:
        domain = self._goal.domain
        return DialogState(
            active_intent=self._goal.intent if self._announced else "NONE",
            requested_slots=frozenset((domain, s) for s in requested),
            slot_values=tuple(
                (domain, slot, (value,)) for slot, value in self._revealed.items()
            ),
        )

    def _record_for_offer(self, offer: Act) -> Mapping[str, str] | None:
        if not offer.values:
            return None
        for record in self._rows:
            slot = offer.slot or self._headline
            if slot and slot in record and values_match((record[slot],), offer.values):
                return record
        return None

    def _offer_acceptable(self, offer: Act) -> bool:
        record = self._record_for_offer(offer)
        if record is None:
            return False
        for slot, value in self._constraints.items():
            if slot in record and normalize_value(value) != DONTCARE:
                if not values_match((record[slot],), (value,)):
                    return False
        return True

    def _inform(self, slot: str, acts: list[Act], parts: list[str]) -> None:
        value = self._constraints.get(slot, DONTCARE)
        self._revealed[slot] = value
        acts.append(Act(self._goal.domain, "INFORM", slot, (value,)))
        if value == DONTCARE:
            parts.append(f"Any {slot} is fine.")
        else:
            parts.append(f"The {slot} should be {value}.")

    def _close(self, acts: list[Act], parts: list[str]) -> None:
        domain = self._goal.domain
        acts.append(Act(domain, "THANK_YOU"))
        acts.append(Act(domain, "GOODBYE"))
        parts.append("Thank you! Bye!")
        self._ended = True

    def step(self, system_acts: Sequence[Act] | None = None) -> SimUserTurn:
        """Produce the next user turn given the system's last action frame
        (None opens the dialogue)."""
        goal = self._goal
        domain = goal.domain
        acts: list[Act] = []
        parts: list[str] = []
        requested: list[str] = []

        if not self._announced:
            self._announced = True
            acts.append(Act(domain, "INFORM", INTENT_SLOT, (goal.intent,)))
            parts.append(f"I need to {_humanize(goal.intent)}.")
            if goal.constraints:
                self._inform(goal.constraints[0][0], acts, parts)
            return self._turn(acts, parts, requested)

        types = {a.act_type for a in system_acts or ()}
        if "GOODBYE" in types:
            self._ended = True
            return self._turn([], ["(hangs up)"], requested)

        if "REQUEST" in types:
            for act in system_acts or ():
                if act.act_type == "REQUEST" and act.slot:
                    self._inform(act.slot, acts, parts)
        elif "OFFER" in types:
            offer = next(a for a in system_acts or () if a.act_type == "OFFER")
            settle = self._rejections >= goal.patience
            if self._offer_acceptable(offer) or settle:
                if goal.is_transactional:
                    acts.append(Act(domain, "AFFIRM"))
                    parts.append("Yes, that works.")
                else:
                    acts.append(Act(domain, "SELECT", offer.slot, offer.values))
                    parts.append(f"Let us go with {offer.values[0] if offer.values else 'that'}.")
                    remaining = [s for s in goal.requested if s not in self._answered]
                    if remaining:
                        for slot in remaining:
                            acts.append(Act(domain, "REQUEST", slot))
                            parts.append(f"What is the {slot}?")
                        requested = remaining
                    else:
                        self._close(acts, parts)
            else:
                self._rejections += 1
                acts.append(Act(domain, "NEGATE"))
                parts.append("No, that does not work for me.")
        elif "CONFIRM" in types:
            acts.append(Act(domain, "AFFIRM"))
            parts.append("Yes, go ahead.")
        elif "NOTIFY_SUCCESS" in types:
            remaining = [s for s in goal.requested if s not in self._answered]
            if remaining:
                for slot in remaining:
                    acts.append(Act(domain, "REQUEST", slot))
                    parts.append(f"What is the {slot}?")
                requested = remaining
            else:
                self._close(acts, parts)
        elif "NOTIFY_FAILURE" in types:
            self._close(acts, parts)
        elif "INFORM" in types:
            for act in system_acts or ():
                if act.act_type == "INFORM" and act.slot:
                    self._answered.add(act.slot)
            remaining = [s for s in goal.requested if s not in self._answered]
            if remaining:
                for slot in remaining:
                    acts.append(Act(domain, "REQUEST", slot))
                    parts.append(f"What is the {slot}?")
                requested = remaining
            else:
                self._close(acts, parts)
        else:
            # Lost system (greeting or unparseable): restate the goal.
            acts.append(Act(domain, "INFORM", INTENT_SLOT, (goal.intent,)))
            parts.append(f"I need to {_humanize(goal.intent)}.")
            unrevealed = [s for s, _v in goal.constraints if s not in self._revealed]
            if unrevealed:
                self._inform(unrevealed[0], acts, parts)
        return self._turn(acts, parts, requested)

    def _turn(self, acts: list[Act], parts: list[str], requested: list[str]) -> SimUserTurn:
        text = " ".join(parts)
        if acts:
            text = f"{text} {render_user_annotation(acts)}"
        return SimUserTurn(
            utterance=text,
            actions=ActionFrame(actor=Speaker.USER, acts=tuple(acts)),
            state=self._state(requested),
            ended=self._ended,
        )


# ---------------------------------------------------------------------------
# Dialogue loop


def _annotation_for(state: DialogState, domain: str) -> StateAnnotation:
    return StateAnnotation(
        active_intent=state.active_intent,
        requested_slots=tuple(sorted(s for d, s in state.requested_slots if d == domain)),
        slot_values=tuple(
            (slot, values) for d, slot, values in state.slot_values if d == domain
        ),
    )


def run_dialog(
    goal: UserGoal,
    schemas: Sequence[DomainSchema],
    backend: GenerationBackend,
    db: SyntheticDb,
    *,
    dialogue_id: str = "sim",
    max_turns: int = 30,
    action_types: Sequence[str] = ACTION_TYPES,
    db_record_cap: int = 3,
) -> Dialogue:
    """Drive one closed-loop dialogue between the simulator and a backend.

    The backend sees its own predicted state as the previous state each
    turn.  A QUERY act triggers the two-phase exchange: run the database
    query with the predicted constraints, rebuild the context with results,
    and generate again; only the second output lands in the transcript.
    Hard stop at max_turns utterances.
    """
    by_name = {s.service_name: s for s in schemas}
    schema = by_name.get(goal.domain)
    if schema is None:
        raise ConfigError(f"no schema for goal domain {goal.domain!r}")
    intent_def = schema.intent_by_name(goal.intent)
    headline = None
    if intent_def is not None and intent_def.result_slots:
        headline = intent_def.result_slots[0]
    sim = UserSimulator(goal, db.records.get(goal.domain, ()), headline)
    ctx_schemas = [schema]

    turns: list[Turn] = []
    prev_state = DialogState()
    cached_db: DbResults | None = None
    last_system_acts: tuple[Act, ...] | None = None

    while len(turns) < max_turns:
        user = sim.step(last_system_acts)
        if not user.actions.acts and user.ended:
            break
        turns.append(
            Turn(
                speaker=Speaker.USER,
                utterance=user.utterance,
                frames=(
                    Frame(
                        service=goal.domain,
                        state=_annotation_for(user.state, goal.domain),
                        acts=user.actions.acts,
                    ),
                ),
            )
        )
        if len(turns) >= max_turns:
            break

        turn_index = len(turns) - 1
        request_id = make_request_id(dialogue_id, turn_index, goal.domain)
        context = build_context(
            prev_state, user.utterance, ctx_schemas, cached_db, action_types,
            db_record_cap=db_record_cap,
        )
        parsed = parse_generation(backend.generate(
            BackendRequest(id=request_id, context=context.text)
        ).text, ctx_schemas)

        queried = False
        if any(a.act_type == QUERY_ACT for a in parsed.system_actions.acts):
            results = db_query(db, parsed.state, goal.domain)
            context = build_context(
                prev_state, user.utterance, ctx_schemas, results, action_types,
                db_record_cap=db_record_cap,
            )
            requery_id = requery_request_id(dialogue_id, turn_index, goal.domain)
            parsed = parse_generation(backend.generate(
                BackendRequest(id=requery_id, context=context.text)
            ).text, ctx_schemas)
            cached_db = results
            queried = True

        call = None
        if queried:
            call = (
                parsed.state.active_intent,
                tuple(
                    (slot, values[0])
                    for d, slot, values in parsed.state.slot_values
                    if d == goal.domain and values
                ),
            )
        turns.append(
            Turn(
                speaker=Speaker.SYSTEM,
                utterance=parsed.response,
                frames=(
                    Frame(
                        service=goal.domain,
                        acts=parsed.system_actions.acts,
                        service_call=call,
                        service_results=cached_db.records if queried else None,
                    ),
                ),
            )
        )
        prev_state = parsed.state
        last_system_acts = parsed.system_actions.acts
        if parsed.system_actions.has("GOODBYE"):
            break

    return Dialogue(dialogue_id=dialogue_id, services=(goal.domain,), turns=tuple(turns))


# ---------------------------------------------------------------------------
# Corpus generation


@dataclass(frozen=True, slots=True)
class SynthCorpus:
    schemas: tuple[DomainSchema, ...]
    dialogues: tuple[Dialogue, ...]
    records: tuple[TrainingRecord, ...]
    db: SyntheticDb


def synth_corpus(
    n_dialogs: int,
    seed: int,
    *,
    schemas: Sequence[DomainSchema] | None = None,
    records_per_domain: int = 10,
    max_turns: int = 30,
    action_types: Sequence[str] = ACTION_TYPES,
) -> SynthCorpus:
    """Generate a corpus with the rule agent on the system side.

    Domains rotate round-robin; goal seeds derive from (seed, index) so any
    prefix of a larger corpus is reproducible on its own.
    """
    schema_tuple = tuple(schemas if schemas is not None else builtin_schemas())
    if not schema_tuple:
        raise EmptySchema("no schemas to simulate over")
    db = SyntheticDb.generate(schema_tuple, seed, records_per_domain)
    backend = RuleAgentBackend(schema_tuple)
    dialogues = []
    for i in range(n_dialogs):
        schema = schema_tuple[i % len(schema_tuple)]
        goal = sample_goal(schema, seed * 1_000_003 + i)
        dialogues.append(
            run_dialog(
                goal,
                schema_tuple,
                backend,
                db,
                dialogue_id=f"sim_{seed}_{i:05d}",
                max_turns=max_turns,
                action_types=action_types,
            )
        )
    records: list[TrainingRecord] = []
    for dialogue in dialogues:
        records.extend(
            training_records_for_dialogue(dialogue, schema_tuple, action_types)
        )
    return SynthCorpus(
        schemas=schema_tuple,
        dialogues=tuple(dialogues),
        records=tuple(records),
        db=db,
    )
