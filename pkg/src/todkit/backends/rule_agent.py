"""Deterministic rule-based system policy.

Serves two jobs: it writes the system side of synthetic training corpora,
and it is the reproducible reference point for the evaluation stack (its
metrics must not move between runs, or across surface renames of schema
vocabulary).  The policy is a small slot-filling state machine:

  elicit      ask for missing required slots, then query the database
  offered     walk the result list one offer at a time; rejections advance
  confirming  transactional intents restate the constraints before booking
  committed   answer follow-up requests from the accepted record
  failed      the result list ran out; wrap up
  closed      goodbye exchanged

Per-dialogue progress (the offer cursor, the snapshot of visible records,
what was accepted) lives in an immutable AgentSession.  The step function is
pure: same inputs and session, same outputs.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

from ..model import Act, ActionFrame, DbResults, DialogState, DomainSchema, Speaker
from ..serialize import build_target, extract_annotation_acts, parse_context
from .base import (
    BackendRequest,
    BackendResponse,
    GenerationBackend,
    INTENT_SLOT,
    QUERY_ACT,
    dialogue_of_request,
)

OPEN, OFFERED, CONFIRMING, COMMITTED, FAILED, CLOSED = (
    "elicit",
    "offered",
    "confirming",
    "committed",
    "failed",
    "closed",
)


@dataclass(frozen=True, slots=True)
class AgentSession:
    stage: str = OPEN
    # Offers made so far; records[offer_cursor] is the next candidate.
    offer_cursor: int = 0
    # Records visible when the first offer was made, frozen for the dialogue.
    records: tuple[Mapping[str, str], ...] | None = None
    accepted_index: int | None = None

    def reference_record(self) -> Mapping[str, str] | None:
        """The record follow-up questions refer to: the accepted one, else
        the one currently on offer."""
        if self.records is None:
            return None
        index = self.accepted_index if self.accepted_index is not None else self.offer_cursor - 1
        if 0 <= index < len(self.records):
            return self.records[index]
        return None


def headline_slot(intent_def, record: Mapping[str, str]) -> str | None:
    """The slot an offer leads with: first result slot present in the record."""
    for slot in intent_def.result_slots:
        if slot in record:
            return slot
    return next(iter(record), None)


def render_agent_response(acts: Sequence[Act]) -> str:
    """Deterministic surface form for a system action frame."""
    clauses: list[str] = []
    confirms = [a for a in acts if a.act_type == "CONFIRM"]
    for act in acts:
        value = act.values[0] if act.values else ""
        if act.act_type == "GREET":
            clauses.append("Hello! What can I do for you?")
        elif act.act_type == "REQUEST":
            clauses.append(f"What {act.slot} would you like?")
        elif act.act_type == "INFORM_COUNT":
            clauses.append(f"I found {value} options.")
        elif act.act_type == "OFFER":
            clauses.append(f"How about {value}?")
        elif act.act_type == "CONFIRM":
            if act is confirms[0]:
                body = ", ".join(f"{c.slot} is {c.values[0] if c.values else ''}" for c in confirms)
                clauses.append(f"Please confirm: {body}.")
        elif act.act_type == "NOTIFY_SUCCESS":
            clauses.append("Done! Your booking is confirmed.")
        elif act.act_type == "NOTIFY_FAILURE":
            clauses.append("Sorry, nothing matches what you asked for.")
        elif act.act_type == "INFORM":
            clauses.append(f"The {act.slot} is {value}.")
        elif act.act_type == QUERY_ACT:
            clauses.append("One moment while I look that up.")
        elif act.act_type == "GOODBYE":
            clauses.append("Goodbye, have a great day!")
        else:
            clauses.append("Alright.")
    return " ".join(clauses)


def _advance_offer(
    domain: str, intent_def, session: AgentSession
) -> tuple[list[Act], AgentSession]:
    records = session.records or ()
    cursor = session.offer_cursor
    if cursor < len(records):
        record = records[cursor]
        slot = headline_slot(intent_def, record)
        value = record.get(slot, "") if slot else ""
        acts = [Act(domain, "OFFER", slot, (value,) if value else ())]
        return acts, replace(session, stage=OFFERED, offer_cursor=cursor + 1)
    return [Act(domain, "NOTIFY_FAILURE")], replace(session, stage=FAILED)


def rule_agent_step(
    state: DialogState,
    user_actions: ActionFrame,
    schema: DomainSchema | None,
    db: DbResults | None,
    session: AgentSession,
) -> tuple[ActionFrame, str, AgentSession]:
    """One policy decision.  Returns the system action frame, its rendered
    response, and the next session.

    Rules are checked top to bottom, first match wins: goodbye, confirmation
    replies, offer accept/reject, follow-up requests, missing required
    slots, query/offer, wrap-up.  A QUERY act asks the driver to run the
    database query for the current state and call again with results.
    """
    user_types = {a.act_type for a in user_actions.acts}
    domain = schema.service_name if schema is not None else (
        user_actions.acts[0].domain if user_actions.acts else ""
    )
    intent_def = schema.intent_by_name(state.active_intent) if schema is not None else None

    def done(acts: list[Act], next_session: AgentSession):
        frame = ActionFrame(actor=Speaker.SYSTEM, acts=tuple(acts))
        return frame, render_agent_response(frame.acts), next_session

    if "GOODBYE" in user_types or session.stage == CLOSED:
        return done([Act(domain, "GOODBYE")], replace(session, stage=CLOSED))

    if intent_def is None:
        return done([Act(domain, "GREET")], session)

    if session.stage == CONFIRMING:
        if "AFFIRM" in user_types:
            return done(
                [Act(domain, "NOTIFY_SUCCESS")],
                replace(session, stage=COMMITTED, accepted_index=session.offer_cursor - 1),
            )
        if "NEGATE" in user_types or "REQUEST_ALTS" in user_types:
            acts, next_session = _advance_offer(domain, intent_def, session)
            return done(acts, next_session)
        # Anything else repeats the confirmation.
        acts = [
            Act(domain, "CONFIRM", slot, (values[0],))
            for (d, slot, values) in state.slot_values
            if d == domain and slot in intent_def.required_slots
        ]
        return done(acts or [Act(domain, "GREET")], session)

    if session.stage == OFFERED and ("AFFIRM" in user_types or "SELECT" in user_types):
        accepted = replace(session, accepted_index=session.offer_cursor - 1)
        if intent_def.is_transactional:
            acts = [
                Act(domain, "CONFIRM", slot, (values[0],))
                for (d, slot, values) in state.slot_values
                if d == domain and slot in intent_def.required_slots
            ]
            return done(acts, replace(accepted, stage=CONFIRMING))
        requests = [a.slot for a in user_actions.acts if a.act_type == "REQUEST" and a.slot]
        record = accepted.reference_record() or {}
        if requests:
            acts = [
                Act(domain, "INFORM", slot, (record.get(slot, "unavailable"),))
                for slot in requests
            ]
            return done(acts, replace(accepted, stage=COMMITTED))
        return done([Act(domain, "GOODBYE")], replace(accepted, stage=CLOSED))

    if session.stage in (OFFERED, COMMITTED) and (
        "NEGATE" in user_types or "REQUEST_ALTS" in user_types
    ):
        acts, next_session = _advance_offer(domain, intent_def, session)
        return done(acts, next_session)

    if session.stage in (OFFERED, COMMITTED) and "REQUEST" in user_types:
        record = session.reference_record() or {}
        acts = [
            Act(domain, "INFORM", a.slot, (record.get(a.slot, "unavailable"),))
            for a in user_actions.acts
            if a.act_type == "REQUEST" and a.slot
        ]
        if acts:
            return done(acts, session)

    filled = state.filled_slots(domain)
    missing = sorted(s for s in intent_def.required_slots if s not in filled)
    if missing:
        return done([Act(domain, "REQUEST", missing[0])], session)

    records = session.records
    if records is None and db is None:
        # Constraints complete but no results in sight: ask the driver.
        return done([Act(domain, QUERY_ACT)], session)
    if records is None:
        records = db.records
        session = replace(session, records=tuple(records))

    if not records:
        if session.stage == FAILED:
            return done([Act(domain, "GOODBYE")], replace(session, stage=CLOSED))
        return done([Act(domain, "NOTIFY_FAILURE")], replace(session, stage=FAILED))

    if session.stage == OPEN:
        count_act = Act(domain, "INFORM_COUNT", "count", (str(len(records)),))
        acts, next_session = _advance_offer(domain, intent_def, session)
        return done([count_act, *acts], next_session)

    if session.stage == OFFERED:
        # Unrecognized reaction: repeat the standing offer.
        record = session.reference_record() or {}
        slot = headline_slot(intent_def, record)
        value = record.get(slot, "") if slot else ""
        return done([Act(domain, "OFFER", slot, (value,) if value else ())], session)

    if session.stage in (COMMITTED, FAILED):
        return done([Act(domain, "GOODBYE")], replace(session, stage=CLOSED))

    return done([Act(domain, "GREET")], session)


# ---------------------------------------------------------------------------
# Text-level wrapper


def _fill_domains(
    acts: Sequence[Act], prev_state: DialogState, schemas: Sequence[DomainSchema]
) -> tuple[Act, ...]:
    """Fill empty act domains (interactive shorthand) from the announced or
    standing intent, falling back to a unique slot owner."""
    default = ""
    for act in acts:
        if act.act_type == "INFORM" and act.slot == INTENT_SLOT and act.values:
            for schema in schemas:
                if schema.intent_by_name(act.values[0]) is not None:
                    default = schema.service_name
                    break
    if not default:
        for schema in schemas:
            if schema.intent_by_name(prev_state.active_intent) is not None:
                default = schema.service_name
                break
    filled = []
    for act in acts:
        if act.domain:
            filled.append(act)
            continue
        domain = default
        if not domain and act.slot:
            owners = [s.service_name for s in schemas if s.slot_by_name(act.slot)]
            if len(owners) == 1:
                domain = owners[0]
        if not domain and schemas:
            domain = schemas[0].service_name
        filled.append(replace(act, domain=domain))
    return tuple(filled)


def update_state(
    prev_state: DialogState, user_acts: Sequence[Act]
) -> DialogState:
    """Fold user acts into the running state.

    INFORM on the reserved intent slot switches the active intent, other
    INFORMs overwrite slot assignments, and REQUESTs replace the requested
    set (requests do not accumulate across turns).
    """
    intent = prev_state.active_intent
    assignments: dict[tuple[str, str], tuple[str, ...]] = {}
    requested: list[tuple[str, str]] = []
    for act in user_acts:
        if act.act_type == "INFORM" and act.slot == INTENT_SLOT and act.values:
            intent = act.values[0]
        elif act.act_type == "INFORM" and act.slot and act.values:
            assignments[(act.domain, act.slot)] = act.values
        elif act.act_type == "REQUEST" and act.slot:
            requested.append((act.domain, act.slot))
    return prev_state.updated(intent=intent, set_values=assignments, requested=requested)


class RuleAgentBackend(GenerationBackend):
    """Runs the rule policy behind the plain text backend seam.

    User acts are read from the annotation block embedded in the utterance;
    free text without one simply greets.  Sessions are keyed by the dialogue
    part of the request id, so concurrent evaluation of different dialogues
    is safe while turns of one dialogue stay ordered.
    """

    def __init__(self, schemas: Sequence[DomainSchema]) -> None:
        self._schemas = tuple(schemas)
        self._sessions: dict[str, AgentSession] = {}
        self._lock = threading.Lock()

    def reset(self) -> None:
        with self._lock:
            self._sessions.clear()

    def generate(self, request: BackendRequest) -> BackendResponse:
        started = time.perf_counter()
        ctx = parse_context(request.context, self._schemas)
        user_acts = _fill_domains(
            extract_annotation_acts(ctx.user_utterance), ctx.prev_state, self._schemas
        )
        state = update_state(ctx.prev_state, user_acts)
        schema = None
        for candidate in self._schemas:
            if candidate.intent_by_name(state.active_intent) is not None:
                schema = candidate
                break
        if schema is None and self._schemas:
            # No intent yet: greetings and goodbyes still need a domain, or
            # their acts would not survive the act-line grammar.
            schema = self._schemas[0]

        key = dialogue_of_request(request.id)
        with self._lock:
            session = self._sessions.get(key, AgentSession())

        user_frame = ActionFrame(actor=Speaker.USER, acts=user_acts)
        system_frame, response, next_session = rule_agent_step(
            state, user_frame, schema, ctx.db, session
        )
        with self._lock:
            self._sessions[key] = next_session

        # INFORM_COUNT reports the advertised total when it exceeds the
        # visible list.
        if ctx.db_count is not None and system_frame.has("INFORM_COUNT"):
            acts = tuple(
                replace(a, values=(str(ctx.db_count),)) if a.act_type == "INFORM_COUNT" else a
                for a in system_frame.acts
            )
            system_frame = ActionFrame(actor=Speaker.SYSTEM, acts=acts)
            response = render_agent_response(system_frame.acts)

        text = build_target(state, user_frame, system_frame, response).text
        return BackendResponse(id=request.id, text=text, latency=time.perf_counter() - started)
