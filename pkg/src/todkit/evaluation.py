"""Turn-by-turn corpus evaluation against any generation backend.

Each (user turn, service) frame becomes one generation call: the context
carries the previous state for that service, the current user utterance, the
dialogue's schemas, and whatever database results a driver would have cached
by then.  By default the previous state is the backend's own prediction from
the turn before, so state errors compound exactly as they would live; gold
previous states are available for diagnosis.

A backend failure aborts the rest of its dialogue but never the run; the
failures are counted in the report.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from .backends import (
    ACTION_TYPES,
    BackendRequest,
    GenerationBackend,
    make_request_id,
)
from .corpus import DomainSplit
from .errors import BackendError, ConfigError, NoSuchFrame
from .metrics import EvalReport, FrameEval, aggregate
from .model import ActionFrame, Dialogue, DialogState, DomainSchema, Speaker, gold_state_at
from .serialize import build_context, gold_db_for_turn, parse_generation

PREV_STATE_SOURCES = ("predicted", "gold")


@dataclass(frozen=True, slots=True)
class BackendFailure:
    dialogue_id: str
    turn_index: int
    error: str


@dataclass(frozen=True, slots=True)
class EvalRun:
    frames: tuple[FrameEval, ...]
    failures: tuple[BackendFailure, ...]

    def report(
        self,
        *,
        expected_splits: Sequence[str] = (),
        bucket_edges: Sequence[int] = (5, 10),
    ) -> EvalReport:
        return aggregate(
            self.frames,
            expected_splits=expected_splits,
            bucket_edges=bucket_edges,
            backend_failures=len(self.failures),
        )


def _evaluate_dialogue(
    dialogue: Dialogue,
    schemas_by_name: dict[str, DomainSchema],
    backend: GenerationBackend,
    split: DomainSplit | None,
    prev_state_source: str,
    action_types: Sequence[str],
    db_record_cap: int,
) -> tuple[list[FrameEval], list[BackendFailure]]:
    relevant = []
    for service in sorted(set(dialogue.services)):
        schema = schemas_by_name.get(service)
        if schema is None:
            raise ConfigError(f"{dialogue.dialogue_id}: no schema for service {service!r}")
        relevant.append(schema)
    split_label = split.classify(dialogue) if split is not None else None
    n_turns = len(dialogue.turns)

    frames: list[FrameEval] = []
    failures: list[BackendFailure] = []
    previous: dict[str, DialogState] = {}
    for index, turn in enumerate(dialogue.turns):
        if turn.speaker is not Speaker.USER:
            continue
        system_turn = None
        if index + 1 < n_turns and dialogue.turns[index + 1].speaker is Speaker.SYSTEM:
            system_turn = dialogue.turns[index + 1]
        for frame in turn.frames:
            if frame.state is None:
                continue
            service = frame.service
            gold_state = gold_state_at(dialogue, index, service)
            gold_user = ActionFrame(actor=Speaker.USER, acts=frame.acts)
            gold_system_acts = ()
            gold_response = ""
            if system_turn is not None:
                gold_response = system_turn.utterance
                system_frame = system_turn.frame_for(service)
                if system_frame is not None:
                    gold_system_acts = system_frame.acts
            gold_system = ActionFrame(actor=Speaker.SYSTEM, acts=gold_system_acts)

            context = build_context(
                previous.get(service, DialogState()),
                turn.utterance,
                relevant,
                gold_db_for_turn(dialogue, index, service),
                action_types,
                db_record_cap=db_record_cap,
            )
            request = BackendRequest(
                id=make_request_id(dialogue.dialogue_id, index, service),
                context=context.text,
            )
            try:
                response = backend.generate(request)
            except (BackendError, NoSuchFrame) as exc:
                failures.append(
                    BackendFailure(
                        dialogue_id=dialogue.dialogue_id,
                        turn_index=index,
                        error=f"{type(exc).__name__}: {exc}",
                    )
                )
                return frames, failures
            parsed = parse_generation(response.text, relevant)
            frames.append(
                FrameEval(
                    dialogue_id=dialogue.dialogue_id,
                    turn_index=index,
                    service=service,
                    gold_state=gold_state,
                    pred_state=parsed.state,
                    gold_user_actions=gold_user,
                    pred_user_actions=parsed.user_actions,
                    gold_system_actions=gold_system,
                    pred_system_actions=parsed.system_actions,
                    gold_response=gold_response,
                    pred_response=parsed.response,
                    split=split_label,
                    dialogue_turns=n_turns,
                    parse_warnings=parsed.warnings,
                )
            )
            previous[service] = (
                parsed.state if prev_state_source == "predicted" else gold_state
            )
    return frames, failures


def evaluate_dialogues(
    dialogues: Sequence[Dialogue],
    schemas: Sequence[DomainSchema],
    backend: GenerationBackend,
    *,
    split: DomainSplit | None = None,
    prev_state_source: str = "predicted",
    action_types: Sequence[str] = ACTION_TYPES,
    db_record_cap: int = 3,
    workers: int = 1,
) -> EvalRun:
    """Score a backend over a corpus.

    Dialogues are independent, so ``workers`` > 1 fans them out over threads;
    results are collected in corpus order either way, keeping reports
    byte-identical across worker counts.
    """
    if prev_state_source not in PREV_STATE_SOURCES:
        raise ConfigError(f"prev_state_source must be one of {PREV_STATE_SOURCES}")
    schemas_by_name = {s.service_name: s for s in schemas}

    def job(dialogue: Dialogue):
        return _evaluate_dialogue(
            dialogue,
            schemas_by_name,
            backend,
            split,
            prev_state_source,
            action_types,
            db_record_cap,
        )

    if workers <= 1:
        results = [job(d) for d in dialogues]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, dialogues))

    frames: list[FrameEval] = []
    failures: list[BackendFailure] = []
    for dialogue_frames, dialogue_failures in results:
        frames.extend(dialogue_frames)
        failures.extend(dialogue_failures)
    return EvalRun(frames=tuple(frames), failures=tuple(failures))
