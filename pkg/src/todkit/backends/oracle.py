"""Gold-replay backend.

Answers every request with the gold annotations of the addressed turn,
rendered through the turn grammar.  Running the evaluation suite against it
must score perfectly on every annotation-level metric; anything less points
at a defect in serialization, parsing, or scoring rather than at a model.
"""

from __future__ import annotations

import time
from typing import Iterable, Mapping

from ..errors import NoSuchFrame
from ..model import ActionFrame, Dialogue, Speaker, gold_state_at
from ..serialize import build_target
from .base import BackendRequest, BackendResponse, GenerationBackend, split_request_id


def oracle_generate(dialogue: Dialogue, turn_index: int, service: str) -> str:
    """Gold target text for one (user turn, service) address."""
    state = gold_state_at(dialogue, turn_index, service)
    user_frame = dialogue.turns[turn_index].frame_for(service)
    assert user_frame is not None  # gold_state_at already checked
    user_actions = ActionFrame(actor=Speaker.USER, acts=user_frame.acts)

    system_acts = ()
    response = ""
    if turn_index + 1 < len(dialogue.turns):
        system_turn = dialogue.turns[turn_index + 1]
        if system_turn.speaker is Speaker.SYSTEM:
            response = system_turn.utterance
            system_frame = system_turn.frame_for(service)
            if system_frame is not None:
                system_acts = system_frame.acts
    system_actions = ActionFrame(actor=Speaker.SYSTEM, acts=system_acts)
    return build_target(state, user_actions, system_actions, response).text


class OracleBackend(GenerationBackend):
    """Resolves requests by dialogue id; contexts are ignored."""

    def __init__(self, dialogues: Iterable[Dialogue]) -> None:
        self._by_id: Mapping[str, Dialogue] = {d.dialogue_id: d for d in dialogues}

    def generate(self, request: BackendRequest) -> BackendResponse:
        started = time.perf_counter()
        dialogue_id, turn_index, service = split_request_id(request.id)
        dialogue = self._by_id.get(dialogue_id)
        if dialogue is None:
            raise NoSuchFrame(f"no dialogue {dialogue_id!r} in oracle corpus")
        text = oracle_generate(dialogue, turn_index, service)
        return BackendResponse(id=request.id, text=text, latency=time.perf_counter() - started)
