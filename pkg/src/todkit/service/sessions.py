"""Live chat sessions: one backend conversation with a synthetic database.

A session runs the same closed loop as the batch simulator, but one user
utterance at a time.  The previous predicted state is carried between
turns, and a QUERY act from the backend triggers a database lookup plus a
single regeneration with the results in context.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Sequence

from ..backends.base import (
    ACTION_TYPES,
    QUERY_ACT,
    BackendRequest,
    GenerationBackend,
    make_request_id,
    requery_request_id,
)
from ..errors import ConfigError
from ..model import DbResults, DialogState, DomainSchema
from ..serialize import ParsedTurnOutput, build_context, parse_generation
from ..simulate import SyntheticDb, db_query


def _query_domain(state: DialogState, schemas: Sequence[DomainSchema]) -> str:
    domains = state.domains()
    if len(domains) == 1:
        return next(iter(domains))
    if state.active_intent:
        for schema in schemas:
            if schema.intent_by_name(state.active_intent) is not None:
                return schema.service_name
    if len(schemas) == 1:
        return schemas[0].service_name
    raise ConfigError("cannot infer which domain to query")


@dataclass
class ChatSession:
    session_id: str
    schemas: tuple[DomainSchema, ...]
    backend: GenerationBackend
    db: SyntheticDb
    prev_state: DialogState = field(default_factory=DialogState)
    cached_db: DbResults | None = None
    turns: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)

    def step(self, utterance: str) -> ParsedTurnOutput:
        """Run one exchange and return the parsed system turn."""
        with self.lock:
            turn_index = self.turns * 2
            ctx = build_context(
                self.prev_state, utterance, self.schemas, self.cached_db, ACTION_TYPES
            )
            request_id = make_request_id(self.session_id, turn_index, "chat")
            reply = self.backend.generate(BackendRequest(request_id, ctx.text))
            parsed = parse_generation(reply.text, self.schemas)

            if parsed.system_actions.has(QUERY_ACT):
                domain = _query_domain(parsed.state, self.schemas)
                results = db_query(self.db, parsed.state, domain)
                ctx = build_context(
                    self.prev_state, utterance, self.schemas, results, ACTION_TYPES
                )
                request_id = requery_request_id(self.session_id, turn_index, "chat")
                reply = self.backend.generate(BackendRequest(request_id, ctx.text))
                parsed = parse_generation(reply.text, self.schemas)
                self.cached_db = results

            self.prev_state = parsed.state
            self.turns += 1
            return parsed

    def close(self) -> None:
        self.backend.close()


class SessionStore:
    """Thread-safe id -> ChatSession map."""

    def __init__(self) -> None:
        self._sessions: dict[str, ChatSession] = {}
        self._lock = threading.Lock()
        self._counter = 0

    def create(
        self,
        schemas: Sequence[DomainSchema],
        backend: GenerationBackend,
        seed: int,
        records_per_domain: int = 10,
    ) -> ChatSession:
        db = SyntheticDb.generate(schemas, seed, records_per_domain)
        with self._lock:
            self._counter += 1
            session_id = f"chat_{self._counter:04d}"
            session = ChatSession(session_id, tuple(schemas), backend, db)
            self._sessions[session_id] = session
        return session

    def get(self, session_id: str) -> ChatSession | None:
        with self._lock:
            return self._sessions.get(session_id)

    def drop(self, session_id: str) -> ChatSession | None:
        with self._lock:
            return self._sessions.pop(session_id, None)
