"""Interchangeable turn generators behind a text-in/text-out seam."""

from .base import (
    ACTION_TYPES,
    INTENT_SLOT,
    QUERY_ACT,
    BackendRequest,
    BackendResponse,
    GenerationBackend,
    dialogue_of_request,
    make_request_id,
    requery_request_id,
    split_request_id,
)
from .oracle import OracleBackend, oracle_generate
from .remote import RemoteBackend, remote_generate
from .rule_agent import AgentSession, RuleAgentBackend, rule_agent_step, update_state

__all__ = [
    "ACTION_TYPES",
    "INTENT_SLOT",
    "QUERY_ACT",
    "AgentSession",
    "BackendRequest",
    "BackendResponse",
    "GenerationBackend",
    "OracleBackend",
    "RemoteBackend",
    "RuleAgentBackend",
    "dialogue_of_request",
    "make_request_id",
    "oracle_generate",
    "remote_generate",
    "requery_request_id",
    "rule_agent_step",
    "split_request_id",
    "update_state",
]
