"""Generation backend contract.

A backend is anything that maps a serialized context string to generated
text in the turn grammar: the gold-replay oracle, the deterministic rule
agent, or a remote model process reached over the wire protocol.  Drivers
never see past the text-in/text-out seam, which is what makes the backends
interchangeable in evaluation, simulation, and chat.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

# Fixed dialog-act vocabulary, advertised verbatim in every context so a
# generative backend never has to guess the label set.
ACTION_TYPES = (
    "INFORM",
    "REQUEST",
    "CONFIRM",
    "OFFER",
    "NEGATE",
    "AFFIRM",
    "NOTIFY_SUCCESS",
    "NOTIFY_FAILURE",
    "INFORM_COUNT",
    "OFFER_INTENT",
    "REQUEST_ALTS",
    "SELECT",
    "THANK_YOU",
    "GOODBYE",
    "GREET",
)

# Harness-internal system act: the policy asks the driver to run a database
# query with the just-predicted state and regenerate with results in context.
# It never appears in transcripts or metrics.
QUERY_ACT = "QUERY"

# Reserved slot name: INFORM with this slot announces the active intent.
INTENT_SLOT = "intent"

_ID_SEP = "::"


@dataclass(frozen=True, slots=True)
class BackendRequest:
    """One generation call.  ``id`` must be unique within a backend session;
    drivers encode (dialogue, turn, service) into it so stateful backends can
    correlate turns of the same dialogue."""

    id: str
    context: str


@dataclass(frozen=True, slots=True)
class BackendResponse:
    id: str
    text: str
    latency: float = 0.0


class GenerationBackend(abc.ABC):
    """Text-in/text-out turn generator."""

    @abc.abstractmethod
    def generate(self, request: BackendRequest) -> BackendResponse:
        """Produce generated text for one context.  Raises BackendError
        subclasses on transport or peer failure."""

    def close(self) -> None:
        """Release any held resources; default is a no-op."""


def make_request_id(dialogue_id: str, turn_index: int, service: str) -> str:
    return _ID_SEP.join((dialogue_id, str(turn_index), service))


def requery_request_id(dialogue_id: str, turn_index: int, service: str) -> str:
    """Id for the second pass of a two-phase query turn; still unique, still
    resolving to the same (dialogue, turn, service)."""
    return _ID_SEP.join((dialogue_id, f"{turn_index}~r", service))


def split_request_id(request_id: str) -> tuple[str, int, str]:
    parts = request_id.split(_ID_SEP)
    if len(parts) < 3:
        raise ValueError(f"request id {request_id!r} is not dialogue::turn::service")
    service = parts[-1]
    # A requery pass suffixes the turn field with '~<n>'; strip it.
    turn_text = parts[-2].split("~")[0]
    dialogue_id = _ID_SEP.join(parts[:-2])
    try:
        turn_index = int(turn_text)
    except ValueError:
        raise ValueError(f"request id {request_id!r} has a non-numeric turn field") from None
    return dialogue_id, turn_index, service


def dialogue_of_request(request_id: str) -> str:
    try:
        return split_request_id(request_id)[0]
    except ValueError:
        return request_id
