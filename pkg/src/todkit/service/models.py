"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class BackendSpec(BaseModel):
    """Which turn generator a job should run against."""

    kind: Literal["oracle", "rule-agent", "remote"] = "rule-agent"
    # Required for kind="remote": tcp://host:port or stdio:command.
    endpoint: str | None = None
    timeout: float = 30.0


class IngestRequest(BaseModel):
    schemas: str
    dialogues: str
    split: str | None = None


class SplitCounts(BaseModel):
    seen: int
    unseen: int


class IngestResponse(BaseModel):
    dialogues: int
    domains: int
    user_turns: int
    frames: int
    acts: int
    split_counts: SplitCounts | None = None
    violations: list[str] = Field(default_factory=list)
    violations_truncated: bool = False


class EvaluateRequest(BaseModel):
    schemas: str
    dialogues: str
    backend: BackendSpec = Field(default_factory=BackendSpec)
    split: str | None = None
    prev_state: Literal["predicted", "gold"] = "predicted"
    workers: int = 1
    db_record_cap: int = 3
    # When set, the report JSON is also written to this path.
    output: str | None = None


class EvaluateResponse(BaseModel):
    # None when no frames could be scored (all dialogues failed).
    report: dict | None
    table: str
    failures: int
    output_path: str | None = None


class SimulateRequest(BaseModel):
    output_dir: str
    n_dialogs: int = 12
    seed: int = 0
    schemas: str | None = None
    records_per_domain: int = 10
    max_turns: int = 30


class SimulateResponse(BaseModel):
    dialogues: int
    turns: int
    training_records: int
    corpus_path: str
    schema_path: str
    records_path: str


class TrainprepRequest(BaseModel):
    schemas: str
    dialogues: str
    output: str


class TrainprepResponse(BaseModel):
    records: int
    output_path: str


class SgdxRequest(BaseModel):
    schemas: str
    dialogues: str
    backend: BackendSpec = Field(default_factory=BackendSpec)
    # Level -> schema path.  Empty means synthesize `levels` variants.
    variants: dict[int, str] = Field(default_factory=dict)
    levels: int = 5
    prev_state: Literal["predicted", "gold"] = "predicted"
    workers: int = 1


class SgdxResponse(BaseModel):
    levels: list[int]
    reports: dict[str, dict]
    mean: dict[str, float]
    std: dict[str, float]


class ChatOpenRequest(BaseModel):
    backend: BackendSpec = Field(default_factory=BackendSpec)
    schemas: str | None = None
    seed: int = 0


class ChatOpenResponse(BaseModel):
    session_id: str
    domains: list[str]


class ChatTurnRequest(BaseModel):
    utterance: str


class StateView(BaseModel):
    active_intent: str
    requested_slots: list[tuple[str, str]]
    slot_values: list[tuple[str, str, list[str]]]


class ActView(BaseModel):
    domain: str
    act_type: str
    slot: str | None = None
    values: list[str] = Field(default_factory=list)


class ChatTurnResponse(BaseModel):
    response: str
    state: StateView
    user_actions: list[ActView]
    system_actions: list[ActView]
    warnings: list[str] = Field(default_factory=list)


class ChatStateResponse(BaseModel):
    state: StateView
    turns: int


class ReportRenderRequest(BaseModel):
    report: dict


class ReportRenderResponse(BaseModel):
    table: str
