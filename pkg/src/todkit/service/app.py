"""HTTP face of the harness.

Every batch operation the CLI exposes is a POST here; the CLI itself holds
no logic beyond argument plumbing.  Paths in request bodies are resolved on
the server's filesystem, which is the same machine in the default
in-process deployment.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..backends import (
    GenerationBackend,
    OracleBackend,
    RemoteBackend,
    RuleAgentBackend,
)
from ..corpus import (
    load_dialogues,
    load_schemas,
    load_split,
    partition_corpus,
)
from ..errors import BackendError, ConfigError, EmptyInput, HarnessError, UnclassifiedDomain
from ..metrics import render_report_table, report_from_json, report_to_json
from ..model import (
    Act,
    DbResults,
    DialogState,
    Dialogue,
    DomainSchema,
    Speaker,
    gold_state_at,
    validate_db_results,
    validate_state,
)
from ..serialize import write_training_records, training_records_for_dialogue
from ..sgdx import make_surface_variant, run_variant_sweep
from ..simulate import builtin_schemas, synth_corpus
from ..evaluation import evaluate_dialogues
from ..backends.base import ACTION_TYPES
from ..corpus import dialogues_to_json, schemas_to_json
from . import models as m
from .sessions import SessionStore

VIOLATION_CAP = 100


def _make_backend(
    spec: m.BackendSpec,
    schemas: Sequence[DomainSchema],
    dialogues: Sequence[Dialogue],
) -> GenerationBackend:
    if spec.kind == "oracle":
        return OracleBackend(dialogues)
    if spec.kind == "rule-agent":
        return RuleAgentBackend(schemas)
    if spec.endpoint is None:
        raise ConfigError("remote backend needs an endpoint")
    return RemoteBackend(spec.endpoint, timeout=spec.timeout)


def _state_view(state: DialogState) -> m.StateView:
    return m.StateView(
        active_intent=state.active_intent,
        requested_slots=sorted(state.requested_slots),
        slot_values=[(d, s, list(v)) for d, s, v in state.slot_values],
    )


def _act_views(acts: Sequence[Act]) -> list[m.ActView]:
    return [
        m.ActView(domain=a.domain, act_type=a.act_type, slot=a.slot, values=list(a.values))
        for a in acts
    ]


def create_app() -> FastAPI:
    app = FastAPI(title="todkit", version=__version__)
    sessions = SessionStore()

    @app.exception_handler(HarnessError)
    async def _harness_error(request: Request, exc: HarnessError):
        status = 502 if isinstance(exc, BackendError) else 400
        return JSONResponse(
            status_code=status, content={"detail": f"{type(exc).__name__}: {exc}"}
        )

    @app.exception_handler(OSError)
    async def _os_error(request: Request, exc: OSError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/ingest", response_model=m.IngestResponse)
    def ingest(req: m.IngestRequest) -> m.IngestResponse:
        schemas = load_schemas(req.schemas)
        dialogues = load_dialogues(req.dialogues)
        user_turns = frames = acts = 0
        domains: set[str] = set()
        violations: list[str] = []

        def note(dialogue_id: str, turn_index: int, problems: list[str]) -> None:
            for problem in problems:
                if len(violations) < VIOLATION_CAP:
                    violations.append(f"{dialogue_id} turn {turn_index}: {problem}")

        for dlg in dialogues:
            domains.update(dlg.services)
            for i, turn in enumerate(dlg.turns):
                if turn.speaker is Speaker.USER:
                    user_turns += 1
                for frame in turn.frames:
                    frames += 1
                    acts += len(frame.acts)
                    if frame.state is not None:
                        state = gold_state_at(dlg, i, frame.service)
                        note(dlg.dialogue_id, i, validate_state(state, schemas))
                    if frame.service_results is not None and frame.service_call is not None:
                        db = DbResults(frame.service_call[0], frame.service_results)
                        note(dlg.dialogue_id, i, validate_db_results(db, frame.service, schemas))

        split_counts = None
        if req.split is not None:
            split = load_split(Path(req.split).read_bytes(), source=req.split)
            try:
                part = partition_corpus(dialogues, split)
                split_counts = m.SplitCounts(seen=len(part.seen_only), unseen=len(part.with_unseen))
            except UnclassifiedDomain as exc:
                note("<split>", -1, [str(exc)])

        return m.IngestResponse(
            dialogues=len(dialogues),
            domains=len(domains),
            user_turns=user_turns,
            frames=frames,
            acts=acts,
            split_counts=split_counts,
            violations=violations,
            violations_truncated=len(violations) >= VIOLATION_CAP,
        )

    @app.post("/evaluate", response_model=m.EvaluateResponse)
    def evaluate(req: m.EvaluateRequest) -> m.EvaluateResponse:
        schemas = load_schemas(req.schemas)
        dialogues = load_dialogues(req.dialogues)
        split = None
        expected: tuple[str, ...] = ()
        if req.split is not None:
            split = load_split(Path(req.split).read_bytes(), source=req.split)
            expected = ("seen", "unseen")
        backend = _make_backend(req.backend, schemas, dialogues)
        try:
            run = evaluate_dialogues(
                dialogues,
                schemas,
                backend,
                split=split,
                prev_state_source=req.prev_state,
                db_record_cap=req.db_record_cap,
                workers=req.workers,
            )
        finally:
            backend.close()
        if run.frames:
            report = run.report(expected_splits=expected)
            payload = report_to_json(report)
            table = render_report_table(report)
        elif run.failures:
            # Nothing to score, e.g. the remote peer was down for every
            # dialogue; still a completed run, reported as such.
            payload = None
            table = f"no frames evaluated; backend failures: {len(run.failures)}"
        else:
            raise EmptyInput("corpus produced no evaluable frames")
        output_path = None
        if req.output is not None and payload is not None:
            out = Path(req.output)
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
            output_path = str(out)
        return m.EvaluateResponse(
            report=payload,
            table=table,
            failures=len(run.failures),
            output_path=output_path,
        )

    @app.post("/simulate", response_model=m.SimulateResponse)
    def simulate(req: m.SimulateRequest) -> m.SimulateResponse:
        schemas = load_schemas(req.schemas) if req.schemas else None
        corpus = synth_corpus(
            req.n_dialogs,
            req.seed,
            schemas=schemas,
            records_per_domain=req.records_per_domain,
            max_turns=req.max_turns,
        )
        out = Path(req.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        schema_path = out / "schema.json"
        corpus_path = out / "dialogues_001.json"
        records_path = out / "train_records.ndjson"
        schema_path.write_text(
            json.dumps(schemas_to_json(corpus.schemas), indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        corpus_path.write_text(
            json.dumps(dialogues_to_json(corpus.dialogues), indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
        write_training_records(corpus.records, records_path)
        return m.SimulateResponse(
            dialogues=len(corpus.dialogues),
            turns=sum(len(d.turns) for d in corpus.dialogues),
            training_records=len(corpus.records),
            corpus_path=str(corpus_path),
            schema_path=str(schema_path),
            records_path=str(records_path),
        )

    @app.post("/trainprep", response_model=m.TrainprepResponse)
    def trainprep(req: m.TrainprepRequest) -> m.TrainprepResponse:
        schemas = load_schemas(req.schemas)
        dialogues = load_dialogues(req.dialogues)
        records = []
        for dlg in dialogues:
            records.extend(training_records_for_dialogue(dlg, schemas, ACTION_TYPES))
        out = Path(req.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        n = write_training_records(records, out)
        return m.TrainprepResponse(records=n, output_path=str(out))

    @app.post("/sgdx", response_model=m.SgdxResponse)
    def sgdx(req: m.SgdxRequest) -> m.SgdxResponse:
        base = load_schemas(req.schemas)
        dialogues = load_dialogues(req.dialogues)
        if req.variants:
            variants = {lvl: load_schemas(path) for lvl, path in req.variants.items()}
        else:
            if req.levels < 2:
                raise ConfigError("variant sweeps need at least two levels")
            variants = {lvl: make_surface_variant(base, lvl) for lvl in range(1, req.levels + 1)}

        def factory(schemas, remapped) -> GenerationBackend:
            return _make_backend(req.backend, schemas, remapped)

        sweep = run_variant_sweep(
            dialogues,
            base,
            variants,
            factory,
            prev_state_source=req.prev_state,
            workers=req.workers,
        )
        return m.SgdxResponse(
            levels=list(sweep.summary.levels),
            reports={str(lvl): report_to_json(rep) for lvl, rep in sweep.reports.items()},
            mean=dict(sweep.summary.mean),
            std=dict(sweep.summary.std),
        )

    @app.post("/chat/session", response_model=m.ChatOpenResponse)
    def chat_open(req: m.ChatOpenRequest) -> m.ChatOpenResponse:
        if req.backend.kind == "oracle":
            raise ConfigError("the oracle replays annotated corpora; it cannot drive live chat")
        schemas = load_schemas(req.schemas) if req.schemas else builtin_schemas()
        backend = _make_backend(req.backend, schemas, ())
        session = sessions.create(schemas, backend, req.seed)
        return m.ChatOpenResponse(
            session_id=session.session_id,
            domains=[s.service_name for s in schemas],
        )

    @app.post("/chat/{session_id}/turn", response_model=m.ChatTurnResponse)
    def chat_turn(session_id: str, req: m.ChatTurnRequest) -> m.ChatTurnResponse:
        session = sessions.get(session_id)
        if session is None:
            return JSONResponse(status_code=404, content={"detail": "no such session"})
        parsed = session.step(req.utterance)
        return m.ChatTurnResponse(
            response=parsed.response,
            state=_state_view(parsed.state),
            user_actions=_act_views(parsed.user_actions.acts),
            system_actions=_act_views(parsed.system_actions.acts),
            warnings=list(parsed.warnings),
        )

    @app.get("/chat/{session_id}/state", response_model=m.ChatStateResponse)
    def chat_state(session_id: str) -> m.ChatStateResponse:
        session = sessions.get(session_id)
        if session is None:
            return JSONResponse(status_code=404, content={"detail": "no such session"})
        return m.ChatStateResponse(state=_state_view(session.prev_state), turns=session.turns)

    @app.delete("/chat/{session_id}")
    def chat_close(session_id: str) -> dict:
        session = sessions.drop(session_id)
        if session is None:
            return JSONResponse(status_code=404, content={"detail": "no such session"})
        session.close()
        return {"closed": session_id}

    @app.post("/report/render", response_model=m.ReportRenderResponse)
    def report_render(req: m.ReportRenderRequest) -> m.ReportRenderResponse:
        return m.ReportRenderResponse(table=render_report_table(report_from_json(req.report)))

    return app
