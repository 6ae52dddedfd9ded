"""Schema-guided task-oriented dialog harness.

The package turns annotated multi-domain dialogs into single-pass
generation problems: a compact context (previous state summary, last user
utterance, schemas, database results) maps to a cascaded target (dialog
state, user actions, system actions, response).  Around that core live an
evaluator, a rule-based agent and user simulator, schema-variant
robustness sweeps, and a wire protocol for external generators.
"""

from .backends import (
    ACTION_TYPES,
    BackendRequest,
    BackendResponse,
    GenerationBackend,
    OracleBackend,
    RemoteBackend,
    RuleAgentBackend,
)
from .corpus import (
    DomainSplit,
    load_dialogues,
    load_schemas,
    load_split,
    parse_dialogue_file,
    parse_schema_file,
    partition_corpus,
)
from .errors import HarnessError
from .evaluation import EvalRun, evaluate_dialogues
from .metrics import (
    EvalReport,
    FrameEval,
    MetricBlock,
    aggregate,
    combined_score,
    compute_block,
    render_report_table,
    report_to_json,
)
from .model import (
    Act,
    ActionFrame,
    DbResults,
    DialogState,
    Dialogue,
    DomainSchema,
    Frame,
    IntentDef,
    SlotDef,
    Speaker,
    Turn,
)
from .serialize import (
    TrainingRecord,
    build_context,
    build_target,
    parse_generation,
    training_records_for_dialogue,
    write_training_records,
)
from .sgdx import make_surface_variant, run_variant_sweep
from .simulate import SyntheticDb, builtin_schemas, db_query, run_dialog, synth_corpus

__version__ = "0.1.0"

__all__ = [
    "ACTION_TYPES",
    "Act",
    "ActionFrame",
    "BackendRequest",
    "BackendResponse",
    "DbResults",
    "DialogState",
    "Dialogue",
    "DomainSchema",
    "DomainSplit",
    "EvalReport",
    "EvalRun",
    "FrameEval",
    "Frame",
    "GenerationBackend",
    "HarnessError",
    "IntentDef",
    "MetricBlock",
    "OracleBackend",
    "RemoteBackend",
    "RuleAgentBackend",
    "SlotDef",
    "Speaker",
    "SyntheticDb",
    "TrainingRecord",
    "Turn",
    "aggregate",
    "build_context",
    "build_target",
    "builtin_schemas",
    "combined_score",
    "compute_block",
    "db_query",
    "evaluate_dialogues",
    "load_dialogues",
    "load_schemas",
    "load_split",
    "make_surface_variant",
    "parse_dialogue_file",
    "parse_generation",
    "parse_schema_file",
    "partition_corpus",
    "render_report_table",
    "report_to_json",
    "run_dialog",
    "run_variant_sweep",
    "synth_corpus",
    "training_records_for_dialogue",
    "write_training_records",
    "__version__",
]
