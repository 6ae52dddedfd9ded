"""Evaluation metrics over per-frame predictions.

Every aggregate is either a plain count ratio or a math.fsum mean, so scores
are exactly invariant under permutation of the input frames.  Accuracy-family
metrics are macro-averaged per frame with the joint variant never exceeding
the average variant on any single frame, which makes the joint <= average
relationship a structural property rather than a numeric accident.

Scale conventions: accuracies and F1 are fractions in [0, 1], inform and
success are percentages in [0, 100], GLEU is a fraction, and the combined
score mixes them as (inform + success) / 2 + 100 * GLEU.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import EmptyInput, MalformedDocument
from .model import Act, ActionFrame, DialogState, Speaker, values_match, normalize_value

# ---------------------------------------------------------------------------
# Inputs


@dataclass(frozen=True, slots=True)
class FrameEval:
    """Gold and predicted annotations for one (user turn, service) frame."""

    dialogue_id: str
    turn_index: int
    service: str
    gold_state: DialogState
    pred_state: DialogState
    gold_user_actions: ActionFrame
    pred_user_actions: ActionFrame
    gold_system_actions: ActionFrame
    pred_system_actions: ActionFrame
    gold_response: str
    pred_response: str
    split: str | None = None
    # Utterance count of the whole dialogue, for length-bucket breakdowns.
    dialogue_turns: int = 0
    parse_warnings: tuple[str, ...] = ()


def _require_frames(frames: Sequence[FrameEval]) -> None:
    if not frames:
        raise EmptyInput("no frames to score")


def _mean(values: Iterable[float], count: int) -> float:
    return math.fsum(values) / count


# ---------------------------------------------------------------------------
# State metrics


def intent_accuracy(frames: Sequence[FrameEval]) -> float:
    """Fraction of frames with the active intent exactly right; the empty
    intent is a class like any other."""
    _require_frames(frames)
    return _mean(
        (1.0 if f.pred_state.active_intent == f.gold_state.active_intent else 0.0 for f in frames),
        len(frames),
    )


def _frame_requested_f1(gold: frozenset, pred: frozenset) -> float:
    if not gold and not pred:
        return 1.0
    if not gold or not pred:
        return 0.0
    hit = len(gold & pred)
    precision = hit / len(pred)
    recall = hit / len(gold)
    if precision + recall == 0.0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def requested_slots_f1(frames: Sequence[FrameEval]) -> float:
    """Macro-averaged F1 over requested (domain, slot) pairs.  Frames where
    both sides request nothing score 1.0."""
    _require_frames(frames)
    return _mean(
        (
            _frame_requested_f1(f.gold_state.requested_slots, f.pred_state.requested_slots)
            for f in frames
        ),
        len(frames),
    )


def _frame_goal_fraction(gold: DialogState, pred: DialogState) -> float:
    gold_tuples = gold.slot_values
    if not gold_tuples:
        return 1.0
    pred_map = pred.value_map
    matched = sum(
        1
        for domain, slot, values in gold_tuples
        if (domain, slot) in pred_map and values_match(pred_map[(domain, slot)], values)
    )
    return matched / len(gold_tuples)


def _frame_joint_goal(gold: DialogState, pred: DialogState) -> float:
    gold_map = gold.value_map
    pred_map = pred.value_map
    if set(gold_map) != set(pred_map):
        return 0.0
    for key, values in gold_map.items():
        if not values_match(pred_map[key], values):
            return 0.0
    return 1.0


def goal_accuracy(frames: Sequence[FrameEval]) -> tuple[float, float]:
    """(average, joint) goal accuracy.

    Average: per frame, the fraction of gold slot tuples whose value is
    matched (any acceptable value counts); frames with no gold tuples score
    1.0.  Joint: per frame, 1.0 only when predicted and gold tuples cover the
    same slots and every value matches.  The joint score can never exceed the
    average on a frame.
    """
    _require_frames(frames)
    average = _mean(
        (_frame_goal_fraction(f.gold_state, f.pred_state) for f in frames), len(frames)
    )
    joint = _mean((_frame_joint_goal(f.gold_state, f.pred_state) for f in frames), len(frames))
    return average, joint


# ---------------------------------------------------------------------------
# Action metrics


def _act_matches(gold: Act, pred: Act) -> bool:
    return (
        gold.domain == pred.domain
        and gold.act_type == pred.act_type
        and (gold.slot or "") == (pred.slot or "")
        and values_match(pred.values, gold.values)
    )


def _act_key(act: Act) -> tuple:
    return (
        act.domain,
        act.act_type,
        act.slot or "",
        frozenset(normalize_value(v) for v in act.values),
    )


def _frame_action_fraction(gold: ActionFrame, pred: ActionFrame) -> float:
    if not gold.acts:
        return 1.0
    matched = sum(1 for g in gold.acts if any(_act_matches(g, p) for p in pred.acts))
    return matched / len(gold.acts)


def _frame_joint_action(gold: ActionFrame, pred: ActionFrame) -> float:
    return 1.0 if {_act_key(a) for a in gold.acts} == {_act_key(a) for a in pred.acts} else 0.0


def action_accuracy(frames: Sequence[FrameEval], actor: Speaker) -> tuple[float, float]:
    """(average, joint) accuracy of one actor's dialog acts, macro-averaged.

    Average: fraction of gold acts with a matching predicted act (same
    domain, type and slot, overlapping values); frames with no gold acts
    score 1.0.  Joint: exact set match of canonicalized acts.
    """
    _require_frames(frames)
    if actor is Speaker.USER:
        pairs = [(f.gold_user_actions, f.pred_user_actions) for f in frames]
    else:
        pairs = [(f.gold_system_actions, f.pred_system_actions) for f in frames]
    average = _mean((_frame_action_fraction(g, p) for g, p in pairs), len(pairs))
    joint = _mean((_frame_joint_action(g, p) for g, p in pairs), len(pairs))
    return average, joint


def inform_success(frames: Sequence[FrameEval]) -> tuple[float, float]:
    """Task-completion percentages.

    Inform: over gold INFORM and INFORM_COUNT system acts, how many have a
    matching predicted act.  Success: the same over gold system acts that
    deliver a slot the user requested on that turn.  Vacuous denominators
    score 100.
    """
    _require_frames(frames)
    inform_total = inform_hit = success_total = success_hit = 0
    for frame in frames:
        pred_acts = frame.pred_system_actions.acts
        requested = frame.gold_state.requested_slots
        for act in frame.gold_system_actions.acts:
            matched = any(_act_matches(act, p) for p in pred_acts)
            if act.act_type in ("INFORM", "INFORM_COUNT"):
                inform_total += 1
                inform_hit += matched
            if act.slot and (act.domain, act.slot) in requested:
                success_total += 1
                success_hit += matched
    inform = 100.0 * inform_hit / inform_total if inform_total else 100.0
    success = 100.0 * success_hit / success_total if success_total else 100.0
    return inform, success


# ---------------------------------------------------------------------------
# Surface metrics

_TOKEN = re.compile(r"[^\W_]+|[^\w\s]|_", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Casefolded tokens with punctuation split off as single-character
    tokens; underscores count as punctuation."""
    return _TOKEN.findall(text.casefold())


def _pooled_ngrams(tokens: Sequence[str], min_n: int, max_n: int) -> Counter:
    grams: Counter = Counter()
    for n in range(min_n, max_n + 1):
        for i in range(len(tokens) - n + 1):
            grams[tuple(tokens[i : i + n])] += 1
    return grams


def sentence_gleu(
    reference: Sequence[str], hypothesis: Sequence[str], min_n: int = 1, max_n: int = 4
) -> float:
    """GLEU for one sentence pair: clipped n-gram matches pooled over orders
    1..4, divided by the larger of the hypothesis and reference pool sizes
    (equivalently min(precision, recall)).  Two empty token lists score 1.0.
    """
    hyp_grams = _pooled_ngrams(hypothesis, min_n, max_n)
    ref_grams = _pooled_ngrams(reference, min_n, max_n)
    tp = sum((hyp_grams & ref_grams).values())
    denominator = max(sum(hyp_grams.values()), sum(ref_grams.values()))
    if denominator == 0:
        return 1.0
    return tp / denominator


def response_gleu(frames: Sequence[FrameEval]) -> float:
    """Macro-average of per-frame sentence GLEU between gold and predicted
    responses, as a fraction."""
    _require_frames(frames)
    return _mean(
        (
            sentence_gleu(tokenize(f.gold_response), tokenize(f.pred_response))
            for f in frames
        ),
        len(frames),
    )


def combined_score(inform: float, success: float, gleu: float) -> float:
    """Single headline number: (inform + success) / 2 + 100 * GLEU, with
    inform and success on the percentage scale and GLEU as a fraction."""
    return (inform + success) / 2.0 + 100.0 * gleu


# ---------------------------------------------------------------------------
# Report assembly

METRIC_FIELDS = (
    "intent_accuracy",
    "requested_slots_f1",
    "average_goal_accuracy",
    "joint_goal_accuracy",
    "average_action_accuracy",
    "joint_action_accuracy",
    "user_average_action_accuracy",
    "user_joint_action_accuracy",
    "inform",
    "success",
    "gleu",
    "combined",
)


@dataclass(frozen=True, slots=True)
class MetricBlock:
    frames: int
    dialogues: int
    intent_accuracy: float
    requested_slots_f1: float
    average_goal_accuracy: float
    joint_goal_accuracy: float
    average_action_accuracy: float
    joint_action_accuracy: float
    user_average_action_accuracy: float
    user_joint_action_accuracy: float
    inform: float
    success: float
    gleu: float
    combined: float


def compute_block(frames: Sequence[FrameEval]) -> MetricBlock:
    _require_frames(frames)
    average_goal, joint_goal = goal_accuracy(frames)
    average_action, joint_action = action_accuracy(frames, Speaker.SYSTEM)
    user_average, user_joint = action_accuracy(frames, Speaker.USER)
    inform, success = inform_success(frames)
    gleu = response_gleu(frames)
    return MetricBlock(
        frames=len(frames),
        dialogues=len({f.dialogue_id for f in frames}),
        intent_accuracy=intent_accuracy(frames),
        requested_slots_f1=requested_slots_f1(frames),
        average_goal_accuracy=average_goal,
        joint_goal_accuracy=joint_goal,
        average_action_accuracy=average_action,
        joint_action_accuracy=joint_action,
        user_average_action_accuracy=user_average,
        user_joint_action_accuracy=user_joint,
        inform=inform,
        success=success,
        gleu=gleu,
        combined=combined_score(inform, success, gleu),
    )


def turn_bucket(n_turns: int, edges: Sequence[int] = (5, 10)) -> str:
    low = 1
    for edge in edges:
        if n_turns <= edge:
            return f"{low}-{edge}"
        low = edge + 1
    return f"{low}+"


@dataclass(frozen=True, slots=True)
class EvalReport:
    overall: MetricBlock
    by_split: Mapping[str, MetricBlock] = field(default_factory=dict)
    by_turn_bucket: Mapping[str, MetricBlock] = field(default_factory=dict)
    # Expected groups (e.g. an unseen split) that received no frames.
    empty_groups: tuple[str, ...] = ()
    backend_failures: int = 0


def aggregate(
    frames: Sequence[FrameEval],
    *,
    expected_splits: Sequence[str] = (),
    bucket_edges: Sequence[int] = (5, 10),
    backend_failures: int = 0,
) -> EvalReport:
    """Build the full report: overall block, per-split blocks when frames
    carry split labels, and dialogue-length buckets.  Expected splits with no
    frames are flagged rather than silently dropped."""
    _require_frames(frames)
    split_groups: dict[str, list[FrameEval]] = {}
    for frame in frames:
        if frame.split is not None:
            split_groups.setdefault(frame.split, []).append(frame)
    bucket_groups: dict[str, list[FrameEval]] = {}
    for frame in frames:
        bucket_groups.setdefault(turn_bucket(frame.dialogue_turns, bucket_edges), []).append(frame)
    empty = tuple(s for s in expected_splits if s not in split_groups)
    return EvalReport(
        overall=compute_block(frames),
        by_split={name: compute_block(group) for name, group in sorted(split_groups.items())},
        by_turn_bucket={
            name: compute_block(group) for name, group in sorted(bucket_groups.items())
        },
        empty_groups=empty,
        backend_failures=backend_failures,
    )


def block_to_json(block: MetricBlock) -> dict:
    return {name: getattr(block, name) for name in ("frames", "dialogues", *METRIC_FIELDS)}


def report_to_json(report: EvalReport) -> dict:
    return {
        "overall": block_to_json(report.overall),
        "by_split": {k: block_to_json(v) for k, v in report.by_split.items()},
        "by_turn_bucket": {k: block_to_json(v) for k, v in report.by_turn_bucket.items()},
        "empty_groups": list(report.empty_groups),
        "backend_failures": report.backend_failures,
    }


def block_from_json(data: Mapping) -> MetricBlock:
    try:
        return MetricBlock(**{name: data[name] for name in ("frames", "dialogues", *METRIC_FIELDS)})
    except KeyError as exc:
        raise MalformedDocument(f"metric block is missing {exc}") from None


def report_from_json(data: Mapping) -> EvalReport:
    """Inverse of report_to_json, for re-rendering saved reports."""
    try:
        return EvalReport(
            overall=block_from_json(data["overall"]),
            by_split={k: block_from_json(v) for k, v in data.get("by_split", {}).items()},
            by_turn_bucket={
                k: block_from_json(v) for k, v in data.get("by_turn_bucket", {}).items()
            },
            empty_groups=tuple(data.get("empty_groups", ())),
            backend_failures=data.get("backend_failures", 0),
        )
    except KeyError as exc:
        raise MalformedDocument(f"report is missing {exc}") from None
    except (TypeError, AttributeError):
        raise MalformedDocument("not a serialized evaluation report") from None


def render_report_table(report: EvalReport) -> str:
    """Human-readable table: metrics as rows, overall plus each group as
    columns."""
    columns: list[tuple[str, MetricBlock]] = [("overall", report.overall)]
    columns.extend(report.by_split.items())
    columns.extend((f"turns {k}", v) for k, v in report.by_turn_bucket.items())
    name_width = max(len(n) for n in (*METRIC_FIELDS, "frames", "dialogues"))
    col_width = max(10, *(len(h) for h, _ in columns))
    lines = [
        " ".join(["metric".ljust(name_width)] + [h.rjust(col_width) for h, _ in columns])
    ]
    for counter in ("frames", "dialogues"):
        row = [counter.ljust(name_width)]
        row += [str(getattr(b, counter)).rjust(col_width) for _, b in columns]
        lines.append(" ".join(row))
    for metric in METRIC_FIELDS:
        row = [metric.ljust(name_width)]
        row += [f"{getattr(b, metric):.4f}".rjust(col_width) for _, b in columns]
        lines.append(" ".join(row))
    if report.empty_groups:
        lines.append(f"empty groups: {', '.join(report.empty_groups)}")
    if report.backend_failures:
        lines.append(f"backend failures: {report.backend_failures}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Schema-variant sweeps


@dataclass(frozen=True, slots=True)
class VariantSummary:
    levels: tuple[int, ...]
    mean: Mapping[str, float]
    std: Mapping[str, float]


def sgdx_aggregate(blocks: Mapping[int, MetricBlock]) -> VariantSummary:
    """Mean and population standard deviation of every metric across schema
    variant levels.  Needs at least two variants to say anything about
    spread."""
    if len(blocks) < 2:
        raise EmptyInput("variant aggregation needs at least two levels")
    levels = tuple(sorted(blocks))
    mean: dict[str, float] = {}
    std: dict[str, float] = {}
    for name in METRIC_FIELDS:
        values = [getattr(blocks[level], name) for level in levels]
        mu = math.fsum(values) / len(values)
        variance = math.fsum((v - mu) ** 2 for v in values) / len(values)
        mean[name] = mu
        std[name] = math.sqrt(variance)
    return VariantSummary(levels=levels, mean=mean, std=std)
