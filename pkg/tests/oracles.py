"""Independent brute-force re-implementations of every metric.

These exist to catch bugs in the real implementations, so they share no
code with the package: normalization, matching, and aggregation are all
written again from the definitions, in the most literal way possible, with
no attention to speed.
"""

from __future__ import annotations

import itertools
import re
import unicodedata
from collections import Counter
from fractions import Fraction
from statistics import mean


def norm(text: str) -> str:
    text = unicodedata.normalize("NFC", text)
    text = " ".join(text.split())
    return text.casefold()


def value_hit(pred_values, gold_values) -> bool:
    """Any normalized predicted value among the normalized gold values;
    two empty sets agree."""
    p = {norm(v) for v in pred_values}
    g = {norm(v) for v in gold_values}
    if not p and not g:
        return True
    return bool(p & g)


# -- state metrics ----------------------------------------------------------


def o_intent_accuracy(frames) -> float:
    hits = [1 if f.pred_state.active_intent == f.gold_state.active_intent else 0 for f in frames]
    return float(mean(hits))


def o_requested_f1(frames) -> float:
    scores = []
    for f in frames:
        gold = set(f.gold_state.requested_slots)
        pred = set(f.pred_state.requested_slots)
        if not gold and not pred:
            scores.append(1.0)
            continue
        tp = len(gold & pred)
        precision = tp / len(pred) if pred else 0.0
        recall = tp / len(gold) if gold else 0.0
        if precision + recall == 0:
            scores.append(0.0)
        else:
            scores.append(2 * precision * recall / (precision + recall))
    return float(mean(scores))


def o_goal_accuracy(frames) -> tuple[float, float]:
    averages = []
    joints = []
    for f in frames:
        gold = {(d, s): vs for d, s, vs in f.gold_state.slot_values}
        pred = {(d, s): vs for d, s, vs in f.pred_state.slot_values}
        if gold:
            correct = sum(
                1 for key, vs in gold.items() if key in pred and value_hit(pred[key], vs)
            )
            averages.append(Fraction(correct, len(gold)))
        else:
            averages.append(Fraction(1))
        joint = set(gold) == set(pred) and all(
            value_hit(pred[key], gold[key]) for key in gold
        )
        joints.append(1 if joint else 0)
    return float(mean(averages)), float(mean(joints))


# -- action metrics ---------------------------------------------------------


def act_key(act):
    return (act.domain, act.act_type, act.slot or "")


def act_matched(gold_act, pred_acts) -> bool:
    return any(
        act_key(p) == act_key(gold_act) and value_hit(p.values, gold_act.values)
        for p in pred_acts
    )


def o_action_accuracy(frames, actor: str) -> tuple[float, float]:
    averages = []
    joints = []
    for f in frames:
        if actor == "USER":
            gold, pred = f.gold_user_actions.acts, f.pred_user_actions.acts
        else:
            gold, pred = f.gold_system_actions.acts, f.pred_system_actions.acts
        if gold:
            correct = sum(1 for g in gold if act_matched(g, pred))
            averages.append(Fraction(correct, len(gold)))
        else:
            averages.append(Fraction(1))
        gold_keys = {(g.domain, g.act_type, g.slot or "", frozenset(norm(v) for v in g.values)) for g in gold}
        pred_keys = {(p.domain, p.act_type, p.slot or "", frozenset(norm(v) for v in p.values)) for p in pred}
        joints.append(1 if gold_keys == pred_keys else 0)
    return float(mean(averages)), float(mean(joints))


def o_inform_success(frames) -> tuple[float, float]:
    inform_total = inform_hit = 0
    success_total = success_hit = 0
    for f in frames:
        requested = set(f.gold_state.requested_slots)
        for g in f.gold_system_actions.acts:
            if g.act_type in ("INFORM", "INFORM_COUNT"):
                inform_total += 1
                if act_matched(g, f.pred_system_actions.acts):
                    inform_hit += 1
            if g.slot and (g.domain, g.slot) in requested:
                success_total += 1
                if act_matched(g, f.pred_system_actions.acts):
                    success_hit += 1
    inform = 100.0 * inform_hit / inform_total if inform_total else 100.0
    success = 100.0 * success_hit / success_total if success_total else 100.0
    return inform, success


# -- surface metrics --------------------------------------------------------


_TOKEN = re.compile(r"[^\W_]+|[^\w\s]|_")


def o_tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.casefold())


def ngrams(tokens, n):
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def o_gleu(pred: str, gold: str) -> float:
    pred_tokens = o_tokenize(pred)
    gold_tokens = o_tokenize(gold)
    matches = 0
    pred_total = 0
    gold_total = 0
    for n in (1, 2, 3, 4):
        pred_counts = Counter(ngrams(pred_tokens, n))
        gold_counts = Counter(ngrams(gold_tokens, n))
        matches += sum(min(pred_counts[g], c) for g, c in gold_counts.items())
        pred_total += sum(pred_counts.values())
        gold_total += sum(gold_counts.values())
    if pred_total == 0 and gold_total == 0:
        return 1.0
    precision = matches / pred_total if pred_total else 0.0
    recall = matches / gold_total if gold_total else 0.0
    return min(precision, recall)


def o_response_gleu(frames) -> float:
    return float(mean(o_gleu(f.pred_response, f.gold_response) for f in frames))


def o_combined(inform: float, success: float, gleu: float) -> float:
    return (inform + success) * 0.5 + 100.0 * gleu


# -- db query ---------------------------------------------------------------


def o_db_filter(records, constraints) -> list:
    """constraints: mapping slot -> acceptable values (already domain-local)."""
    kept = []
    for record in records:
        ok = True
        for slot, values in constraints.items():
            normed = {norm(v) for v in values}
            if normed <= {"dontcare"}:
                continue
            if slot not in record:
                continue
            if norm(record[slot]) not in normed:
                ok = False
                break
        if ok:
            kept.append(record)
    return kept


# -- mean / std across variant levels ---------------------------------------


def o_mean_std(values) -> tuple[float, float]:
    mu = sum(values) / len(values)
    var = sum((v - mu) ** 2 for v in values) / len(values)
    return mu, var**0.5
