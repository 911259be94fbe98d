"""Entity and relation scoring with exact boundary/type matching."""

from collections import defaultdict
from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class PRF:
    precision: float
    recall: float
    f1: float
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @classmethod
    def from_counts(cls, tp, fp, fn):
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        return cls(p, r, f, tp, fp, fn)

    def to_json(self):
        return {"p": self.precision, "r": self.recall, "f1": self.f1, "tp": self.tp, "fp": self.fp, "fn": self.fn}


def _entity_keys(sentences_spans):
    return {(k, e.begin, e.end, e.type) for k, spans in enumerate(sentences_spans) for e in spans}


def _relation_keys(sentences_rels, strict):
    keys = set()
    for k, rels in enumerate(sentences_rels):
        for r in rels:
            h, t = r.head, r.tail
            key = (k, h.begin, h.end, t.begin, t.end, r.type)
            if strict:
                key += (h.type, t.type)
            keys.add(key)
    return keys


def _score(pred, gold, average, type_of):
    if average == "micro":
        tp = len(pred & gold)
        return PRF.from_counts(tp, len(pred) - tp, len(gold) - tp)
    if average != "macro":
        raise ValueError(f"average must be micro or macro, got {average!r}")
    by_type = defaultdict(lambda: [set(), set()])
    for key in pred:
        by_type[type_of(key)][0].add(key)
    for key in gold:
        by_type[type_of(key)][1].add(key)
    scores = []
    tp_all = fp_all = fn_all = 0
    for p, g in by_type.values():
        tp = len(p & g)
        tp_all, fp_all, fn_all = tp_all + tp, fp_all + len(p) - tp, fn_all + len(g) - tp
        scores.append(PRF.from_counts(tp, len(p) - tp, len(g) - tp))
    if not scores:
        return PRF(0.0, 0.0, 0.0)
    return PRF(
        float(np.mean([s.precision for s in scores])),
        float(np.mean([s.recall for s in scores])),
        float(np.mean([s.f1 for s in scores])),
        tp_all, fp_all, fn_all,
    )


def score_ner(pred, gold, average="micro"):
    """``pred``/``gold``: per-sentence lists of EntitySpan."""
    return _score(_entity_keys(pred), _entity_keys(gold), average, lambda k: k[3])


def score_re(pred, gold, strict=False, average="micro"):
    """``pred``/``gold``: per-sentence lists of Relation.  Order of head/tail matters."""
    return _score(_relation_keys(pred, strict), _relation_keys(gold, strict), average, lambda k: k[5])


def score_report(pred_entities, gold_entities, pred_relations, gold_relations):
    report = {}
    for avg in ("micro", "macro"):
        report[avg] = {
            "ner": score_ner(pred_entities, gold_entities, avg).to_json(),
            "re": score_re(pred_relations, gold_relations, False, avg).to_json(),
            "re_plus": score_re(pred_relations, gold_relations, True, avg).to_json(),
        }
    return {task: {avg: report[avg][task] for avg in report} for task in ("ner", "re", "re_plus")}


def kfold(results):
    """Mean of per-fold (or per-run) score reports; nested dicts of numbers are averaged leafwise."""
    results = list(results)
    if not results:
        raise ValueError("no results to aggregate")
    first = results[0]
    if isinstance(first, PRF):
        return PRF(*(float(np.mean([asdict(r)[f] for r in results])) for f in ("precision", "recall", "f1")))
    if isinstance(first, dict):
        return {k: kfold([r[k] for r in results]) for k in first}
    return float(np.mean(results))
