"""Benchmark scoring: number extraction, delta-ratio thresholds, 0/1 judging, aggregation.

Quantitative items pass when every paired prediction is within a factor of
``threshold`` of the truth, ``delta = max(pred / truth, truth / pred)``.
Qualitative items are marked 0 or 1, either by a judge model or by a local
keyword rule.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Iterable

from .clients import ChatClient
from .errors import ClientError
from .prompts import EXTRACTION_PROMPT, QUALITATIVE_PROMPT, fill
from .qa_gen import ABSENT, QaPair
from .templates import CATEGORIES

log = logging.getLogger(__name__)

BENCH_THRESHOLDS = {"msmu": 1.25, "spatialrgpt": 1.25, "qspatial": 2.0}

# meters per unit
UNIT_TABLE = {
    "inch": 0.0254,
    "foot": 0.3048,
    "cm": 0.01,
    "mm": 0.001,
    "m": 1.0,
}

_UNIT_ALIASES = {
    "centimeters": "cm", "centimeter": "cm", "centimetres": "cm", "centimetre": "cm", "cm": "cm",
    "millimeters": "mm", "millimeter": "mm", "millimetres": "mm", "millimetre": "mm", "mm": "mm",
    "meters": "m", "meter": "m", "metres": "m", "metre": "m", "m": "m",
    "inches": "inch", "inch": "inch", '"': "inch", "″": "inch",
    "feet": "foot", "foot": "foot", "ft": "foot", "'": "foot", "′": "foot",
}
_UNIT_PATTERN = "|".join(sorted((re.escape(u) for u in _UNIT_ALIASES), key=len, reverse=True))
_NUMBER_RE = re.compile(
    r"(?<![\w.])(\d+(?:\.\d+)?|\.\d+)(?!\.\d)(?!st\b|nd\b|rd\b|th\b)"
    rf"(?:\s*(?P<unit>{_UNIT_PATTERN})(?![A-Za-z]))?",
    re.IGNORECASE,
)
_DIM_SEP_RE = re.compile(r"^\s*(?:x|×|\*|by)\s*$", re.IGNORECASE)
_FEET_INCH_JOIN_RE = re.compile(r"^\s*(?:and\s+)?$", re.IGNORECASE)


@dataclass(frozen=True)
class _Tok:
    value: float
    unit: str | None
    start: int
    end: int


def _tokens(text: str) -> list[_Tok]:
    toks = []
    for m in _NUMBER_RE.finditer(text):
        unit = m.group("unit")
        toks.append(_Tok(float(m.group(1)), _UNIT_ALIASES[unit.lower()] if unit else None, m.start(), m.end()))
    # "0.8 x 0.6 x 0.5 m": bare dimensions take the unit that closes the chain
    for i in range(len(toks) - 2, -1, -1):
        t, nxt = toks[i], toks[i + 1]
        if t.unit is None and nxt.unit is not None and _DIM_SEP_RE.match(text[t.end : nxt.start]):
            toks[i] = _Tok(t.value, nxt.unit, t.start, t.end)
    return toks


def extract_numbers_local(response: str, question: str | None = None) -> list[float]:
    """Numbers in ``response`` converted to meters, in order of appearance.

    Unitless numbers (counts, coordinates) are returned as written. "5 feet 3
    inches" is read as one length. When ``question`` is given, values the
    response merely repeats from the question (a stated reference scale) are
    dropped, as long as at least one number remains.
    """
    if not response:
        return []
    toks = _tokens(response)
    values: list[float] = []
    units: list[str | None] = []
    i = 0
    while i < len(toks):
        t = toks[i]
        v = t.value * UNIT_TABLE[t.unit] if t.unit else t.value
        if (
            t.unit == "foot"
            and i + 1 < len(toks)
            and toks[i + 1].unit == "inch"
            and _FEET_INCH_JOIN_RE.match(response[t.end : toks[i + 1].start])
        ):
            v += toks[i + 1].value * UNIT_TABLE["inch"]
            i += 1
        values.append(v)
        units.append(t.unit)
        i += 1
    if question:
        given = [(t.value * UNIT_TABLE[t.unit], t.unit) for t in _tokens(question) if t.unit]
        for gv, _ in given:
            if len(values) <= 1:
                break
            for j, (v, u) in enumerate(zip(values, units)):
                if u is not None and math.isclose(v, gv, rel_tol=1e-9, abs_tol=1e-12):
                    del values[j]
                    del units[j]
                    break
    return values


def delta_ratio(pred: float, truth: float) -> float:
    """max(pred/truth, truth/pred); 1 when both are zero, inf when only one is non-positive."""
    if pred <= 0 or truth <= 0:
        return 1.0 if pred == 0 and truth == 0 else math.inf
    return max(pred / truth, truth / pred)


@dataclass(frozen=True)
class QuantScore:
    deltas: tuple[float, ...]
    passed: bool


def score_quantitative(truth: list[float], pred: list[float], threshold: float) -> QuantScore:
    if not threshold > 1:
        raise ValueError(f"threshold must be > 1, got {threshold}")
    deltas = tuple(delta_ratio(p, t) for t, p in zip(truth, pred))
    ok = len(truth) == len(pred) and len(truth) > 0 and all(d <= threshold for d in deltas)
    return QuantScore(deltas, ok)


_DIRECTIONS = {
    "left": "right", "right": "left",
    "above": "below", "below": "above",
    "front": "behind", "behind": "front",
}
_NEGATIONS = {"no", "not", "none", "cannot", "can't", "isn't", "nothing", "absent", "doesn't", "without"}
_STOP = {
    "the", "a", "an", "is", "are", "it", "that", "this", "so", "yes", "indeed", "more", "closer", "taller",
    "lower", "tallest", "lowest", "larger", "smaller", "higher", "stands", "of", "to", "in", "image", "than",
    "one", "which", "and", "on", "side", "positioned", "located", "at", "be", "object",
}
_WORD_RE = re.compile(r"[a-z0-9']+")


def _words(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def infer_decisive(truth: str) -> str:
    words = _words(truth)
    for w in words:
        if w in _DIRECTIONS:
            return w
    if words and words[0] in ("no", "there", "can") and any(w in _NEGATIONS for w in words):
        return ABSENT
    content = [w for w in words if w not in _STOP]
    return " ".join(content)


def local_mark(truth: str, response: str, decisive: str | None = None) -> int:
    if not response or not response.strip():
        return 0
    key = decisive if decisive is not None else infer_decisive(truth)
    resp_words = _words(response)
    rset = set(resp_words)
    if key == ABSENT:
        return int(bool(rset & _NEGATIONS))
    if key in _DIRECTIONS:
        return int(key in rset and _DIRECTIONS[key] not in rset)
    content = [w for w in _words(key) if w not in _STOP]
    if not content:
        return 0
    return int(all(w in rset for w in content))


_MARK_RE = re.compile(r"your_mark\"?\s*[:=]\s*\"?([01](?:\.0+)?)\b", re.IGNORECASE)


def parse_mark(text: str) -> int | None:
    m = _MARK_RE.search(text or "")
    return int(float(m.group(1))) if m else None


def score_qualitative(question: str, truth: str, response: str, judge: ChatClient | None = None, decisive: str | None = None) -> float | None:
    """1/0 mark, or None when the judge could not be parsed twice (item left unscored)."""
    if not response or not response.strip():
        return 0.0
    if judge is None:
        return float(local_mark(truth, response, decisive))
    prompt = fill(QUALITATIVE_PROMPT, Question=question, Answer=truth, Response=response)
    for attempt in range(2):
        try:
            mark = parse_mark(judge.complete(prompt))
        except ClientError as exc:
            log.warning("judge call failed: %s", exc)
            return None
        if mark is not None:
            return float(mark)
        log.warning("unparseable judge output (attempt %d)", attempt + 1)
    return None


_RESP_RE = re.compile(r"response_in_meters\"?\s*:\s*(\[[^\]]*\]|-?\d+(?:\.\d+)?)", re.IGNORECASE)


def parse_extraction(text: str) -> list[float] | None:
    m = _RESP_RE.search(text or "")
    if not m:
        return None
    raw = m.group(1)
    try:
        val = json.loads(raw)
    except ValueError:
        return None
    vals = val if isinstance(val, list) else [val]
    try:
        return [float(v) for v in vals]
    except (TypeError, ValueError):
        return None


def extract_numbers_llm(question: str, answer: str, response: str, client: ChatClient) -> list[float] | None:
    prompt = fill(EXTRACTION_PROMPT, Question=question, Answer=answer, Pred=response)
    for _ in range(2):
        try:
            got = parse_extraction(client.complete(prompt))
        except ClientError as exc:
            log.warning("extraction call failed: %s", exc)
            return None
        if got is not None:
            return got
    return None


@dataclass(frozen=True)
class ScoreConfig:
    threshold: float = 1.25
    extraction: str = "local"  # local | llm
    judging: str = "local"  # local | llm

    def __post_init__(self) -> None:
        if not self.threshold > 1:
            raise ValueError("threshold must be > 1")
        if self.extraction not in ("local", "llm") or self.judging not in ("local", "llm"):
            raise ValueError("extraction and judging must be 'local' or 'llm'")


@dataclass
class EvalRecord:
    qa_id: str
    category: str
    quantitative: bool
    truth: list[float]
    response: str
    extracted: list[float] = field(default_factory=list)
    deltas: list[float] = field(default_factory=list)
    passed: bool | None = None
    score: float | None = None  # 1/0 for quantitative, judge mark for qualitative; None = unscored

    def to_dict(self) -> dict:
        return {
            "qa_id": self.qa_id,
            "category": self.category,
            "quantitative": self.quantitative,
            "truth": self.truth,
            "response": self.response,
            "extracted": self.extracted,
            "deltas": [d if math.isfinite(d) else None for d in self.deltas],
            "passed": self.passed,
            "score": self.score,
        }


def evaluate_pair(pair: QaPair, response: str, cfg: ScoreConfig, judge: ChatClient | None = None, extractor: ChatClient | None = None) -> EvalRecord:
    rec = EvalRecord(pair.qa_id, pair.category, pair.is_quantitative, pair.truth_values(), response or "")
    if pair.is_quantitative:
        pred = None
        if cfg.extraction == "llm" and extractor is not None:
            pred = extract_numbers_llm(pair.question, pair.answer, rec.response, extractor)
            if pred is None:
                log.warning("%s: LLM extraction failed; using local extractor", pair.qa_id)
        if pred is None:
            pred = extract_numbers_local(rec.response, pair.question)
        s = score_quantitative(rec.truth, pred, cfg.threshold)
        rec.extracted = list(pred)
        rec.deltas = list(s.deltas)
        rec.passed = s.passed
        rec.score = 1.0 if s.passed else 0.0
    else:
        mark = score_qualitative(pair.question, pair.answer, rec.response, judge if cfg.judging == "llm" else None, pair.decisive)
        rec.score = mark
        rec.passed = None if mark is None else mark >= 0.5
        if mark is None:
            log.warning("%s: judge output unparseable; item excluded", pair.qa_id)
    return rec


def evaluate(pairs: Iterable[QaPair], predictions: dict[str, str], cfg: ScoreConfig | None = None, judge: ChatClient | None = None, extractor: ChatClient | None = None) -> list[EvalRecord]:
    cfg = cfg or ScoreConfig()
    records = []
    for p in sorted(pairs, key=lambda p: p.qa_id):
        if p.qa_id not in predictions:
            log.warning("%s: no prediction; scored as empty response", p.qa_id)
        records.append(evaluate_pair(p, predictions.get(p.qa_id, ""), cfg, judge, extractor))
    return records


@dataclass
class Report:
    rates: dict[str, float | None]  # percent, per category
    counts: dict[str, int]  # scored items
    unscored: dict[str, int]
    average: float | None  # unweighted mean of category rates
    micro: float | None  # item-weighted
    threshold: float | None = None

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "categories": {
                c: {"success_rate": self.rates[c], "n": self.counts[c], "unscored": self.unscored[c]} for c in CATEGORIES
            },
            "Average": self.average,
            "item_weighted": self.micro,
        }

    def to_text(self) -> str:
        heads = ["Existence", "Counting", "Scale Est.", "Grounding", "Rel. Pos.", "Abs. Dist.", "Scale Comp.", "Ref. Est.", "Average"]
        cells = [("n/a" if self.rates[c] is None else f"{self.rates[c]:.2f}") for c in CATEGORIES]
        cells.append("n/a" if self.average is None else f"{self.average:.2f}")
        w = [max(len(h), len(c)) for h, c in zip(heads, cells)]
        line1 = " | ".join(h.rjust(n) for h, n in zip(heads, w))
        line2 = " | ".join(c.rjust(n) for c, n in zip(cells, w))
        return f"{line1}\n{'-' * len(line1)}\n{line2}"


def aggregate(records: Iterable[EvalRecord], threshold: float | None = None) -> Report:
    scores: dict[str, list[float]] = {c: [] for c in CATEGORIES}
    unscored = {c: 0 for c in CATEGORIES}
    for r in records:
        if r.score is None:
            unscored[r.category] += 1
        else:
            scores[r.category].append(r.score)
    rates: dict[str, float | None] = {}
    raw: list[float] = []
    for c in CATEGORIES:
        if scores[c]:
            v = 100.0 * sum(scores[c]) / len(scores[c])
            raw.append(v)
            rates[c] = round(v, 2)
        else:
            rates[c] = None
    all_scores = [s for c in CATEGORIES for s in scores[c]]
    return Report(
        rates=rates,
        counts={c: len(scores[c]) for c in CATEGORIES},
        unscored=unscored,
        average=round(sum(raw) / len(raw), 2) if raw else None,
        micro=round(100.0 * sum(all_scores) / len(all_scores), 2) if all_scores else None,
        threshold=threshold,
    )
