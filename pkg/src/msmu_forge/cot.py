"""Step-by-step rationale rewrites for reference-estimation pairs, filtered by a judge model."""

from __future__ import annotations

import logging
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

from .clients import ChatClient
from .errors import ClientError, ContractError
from .prompts import COT_GENERATION_PROMPT, COT_JUDGE_PROMPT, fill
from .qa_gen import QaPair

log = logging.getLogger(__name__)

ACCEPT_THRESHOLD = 8

_FACT_RE = re.compile(r"factual\s+consistency\s*:\s*\**\s*(yes|no)\b", re.IGNORECASE)
_LOGIC_RE = re.compile(r"logical\s+coherence\s*:\s*\**\s*(yes|no)\b", re.IGNORECASE)
_SCORE_RE = re.compile(r"score\s*:\s*\**\s*(\d+)\s*\**\s*[.,;!]*\s*(?:/\s*10\b)?", re.IGNORECASE)


@dataclass(frozen=True)
class Verdict:
    factual_consistent: bool
    logically_coherent: bool
    score: int
    parse_ok: bool = True
    reason: str = ""

    def to_dict(self) -> dict:
        return {
            "factual_consistent": self.factual_consistent,
            "logically_coherent": self.logically_coherent,
            "score": self.score,
            "parse_ok": self.parse_ok,
            "reason": self.reason,
        }


def _rejected(reason: str) -> Verdict:
    return Verdict(False, False, 0, parse_ok=False, reason=reason)


@dataclass(frozen=True)
class CotPair:
    qa_id: str
    rewrite: str
    verdict: Verdict
    accepted: bool

    def __post_init__(self) -> None:
        v = self.verdict
        if self.accepted and not (v.parse_ok and v.factual_consistent and v.logically_coherent):
            raise ContractError(f"{self.qa_id}: accepted pair must pass both judge checks")

    def to_dict(self) -> dict:
        return {"qa_id": self.qa_id, "rewrite": self.rewrite, "verdict": self.verdict.to_dict(), "accepted": self.accepted}


def parse_verdict(text: str) -> Verdict:
    """Read the three judge fields; case-insensitive, trailing punctuation tolerated."""
    f = _FACT_RE.search(text or "")
    g = _LOGIC_RE.search(text or "")
    s = _SCORE_RE.search(text or "")
    missing = [name for name, m in (("factual consistency", f), ("logical coherence", g), ("score", s)) if m is None]
    if missing:
        return _rejected("parse failure: missing " + ", ".join(missing))
    score = int(s.group(1))
    if not 0 <= score <= 10:
        return _rejected(f"parse failure: score {score} outside 0..10")
    return Verdict(f.group(1).lower() == "yes", g.group(1).lower() == "yes", score)


def is_accepted(v: Verdict, threshold: int = ACCEPT_THRESHOLD) -> bool:
    return v.parse_ok and v.factual_consistent and v.logically_coherent and v.score >= threshold


def _image_bytes(image: str | os.PathLike | bytes | None) -> bytes | None:
    if image is None or isinstance(image, bytes):
        return image
    return Path(image).read_bytes()


def augment(pair: QaPair, image: str | os.PathLike | bytes | None, gen: ChatClient) -> str | None:
    """Generator rewrite of ``pair``'s answer, or None when the call fails or returns nothing."""
    if pair.category != "reference_estimation":
        raise ContractError(f"{pair.qa_id}: CoT applies to reference_estimation pairs only")
    # the prompt already ends "[A]." so a trailing period on the answer would double up
    prompt = fill(COT_GENERATION_PROMPT, Q=pair.question, A=pair.answer.rstrip().rstrip("."))
    try:
        text = gen.complete(prompt, image=_image_bytes(image))
    except ClientError as exc:
        log.warning("%s: CoT generation skipped: %s", pair.qa_id, exc)
        return None
    if not text.strip():
        log.warning("%s: CoT generation returned an empty rewrite; skipped", pair.qa_id)
        return None
    return text


def judge(original: QaPair, rewrite: str, judge_client: ChatClient) -> Verdict:
    if not rewrite.strip():
        raise ContractError("rewrite must be nonempty")
    prompt = fill(
        COT_JUDGE_PROMPT,
        Original_Question=original.question,
        Original_Answer=original.answer,
        Generated_Question=original.question,
        Generated_Answer=rewrite,
    )
    try:
        text = judge_client.complete(prompt)
    except ClientError as exc:
        log.warning("%s: judge call failed: %s", original.qa_id, exc)
        return _rejected(f"judge call failed: {exc}")
    v = parse_verdict(text)
    if not v.parse_ok:
        log.warning("%s: %s; raw judge output: %r", original.qa_id, v.reason, text)
    return v


def run_cot(
    pairs: Iterable[QaPair],
    image_for: Callable[[QaPair], str | os.PathLike | bytes | None],
    gen: ChatClient,
    judge_client: ChatClient,
    accept_threshold: int = ACCEPT_THRESHOLD,
    max_workers: int = 4,
) -> list[CotPair]:
    """Augment and judge every reference-estimation pair. Output sorted by qa_id; skipped pairs are omitted."""
    todo = sorted((p for p in pairs if p.category == "reference_estimation"), key=lambda p: p.qa_id)

    def one(p: QaPair) -> CotPair | None:
        rw = augment(p, image_for(p), gen)
        if rw is None:
            return None
        v = judge(p, rw, judge_client)
        return CotPair(p.qa_id, rw, v, is_accepted(v, accept_threshold))

    if not todo:
        return []
    with ThreadPoolExecutor(max_workers=max(1, max_workers)) as ex:
        results = list(ex.map(one, todo))
    return [r for r in results if r is not None]
