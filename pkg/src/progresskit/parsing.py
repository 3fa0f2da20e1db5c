"""Extract structured predictions from raw model text.

The full schema expects exactly one of each tag, in order:
``<ref_think> <ref> <score_think> <score>``. The direct schema requires only
``<score>``. Parsing is total: any input yields a ParsedPrediction, with
problems enumerated as violation codes. Violations flip ``format_ok``; notes
(lossless normalizations) do not.
"""

from __future__ import annotations

import re
from typing import NamedTuple

from .model import ABSTAIN, MALFORMED, ParsedPrediction, Sentinel

SCHEMA_FULL = "full"
SCHEMA_DIRECT = "direct"

FULL_TAGS = ("ref_think", "ref", "score_think", "score")

_ABSTAIN_LITERALS = {"n/a", "na"}
_NUMBER_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)\s*%?$")
_REF_PREFIX_RE = re.compile(r"^(no\.?|step|state|#)\s*", re.IGNORECASE)
_INT_RE = re.compile(r"^\d+$")


class ScoreParse(NamedTuple):
    value: float | Sentinel
    violations: list[str]
    notes: list[str]


class RefParse(NamedTuple):
    value: int | Sentinel
    violations: list[str]


def parse_score_literal(s: str) -> ScoreParse:
    """Parse a score tag's content into a percent in [0, 100], ABSTAIN, or MALFORMED.

    Bare decimals in (0, 1] without a percent sign are read as fractions and
    scaled by 100 (recorded as a FractionReinterpreted note); out-of-range
    values are clamped and flagged. An integer "1" means 1 percent.
    """
    text = s.strip()
    if text.lower() in _ABSTAIN_LITERALS:
        return ScoreParse(ABSTAIN, [], [])
    if not _NUMBER_RE.match(text):
        return ScoreParse(MALFORMED, ["MalformedScore"], [])
    has_percent = text.endswith("%")
    number = text.rstrip("%").strip()
    value = float(number)
    notes: list[str] = []
    if not has_percent and "." in number and 0.0 < value <= 1.0:
        value *= 100.0
        notes.append("FractionReinterpreted")
    violations: list[str] = []
    if value < 0.0 or value > 100.0:
        value = min(max(value, 0.0), 100.0)
        violations.append("OutOfRangeClamped")
    return ScoreParse(value, violations, notes)


def parse_ref_literal(s: str, n_steps: int | None = None) -> RefParse:
    """Parse a reference tag's content into a 1-based step ordinal, ABSTAIN, or MALFORMED.

    Tolerates prefixes like "No." or "Step"; integers outside [1, n_steps]
    are MALFORMED with a RefOutOfRange violation.
    """
    text = s.strip()
    if text.lower() in _ABSTAIN_LITERALS:
        return RefParse(ABSTAIN, [])
    text = _REF_PREFIX_RE.sub("", text).strip()
    if not _INT_RE.match(text):
        return RefParse(MALFORMED, ["MalformedRef"])
    value = int(text)
    upper = n_steps if n_steps is not None else None
    if value < 1 or (upper is not None and value > upper):
        return RefParse(MALFORMED, [f"RefOutOfRange({value})"])
    return RefParse(value, [])


class _TagScan(NamedTuple):
    content: str | None  # first closed occurrence, stripped; None if absent/unclosed
    first_pos: int | None  # start offset of the first closed occurrence
    n_pairs: int
    n_opens: int


def _scan_tag(raw: str, tag: str) -> _TagScan:
    opens = len(re.findall(f"<{tag}>", raw))
    pairs = list(re.finditer(f"<{tag}>(.*?)</{tag}>", raw, re.DOTALL))
    if not pairs:
        return _TagScan(None, None, 0, opens)
    return _TagScan(pairs[0].group(1).strip(), pairs[0].start(), len(pairs), opens)


def parse_response(
    raw: str, schema: str = SCHEMA_FULL, n_steps: int | None = None
) -> ParsedPrediction:
    """Parse raw model text against the four-tag (or direct) schema. Never raises.

    Text outside tags (markdown fences, preamble chatter) is ignored; when a
    tag repeats, the first occurrence wins. Contradictory abstention (one of
    ref/score is "n/a" while the other is numeric) keeps both literal values
    and records an InconsistentAbstention note.
    """
    if schema not in (SCHEMA_FULL, SCHEMA_DIRECT):
        raise ValueError(f"unknown schema {schema!r}")
    required = FULL_TAGS if schema == SCHEMA_FULL else ("score",)
    scans = {tag: _scan_tag(raw, tag) for tag in FULL_TAGS}

    violations: list[str] = []
    notes: list[str] = []
    for tag in required:
        scan = scans[tag]
        if scan.n_opens == 0 and scan.n_pairs == 0:
            violations.append(f"MissingTag({tag})")
            continue
        if scan.n_pairs == 0:
            violations.append(f"UnclosedTag({tag})")
            continue
        if scan.n_pairs > 1:
            violations.append(f"DuplicateTag({tag})")
        elif scan.n_opens > scan.n_pairs:
            violations.append(f"UnclosedTag({tag})")
    ordered_positions = [
        scans[tag].first_pos for tag in required if scans[tag].first_pos is not None
    ]
    if any(b <= a for a, b in zip(ordered_positions, ordered_positions[1:])):
        violations.append("MisorderedTags")

    ref_think = scans["ref_think"].content or ""
    score_think = scans["score_think"].content or ""

    ref: int | Sentinel = MALFORMED
    if scans["ref"].content is not None:
        ref_parse = parse_ref_literal(scans["ref"].content, n_steps)
        ref = ref_parse.value
        if "ref" in required:
            violations.extend(ref_parse.violations)

    score: float | Sentinel = MALFORMED
    if scans["score"].content is not None:
        score_parse = parse_score_literal(scans["score"].content)
        score = score_parse.value
        violations.extend(score_parse.violations)
        notes.extend(score_parse.notes)

    if (ref is ABSTAIN) != (score is ABSTAIN) and MALFORMED not in (ref, score):
        if schema == SCHEMA_FULL:
            notes.append("InconsistentAbstention")

    return ParsedPrediction(
        ref_think=ref_think,
        ref=ref,
        score_think=score_think,
        score=score,
        format_ok=not violations,
        format_violations=tuple(violations),
        notes=tuple(notes),
        raw_text=raw,
    )


def format_score(value: float | Sentinel) -> str:
    """Render a score the way compliant responses write it: "76%", "37.5%", or "n/a"."""
    if value is ABSTAIN:
        return "n/a"
    if isinstance(value, Sentinel):
        raise ValueError(f"cannot render sentinel {value!r} as a score")
    if float(value).is_integer():
        return f"{int(value)}%"
    return f"{value:g}%"


def format_ref(value: int | Sentinel) -> str:
    if value is ABSTAIN:
        return "n/a"
    if isinstance(value, Sentinel):
        raise ValueError(f"cannot render sentinel {value!r} as a reference")
    return str(value)


def render_prediction(pred: ParsedPrediction) -> str:
    """Render a prediction back to tagged text; re-parsing yields an equal prediction."""
    return (
        f"<ref_think>{pred.ref_think}</ref_think>\n"
        f"<ref>{format_ref(pred.ref)}</ref>\n"
        f"<score_think>{pred.score_think}</score_think>\n"
        f"<score>{format_score(pred.score)}</score>"
    )
