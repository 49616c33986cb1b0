"""High-level prioritization: prompts, backends, and plan parsing.

Backends share one contract: given a prompt bundle describing the detected
pools, produce an ordered priority plan. The rule backend encodes the
operator guideline (bleeding first, size next, clot last); the random
backend is a seeded permutation; the none backend emits the full-mask
sentinel so the controller sees the whole scene.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import ParseError, TransportError
from .perception import AnnotatedImage, PoolObservation


def _template(name: str) -> str:
    return resources.files("suctionsim.templates").joinpath(name).read_text().strip()


def base_prompt_text() -> str:
    return _template("base_prompt.txt")


def guideline_text() -> str:
    return _template("guideline.txt")


def system_text() -> str:
    return _template("system.txt")


@dataclass(frozen=True)
class PoolFacts:
    label: str
    area: int
    size_rank: int  # 1 = largest
    bleeding: bool
    clot: bool
    tool_adjacent: bool

    @classmethod
    def from_pool(cls, pool: PoolObservation, rank: int) -> "PoolFacts":
        return cls(pool.label, pool.area, rank, pool.bleeding, pool.clot, pool.tool_adjacent)


@dataclass(frozen=True)
class PromptBundle:
    base_text: str
    pools: tuple[PoolFacts, ...]
    context: str | None = None
    image: AnnotatedImage | None = None

    @property
    def known_labels(self) -> tuple[str, ...]:
        return tuple(p.label for p in self.pools)

    @property
    def user_text(self) -> str:
        lines = [self.base_text, ""]
        for p in self.pools:
            bits = [f"{p.label}: size rank {p.size_rank} of {len(self.pools)}"]
            if p.bleeding:
                bits.append("active bleeding")
            if p.clot:
                bits.append("blood clot present")
            if p.tool_adjacent:
                bits.append("instrument nearby")
            lines.append(", ".join(bits))
        if self.context:
            lines += ["", self.context]
        return "\n".join(lines)


def build_prompt(
    pools: list[PoolObservation],
    context: str | None = None,
    image: AnnotatedImage | None = None,
) -> PromptBundle:
    """Base text plus one factual line per pool; context appended verbatim."""
    if not pools:
        raise ValueError("build_prompt needs at least one pool")
    order = sorted(pools, key=lambda p: (-p.area, p.label))
    ranks = {p.label: r + 1 for r, p in enumerate(order)}
    facts = tuple(PoolFacts.from_pool(p, ranks[p.label]) for p in pools)
    return PromptBundle(base_prompt_text(), facts, context=context, image=image)


@dataclass(frozen=True)
class PriorityPlan:
    labels: tuple[str, ...]
    rationales: dict = field(default_factory=dict)
    provenance: str = "RULE"  # LLM_WOC | LLM_WC | RULE | RANDOM | NONE | OPERATOR
    raw_response: str | None = None
    full_mask: bool = False

    def validate(self, known_labels) -> None:
        known = set(known_labels)
        if self.full_mask:
            if self.labels:
                raise ParseError("full-mask sentinel plan must carry no ordering")
            return
        if len(set(self.labels)) != len(self.labels):
            raise ParseError(f"duplicate labels in plan {self.labels}")
        unknown = [l for l in self.labels if l not in known]
        if unknown:
            raise ParseError(f"plan references unknown pools {unknown}")
        if not self.labels:
            raise ParseError("empty plan")


FULL_MASK_SENTINEL = PriorityPlan(labels=(), provenance="NONE", full_mask=True)


def _rule_order(pools: tuple[PoolFacts, ...], clot_first: bool = False) -> list[PoolFacts]:
    if clot_first:
        key = lambda p: (not p.bleeding, not p.clot, -p.area, p.label)
    else:
        key = lambda p: (not p.bleeding, p.clot, -p.area, p.label)
    return sorted(pools, key=key)


def _rule_rationale(p: PoolFacts) -> str:
    if p.bleeding:
        return "active bleeding takes precedence"
    if p.clot:
        return "coagulated pool deferred to last"
    return f"size rank {p.size_rank}"


class RuleBackend:
    """Deterministic guideline ordering; `clot_first` mirrors the
    uncontexted tendency to tackle the clot pool early."""

    needs_image = False

    def __init__(self, clot_first: bool = False):
        self.clot_first = clot_first

    def plan(self, bundle: PromptBundle, seed: int = 0) -> PriorityPlan:
        ordered = _rule_order(bundle.pools, self.clot_first)
        return PriorityPlan(
            labels=tuple(p.label for p in ordered),
            rationales={p.label: _rule_rationale(p) for p in ordered},
            provenance="RULE",
        )

    def with_context(self, text: str) -> "RuleBackend":
        # operator guidance adopts the clot-last guideline ordering
        return RuleBackend(clot_first=False)


class RandomBackend:
    needs_image = False

    def plan(self, bundle: PromptBundle, seed: int = 0) -> PriorityPlan:
        rng = np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), 0xA11]))
        labels = list(bundle.known_labels)
        rng.shuffle(labels)
        return PriorityPlan(labels=tuple(labels), provenance="RANDOM")

    def with_context(self, text: str) -> "RandomBackend":
        return self


class NoneBackend:
    needs_image = False

    def plan(self, bundle: PromptBundle, seed: int = 0) -> PriorityPlan:
        return FULL_MASK_SENTINEL

    def with_context(self, text: str) -> "NoneBackend":
        return self


_ITEM_RE = re.compile(r"(?m)^\s*(?:\d+[.)]|[-*])\s*(.+)$")
_CUE_RE = re.compile(r"\b(first|then|next|last|finally|followed by|afterwards?)\b", re.I)


def _label_positions(text: str, known_labels) -> list[tuple[int, str]]:
    hits = []
    for label in known_labels:
        for m in re.finditer(rf"\b{re.escape(label)}\b", text):
            hits.append((m.start(), label))
    hits.sort()
    return hits


def parse_plan(response_text: str, known_labels) -> PriorityPlan:
    """Extract an ordered label sequence from free-form reasoner output.

    Preference order: explicit numbered/bulleted list items, then
    sequencing-cue sentences, then first occurrence over the whole text.
    Total: returns a plan or raises ParseError, never anything else.
    """
    if not isinstance(response_text, str) or not response_text.strip():
        raise ParseError("empty response")
    known = tuple(known_labels)

    items = [m.group(1) for m in _ITEM_RE.finditer(response_text)]
    item_hits: list[tuple[list[str], str]] = []
    for item in items:
        pos = _label_positions(item, known)
        if pos:
            item_hits.append(([label for _, label in pos], item))

    rationales: dict = {}
    if item_hits:
        ordered_all = [label for labels, _ in item_hits for label in labels]
        for labels, item in item_hits:
            for label in labels:
                if label not in rationales:
                    rationales[label] = item.strip()
    else:
        sentences = re.split(r"(?<=[.!?])\s+", response_text)
        cue_text = " ".join(s for s in sentences if _CUE_RE.search(s))
        scope = cue_text if _label_positions(cue_text, known) else response_text
        ordered_all = [label for _, label in _label_positions(scope, known)]
        for label in set(ordered_all):
            for s in sentences:
                if re.search(rf"\b{re.escape(label)}\b", s):
                    rationales[label] = s.strip()
                    break

    if not ordered_all:
        raise ParseError("no known pool labels in response")
    seen: list[str] = []
    for label in ordered_all:
        if label not in seen:
            seen.append(label)
    if len(seen) == 1 and len(ordered_all) > 1 and len(known) > 1:
        raise ParseError(f"response repeats only {seen[0]} and orders nothing")
    plan = PriorityPlan(
        labels=tuple(seen),
        rationales=rationales,
        provenance="LLM_WOC",
        raw_response=response_text,
    )
    plan.validate(known)
    return plan


class LLMBackend:
    """Chat-completion backed reasoner with parse-retry and rule fallback."""

    needs_image = True

    def __init__(self, client, model: str = "gpt-4-vision", context: str | None = None, max_retries: int = 2):
        self.client = client
        self.model = model
        self.context = context
        self.max_retries = max_retries
        self.events: list[dict] = []

    @property
    def provenance(self) -> str:
        return "LLM_WC" if self.context else "LLM_WOC"

    def build_request(self, bundle: PromptBundle, nudge: bool = False):
        from .llm_client import ChatRequest
        import base64

        user = bundle.user_text
        if nudge:
            user += "\n\nRespond with a numbered list of pool labels in suction order."
        image_b64 = None
        if bundle.image is not None:
            image_b64 = base64.b64encode(bundle.image.png_bytes).decode("ascii")
        return ChatRequest(
            model=self.model,
            system=system_text(),
            user=user,
            image_b64=image_b64,
        )

    def plan(self, bundle: PromptBundle, seed: int = 0) -> PriorityPlan:
        bundle = PromptBundle(bundle.base_text, bundle.pools, context=self.context, image=bundle.image)
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                text = self.client.complete(self.build_request(bundle, nudge=attempt > 0))
                parsed = parse_plan(text, bundle.known_labels)
                return PriorityPlan(
                    labels=parsed.labels,
                    rationales=parsed.rationales,
                    provenance=self.provenance,
                    raw_response=text,
                )
            except (ParseError, TransportError) as exc:
                last_error = exc
        self.events.append({"type": "llm_degradation", "detail": str(last_error)})
        fallback = RuleBackend().plan(bundle, seed)
        return PriorityPlan(
            labels=fallback.labels,
            rationales=fallback.rationales,
            provenance="RULE",
            raw_response=None,
        )

    def with_context(self, text: str) -> "LLMBackend":
        return LLMBackend(self.client, self.model, context=text, max_retries=self.max_retries)


def plan(backend, bundle: PromptBundle, seed: int = 0) -> PriorityPlan:
    """Dispatch to a backend and validate the result."""
    result = backend.plan(bundle, seed)
    result.validate(bundle.known_labels)
    return result


def should_replan(
    prev_pools: list[PoolObservation],
    current_pools: list[PoolObservation],
    operator_event: bool = False,
) -> bool:
    """True on new pool labels, flag changes on surviving pools, or operator input."""
    if operator_event:
        return True
    prev = {p.label: p for p in prev_pools}
    for pool in current_pools:
        old = prev.get(pool.label)
        if old is None:
            return True
        if (old.bleeding, old.clot, old.tool_adjacent) != (pool.bleeding, pool.clot, pool.tool_adjacent):
            return True
    return False
