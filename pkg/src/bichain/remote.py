"""Remote chat-completion backend for the reasoning-module contracts.

Prompts are rendered from data-file templates (one per module kind), sent to
a configurable chat-completion endpoint, and parsed back into module
outputs.  Responses are parsed strictly first, then through a keyword
fallback; a response that fails both is reported as a stall, never a crash.
Raw response text is kept so trace replay can audit every claim.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field, replace
from importlib import resources

import requests

from .language import (
    Hypothesis,
    Label,
    ParseError,
    Problem,
    parse_literal,
    render_hypothesis,
    render_literal,
    render_rule,
)
from .modules import (
    DeductionStep,
    Derivation,
    FactCheckResult,
    Goal,
    GoalSet,
    GoalStatus,
    RelevantFacts,
    RuleSelection,
    SymbolicBackend,
    match_consequent,
    serialize_binding,
)
from .terms import KnowledgeBase, Literal, substitute_partial

TEMPLATE_KINDS = (
    "fact_identify", "rule_select_forward", "rule_select_backward",
    "logic_deduce", "logic_abduce", "fact_check", "confusion_check",
    # backward-baseline prompt kinds
    "rule_selection", "goal_decomposition", "sign_agreement",
)

ENV_ENDPOINT = "BICHAIN_ENDPOINT"
ENV_API_KEY = "BICHAIN_API_KEY"
ENV_MODEL = "BICHAIN_MODEL"


class TransportError(Exception):
    """The endpoint stayed unreachable after every retry."""


class RateLimited(Exception):
    """HTTP 429; honored with backoff before the next attempt."""


class ResponseParseFailed(Exception):
    def __init__(self, message: str, span: str = ""):
        self.span = span
        super().__init__(f"{message}: {span!r}" if span else message)


@dataclass(frozen=True)
class RemoteConfig:
    endpoint: str
    api_key: str = ""
    model: str = ""
    temperature: float = 0.1
    max_tokens: int = 1024
    retries: int = 2
    backoff: float = 1.0
    timeout: float = 30.0
    max_concurrent: int = 4

    def __post_init__(self) -> None:
        if not (0.0 <= self.temperature <= 2.0):
            raise ValueError("temperature must be within [0, 2]")
        if self.retries < 0:
            raise ValueError("retries must be non-negative")

    @classmethod
    def from_env(cls) -> "RemoteConfig":
        endpoint = os.environ.get(ENV_ENDPOINT, "")
        if not endpoint:
            raise ValueError(f"{ENV_ENDPOINT} is not set; the remote backend "
                             "needs an endpoint URL")
        return cls(endpoint=endpoint,
                   api_key=os.environ.get(ENV_API_KEY, ""),
                   model=os.environ.get(ENV_MODEL, ""))


@dataclass
class ModuleResponse:
    kind: str
    raw: str
    payload: object = None
    ok: bool = True
    fallback: bool = False
    error: str = ""


def _template(kind: str) -> str:
    if kind not in TEMPLATE_KINDS:
        raise ValueError(f"unknown template kind {kind!r}")
    return resources.files("bichain.templates").joinpath(f"{kind}.txt").read_text("utf-8")


def render_prompt(kind: str, hypothesis: str = "", premises: str = "",
                  context: str = "") -> str:
    """Deterministic prompt text for one module invocation."""
    text = _template(kind)
    return text.format(hypothesis=hypothesis, premises=premises, context=context)


def number_premises(problem_like: "PremiseIndex") -> str:
    return "\n".join(f"{i}: {text}" for i, text in problem_like.numbered())


class PremiseIndex:
    """Numbers facts 1..F and rules F+1..F+R the way prompts display them,
    and maps cited premise numbers back to fact or rule ids."""

    def __init__(self, kb: KnowledgeBase, freeform: tuple[str, ...] = ()):
        self.kb = kb
        self.fact_count = len(kb.facts)
        self.rule_count = len(kb.rules)
        self.freeform = freeform

    def numbered(self) -> list[tuple[int, str]]:
        out = [(f.id, render_literal(f.literal)) for f in self.kb.facts]
        base = self.fact_count
        out.extend((base + r.id, render_rule(r)) for r in self.kb.rules)
        base += self.rule_count
        out.extend((base + i, text) for i, text in enumerate(self.freeform, start=1))
        return out

    def fact_id(self, premise_number: int) -> int | None:
        return premise_number if 1 <= premise_number <= self.fact_count else None

    def rule_id(self, premise_number: int) -> int | None:
        rid = premise_number - self.fact_count
        return rid if 1 <= rid <= self.rule_count else None


# --------------------------------------------------------------------------
# Response grammars
# --------------------------------------------------------------------------

_DIRECT_RE = re.compile(r"directly\s+(proved|disproved)\s+by\s+Premise\s+(\d+)", re.I)
_NUMBER_RE = re.compile(r"(?:Premise|Rule)\s+(\d+)", re.I)
_LINE_NUMBER_RE = re.compile(r"^\s*(\d+)\s*:", re.M)
_LABEL_WORDS = (("disproved", Label.DISPROVED), ("proved", Label.PROVED),
                ("false", Label.DISPROVED), ("true", Label.PROVED),
                ("unknown", Label.UNKNOWN))
# discourse markers models put in front of the actual clause
_CLAUSE_START_RE = re.compile(r"\b(the|someone|they)\b", re.I)


def _find_label(text: str) -> Label | None:
    lowered = text.lower()
    hits = [(lowered.rfind(word), label) for word, label in _LABEL_WORDS]
    hits = [(i, label) for i, label in hits if i >= 0]
    return max(hits)[1] if hits else None


def _extract_literal(sentence: str) -> Literal | None:
    """Parse a clause out of a free-form sentence, skipping lead-ins like
    "Therefore," or "We know that"."""
    for m in _CLAUSE_START_RE.finditer(sentence):
        try:
            return parse_literal(sentence[m.start():])
        except ParseError:
            continue
    return None


def parse_module_response(kind: str, text: str) -> tuple[object, bool]:
    """Parse one response per the module's grammar.

    Returns (payload, used_fallback).  Raises ResponseParseFailed when even
    the fallback keyword scan finds nothing usable.
    """
    if kind == "fact_check":
        m = _DIRECT_RE.search(text)
        if m:
            label = Label.PROVED if m.group(1).lower() == "proved" else Label.DISPROVED
            return (label, int(m.group(2))), False
        lines = [l.strip() for l in text.splitlines() if l.strip()
                 and not l.strip().endswith(":")]
        if lines:
            label = _find_label(lines[-1])
            if label is not None:
                return (label, None), False
        label = _find_label(text)
        if label is not None:
            return (label, None), True
        raise ResponseParseFailed("no label keyword in fact check", text[:80])
    if kind in ("fact_identify", "rule_select_forward", "rule_select_backward",
                "rule_selection"):
        numbers = [int(n) for n in _NUMBER_RE.findall(text)]
        numbers += [int(n) for n in _LINE_NUMBER_RE.findall(text)]
        unique = list(dict.fromkeys(numbers))
        if not unique:
            raise ResponseParseFailed("no premise numbers in selection", text[:80])
        return unique, False
    if kind == "confusion_check":
        m = re.search(r"Confusion Check:\s*\n?\s*(True|False)", text, re.I)
        if m:
            return m.group(1).lower() == "true", False
        tokens = re.findall(r"\b(true|false)\b", text, re.I)
        if tokens:
            return tokens[-1].lower() == "true", True
        raise ResponseParseFailed("no True/False in confusion check", text[:80])
    if kind in ("logic_deduce", "logic_abduce", "goal_decomposition"):
        entries = []
        for chunk in re.split(r"\n|(?<=\.)\s+or\b", text):
            chunk = chunk.strip()
            if not chunk or chunk.endswith(":"):
                continue
            cited = [int(n) for n in _NUMBER_RE.findall(chunk)]
            cleaned = re.sub(r"\((?:Premise|Rule) \d+\)", "", chunk)
            parsed: list[Literal] = []
            opaque: list[str] = []
            for sentence in re.findall(r"[A-Za-z][^.]*\.", cleaned):
                literal = _extract_literal(sentence)
                if literal is not None:
                    parsed.append(literal)
                else:
                    opaque.append(sentence.strip())
            if cited or parsed or opaque:
                entries.append({"cited": cited, "literals": parsed, "opaque": opaque})
        if not entries:
            raise ResponseParseFailed("no usable content", text[:80])
        return entries, False
    if kind == "sign_agreement":
        m = re.search(r"\b(agree|disagree)\b", text, re.I)
        if m:
            return m.group(1).lower() == "agree", False
        raise ResponseParseFailed("no agreement keyword", text[:80])
    raise ValueError(f"unknown response kind {kind!r}")


# --------------------------------------------------------------------------
# Wire client
# --------------------------------------------------------------------------

_concurrency_locks: dict[int, threading.Semaphore] = {}
_locks_guard = threading.Lock()


def _semaphore(limit: int) -> threading.Semaphore:
    with _locks_guard:
        if limit not in _concurrency_locks:
            _concurrency_locks[limit] = threading.Semaphore(limit)
        return _concurrency_locks[limit]


class RemoteBackend:
    """ModuleBackend that answers every contract over the wire.

    ``transport`` may be swapped for a callable (prompt -> text) to replay
    recorded responses offline; the default posts a chat-completion request.
    One invocation is one wire request; transport retries do not add calls.
    """

    name = "remote"
    handles_freeform = True

    def __init__(self, config: RemoteConfig, transport=None):
        self.config = config
        self.transport = transport or self._http_transport
        self.calls = 0
        self.warnings: list[str] = []
        self.responses: list[ModuleResponse] = []
        self._session = requests.Session()
        self._freeform: tuple[str, ...] = ()

    def bind_problem(self, problem: Problem) -> None:
        """Free-form statements ride along in every premise listing."""
        self._freeform = problem.freeform_facts + problem.freeform_rules

    # -- transport ----------------------------------------------------------

    def _http_transport(self, prompt: str) -> str:
        payload = {
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.config.retries + 1):
            try:
                with _semaphore(self.config.max_concurrent):
                    response = self._session.post(
                        self.config.endpoint, json=payload, headers=headers,
                        timeout=self.config.timeout)
                if response.status_code == 429:
                    raise RateLimited("rate limited")
                response.raise_for_status()
                body = response.json()
                return body["choices"][0]["message"]["content"]
            except (requests.RequestException, RateLimited, KeyError, ValueError) as exc:
                last_error = exc
                if attempt < self.config.retries:
                    time.sleep(self.config.backoff * (attempt + 1))
        raise TransportError(f"endpoint failed after {self.config.retries + 1} "
                             f"attempts: {last_error}")

    def invoke_module(self, kind: str, hypothesis: str = "", premises: str = "",
                      context: str = "") -> ModuleResponse:
        prompt = render_prompt(kind, hypothesis, premises, context)
        self.calls += 1  # one inference call, before any retry accounting
        raw = self.transport(prompt)
        try:
            payload, fallback = parse_module_response(kind, raw)
            response = ModuleResponse(kind, raw, payload, ok=True, fallback=fallback)
            if fallback:
                self.warnings.append(f"{kind}: fallback keyword parse used")
        except ResponseParseFailed as exc:
            response = ModuleResponse(kind, raw, None, ok=False, error=str(exc))
            self.warnings.append(f"{kind}: unparseable response treated as a stall "
                                 f"({exc})")
        self.responses.append(response)
        return response

    def drain_warnings(self) -> list[str]:
        out = self.warnings
        self.warnings = []
        return out

    def drain_responses(self) -> list[dict]:
        """Raw wire responses since the last drain, for verbatim trace capture."""
        out = [{"kind": r.kind, "raw": r.raw, "ok": r.ok, "fallback": r.fallback}
               for r in self.responses]
        self.responses = []
        return out

    # -- module contracts -----------------------------------------------------

    def _premises(self, kb: KnowledgeBase) -> tuple[PremiseIndex, str]:
        index = PremiseIndex(kb, self._freeform)
        return index, number_premises(index)

    def fact_identify(self, hypothesis: Hypothesis, kb: KnowledgeBase) -> RelevantFacts:
        if not kb.facts:
            raise ValueError("fact identification needs a non-empty knowledge base")
        index, premises = self._premises(kb)
        response = self.invoke_module("fact_identify",
                                      render_hypothesis(hypothesis), premises)
        if not response.ok:
            return RelevantFacts(tuple(f.id for f in kb.facts))
        ids = [index.fact_id(n) for n in response.payload]
        kept = tuple(i for i in ids if i is not None)
        return RelevantFacts(kept or tuple(f.id for f in kb.facts))

    def rule_select_forward(self, relevant: RelevantFacts, kb: KnowledgeBase,
                            goal=None) -> RuleSelection:
        index, premises = self._premises(kb)
        goals: tuple[Literal, ...]
        if goal is None:
            goals = ()
        elif isinstance(goal, Literal):
            goals = (goal,)
        else:
            goals = tuple(goal)
        shown = render_literal(goals[0]) if goals else ""
        response = self.invoke_module("rule_select_forward", shown, premises)
        if not response.ok:
            return RuleSelection(())
        ids = [index.rule_id(n) for n in response.payload]
        kept = tuple(dict.fromkeys(i for i in ids if i is not None))
        bridge = None
        if len(kept) == 1 and goals:
            rule = kb.rule(kept[0])
            if any(match_consequent(rule, g) is not None for g in goals):
                bridge = kept[0]
        return RuleSelection(kept, bridge=bridge)

    def rule_select_backward(self, goals: tuple[Literal, ...],
                             kb: KnowledgeBase) -> RuleSelection:
        index, premises = self._premises(kb)
        shown = "\n".join(render_literal(g) for g in goals)
        response = self.invoke_module("rule_select_backward", shown, premises)
        if not response.ok:
            return RuleSelection((), by_goal=tuple((g, ()) for g in goals))
        ids = [index.rule_id(n) for n in response.payload]
        kept = [i for i in dict.fromkeys(ids) if i is not None]
        by_goal = []
        ordered: list[int] = []
        for g in goals:
            matched = tuple(i for i in kept if match_consequent(kb.rule(i), g) is not None)
            by_goal.append((g, matched))
            for i in matched:
                if i not in ordered:
                    ordered.append(i)
        dropped = set(kept) - set(ordered)
        if dropped:
            self.warnings.append(
                f"rule_select_backward: rules {sorted(dropped)} match no open goal")
        return RuleSelection(tuple(ordered), by_goal=tuple(by_goal))

    def _reconstruct(self, literal: Literal, kb: KnowledgeBase,
                     cited_rules: list[int]) -> Derivation | None:
        """Find a rule application deriving the literal from current facts."""
        symbolic = SymbolicBackend()
        literal_map = {f.literal: f.id for f in kb.facts}
        candidates = symbolic._candidates(kb, literal_map)
        rule_order = cited_rules + [r.id for r in kb.rules if r.id not in cited_rules]
        for rid in rule_order:
            rule = kb.rule(rid)
            for binding, premises in symbolic._rule_bindings(rule, literal_map, candidates):
                if substitute_partial(rule.consequent, binding) == literal:
                    return Derivation(literal, rid, premises, serialize_binding(binding))
        return None

    def logic_deduce(self, relevant: RelevantFacts, selection: RuleSelection,
                     kb: KnowledgeBase) -> DeductionStep:
        index, premises = self._premises(kb)
        context = "\n".join(
            f"{index.fact_count + rid}: {render_rule(kb.rule(rid))}"
            for rid in selection.rule_ids)
        response = self.invoke_module("logic_deduce", "", premises, context)
        if not response.ok:
            return DeductionStep()
        derived: list[Derivation] = []
        seen: set[Literal] = set()
        for entry in response.payload:
            for literal in entry["literals"]:
                if not literal.is_ground or kb.lookup(literal) is not None \
                        or literal in seen:
                    continue
                seen.add(literal)
                cited_rules = [r for r in (index.rule_id(n) for n in entry["cited"])
                               if r is not None]
                rebuilt = self._reconstruct(literal, kb, cited_rules)
                if rebuilt is not None:
                    derived.append(rebuilt)
                    continue
                # unsupported claim: keep it with the cited premises so the
                # replay validator can flag the hallucination
                cited_facts = tuple(f for f in (index.fact_id(n) for n in entry["cited"])
                                    if f is not None)
                rule_id = cited_rules[0] if cited_rules else (
                    selection.rule_ids[0] if selection.rule_ids else 0)
                derived.append(Derivation(literal, rule_id, cited_facts or (0,)))
                self.warnings.append(f"logic_deduce: unsupported deduction "
                                     f"{render_literal(literal)!r}")
            if entry["opaque"]:
                self.warnings.append(
                    f"logic_deduce: opaque response text kept out of the fact "
                    f"store: {entry['opaque'][0][:60]!r}")
        return DeductionStep(tuple(derived))

    def logic_abduce(self, goal: Literal, selection: RuleSelection,
                     kb: KnowledgeBase) -> tuple[GoalSet, ...]:
        index, premises = self._premises(kb)
        context = "\n".join(
            f"{index.fact_count + rid}: {render_rule(kb.rule(rid))}"
            for rid in selection.rule_ids)
        response = self.invoke_module("logic_abduce", render_literal(goal),
                                      premises, context)
        if not response.ok:
            return ()
        out: list[GoalSet] = []
        for entry in response.payload:
            rids = [r for r in (index.rule_id(n) for n in entry["cited"]) if r is not None]
            rid = rids[0] if rids else None
            if rid is None or rid not in selection.rule_ids:
                continue
            match = match_consequent(kb.rule(rid), goal)
            if match is None:
                self.warnings.append(f"logic_abduce: rule {rid} does not unify "
                                     f"with {render_literal(goal)!r}")
                continue
            goals = tuple(Goal(substitute_partial(c, match.rule_binding))
                          for c in kb.rule(rid).conditions)
            claimed = [lit for lit in entry["literals"]]
            if claimed and set(claimed) != {g.literal for g in goals}:
                self.warnings.append(f"logic_abduce: response restates rule {rid} "
                                     "conditions differently; using the rule text")
            out.append(GoalSet(goals, origin_rule=rid, target=goal,
                               unifier=serialize_binding(match.rule_binding),
                               commitments=serialize_binding(match.commitments)))
        return tuple(out)

    def fact_check(self, target, kb: KnowledgeBase) -> FactCheckResult:
        index, premises = self._premises(kb)
        if isinstance(target, Hypothesis):
            response = self.invoke_module("fact_check", render_hypothesis(target),
                                          premises)
            if not response.ok:
                return FactCheckResult(Label.UNKNOWN)
            label, premise_number = response.payload
            evidence = index.fact_id(premise_number) if premise_number else None
            if evidence is None and label is not Label.UNKNOWN:
                lookup = kb.lookup(target.consequent if label is Label.PROVED
                                   else target.consequent.negated())
                evidence = lookup.id if lookup else None
            return FactCheckResult(label, evidence=evidence)
        goalsets: tuple[GoalSet, ...] = tuple(target)
        pending = next((i for i, gs in enumerate(goalsets)
                        if not gs.satisfied and not gs.failed), None)
        if pending is None:
            satisfied = next((i for i, gs in enumerate(goalsets) if gs.satisfied), None)
            label = Label.PROVED if satisfied is not None else Label.UNKNOWN
            return FactCheckResult(label, goalsets=goalsets, satisfied=satisfied)
        shown = "\n".join(render_literal(g.literal)
                          for g in goalsets[pending].open_goals())
        response = self.invoke_module(
            "fact_check", shown if shown else render_literal(goalsets[pending].goals[0].literal),
            premises)
        updated = list(goalsets)
        if response.ok:
            label, premise_number = response.payload
            if label is Label.PROVED:
                evidence = index.fact_id(premise_number) if premise_number else None
                gs = goalsets[pending]
                goals = tuple(
                    replace(g, status=GoalStatus.PROVEN,
                            fact_id=evidence if evidence is not None else
                            (kb.lookup(g.literal).id if g.literal.is_ground
                             and kb.lookup(g.literal) else None))
                    if g.status is GoalStatus.OPEN else g
                    for g in gs.goals)
                updated[pending] = replace(gs, goals=goals)
            elif label is Label.DISPROVED:
                gs = goalsets[pending]
                goals = []
                for g in gs.goals:
                    if g.status is GoalStatus.OPEN and g.literal.is_ground:
                        negated = kb.lookup(g.literal.negated())
                        if negated is not None:
                            goals.append(replace(g, status=GoalStatus.CONTRADICTED,
                                                 fact_id=negated.id))
                            continue
                    goals.append(g)
                updated[pending] = replace(gs, goals=tuple(goals))
        satisfied = next((i for i, gs in enumerate(updated) if gs.satisfied), None)
        label = Label.PROVED if satisfied is not None else Label.UNKNOWN
        return FactCheckResult(label, goalsets=tuple(updated), satisfied=satisfied)

    def confusion_check(self, step) -> bool:
        if isinstance(step, DeductionStep):
            lines = [render_literal(d.literal) for d in step.derived]
        else:
            lines = []
            for gs in step:
                goals = " and ".join(render_literal(g.literal) for g in gs.goals)
                lines.append(f"According to Rule {gs.origin_rule}, "
                             f"we need to prove {goals}")
        response = self.invoke_module("confusion_check", context="\n".join(lines))
        if not response.ok:
            return False
        return bool(response.payload)


# --------------------------------------------------------------------------
# Recorded-response cassettes
# --------------------------------------------------------------------------


@dataclass
class Cassette:
    """Replays recorded responses in order; a convenient offline transport."""

    entries: list[str] = field(default_factory=list)
    position: int = 0

    @classmethod
    def load(cls, path: str) -> "Cassette":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    entries.append(json.loads(line)["content"])
        return cls(entries)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for content in self.entries:
                fh.write(json.dumps({"content": content}) + "\n")

    def __call__(self, prompt: str) -> str:
        if self.position >= len(self.entries):
            raise TransportError("cassette exhausted")
        content = self.entries[self.position]
        self.position += 1
        return content
