"""Proof engines: bidirectional chaining plus forward-only and backward-only
baselines, with structured proof traces and trace replay validation.

The bidirectional engine alternates directions, switching when a step yields
multiple deductions or candidate goal decompositions (a confusion state) or
when the current direction stalls.  The forward baseline iterates selection
and inference, applying one selected rule per iteration; the backward
baseline runs depth-first AND-OR search with backtracking and iterative
deepening, preferring rules with fewer conditions.

One module invocation is one inference call; a verdict's call count always
equals the number of steps in its trace, whichever backend served them.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .language import Hypothesis, Label, Problem, render_literal
from .remote import TransportError
from .modules import (
    DeductionStep,
    FactCheckResult,
    Goal,
    GoalSet,
    GoalStatus,
    RelevantFacts,
    RuleSelection,
    SymbolicBackend,
    deserialize_binding,
    serialize_binding,
)
from .terms import (
    Binding,
    Entailment,
    Entity,
    Fact,
    KnowledgeBase,
    Literal,
    Rule,
    literal_from_term,
    substitute_partial,
    term_string,
    unify,
)


class Direction(enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass(frozen=True)
class EngineConfig:
    """Step budget, starting direction, and return policy for one evaluation."""

    max_steps: int = 50
    start_direction: Direction = Direction.FORWARD
    immediate_return: bool = True
    backend: str = "symbolic"

    def __post_init__(self) -> None:
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")


@dataclass
class TraceStep:
    index: int
    direction: str
    module: str
    payload: dict
    confusion: bool | None = None
    note: str = ""

    def to_json(self) -> dict:
        out = {"index": self.index, "direction": self.direction,
               "module": self.module, **self.payload}
        if self.confusion is not None:
            out["confusion"] = self.confusion
        if self.note:
            out["note"] = self.note
        return out


@dataclass
class ProofTrace:
    engine: str
    problem: str
    steps: list[TraceStep] = field(default_factory=list)
    label: Label | None = None
    resolution: dict | None = None

    def to_json(self) -> dict:
        return {
            "problem": self.problem,
            "engine": self.engine,
            "label": self.label.value if self.label else None,
            "calls": len(self.steps),
            "steps": [s.to_json() for s in self.steps],
            "resolution": self.resolution,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ProofTrace":
        steps = []
        for raw in doc.get("steps", []):
            raw = dict(raw)
            index = raw.pop("index")
            direction = raw.pop("direction")
            module = raw.pop("module")
            confusion = raw.pop("confusion", None)
            note = raw.pop("note", "")
            steps.append(TraceStep(index, direction, module, raw, confusion, note))
        label = Label.parse(doc["label"]) if doc.get("label") else None
        return cls(engine=doc.get("engine", ""), problem=doc.get("problem", ""),
                   steps=steps, label=label, resolution=doc.get("resolution"))


@dataclass
class Verdict:
    label: Label
    trace: ProofTrace
    calls: int
    warnings: tuple[str, ...] = ()
    derived_facts: tuple[Fact, ...] = ()

    def __post_init__(self) -> None:
        if self.calls != len(self.trace.steps):
            raise ValueError("call count must equal the number of trace steps")


def _lit_payload(lit: Literal) -> dict:
    return {"term": term_string(lit), "text": render_literal(lit)}


def _goal_payload(goal: Goal) -> dict:
    out = {"term": term_string(goal.literal),
           "text": render_literal(goal.literal),
           "status": goal.status.value}
    if goal.fact_id is not None:
        out["fact"] = goal.fact_id
    if goal.binding:
        out["binding"] = [list(p) for p in goal.binding]
    return out


def _set_payload(gs: GoalSet) -> dict:
    return {
        "origin_rule": gs.origin_rule,
        "target": term_string(gs.target) if gs.target is not None else None,
        "unifier": [list(p) for p in gs.unifier],
        "commitments": [list(p) for p in gs.commitments],
        "goals": [term_string(g.literal) for g in gs.goals],
        "texts": [render_literal(g.literal) for g in gs.goals],
    }


class _Recorder:
    """Appends module steps to the trace; the step count is the call count.

    When the backend carries raw wire responses (the remote one does), they
    are attached verbatim to the step they answered, so replay validation
    can audit the original text.
    """

    def __init__(self, engine: str, problem: str, backend=None):
        self.trace = ProofTrace(engine=engine, problem=problem)
        self.backend = backend

    def record(self, direction: Direction, module: str, payload: dict,
               confusion: bool | None = None, note: str = "") -> TraceStep:
        if hasattr(self.backend, "drain_responses"):
            raw = self.backend.drain_responses()
            if raw:
                payload = {**payload, "responses": raw}
        step = TraceStep(len(self.trace.steps) + 1, direction.value, module,
                         payload, confusion, note)
        self.trace.steps.append(step)
        return step

    @property
    def calls(self) -> int:
        return len(self.trace.steps)


def make_backend(name: str):
    if name == "symbolic":
        return SymbolicBackend()
    if name == "remote":
        from .remote import RemoteBackend, RemoteConfig

        return RemoteBackend(RemoteConfig.from_env())
    raise ValueError(f"unknown backend {name!r}")


def _prepare(problem: Problem, hypothesis: Hypothesis, backend) -> tuple[KnowledgeBase, list[str]]:
    if problem.remote_only and not getattr(backend, "handles_freeform", False):
        raise ValueError("problem contains free-form statements; use the remote backend")
    if hasattr(backend, "bind_problem"):
        backend.bind_problem(problem)
    kb = problem.kb
    for lit in hypothesis.condition:
        kb = kb.add_given(lit)
    warnings = []
    if not kb.consistent:
        warnings.append("InconsistentKB: a literal and its negation are both present")
    return kb, warnings


def _drain(backend, warnings: list[str]) -> None:
    if hasattr(backend, "drain_warnings"):
        warnings.extend(backend.drain_warnings())


def _derived_facts(problem: Problem, hypothesis: Hypothesis, kb: KnowledgeBase) -> tuple[Fact, ...]:
    # Facts asserted from a hypothesis condition are scoped to this
    # evaluation, so nothing is shareable when a condition was present.
    if hypothesis.condition:
        return ()
    return tuple(kb.facts[len(problem.kb.facts):])


# --------------------------------------------------------------------------
# Goal frontier bookkeeping (bidirectional backward phase)
# --------------------------------------------------------------------------


@dataclass
class _Node:
    id: int
    gs: GoalSet
    parent: "_Node | None" = None
    expanded_goal: Literal | None = None
    rule_id: int | None = None
    env: Binding = field(default_factory=dict)
    new_goals: tuple[Literal, ...] = ()
    tried: set[Literal] = field(default_factory=set)


class _VarNamer:
    def __init__(self) -> None:
        self.count = 0

    def fresh(self) -> Entity:
        self.count += 1
        return Entity(f"x{self.count}", variable=True)


def expand_node(parent_goals: tuple[Goal, ...], expanded: Literal,
                module_sets: tuple[GoalSet, ...], namer: _VarNamer,
                ) -> list[tuple[GoalSet, tuple[Literal, ...], Binding]]:
    """Merge module goal sets into the parent conjunction.

    Per alternative: rename rule-local variables to fresh scopes, apply the
    consequent's commitments to the carried sibling goals, and put the new
    sub-goals first (depth-first order).  Returns (merged set, new goal
    literals, commitment binding) per alternative; the same routine drives
    both the engine and trace replay.
    """
    goal_vars = expanded.variables()
    out = []
    for gs in module_sets:
        commitments = deserialize_binding(gs.commitments)
        rename: Binding = {}
        new_goals: list[Goal] = []
        for g in gs.goals:
            lit = g.literal
            for v in lit.variables():
                if v not in goal_vars and v not in rename:
                    rename[v] = namer.fresh()
            lit = substitute_partial(lit, rename)
            lit = substitute_partial(lit, commitments)
            new_goals.append(Goal(lit))
        carried: list[Goal] = []
        for g in parent_goals:
            if g.literal == expanded:
                continue
            lit = substitute_partial(g.literal, commitments)
            carried.append(Goal(lit) if lit != g.literal else g)
        # one entry per literal; statuses are recomputed at every fact check
        by_literal: dict[Literal, Goal] = {}
        for g in (*new_goals, *carried):
            by_literal.setdefault(g.literal, g)
        merged = GoalSet(tuple(by_literal.values()),
                         origin_rule=gs.origin_rule, target=gs.target,
                         unifier=gs.unifier, commitments=gs.commitments)
        out.append((merged, tuple(g.literal for g in new_goals), commitments))
    return out


def _resolution_tree(node: _Node, q: Literal) -> dict:
    """Ground proof tree from a satisfied frontier node back to the root goal."""
    env: Binding = dict(node.env)
    for g in node.gs.goals:
        env.update(deserialize_binding(g.binding))

    def ground(lit: Literal) -> Literal:
        return substitute_partial(lit, env)

    proofs: dict[Literal, dict] = {}
    for g in node.gs.goals:
        lit = ground(g.literal)
        proofs[lit] = {"literal": term_string(lit), "fact": g.fact_id}
    walk = node
    while walk.parent is not None:
        target = ground(walk.expanded_goal)
        children = [proofs[ground(c)] for c in walk.new_goals]
        proofs[target] = {"literal": term_string(target),
                          "rule": walk.rule_id, "children": children}
        walk = walk.parent
    return {"kind": "tree", "root": proofs[q]}


# --------------------------------------------------------------------------
# Bidirectional engine
# --------------------------------------------------------------------------


def prove_bidirectional(problem: Problem, config: EngineConfig | None = None,
                        backend=None) -> Verdict:
    """Alternating forward/backward chaining with confusion-driven switches.

    Relevant facts are identified once and grown with each deduction; the
    backward frontier persists across switches, and goals satisfied by newly
    derived forward facts close before anything else is expanded.  A
    direction that provably cannot move again (forward after a stall with no
    new facts, backward with nothing left to expand) is not revisited; when
    both are in that state the verdict is Unknown.
    """
    config = config or EngineConfig()
    backend = backend or make_backend(config.backend)
    if problem.hypothesis is None:
        raise ValueError("multi-option problems go through evaluate_options")
    hypothesis = problem.hypothesis
    kb, warnings = _prepare(problem, hypothesis, backend)
    rec = _Recorder("bi", problem.meta, backend)
    q = hypothesis.consequent
    start = config.start_direction

    def finish(label: Label, resolution: dict | None) -> Verdict:
        _drain(backend, warnings)
        rec.trace.label = label
        rec.trace.resolution = resolution
        return Verdict(label, rec.trace, rec.calls, tuple(warnings),
                       _derived_facts(problem, hypothesis, kb))

    relevant_ids: list[int] = []
    if kb.facts:
        relevant = backend.fact_identify(hypothesis, kb)
        rec.record(start, "fact_identify",
                   {"hypothesis": term_string(q), "facts": list(relevant.fact_ids)})
        relevant_ids = list(relevant.fact_ids)

    res = backend.fact_check(hypothesis, kb)
    rec.record(start, "fact_check",
               {"kind": "hypothesis", "target": term_string(q),
                "label": res.label.value, "evidence": res.evidence})
    if res.label is not Label.UNKNOWN:
        return finish(res.label, {"kind": "fact", "fact": res.evidence})

    namer = _VarNamer()
    root = _Node(id=1, gs=GoalSet((Goal(q),)))
    frontier: list[_Node] = [root]
    seen_sigs = {root.gs.signature()}
    next_node_id = 2
    norule: set[Literal] = set()

    direction = start
    forward_dead = False  # stalled even with the widened fact subset
    widened = False
    backward_done = False
    pending: tuple[Label, dict | None] | None = None
    steps = 0

    def frontier_check() -> FactCheckResult:
        result = backend.fact_check(tuple(n.gs for n in frontier), kb)
        nodes_payload = []
        for node, gs in zip(frontier, result.goalsets):
            node.gs = gs
            nodes_payload.append({"node": node.id, **_set_payload(gs),
                                  "goals": [_goal_payload(g) for g in gs.goals]})
        satisfied_node = frontier[result.satisfied].id if result.satisfied is not None else None
        rec.record(Direction.BACKWARD, "fact_check",
                   {"kind": "goals", "label": result.label.value,
                    "satisfied": satisfied_node, "nodes": nodes_payload})
        return result

    def pick_node() -> tuple[_Node, tuple[Literal, ...]] | None:
        """Most promising frontier node with open goals worth expanding:
        fewest remaining open goals, ties by node id (depth-first order)."""
        best: tuple[int, int, _Node, tuple[Literal, ...]] | None = None
        for node in frontier:
            open_count = 0
            candidates = []
            for goal in node.gs.goals:
                if goal.status is not GoalStatus.OPEN:
                    continue
                open_count += 1
                lit = goal.literal
                if lit in norule or lit in node.tried:
                    continue
                if lit.is_ground and kb.entailed(lit) is Entailment.HOLDS:
                    continue  # newly derived facts close it at the next check
                candidates.append(lit)
            if candidates:
                key = (open_count, node.id)
                if best is None or key < best[:2]:
                    best = (*key, node, tuple(candidates))
        if best is None:
            return None
        return best[2], best[3]

    try:
        while steps < config.max_steps:
            if direction is Direction.FORWARD:
                steps += 1
                # the goal is whatever the backward side still needs (Q starts as
                # the hypothesis consequent and is reassigned by each abduction)
                targets: list[Literal] = []
                for n in frontier:
                    for g in n.gs.goals:
                        if g.status is GoalStatus.OPEN and g.literal not in targets:
                            targets.append(g.literal)
                if not targets:
                    targets = [q]
                selection = backend.rule_select_forward(
                    RelevantFacts(tuple(relevant_ids)), kb, tuple(targets))
                if selection.bridge is not None and len(selection.rule_ids) != 1:
                    raise AssertionError("a bridge must collapse the selection")
                rec.record(direction, "rule_select_forward",
                           {"relevant": list(relevant_ids),
                            "goal": [term_string(t) for t in targets],
                            "rules": list(selection.rule_ids), "bridge": selection.bridge})
                step = DeductionStep()
                if selection.rule_ids:
                    step = backend.logic_deduce(
                        RelevantFacts(tuple(relevant_ids)), selection, kb)
                    rec.record(direction, "logic_deduce",
                               {"rules": list(selection.rule_ids),
                                "derived": [{**_lit_payload(d.literal), "rule": d.rule_id,
                                             "premises": list(d.premises),
                                             "binding": [list(p) for p in d.binding]}
                                            for d in step.derived]})
                if step.derived:
                    before = len(kb.facts)
                    kb = kb.add_derived([(d.literal, d.rule_id, d.premises)
                                         for d in step.derived])
                    relevant_ids.extend(range(before + 1, len(kb.facts) + 1))
                res = backend.fact_check(hypothesis, kb)
                rec.record(direction, "fact_check",
                           {"kind": "hypothesis", "target": term_string(q),
                            "label": res.label.value, "evidence": res.evidence})
                if res.label is not Label.UNKNOWN:
                    pending = (res.label, {"kind": "fact", "fact": res.evidence})
                    if config.immediate_return:
                        return finish(*pending)
                confusion = False
                if step.derived:
                    confusion = backend.confusion_check(step)
                    rec.record(direction, "confusion_check",
                               {"kind": "deduction", "count": len(step.derived),
                                "confusion": confusion}, confusion=confusion)
                stalled = not step.derived
                if stalled:
                    if not widened and len(relevant_ids) < len(kb.facts):
                        # the relevance subset can starve a needed rule; one
                        # retry over the full fact set keeps forward complete
                        widened = True
                        relevant_ids = [f.id for f in kb.facts]
                    else:
                        forward_dead = True
                else:
                    forward_dead = False
                if confusion or stalled:
                    if pending is not None:
                        return finish(*pending)
                    if forward_dead and backward_done:
                        return finish(Label.UNKNOWN, None)
                    if not backward_done:
                        direction = Direction.BACKWARD
            else:
                steps += 1
                picked = pick_node()
                if picked is None:
                    # closure sweep: forward facts may have completed a goal set
                    result = frontier_check()
                    if result.satisfied is not None:
                        node = frontier[result.satisfied]
                        return finish(Label.PROVED, _resolution_tree(node, q))
                    frontier = [n for n in frontier if not n.gs.failed]
                    backward_done = True
                    if forward_dead:
                        return finish(Label.UNKNOWN, None)
                    direction = Direction.FORWARD
                    continue
                node, candidates = picked
                selection = backend.rule_select_backward(candidates, kb)
                rec.record(direction, "rule_select_backward",
                           {"node": node.id,
                            "goals": [term_string(g) for g in candidates],
                            "rules": list(selection.rule_ids),
                            "by_goal": [[term_string(g), list(ids)]
                                        for g, ids in selection.by_goal]})
                # expand the most constrained goal (fewest matching rules);
                # goals with no rules at all are dead ends for expansion
                expand_goal: Literal | None = None
                expand_rules: tuple[int, ...] = ()
                for g, ids in selection.by_goal:
                    if not ids:
                        norule.add(g)
                    elif expand_goal is None or len(ids) < len(expand_rules):
                        expand_goal = g
                        expand_rules = ids
                module_sets: tuple[GoalSet, ...] = ()
                if expand_goal is not None:
                    module_sets = backend.logic_abduce(
                        expand_goal, RuleSelection(expand_rules), kb)
                    merged = expand_node(node.gs.goals, expand_goal, module_sets, namer)
                    children: list[_Node] = []
                    for gs, new_goals, commitments in merged:
                        sig = gs.signature()
                        if sig in seen_sigs:
                            continue
                        seen_sigs.add(sig)
                        env = dict(node.env)
                        env.update(commitments)
                        children.append(_Node(id=next_node_id, gs=gs, parent=node,
                                              expanded_goal=expand_goal,
                                              rule_id=gs.origin_rule, env=env,
                                              new_goals=new_goals))
                        next_node_id += 1
                    rec.record(direction, "logic_abduce",
                               {"node": node.id, "goal": term_string(expand_goal),
                                "sets": [_set_payload(gs) for gs in module_sets],
                                "children": [c.id for c in children]})
                    if children:
                        at = frontier.index(node)
                        frontier[at:at + 1] = children
                    else:
                        node.tried.add(expand_goal)
                result = frontier_check()
                if result.satisfied is not None:
                    satisfied = frontier[result.satisfied]
                    pending = (Label.PROVED, _resolution_tree(satisfied, q))
                    if config.immediate_return:
                        return finish(*pending)
                frontier = [n for n in frontier if not n.gs.failed]
                confusion = False
                if module_sets:
                    confusion = backend.confusion_check(module_sets)
                    rec.record(direction, "confusion_check",
                               {"kind": "abduction", "count": len(module_sets),
                                "confusion": confusion}, confusion=confusion)
                if confusion:
                    if pending is not None:
                        return finish(*pending)
                    if not forward_dead:
                        direction = Direction.FORWARD
        if pending is not None:
            return finish(*pending)
        return finish(Label.UNKNOWN, None)
    except TransportError as exc:
        warnings.append(f"TransportError: {exc}")
        return finish(Label.UNKNOWN, None)


# --------------------------------------------------------------------------
# Forward-only baseline
# --------------------------------------------------------------------------


def prove_forward(problem: Problem, config: EngineConfig | None = None,
                  backend=None) -> Verdict:
    """Iterated selection and inference over the whole fact set.

    No fact identification and no bridge preference: selection returns every
    applicable rule and each iteration performs one inference, the first
    novel consequent in rule-id order.  Stops on a decisive check, a step
    with no new facts, or the step budget.
    """
    config = config or EngineConfig()
    backend = backend or make_backend(config.backend)
    if problem.hypothesis is None:
        raise ValueError("multi-option problems go through evaluate_options")
    hypothesis = problem.hypothesis
    kb, warnings = _prepare(problem, hypothesis, backend)
    rec = _Recorder("forward", problem.meta, backend)
    q = hypothesis.consequent

    def finish(label: Label, resolution: dict | None) -> Verdict:
        _drain(backend, warnings)
        rec.trace.label = label
        rec.trace.resolution = resolution
        return Verdict(label, rec.trace, rec.calls, tuple(warnings),
                       _derived_facts(problem, hypothesis, kb))

    steps = 0
    try:
        while steps < config.max_steps:
            steps += 1
            relevant = RelevantFacts(tuple(f.id for f in kb.facts))
            selection = backend.rule_select_forward(relevant, kb, goal=None)
            rec.record(Direction.FORWARD, "rule_select_forward",
                       {"relevant": list(relevant.fact_ids), "goal": None,
                        "rules": list(selection.rule_ids), "bridge": selection.bridge})
            applied: list = []
            applied_rule = None
            if selection.rule_ids:
                step = backend.logic_deduce(relevant, selection, kb)
                if step.derived:
                    applied = [step.derived[0]]
                    applied_rule = applied[0].rule_id
                rec.record(Direction.FORWARD, "logic_deduce",
                           {"rules": list(selection.rule_ids), "applied": applied_rule,
                            "derived": [{**_lit_payload(d.literal), "rule": d.rule_id,
                                         "premises": list(d.premises),
                                         "binding": [list(p) for p in d.binding]}
                                        for d in applied]})
            if applied:
                kb = kb.add_derived([(d.literal, d.rule_id, d.premises) for d in applied])
            res = backend.fact_check(hypothesis, kb)
            rec.record(Direction.FORWARD, "fact_check",
                       {"kind": "hypothesis", "target": term_string(q),
                        "label": res.label.value, "evidence": res.evidence})
            if res.label is not Label.UNKNOWN:
                return finish(res.label, {"kind": "fact", "fact": res.evidence})
            if not applied:
                return finish(Label.UNKNOWN, None)
        return finish(Label.UNKNOWN, None)
    except TransportError as exc:
        warnings.append(f"TransportError: {exc}")
        return finish(Label.UNKNOWN, None)


# --------------------------------------------------------------------------
# Backward-only baseline
# --------------------------------------------------------------------------


def _groundings(goals: tuple[Goal, ...], universe: tuple[str, ...]):
    """Every grounding of the template variables, in sorted-constant order."""
    variables: list[Entity] = []
    for g in goals:
        for v in g.literal.variables():
            if v not in variables:
                variables.append(v)
    if not variables:
        yield tuple(g.literal for g in goals)
        return

    def rec_assign(i: int, binding: Binding):
        if i == len(variables):
            yield tuple(substitute_partial(g.literal, binding) for g in goals)
            return
        for c in universe:
            binding[variables[i]] = Entity(c)
            yield from rec_assign(i + 1, binding)
        del binding[variables[i]]

    yield from rec_assign(0, {})


def prove_backward(problem: Problem, config: EngineConfig | None = None,
                   backend=None) -> Verdict:
    """Depth-first AND-OR search from the goal, with iterative deepening.

    Candidate decompositions are ordered by ascending condition count (ties
    by rule id), sub-goals are proven recursively with full backtracking, and
    a disproved mandatory sub-goal fails its decomposition.  The hypothesis
    is disproved when its negation can be established the same way.
    Deepening stops as soon as a round finishes without hitting its depth
    cutoff.
    """
    config = config or EngineConfig()
    backend = backend or make_backend(config.backend)
    if problem.hypothesis is None:
        raise ValueError("multi-option problems go through evaluate_options")
    hypothesis = problem.hypothesis
    kb, warnings = _prepare(problem, hypothesis, backend)
    rec = _Recorder("backward", problem.meta, backend)
    q = hypothesis.consequent
    universe = tuple(sorted(set(kb.constants()) | q.constants()))

    def finish(label: Label, resolution: dict | None) -> Verdict:
        _drain(backend, warnings)
        rec.trace.label = label
        rec.trace.resolution = resolution
        return Verdict(label, rec.trace, rec.calls, tuple(warnings),
                       _derived_facts(problem, hypothesis, kb))

    cutoff = [False]

    def prove(goal: Literal, budget: int, path: tuple[Literal, ...]
              ) -> tuple[Label, dict | None, bool]:
        """Returns (label, proof tree, exhausted-without-cutoff)."""
        res = backend.fact_check(Hypothesis(consequent=goal), kb)
        rec.record(Direction.BACKWARD, "fact_check",
                   {"kind": "hypothesis", "target": term_string(goal),
                    "label": res.label.value, "evidence": res.evidence})
        if res.label is Label.PROVED:
            return Label.PROVED, {"literal": term_string(goal), "fact": res.evidence}, True
        if res.label is Label.DISPROVED:
            return Label.DISPROVED, None, True
        if goal in path:
            return Label.UNKNOWN, None, True  # a cycle never unblocks with depth
        if budget <= 0:
            cutoff[0] = True
            return Label.UNKNOWN, None, False
        selection = backend.rule_select_backward((goal,), kb)
        rec.record(Direction.BACKWARD, "rule_select_backward",
                   {"goal": term_string(goal), "rules": list(selection.rule_ids)})
        if not selection.rule_ids:
            return Label.UNKNOWN, None, True
        module_sets = backend.logic_abduce(goal, selection, kb)
        rec.record(Direction.BACKWARD, "logic_abduce",
                   {"goal": term_string(goal),
                    "sets": [_set_payload(gs) for gs in module_sets],
                    "children": []})
        ordered = sorted(module_sets, key=lambda gs: (len(gs.goals), gs.origin_rule))
        exhausted = True
        for gs in ordered:
            for grounding in _groundings(gs.goals, universe):
                proofs = []
                for sub in grounding:
                    label, proof, sub_exhausted = prove(sub, budget - 1, path + (goal,))
                    exhausted = exhausted and sub_exhausted
                    if label is Label.PROVED:
                        proofs.append(proof)
                        continue
                    proofs = None
                    break
                if proofs is not None:
                    tree = {"literal": term_string(goal),
                            "rule": gs.origin_rule, "children": proofs}
                    return Label.PROVED, tree, True
        return Label.UNKNOWN, None, exhausted

    try:
        for depth in range(1, config.max_steps + 1):
            cutoff[0] = False
            label, proof, exhausted = prove(q, depth, ())
            if label is Label.PROVED:
                return finish(Label.PROVED, {"kind": "tree", "root": proof})
            if label is Label.DISPROVED:
                # directly contradicted by a fact
                evidence = kb.lookup(q.negated())
                return finish(Label.DISPROVED,
                              {"kind": "fact", "fact": evidence.id if evidence else None})
            neg_label, neg_proof, neg_exhausted = prove(q.negated(), depth, ())
            if neg_label is Label.PROVED:
                return finish(Label.DISPROVED, {"kind": "tree", "root": neg_proof})
            if exhausted and neg_exhausted and not cutoff[0]:
                return finish(Label.UNKNOWN, None)
        return finish(Label.UNKNOWN, None)
    except TransportError as exc:
        warnings.append(f"TransportError: {exc}")
        return finish(Label.UNKNOWN, None)


ENGINES = {
    "bi": prove_bidirectional,
    "forward": prove_forward,
    "backward": prove_backward,
}


def evaluate_options(problem: Problem, config: EngineConfig | None = None,
                     backend=None, engine: str = "bi",
                     ) -> tuple[int | None, tuple[Verdict, ...]]:
    """Evaluate options in order against a shared, growing knowledge base.

    Facts derived while validating one option are retained for the next
    (options carrying their own condition contribute nothing, since their
    assertions are evaluation-local).  The chosen index is the first option
    labeled Proved, 1-based; None when no option is proved.
    """
    if not problem.options:
        raise ValueError("evaluate_options needs a multi-option problem")
    prove = ENGINES[engine]
    shared = problem.kb
    verdicts: list[Verdict] = []
    chosen: int | None = None
    for i, option in enumerate(problem.options, start=1):
        sub = Problem(kb=shared, hypothesis=option,
                      meta=f"{problem.meta}#option{i}" if problem.meta else f"#option{i}",
                      freeform_facts=problem.freeform_facts,
                      freeform_rules=problem.freeform_rules)
        verdict = prove(sub, config, backend)
        verdicts.append(verdict)
        if verdict.derived_facts:
            shared = shared.add_derived(
                [(f.literal, f.rule_id, f.premises) for f in verdict.derived_facts])
        if chosen is None and verdict.label is Label.PROVED:
            chosen = i
    return chosen, tuple(verdicts)


# --------------------------------------------------------------------------
# Trace replay validation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ReplayReport:
    ok: bool
    step: int | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


def _solve_rule_binding(rule: Rule, ground_conditions: list[Literal],
                        conclusion: Literal) -> bool:
    """Does one single-variable binding instantiate the rule to these parts?"""
    if len(ground_conditions) != len(rule.conditions):
        return False
    binding: Binding = {}
    for template, ground in zip(rule.conditions, ground_conditions):
        b = unify(template, ground)
        if b is None:
            return False
        for v, e in b.items():
            if binding.setdefault(v, e) != e:
                return False
    try:
        instantiated = substitute_partial(rule.consequent, binding)
    except Exception:
        return False
    return instantiated == conclusion and instantiated.is_ground


def _validate_tree(root: dict, kb: KnowledgeBase) -> str | None:
    """Check a ground proof tree: fact leaves exist, rule nodes instantiate."""
    literal = literal_from_term(root["literal"])
    if "fact" in root and "rule" not in root:
        fact_id = root["fact"]
        if fact_id is None or not (1 <= fact_id <= len(kb.facts)):
            return f"missing evidence fact for {root['literal']}"
        if kb.fact(fact_id).literal != literal:
            return f"evidence fact {fact_id} does not match {root['literal']}"
        return None
    rule_id = root.get("rule")
    if rule_id is None or rule_id not in {r.id for r in kb.rules}:
        return f"unknown rule for {root['literal']}"
    children = root.get("children", [])
    child_literals = [literal_from_term(c["literal"]) for c in children]
    if not _solve_rule_binding(kb.rule(rule_id), child_literals, literal):
        return f"rule {rule_id} does not derive {root['literal']} from its children"
    for child in children:
        err = _validate_tree(child, kb)
        if err:
            return err
    return None


def replay_validate(trace: ProofTrace, problem: Problem,
                    hypothesis: Hypothesis | None = None) -> ReplayReport:
    """Re-validate a proof trace against the problem it came from.

    Every deduction must re-derive from the reconstructed fact set, every
    abduction must match its origin rule under the recorded unifier, every
    fact-check claim must point at a real matching fact, and a decisive final
    label must be backed by a valid resolution (the hallucination detector
    for remote-backend traces).  Reports the first invalid step on failure.
    """
    hypothesis = hypothesis or problem.hypothesis
    if hypothesis is None:
        return ReplayReport(False, None, "no hypothesis to validate against")
    kb = problem.kb
    for lit in hypothesis.condition:
        kb = kb.add_given(lit)
    q = hypothesis.consequent
    rule_ids = {r.id for r in kb.rules}
    namer = _VarNamer()
    root = GoalSet((Goal(q),))
    nodes: dict[int, GoalSet] = {1: root}
    seen_sigs = {root.signature()}
    last_index = 0

    def fail(step: TraceStep, reason: str) -> ReplayReport:
        return ReplayReport(False, step.index, reason)

    for step in trace.steps:
        if step.index <= last_index:
            return fail(step, "step indices must strictly increase")
        last_index = step.index
        p = step.payload
        try:
            report = _replay_step(step, p, kb, rule_ids, nodes, seen_sigs, namer, fail)
        except Exception as exc:
            return fail(step, f"malformed step: {exc}")
        if isinstance(report, ReplayReport):
            return report
        if report is not None:
            kb = report
    try:
        return _replay_finish(trace, kb, q)
    except Exception as exc:
        return ReplayReport(False, None, f"malformed resolution: {exc}")


def _replay_step(step, p, kb, rule_ids, nodes, seen_sigs, namer, fail):
    """Validate one recorded step; returns a failure report, an updated
    knowledge base (after a deduction), or None."""
    if step.module == "fact_identify":
        ids = p.get("facts", [])
        if not all(1 <= i <= len(kb.facts) for i in ids):
            return fail(step, "identified facts outside the knowledge base")
    elif step.module == "logic_deduce":
        entries = []
        for d in p.get("derived", []):
            literal = literal_from_term(d["term"])
            rid = d.get("rule")
            if rid not in rule_ids:
                return fail(step, f"unknown rule {rid}")
            rule = kb.rule(rid)
            premises = tuple(d.get("premises", ()))
            if len(premises) != len(rule.conditions) or not premises:
                return fail(step, f"rule {rid} needs {len(rule.conditions)} premises")
            binding = deserialize_binding(tuple((n, v) for n, v in d.get("binding", [])))
            for cond, pid in zip(rule.conditions, premises):
                if not (1 <= pid <= len(kb.facts)):
                    return fail(step, f"premise {pid} not yet derived")
                expected = substitute_partial(cond, binding)
                if not expected.is_ground or kb.fact(pid).literal != expected:
                    return fail(step, f"premise {pid} does not entail {cond}")
            conclusion = substitute_partial(rule.consequent, binding)
            if conclusion != literal:
                return fail(step, f"rule {rid} does not conclude {d['term']}")
            if kb.lookup(literal) is not None:
                return fail(step, f"derived fact {d['term']} is not novel")
            entries.append((literal, rid, premises))
        if entries:
            return kb.add_derived(entries)
    elif step.module == "logic_abduce":
        goal = literal_from_term(p["goal"])
        module_sets = []
        for s in p.get("sets", []):
            rid = s.get("origin_rule")
            if rid not in rule_ids:
                return fail(step, f"unknown rule {rid}")
            rule = kb.rule(rid)
            unifier = deserialize_binding(tuple((n, v) for n, v in s.get("unifier", [])))
            goals = tuple(literal_from_term(t) for t in s.get("goals", []))
            expected = tuple(substitute_partial(c, unifier) for c in rule.conditions)
            if expected != goals:
                return fail(step, f"goal set does not match rule {rid} under its unifier")
            module_sets.append(GoalSet(tuple(Goal(g) for g in goals),
                                       origin_rule=rid, target=goal,
                                       unifier=tuple((n, v) for n, v in s.get("unifier", [])),
                                       commitments=tuple((n, v) for n, v in s.get("commitments", []))))
        parent_id = p.get("node")
        if parent_id is not None:
            parent = nodes.get(parent_id)
            if parent is None:
                return fail(step, f"unknown frontier node {parent_id}")
            merged = expand_node(parent.goals, goal, tuple(module_sets), namer)
            kept = []
            for gs, _, _ in merged:  # mirror the engine's duplicate filter
                sig = gs.signature()
                if sig in seen_sigs:
                    continue
                seen_sigs.add(sig)
                kept.append(gs)
            child_ids = p.get("children", [])
            if len(child_ids) != len(kept):
                return fail(step, "recorded children disagree with the recomputed expansion")
            for cid, gs in zip(child_ids, kept):
                nodes[cid] = gs
    elif step.module == "fact_check":
        if p.get("kind") == "hypothesis":
            target = literal_from_term(p["target"])
            expected = kb.entailed(target)
            mapping = {Entailment.HOLDS: Label.PROVED.value,
                       Entailment.NEGATION_HOLDS: Label.DISPROVED.value,
                       Entailment.UNDETERMINED: Label.UNKNOWN.value}
            if mapping[expected] != p.get("label"):
                return fail(step, f"fact check of {p['target']} should be {mapping[expected]}")
        else:
            for rendered in p.get("nodes", []):
                for g in rendered.get("goals", []):
                    status = g.get("status")
                    literal = literal_from_term(g["term"])
                    binding = deserialize_binding(tuple((n, v) for n, v in g.get("binding", [])))
                    grounded = substitute_partial(literal, binding)
                    if status == GoalStatus.PROVEN.value:
                        fid = g.get("fact")
                        if fid is None or not (1 <= fid <= len(kb.facts)) \
                                or kb.fact(fid).literal != grounded:
                            return fail(step, f"goal {g['term']} lacks a matching fact")
                    elif status == GoalStatus.CONTRADICTED.value:
                        fid = g.get("fact")
                        if fid is None or not (1 <= fid <= len(kb.facts)) \
                                or kb.fact(fid).literal != grounded.negated():
                            return fail(step, f"goal {g['term']} lacks a contradicting fact")
    return None


def _replay_finish(trace: ProofTrace, kb: KnowledgeBase, q: Literal) -> ReplayReport:
    """A decisive final label must be backed by a valid resolution."""
    if trace.label not in (Label.PROVED, Label.DISPROVED):
        return ReplayReport(True)
    expected = q if trace.label is Label.PROVED else q.negated()
    res = trace.resolution or {}
    if res.get("kind") == "fact":
        fid = res.get("fact")
        if fid is None or not (1 <= fid <= len(kb.facts)) or kb.fact(fid).literal != expected:
            return ReplayReport(False, None, "decisive label lacks matching fact evidence")
        return ReplayReport(True)
    if res.get("kind") == "tree":
        root = res.get("root", {})
        if literal_from_term(root.get("literal", "")) != expected:
            return ReplayReport(False, None, "resolution tree does not conclude the hypothesis")
        err = _validate_tree(root, kb)
        if err:
            return ReplayReport(False, None, err)
        return ReplayReport(True)
    return ReplayReport(False, None, "decisive label without a resolution")
