"""Ground and template literals, unification, and knowledge-base bookkeeping.

The term language is deliberately small: an entity is a lowercase constant or
the single rule-local variable; an atom is either an attribute of one entity
or a binary relation between two; a literal is a signed atom.  Rules carry at
most one distinct variable, so unification never needs an occurs check or
binding chains.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass


class UnboundVariableError(Exception):
    """Raised when substitution meets a variable with no binding entry."""


_RESERVED = frozenset(
    {"the", "if", "then", "and", "is", "are", "not", "does", "do",
     "someone", "they", "them"}
)


@dataclass(frozen=True, slots=True)
class Entity:
    """A constant (lowercase token) or a named variable."""

    name: str
    variable: bool = False

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("entity name must be non-empty")
        if not self.variable:
            if self.name != self.name.lower() or any(c.isspace() for c in self.name):
                raise ValueError(f"constant {self.name!r} must be lowercase, no whitespace")
            if self.name in _RESERVED:
                raise ValueError(f"{self.name!r} is a reserved word")

    def __str__(self) -> str:
        return f"?{self.name}" if self.variable else self.name


#: The canonical variable bound by "someone"/"they" inside a rule.
VAR = Entity("x", variable=True)


@dataclass(frozen=True, slots=True)
class Atom:
    """Attribute atom (obj is None) or binary relation atom.

    ``predicate`` holds the adjective, or the verb in third-person singular
    form; comparison is exact token equality, normalization is the parser's
    job.
    """

    subject: Entity
    predicate: str
    obj: Entity | None = None

    @property
    def is_relation(self) -> bool:
        return self.obj is not None

    def entities(self) -> tuple[Entity, ...]:
        return (self.subject,) if self.obj is None else (self.subject, self.obj)

    def constants(self) -> frozenset[str]:
        return frozenset(e.name for e in self.entities() if not e.variable)

    def variables(self) -> frozenset[Entity]:
        return frozenset(e for e in self.entities() if e.variable)

    def __str__(self) -> str:
        if self.obj is None:
            return f"{self.predicate}({self.subject})"
        return f"{self.predicate}({self.subject}, {self.obj})"


@dataclass(frozen=True, slots=True)
class Literal:
    """A signed atom.  Negation of a negation is not representable."""

    atom: Atom
    positive: bool = True

    @property
    def is_ground(self) -> bool:
        return not self.atom.variables()

    def negated(self) -> "Literal":
        return Literal(self.atom, not self.positive)

    def constants(self) -> frozenset[str]:
        return self.atom.constants()

    def variables(self) -> frozenset[Entity]:
        return self.atom.variables()

    def __str__(self) -> str:
        return str(self.atom) if self.positive else f"~{self.atom}"


def attr(subject: Entity | str, adjective: str, positive: bool = True) -> Literal:
    """Build an attribute literal; a plain string subject means a constant."""
    if isinstance(subject, str):
        subject = Entity(subject)
    return Literal(Atom(subject, adjective), positive)


def rel(verb: str, subject: Entity | str, obj: Entity | str, positive: bool = True) -> Literal:
    """Build a relation literal; plain string entities mean constants."""
    if isinstance(subject, str):
        subject = Entity(subject)
    if isinstance(obj, str):
        obj = Entity(obj)
    return Literal(Atom(subject, verb, obj), positive)


#: A variable-to-entity mapping.  Rule-level unification produces at most one
#: entry; goal-decomposition machinery may carry several named scopes.
Binding = dict[Entity, Entity]


def unify(template: Literal, ground: Literal) -> Binding | None:
    """Match a template literal against a ground one.

    Returns the binding ({} when the template is itself ground and equal),
    or None when polarity, shape, or any constant position disagrees, or the
    variable would need two different constants.
    """
    if not ground.is_ground:
        raise ValueError("second argument to unify must be ground")
    if template.positive != ground.positive:
        return None
    t, g = template.atom, ground.atom
    if t.predicate != g.predicate or t.is_relation != g.is_relation:
        return None
    binding: Binding = {}
    for te, ge in zip(t.entities(), g.entities()):
        if te.variable:
            bound = binding.get(te)
            if bound is None:
                binding[te] = ge
            elif bound != ge:
                return None
        elif te != ge:
            return None
    return binding


def substitute(template: Literal, binding: Binding) -> Literal:
    """Apply a binding to every variable occurrence in the template.

    Raises UnboundVariableError if a variable has no entry.  Bindings may map
    variables to other variables (used when goals are renamed across scopes).
    """

    def resolve(e: Entity) -> Entity:
        if not e.variable:
            return e
        if e not in binding:
            raise UnboundVariableError(f"no binding for {e}")
        return binding[e]

    a = template.atom
    subject = resolve(a.subject)
    obj = resolve(a.obj) if a.obj is not None else None
    if subject == a.subject and obj == a.obj:
        return template
    return Literal(Atom(subject, a.predicate, obj), template.positive)


def substitute_partial(template: Literal, mapping: Binding) -> Literal:
    """Apply a binding to the variables it covers, leaving the rest in place."""

    def resolve(e: Entity) -> Entity:
        return mapping.get(e, e) if e.variable else e

    a = template.atom
    subject = resolve(a.subject)
    obj = resolve(a.obj) if a.obj is not None else None
    if subject == a.subject and obj == a.obj:
        return template
    return Literal(Atom(subject, a.predicate, obj), template.positive)


def contradicts(a: Literal, b: Literal) -> bool:
    """True iff the two ground literals share an atom with opposite signs."""
    return a.atom == b.atom and a.positive != b.positive


def term_string(lit: Literal) -> str:
    """Unambiguous structural form, e.g. ``~chases(?x, cow)``; see literal_from_term."""
    return str(lit)


def literal_from_term(text: str) -> Literal:
    """Inverse of term_string, used when traces are re-loaded from disk."""
    text = text.strip()
    positive = True
    if text.startswith("~"):
        positive = False
        text = text[1:]
    head, _, rest = text.partition("(")
    args = rest.rstrip(")").split(",")
    entities = []
    for raw in args:
        raw = raw.strip()
        if raw.startswith("?"):
            entities.append(Entity(raw[1:], variable=True))
        else:
            entities.append(Entity(raw))
    if len(entities) == 1:
        return Literal(Atom(entities[0], head), positive)
    if len(entities) == 2:
        return Literal(Atom(entities[0], head, entities[1]), positive)
    raise ValueError(f"bad term: {text!r}")


class Entailment(enum.Enum):
    HOLDS = "Holds"
    NEGATION_HOLDS = "NegationHolds"
    UNDETERMINED = "Undetermined"


@dataclass(frozen=True, slots=True)
class Fact:
    """A ground literal with provenance.

    Given facts have rule_id None and depth 0; derived facts cite exactly one
    rule and at least one premise fact, with depth one past their deepest
    premise.
    """

    id: int
    literal: Literal
    rule_id: int | None = None
    premises: tuple[int, ...] = ()
    depth: int = 0

    def __post_init__(self) -> None:
        if not self.literal.is_ground:
            raise ValueError("facts must be ground")
        if self.rule_id is None:
            if self.premises or self.depth != 0:
                raise ValueError("given facts have no premises and depth 0")
        elif not self.premises:
            raise ValueError("derived facts must cite at least one premise")

    @property
    def given(self) -> bool:
        return self.rule_id is None


@dataclass(frozen=True, slots=True)
class Rule:
    """conditions (a conjunction of literal templates) -> consequent."""

    id: int
    conditions: tuple[Literal, ...]
    consequent: Literal

    def __post_init__(self) -> None:
        if not self.conditions:
            raise ValueError("rules need at least one condition")
        used = set().union(*(c.variables() for c in self.conditions), self.consequent.variables())
        if len(used) > 1:
            raise ValueError("a rule may bind at most one variable")
        if self.consequent.variables() and not any(c.variables() for c in self.conditions):
            raise ValueError("a variable in the consequent must appear in a condition")

    def variable(self) -> Entity | None:
        for lit in (*self.conditions, self.consequent):
            for v in lit.variables():
                return v
        return None


class KnowledgeBase:
    """Immutable fact/rule store, deduplicated by literal.

    Fact ids are 1-based insertion positions (the numbering used when
    premises are rendered for prompts and reports).  ``add_derived`` returns
    a new store; instances can be shared freely across evaluations.
    """

    __slots__ = ("facts", "rules", "_by_literal", "_rule_by_id", "consistent")

    def __init__(self, facts: tuple[Fact, ...] = (), rules: tuple[Rule, ...] = ()):
        self.facts = facts
        self.rules = rules
        self._by_literal: dict[Literal, Fact] = {}
        self.consistent = True
        for f in facts:
            if f.literal in self._by_literal:
                raise ValueError(f"duplicate fact literal: {f.literal}")
            self._by_literal[f.literal] = f
        for f in facts:
            if f.literal.negated() in self._by_literal:
                self.consistent = False
                break
        self._rule_by_id = {r.id: r for r in rules}

    @classmethod
    def from_literals(cls, literals: list[Literal] | tuple[Literal, ...],
                      rules: tuple[Rule, ...] = ()) -> "KnowledgeBase":
        """Build a store of given facts, keeping the first of any duplicate literal."""
        facts: list[Fact] = []
        seen: set[Literal] = set()
        for lit in literals:
            if lit in seen:
                continue
            seen.add(lit)
            facts.append(Fact(id=len(facts) + 1, literal=lit))
        return cls(tuple(facts), rules)

    def fact(self, fact_id: int) -> Fact:
        return self.facts[fact_id - 1]

    def rule(self, rule_id: int) -> Rule:
        return self._rule_by_id[rule_id]

    def lookup(self, literal: Literal) -> Fact | None:
        return self._by_literal.get(literal)

    def entailed(self, goal: Literal) -> Entailment:
        """Three-way fact-level entailment of a ground goal.

        When both a literal and its negation are present (the store is then
        flagged inconsistent) NegationHolds takes precedence.
        """
        if not goal.is_ground:
            raise ValueError("entailment goal must be ground")
        if goal.negated() in self._by_literal:
            return Entailment.NEGATION_HOLDS
        if goal in self._by_literal:
            return Entailment.HOLDS
        return Entailment.UNDETERMINED

    def add_given(self, literal: Literal) -> "KnowledgeBase":
        """Insert one given fact; a duplicate literal leaves the store unchanged."""
        if literal in self._by_literal:
            return self
        facts = self.facts + (Fact(id=len(self.facts) + 1, literal=literal),)
        return KnowledgeBase(facts, self.rules)

    def add_derived(self, entries: list[tuple[Literal, int, tuple[int, ...]]]) -> "KnowledgeBase":
        """Insert derived facts (literal, rule_id, premise ids), skipping duplicates."""
        facts = list(self.facts)
        seen = set(self._by_literal)
        for literal, rule_id, premises in entries:
            if literal in seen:
                continue
            seen.add(literal)
            depth = 1 + max(facts[p - 1].depth for p in premises)
            facts.append(Fact(id=len(facts) + 1, literal=literal,
                              rule_id=rule_id, premises=premises, depth=depth))
        if len(facts) == len(self.facts):
            return self
        return KnowledgeBase(tuple(facts), self.rules)

    def constants(self) -> tuple[str, ...]:
        """Constant names in first-appearance order over facts, then rules."""
        out: list[str] = []
        seen: set[str] = set()

        def take(lit: Literal) -> None:
            for e in lit.atom.entities():
                if not e.variable and e.name not in seen:
                    seen.add(e.name)
                    out.append(e.name)

        for f in self.facts:
            take(f.literal)
        for r in self.rules:
            for c in r.conditions:
                take(c)
            take(r.consequent)
        return tuple(out)

    def __len__(self) -> int:
        return len(self.facts)
