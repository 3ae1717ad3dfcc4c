"""Seeded generator of labeled instances with controlled proof depth.

Rejection sampling: draw a vocabulary, facts, and rules, saturate, then look
for a hypothesis whose gold label and minimal proof depth match the request;
redraw otherwise.  Everything is deterministic in the seed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace

from .language import Hypothesis, Label, Problem
from .oracle import oracle_label, saturate
from .terms import VAR, Atom, Entity, KnowledgeBase, Literal, Rule, term_string

NOUNS = ("bear", "cat", "cow", "deer", "dog", "fox", "goat", "horse",
         "lion", "mouse", "pig", "rabbit", "sheep", "squirrel", "tiger", "wolf")
ADJECTIVES = ("big", "blue", "cold", "furry", "green", "happy", "kind", "nice",
              "quiet", "red", "rough", "round", "small", "smart", "white", "young")
VERBS = ("chases", "eats", "fears", "hears", "helps", "hugs", "likes",
         "loves", "needs", "sees", "visits", "wants")

MAX_DEPTH = 5

# Knob presets.  "deep" trades vocabulary breadth for long chains (high
# acceptance rate at depth 5, small closures); "rich" adds enough unrelated
# facts and rules that goal-blind forward chaining has room to wander.
PROFILES: dict[str, dict] = {
    "default": {},
    "deep": dict(n_constants=3, n_adjectives=14, n_verbs=2, n_facts=4,
                 n_rules=24, variable_rate=0.8, negation_rate=0.04,
                 condition_count_weights=(0.75, 0.2, 0.05)),
    "rich": dict(n_constants=6, n_adjectives=12, n_verbs=3, n_facts=12,
                 n_rules=28, variable_rate=0.7, negation_rate=0.04,
                 condition_count_weights=(0.7, 0.25, 0.05)),
}


class GenerationExhausted(Exception):
    """No accepted instance within the rejection budget."""


@dataclass(frozen=True)
class InstanceSpec:
    """Target label and depth plus the sampling knobs and seed."""

    target_label: Label
    proof_depth: int = 0  # ignored for Unknown targets
    n_constants: int = 5
    n_adjectives: int = 5
    n_verbs: int = 3
    n_facts: int = 9
    n_rules: int = 12
    negation_rate: float = 0.1
    seed: int = 0
    max_rejections: int = 10_000
    condition_count_weights: tuple[float, float, float] = (0.35, 0.45, 0.2)
    variable_rate: float = 0.5

    def __post_init__(self) -> None:
        if not (0 <= self.proof_depth <= MAX_DEPTH):
            raise ValueError(f"proof_depth must be 0..{MAX_DEPTH}")
        if not (0.0 <= self.negation_rate <= 1.0):
            raise ValueError("negation_rate must be within [0, 1]")
        if self.n_constants > len(NOUNS) or self.n_adjectives > len(ADJECTIVES) \
                or self.n_verbs > len(VERBS):
            raise ValueError("vocabulary request exceeds the lexicon")
        if min(self.n_constants, self.n_adjectives, self.n_verbs,
               self.n_facts, self.n_rules) < 1:
            raise ValueError("all size knobs must be positive")


@dataclass
class _Vocab:
    constants: list[str]
    adjectives: list[str]
    verbs: list[str]


def _draw_literal(rng: random.Random, vocab: _Vocab, negation_rate: float) -> Literal:
    positive = rng.random() >= negation_rate
    subject = Entity(rng.choice(vocab.constants))
    if rng.random() < 0.5:
        return Literal(Atom(subject, rng.choice(vocab.adjectives)), positive)
    return Literal(Atom(subject, rng.choice(vocab.verbs),
                        Entity(rng.choice(vocab.constants))), positive)


def _draw_facts(rng: random.Random, vocab: _Vocab, spec: InstanceSpec) -> list[Literal]:
    facts: list[Literal] = []
    seen_atoms: set[Atom] = set()
    tries = 0
    while len(facts) < spec.n_facts and tries < 40 * spec.n_facts:
        tries += 1
        lit = _draw_literal(rng, vocab, spec.negation_rate)
        if lit.atom in seen_atoms:
            continue
        seen_atoms.add(lit.atom)
        facts.append(lit)
    return facts


def _draw_clause(rng: random.Random, vocab: _Vocab, negation_rate: float,
                 subject: Entity, allow_var_object: bool) -> Literal:
    positive = rng.random() >= negation_rate
    if rng.random() < 0.5:
        return Literal(Atom(subject, rng.choice(vocab.adjectives)), positive)
    if allow_var_object and rng.random() < 0.15:
        obj: Entity = VAR
    else:
        obj = Entity(rng.choice(vocab.constants))
    return Literal(Atom(subject, rng.choice(vocab.verbs), obj), positive)


def _draw_rule(rng: random.Random, vocab: _Vocab, spec: InstanceSpec, rule_id: int) -> Rule:
    k = rng.choices((1, 2, 3), weights=spec.condition_count_weights)[0]
    use_var = rng.random() < spec.variable_rate
    conditions = []
    for j in range(k):
        if use_var and (j == 0 or rng.random() < 0.5):
            subject: Entity = VAR
        else:
            subject = Entity(rng.choice(vocab.constants))
        # the variable must surface as a subject before an object slot may use it
        introduced = use_var and any(c.atom.subject.variable for c in conditions)
        conditions.append(_draw_clause(rng, vocab, spec.negation_rate, subject,
                                       allow_var_object=introduced or subject.variable))
    if use_var and rng.random() < 0.5:
        consequent_subject: Entity = VAR
    else:
        consequent_subject = Entity(rng.choice(vocab.constants))
    consequent = _draw_clause(rng, vocab, spec.negation_rate, consequent_subject,
                              allow_var_object=use_var and consequent_subject.variable)
    return Rule(rule_id, tuple(conditions), consequent)


def _atom_space(vocab: _Vocab) -> list[Literal]:
    out = []
    for c in vocab.constants:
        for adj in vocab.adjectives:
            out.append(Literal(Atom(Entity(c), adj)))
        for verb in vocab.verbs:
            for o in vocab.constants:
                out.append(Literal(Atom(Entity(c), verb, Entity(o))))
    return out


def generate_instance(spec: InstanceSpec) -> Problem:
    """One instance matching the requested label (and depth, when decisive).

    Raises GenerationExhausted after ``max_rejections`` rejected draws.
    """
    rng = random.Random(spec.seed)
    for _ in range(spec.max_rejections):
        vocab = _Vocab(sorted(rng.sample(NOUNS, spec.n_constants)),
                       sorted(rng.sample(ADJECTIVES, spec.n_adjectives)),
                       sorted(rng.sample(VERBS, spec.n_verbs)))
        literals = _draw_facts(rng, vocab, spec)
        if len(literals) < spec.n_facts:
            continue
        rules = tuple(_draw_rule(rng, vocab, spec, i + 1) for i in range(spec.n_rules))
        kb = KnowledgeBase.from_literals(literals, rules)
        closure = saturate(kb)
        if not closure.consistent:
            continue
        if spec.target_label is Label.UNKNOWN:
            decided = {f.literal.atom for f in closure.facts}
            candidates = sorted((lit for lit in _atom_space(vocab)
                                 if lit.atom not in decided), key=term_string)
            if not candidates:
                continue
            chosen = rng.choice(candidates)
            if rng.random() < spec.negation_rate:
                chosen = chosen.negated()
        else:
            pool = sorted((f.literal for f in closure.facts
                           if f.depth == spec.proof_depth), key=term_string)
            if not pool:
                continue
            chosen = rng.choice(pool)
            if spec.target_label is Label.DISPROVED:
                chosen = chosen.negated()
        problem = Problem(
            kb=kb, hypothesis=Hypothesis(consequent=chosen),
            gold_label=spec.target_label,
            meta=f"gen-s{spec.seed}-{spec.target_label.value.lower()}"
                 f"-d{spec.proof_depth if spec.target_label is not Label.UNKNOWN else 0}")
        label, _ = oracle_label(problem)
        if label is not spec.target_label:
            raise AssertionError("generator acceptance check failed")
        return problem
    raise GenerationExhausted(
        f"no instance for {spec.target_label.value} at depth {spec.proof_depth} "
        f"within {spec.max_rejections} draws (seed {spec.seed})")


def generate_corpus(count: int, label: Label, depth: int, seed: int,
                    **overrides) -> list[Problem]:
    """``count`` instances of one label/depth; instance i uses seed ``seed+i``."""
    base = InstanceSpec(target_label=label, proof_depth=depth, seed=seed, **overrides)
    return [generate_instance(replace(base, seed=seed + i)) for i in range(count)]


def generate_balanced(count: int, seed: int, depths: tuple[int, ...] = (0, 1, 2, 3, 4, 5),
                      **overrides) -> list[Problem]:
    """Proved/Disproved/Unknown round robin, cycling depths within each
    decisive label; deterministic in the seed."""
    labels = (Label.PROVED, Label.DISPROVED, Label.UNKNOWN)
    problems = []
    per_label_counts = {label: 0 for label in labels}
    for i in range(count):
        label = labels[i % 3]
        depth = depths[per_label_counts[label] % len(depths)] \
            if label is not Label.UNKNOWN else 0
        per_label_counts[label] += 1
        spec = InstanceSpec(target_label=label, proof_depth=depth,
                            seed=seed + i, **overrides)
        problems.append(generate_instance(spec))
    return problems
