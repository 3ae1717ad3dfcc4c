"""Unification, substitution, contradiction, and knowledge-base bookkeeping."""

import random

import pytest

from bichain.terms import (
    VAR,
    Atom,
    Entity,
    Entailment,
    Fact,
    KnowledgeBase,
    Literal,
    Rule,
    UnboundVariableError,
    attr,
    contradicts,
    literal_from_term,
    rel,
    substitute,
    term_string,
    unify,
)


class TestUnify:
    def test_variable_binds_to_constant(self):
        assert unify(attr(VAR, "blue"), attr("cow", "blue")) == {VAR: Entity("cow")}

    def test_ground_identity_gives_empty_binding(self):
        assert unify(attr("cow", "blue"), attr("cow", "blue")) == {}

    def test_polarity_mismatch(self):
        assert unify(attr(VAR, "blue"), attr("cow", "blue", False)) is None

    def test_constant_mismatch(self):
        assert unify(rel("sees", VAR, "tiger"), rel("sees", "cow", "bear")) is None

    def test_shape_mismatch(self):
        assert unify(attr(VAR, "sees"), rel("sees", "cow", "bear")) is None

    def test_repeated_variable_must_agree(self):
        template = rel("chases", VAR, VAR)
        assert unify(template, rel("chases", "cow", "cow")) == {VAR: Entity("cow")}
        assert unify(template, rel("chases", "cow", "bear")) is None

    def test_ground_second_argument_required(self):
        with pytest.raises(ValueError):
            unify(attr("cow", "blue"), attr(VAR, "blue"))


class TestSubstitute:
    def test_instantiates_template(self):
        out = substitute(rel("chases", VAR, "tiger"), {VAR: Entity("cow")})
        assert out == rel("chases", "cow", "tiger")

    def test_ground_literal_noop(self):
        lit = attr("cow", "blue")
        assert substitute(lit, {}) is lit

    def test_unbound_variable_raises(self):
        with pytest.raises(UnboundVariableError):
            substitute(attr(VAR, "rough"), {})

    def test_unify_then_substitute_round_trip(self):
        rng = random.Random(7)
        constants = ["bear", "cow", "dog", "lion"]
        predicates = ["blue", "rough", "sees", "chases"]
        for _ in range(500):
            pred = rng.choice(predicates)
            if pred in ("blue", "rough"):
                ground = attr(rng.choice(constants), pred, rng.random() < 0.8)
                template = Literal(ground.atom, ground.positive)
                if rng.random() < 0.6:
                    template = attr(VAR, pred, ground.positive)
            else:
                ground = rel(pred, rng.choice(constants), rng.choice(constants),
                             rng.random() < 0.8)
                subj = VAR if rng.random() < 0.5 else ground.atom.subject
                obj = VAR if rng.random() < 0.5 else ground.atom.obj
                if subj is VAR and obj is VAR and ground.atom.subject != ground.atom.obj:
                    obj = ground.atom.obj  # one variable cannot name two constants
                template = Literal(Atom(subj, pred, obj), ground.positive)
            binding = unify(template, ground)
            assert binding is not None
            assert substitute(template, binding) == ground


class TestContradicts:
    def test_definitional(self):
        assert contradicts(attr("cow", "blue"), attr("cow", "blue", False))
        assert not contradicts(attr("cow", "blue"), attr("cow", "blue"))
        assert not contradicts(attr("cow", "blue"), attr("bear", "blue", False))

    def test_symmetric_and_irreflexive(self):
        rng = random.Random(13)
        constants = ["bear", "cow", "dog"]
        for _ in range(300):
            a = attr(rng.choice(constants), rng.choice(["blue", "big"]),
                     rng.random() < 0.5)
            b = attr(rng.choice(constants), rng.choice(["blue", "big"]),
                     rng.random() < 0.5)
            assert contradicts(a, b) == contradicts(b, a)
            assert not contradicts(a, a)


class TestKnowledgeBase:
    def test_entailment_three_way(self):
        kb = KnowledgeBase.from_literals([attr("cow", "blue")])
        assert kb.entailed(attr("cow", "blue")) is Entailment.HOLDS
        assert kb.entailed(attr("cow", "blue", False)) is Entailment.NEGATION_HOLDS
        assert kb.entailed(attr("cow", "red")) is Entailment.UNDETERMINED

    def test_empty_store_is_undetermined(self):
        kb = KnowledgeBase.from_literals([])
        assert kb.entailed(attr("cow", "blue")) is Entailment.UNDETERMINED

    def test_negation_holds_precedence_on_inconsistent_store(self):
        kb = KnowledgeBase.from_literals([attr("cow", "blue")])
        kb = kb.add_given(attr("cow", "blue", False))
        assert not kb.consistent
        assert kb.entailed(attr("cow", "blue")) is Entailment.NEGATION_HOLDS

    def test_add_duplicate_literal_keeps_count_and_provenance(self):
        kb = KnowledgeBase.from_literals([attr("cow", "blue")])
        again = kb.add_given(attr("cow", "blue"))
        assert len(again) == 1
        assert again.fact(1).given

    def test_add_fresh_literal_increments(self):
        kb = KnowledgeBase.from_literals([attr("cow", "blue")])
        bigger = kb.add_given(attr("bear", "round"))
        assert len(bigger) == 2 and len(kb) == 1  # original untouched

    def test_contradiction_flips_consistency_flag(self):
        kb = KnowledgeBase.from_literals([attr("cow", "blue")])
        assert kb.consistent
        assert not kb.add_given(attr("cow", "blue", False)).consistent

    def test_derived_depth_is_one_past_deepest_premise(self):
        kb = KnowledgeBase.from_literals([attr("cow", "blue"), attr("cow", "big")])
        kb = kb.add_derived([(attr("cow", "rough"), 1, (1,))])
        kb = kb.add_derived([(attr("cow", "red"), 2, (2, 3))])
        assert kb.fact(3).depth == 1
        assert kb.fact(4).depth == 2
        for fact in kb.facts:
            if not fact.given:
                assert all(kb.fact(p).depth < fact.depth for p in fact.premises)

    def test_constants_in_first_appearance_order(self):
        kb = KnowledgeBase.from_literals(
            [rel("sees", "tiger", "cow"), attr("bear", "blue")])
        assert kb.constants() == ("tiger", "cow", "bear")


class TestInvariants:
    def test_fact_requires_ground_literal(self):
        with pytest.raises(ValueError):
            Fact(1, attr(VAR, "blue"))

    def test_derived_fact_needs_premises(self):
        with pytest.raises(ValueError):
            Fact(2, attr("cow", "blue"), rule_id=1, premises=())

    def test_given_fact_has_depth_zero(self):
        with pytest.raises(ValueError):
            Fact(1, attr("cow", "blue"), depth=2)

    def test_rule_needs_conditions(self):
        with pytest.raises(ValueError):
            Rule(1, (), attr("cow", "blue"))

    def test_rule_variable_must_appear_in_a_condition(self):
        with pytest.raises(ValueError):
            Rule(1, (attr("cow", "blue"),), attr(VAR, "rough"))

    def test_entity_names_are_validated(self):
        with pytest.raises(ValueError):
            Entity("Cow")
        with pytest.raises(ValueError):
            Entity("someone")
        with pytest.raises(ValueError):
            Entity("")


class TestTermStrings:
    def test_round_trip(self):
        for lit in [attr("cow", "blue"), attr("mouse", "round", False),
                    rel("sees", "tiger", "cow"), rel("chases", VAR, "lion", False),
                    rel("chases", VAR, VAR)]:
            assert literal_from_term(term_string(lit)) == lit
