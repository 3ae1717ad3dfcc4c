"""Seeded instance generation: determinism, acceptance conditions, knobs."""

import json

import pytest

from bichain.generate import (
    PROFILES,
    GenerationExhausted,
    InstanceSpec,
    generate_balanced,
    generate_corpus,
    generate_instance,
)
from bichain.language import Label, problem_record
from bichain.oracle import oracle_label, saturate


class TestDeterminism:
    def test_same_seed_same_bytes(self):
        spec = InstanceSpec(Label.PROVED, 5, seed=42, **PROFILES["deep"])
        first = json.dumps(problem_record(generate_instance(spec)), sort_keys=True)
        second = json.dumps(problem_record(generate_instance(spec)), sort_keys=True)
        assert first == second

    def test_different_seeds_differ(self):
        a = generate_instance(InstanceSpec(Label.UNKNOWN, seed=1))
        b = generate_instance(InstanceSpec(Label.UNKNOWN, seed=2))
        assert problem_record(a) != problem_record(b)

    def test_corpus_is_seed_indexed(self):
        corpus = generate_corpus(3, Label.PROVED, 1, seed=100)
        lone = generate_instance(InstanceSpec(Label.PROVED, 1, seed=101))
        assert problem_record(corpus[1]) == problem_record(lone)


class TestAcceptanceConditions:
    @pytest.mark.parametrize("label", [Label.PROVED, Label.DISPROVED])
    @pytest.mark.parametrize("depth", [0, 1, 3])
    def test_label_and_depth_match_the_oracle(self, label, depth):
        problem = generate_instance(
            InstanceSpec(label, depth, seed=31 + depth, **PROFILES["deep"]))
        gold, reference = oracle_label(problem)
        assert gold is label
        target = problem.hypothesis.consequent
        if label is Label.DISPROVED:
            target = target.negated()
        closure = saturate(problem.kb)
        assert closure.lookup(target).depth == depth

    def test_depth_zero_means_a_given_fact(self):
        problem = generate_instance(InstanceSpec(Label.PROVED, 0, seed=3))
        assert problem.kb.lookup(problem.hypothesis.consequent) is not None

    def test_unknown_target(self):
        problem = generate_instance(InstanceSpec(Label.UNKNOWN, seed=5))
        label, _ = oracle_label(problem)
        assert label is Label.UNKNOWN

    def test_generated_bases_are_consistent(self):
        for seed in range(5):
            problem = generate_instance(
                InstanceSpec(Label.UNKNOWN, seed=seed, negation_rate=0.3))
            assert problem.kb.consistent
            assert saturate(problem.kb).consistent


class TestKnobs:
    def test_exhaustion_raises(self):
        spec = InstanceSpec(Label.PROVED, 5, seed=0, n_rules=1, n_facts=1,
                            max_rejections=25)
        with pytest.raises(GenerationExhausted):
            generate_instance(spec)

    def test_invalid_specs_rejected(self):
        with pytest.raises(ValueError):
            InstanceSpec(Label.PROVED, proof_depth=6)
        with pytest.raises(ValueError):
            InstanceSpec(Label.PROVED, negation_rate=1.5)
        with pytest.raises(ValueError):
            InstanceSpec(Label.PROVED, n_constants=99)
        with pytest.raises(ValueError):
            InstanceSpec(Label.PROVED, n_rules=0)

    def test_vocabulary_knobs_are_honored(self):
        problem = generate_instance(
            InstanceSpec(Label.UNKNOWN, seed=11, n_constants=3, n_facts=5, n_rules=4))
        constants = set()
        for f in problem.kb.facts:
            constants |= f.literal.constants()
        assert len(constants) <= 3
        assert len(problem.kb.facts) == 5
        assert len(problem.kb.rules) == 4

    def test_condition_counts_within_three(self):
        problem = generate_instance(InstanceSpec(Label.UNKNOWN, seed=17, n_rules=12))
        assert all(1 <= len(r.conditions) <= 3 for r in problem.kb.rules)

    def test_balanced_corpus_shape(self):
        problems = generate_balanced(9, seed=500, **PROFILES["deep"])
        labels = [p.gold_label for p in problems]
        assert labels.count(Label.PROVED) == 3
        assert labels.count(Label.DISPROVED) == 3
        assert labels.count(Label.UNKNOWN) == 3

    def test_emitted_records_reload(self):
        problem = generate_instance(InstanceSpec(Label.PROVED, 2, seed=77,
                                                 **PROFILES["deep"]))
        from bichain.language import parse_problem
        again = parse_problem(problem_record(problem))
        assert problem_record(again) == problem_record(problem)
        assert again.gold_label is Label.PROVED
