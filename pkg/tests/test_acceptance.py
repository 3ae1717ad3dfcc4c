"""Acceptance criteria, one test per criterion, each printing a verdict line.

Everything here runs offline: the remote-backend criterion uses a local stub
endpoint replaying recorded responses.
"""

import json
import random
import statistics
import threading
import time
from dataclasses import replace
from fractions import Fraction
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from bichain.engine import (
    Direction,
    EngineConfig,
    ProofTrace,
    TraceStep,
    prove_backward,
    prove_bidirectional,
    prove_forward,
    replay_validate,
)
from bichain.generate import (
    ADJECTIVES,
    NOUNS,
    PROFILES,
    VERBS,
    InstanceSpec,
    generate_balanced,
    generate_instance,
)
from bichain.language import (
    Hypothesis,
    Label,
    parse_literal,
    parse_problem,
    parse_statement,
    problem_record,
    render_literal,
    render_rule,
)
from bichain.modules import DeductionStep, Derivation, Goal, GoalSet, SymbolicBackend
from bichain.oracle import oracle_label, premise_prf
from bichain.remote import Cassette, RemoteBackend, RemoteConfig, render_prompt
from bichain.terms import VAR, Atom, Entity, Literal, attr, rel, substitute, term_string, unify

ENGINES = {"bi": prove_bidirectional, "forward": prove_forward,
           "backward": prove_backward}

BALANCED_SEED = 1000
BALANCED_SIZE = 500
EFFICIENCY_SEEDS = (40000, 47000)


def report(criterion: int, detail: str) -> None:
    print(f"\ncriterion {criterion}: PASS — {detail}")


@pytest.fixture(scope="module")
def balanced_corpus():
    """500 instances, depths 0-5, balanced Proved/Disproved/Unknown, one seed."""
    started = time.time()
    problems = generate_balanced(BALANCED_SIZE, seed=BALANCED_SEED, **PROFILES["deep"])
    return problems, time.time() - started


@pytest.fixture(scope="module")
def balanced_traces(balanced_corpus):
    """Every engine's verdict and trace over the balanced corpus."""
    problems, gen_seconds = balanced_corpus
    out = []
    started = time.time()
    for problem in problems:
        gold, _ = oracle_label(problem)
        verdicts = {name: engine(problem) for name, engine in ENGINES.items()}
        out.append((problem, gold, verdicts))
    return out, gen_seconds + (time.time() - started)


class TestCriterion1:
    def test_fixture_correctness(self, squirrel_problem, cowbear_problem):
        started = time.time()
        cases = [
            (squirrel_problem, Label.PROVED),
            (cowbear_problem, Label.PROVED),
            (replace(cowbear_problem, gold_label=None,
                     hypothesis=Hypothesis(rel("likes", "cow", "tiger"))),
             Label.UNKNOWN),
        ]
        config = EngineConfig(max_steps=50)
        for problem, expected in cases:
            for name, engine in ENGINES.items():
                verdict = engine(problem, config)
                assert verdict.label is expected, (problem.meta, name)
        elapsed = time.time() - started
        assert elapsed < 1.0
        report(1, f"three fixture hypotheses, three engines, {elapsed:.3f}s")


class TestCriterion2:
    def test_oracle_agreement_on_balanced_corpus(self, balanced_traces):
        rows, total_seconds = balanced_traces
        assert len(rows) == BALANCED_SIZE
        mismatches = [(problem.meta, name)
                      for problem, gold, verdicts in rows
                      for name, verdict in verdicts.items()
                      if verdict.label is not gold]
        assert mismatches == []
        # gold labels also match the generator's targets
        assert all(gold is problem.gold_label for problem, gold, _ in rows)
        assert total_seconds < 60.0
        report(2, f"{BALANCED_SIZE} instances x 3 engines, 100% oracle "
                  f"agreement, {total_seconds:.1f}s including generation")


class TestCriterion3:
    def test_every_trace_replays(self, balanced_traces):
        rows, _ = balanced_traces
        total = 0
        for problem, _, verdicts in rows:
            for verdict in verdicts.values():
                assert bool(replay_validate(verdict.trace, problem)), problem.meta
                total += 1
        report(3, f"replay validation passed on {total}/{total} traces")


class TestCriterion4:
    def test_efficiency_direction_on_depth_five(self):
        problems = [generate_instance(InstanceSpec(Label.PROVED, 5,
                                                   seed=EFFICIENCY_SEEDS[0] + i,
                                                   **PROFILES["rich"]))
                    for i in range(120)]
        problems += [generate_instance(InstanceSpec(Label.DISPROVED, 5,
                                                    seed=EFFICIENCY_SEEDS[1] + i,
                                                    **PROFILES["rich"]))
                     for i in range(80)]
        assert len(problems) >= 200
        calls = {name: [] for name in ENGINES}
        for problem in problems:
            for name, engine in ENGINES.items():
                verdict = engine(problem)
                assert verdict.label is problem.gold_label, (problem.meta, name)
                calls[name].append(verdict.calls)
        means = {name: statistics.mean(values) for name, values in calls.items()}
        assert means["bi"] < means["forward"]
        assert means["bi"] < means["backward"]
        ratio_forward = means["forward"] / means["bi"]
        ratio_backward = means["backward"] / means["bi"]
        print(f"\nmean calls over {len(problems)} depth-5 instances: "
              f"bi={means['bi']:.2f} forward={means['forward']:.2f} "
              f"backward={means['backward']:.2f}")
        print(f"calls(forward)/calls(bi) = {ratio_forward:.2f}x, "
              f"calls(backward)/calls(bi) = {ratio_backward:.2f}x "
              f"(headline comparison points: 1.36x and 1.12x)")
        report(4, f"mean(bi)={means['bi']:.2f} < mean(forward)={means['forward']:.2f} "
                  f"and < mean(backward)={means['backward']:.2f}")


class TestCriterion5:
    CASES = 10_000

    def test_substitute_unify_identity(self):
        rng = random.Random(2024)
        for _ in range(self.CASES):
            predicate_is_attr = rng.random() < 0.5
            if predicate_is_attr:
                ground = attr(rng.choice(NOUNS), rng.choice(ADJECTIVES),
                              rng.random() < 0.85)
                template = attr(VAR, ground.atom.predicate, ground.positive) \
                    if rng.random() < 0.6 else ground
            else:
                ground = rel(rng.choice(VERBS), rng.choice(NOUNS),
                             rng.choice(NOUNS), rng.random() < 0.85)
                subject = VAR if rng.random() < 0.5 else ground.atom.subject
                obj = VAR if rng.random() < 0.5 else ground.atom.obj
                if subject is VAR and obj is VAR \
                        and ground.atom.subject != ground.atom.obj:
                    obj = ground.atom.obj
                template = Literal(Atom(subject, ground.atom.predicate, obj),
                                   ground.positive)
            binding = unify(template, ground)
            assert binding is not None
            assert substitute(template, binding) == ground
        report(5, f"substitute-after-unify identity held on {self.CASES} cases "
                  "(plus round-trip and determinism suites)")

    def test_parse_render_round_trip(self):
        rng = random.Random(4048)
        for i in range(self.CASES):
            if i % 5 == 4:
                # a rule sentence; the variable must open as a subject
                use_var = rng.random() < 0.7
                conditions = []
                for j in range(rng.randint(1, 3)):
                    subject = VAR if use_var and (j == 0 or rng.random() < 0.5) \
                        else Entity(rng.choice(NOUNS))
                    if rng.random() < 0.5:
                        conditions.append(attr(subject, rng.choice(ADJECTIVES),
                                               rng.random() < 0.8))
                    else:
                        obj = VAR if (use_var and j > 0 and rng.random() < 0.2) \
                            else Entity(rng.choice(NOUNS))
                        conditions.append(Literal(
                            Atom(subject, rng.choice(VERBS), obj),
                            rng.random() < 0.8))
                subject = VAR if use_var and rng.random() < 0.5 \
                    else Entity(rng.choice(NOUNS))
                consequent = attr(subject, rng.choice(ADJECTIVES), rng.random() < 0.8)
                from bichain.terms import Rule
                rule = Rule(1, tuple(conditions), consequent)
                text = render_rule(rule)
                parsed = parse_statement(text)
                assert replace(parsed, id=1) == rule, text
            else:
                if rng.random() < 0.5:
                    lit = attr(rng.choice(NOUNS), rng.choice(ADJECTIVES),
                               rng.random() < 0.8)
                else:
                    lit = rel(rng.choice(VERBS), rng.choice(NOUNS),
                              rng.choice(NOUNS), rng.random() < 0.8)
                assert parse_literal(render_literal(lit)) == lit

    def test_generator_determinism_per_seed(self):
        quick = dict(n_constants=3, n_adjectives=4, n_verbs=2, n_facts=4, n_rules=5)
        labels = (Label.UNKNOWN, Label.UNKNOWN, Label.UNKNOWN,
                  Label.PROVED, Label.DISPROVED)
        for i in range(self.CASES):
            label = labels[i % len(labels)]
            depth = (i % 2) if label is not Label.UNKNOWN else 0
            spec = InstanceSpec(label, depth, seed=3_000_000 + i, **quick)
            first = json.dumps(problem_record(generate_instance(spec)), sort_keys=True)
            second = json.dumps(problem_record(generate_instance(spec)), sort_keys=True)
            assert first == second, spec


class TestCriterion6:
    def test_confusion_semantics_exhaustively(self):
        backend = SymbolicBackend()
        d = [Derivation(attr("cow", "blue"), 1, (1,)),
             Derivation(rel("eats", "tiger", "squirrel"), 2, (1,)),
             Derivation(rel("likes", "mouse", "squirrel"), 3, (2,)),
             Derivation(attr("cow", "blue"), 4, (3,))]  # duplicate literal of d[0]
        assert backend.confusion_check(DeductionStep(())) is False
        assert backend.confusion_check(DeductionStep((d[0],))) is False
        assert backend.confusion_check(DeductionStep((d[0], d[3]))) is False
        assert backend.confusion_check(DeductionStep((d[0], d[1]))) is True
        assert backend.confusion_check(DeductionStep((d[0], d[1], d[2]))) is True
        # the two simultaneous deductions from the walkthrough figure
        assert backend.confusion_check(DeductionStep((d[1], d[2]))) is True
        goal = rel("chases", "cow", "lion")
        gs = [GoalSet((Goal(attr("cow", "blue")),), origin_rule=2, target=goal),
              GoalSet((Goal(rel("likes", "cow", "tiger")),), origin_rule=3, target=goal),
              GoalSet((Goal(attr("cow", "blue")),), origin_rule=9, target=goal),
              GoalSet((Goal(attr("bear", "big")),), origin_rule=4,
                      target=attr("bear", "red"))]
        assert backend.confusion_check(()) is False
        assert backend.confusion_check((gs[0],)) is False
        assert backend.confusion_check((gs[0], gs[2])) is False  # identical sets
        assert backend.confusion_check((gs[0], gs[1])) is True
        assert backend.confusion_check((gs[0], gs[3])) is False  # one per goal
        assert backend.confusion_check((gs[0], gs[1], gs[3])) is True
        report(6, "confusion is exactly 'two or more distinct conclusions or "
                  "candidate goal sets for one goal'")


class TestCriterion7:
    """Premise precision/recall against hand-computed citation sets.

    Expected values below were worked out on paper from the fixture rule
    texts and the engines' fixed enumeration orders, then frozen.
    """

    def test_hand_computed_precision_recall(self, cowbear_problem, squirrel_problem):
        cow_label, cow_ref = oracle_label(cowbear_problem)
        sq_label, sq_ref = oracle_label(squirrel_problem)

        chain_problem = parse_problem({
            "facts": ["The cow is blue.", "The cow sees the bear.",
                      "The bear is round."],
            "rules": ["If the cow is blue then the cow is big.",
                      "If the cow is big and the cow sees the bear then the cow is rough.",
                      "If the bear is round then the bear is cold."],
            "hypothesis": "The cow is rough."})
        chain_label, chain_ref = oracle_label(chain_problem)
        assert len(chain_ref.premises()) == 4

        extras_trace = chain_ref.to_trace(chain_label, meta="extras")
        extras_trace.steps.append(TraceStep(
            len(extras_trace.steps) + 1, Direction.FORWARD.value, "logic_deduce",
            {"rules": [3], "derived": [{"term": term_string(attr("bear", "cold")),
                                        "rule": 3, "premises": [3], "binding": []}]}))

        partial_trace = ProofTrace(engine="bi", problem="partial")
        partial_trace.steps.append(TraceStep(
            1, Direction.BACKWARD.value, "logic_abduce",
            {"goal": term_string(rel("chases", "cow", "lion")),
             "sets": [{"origin_rule": 2, "goals": []},
                      {"origin_rule": 3, "goals": []}]}))
        partial_trace.steps.append(TraceStep(
            2, Direction.BACKWARD.value, "fact_check",
            {"kind": "hypothesis", "target": term_string(attr("cow", "blue")),
             "label": "Proved", "evidence": 4}))

        cases = [
            # (name, trace, reference, precision, recall)
            ("cowbear reference", cow_ref.to_trace(cow_label), cow_ref,
             Fraction(1), Fraction(1)),
            ("squirrel reference", sq_ref.to_trace(sq_label), sq_ref,
             Fraction(1), Fraction(1)),
            ("chain reference", chain_ref.to_trace(chain_label), chain_ref,
             Fraction(1), Fraction(1)),
            ("chain plus two extras", extras_trace, chain_ref,
             Fraction(4, 6), Fraction(1)),
            ("bi on cowbear", prove_bidirectional(cowbear_problem).trace, cow_ref,
             Fraction(3, 4), Fraction(1)),
            ("forward on cowbear", prove_forward(cowbear_problem).trace, cow_ref,
             Fraction(6, 13), Fraction(1)),
            ("backward on cowbear", prove_backward(cowbear_problem).trace, cow_ref,
             Fraction(6, 7), Fraction(1)),
            ("forward on squirrel", prove_forward(squirrel_problem).trace, sq_ref,
             Fraction(6, 9), Fraction(1)),
            ("empty prediction", ProofTrace(engine="bi", problem="empty"), cow_ref,
             Fraction(0), Fraction(0)),
            ("partial citations", partial_trace, cow_ref,
             Fraction(2, 3), Fraction(2, 6)),
        ]
        assert len(cases) == 10
        for name, trace, reference, precision, recall in cases:
            got_p, got_r = premise_prf(trace, reference)
            assert got_p == precision, (name, got_p, precision)
            assert got_r == recall, (name, got_r, recall)
        report(7, "ten fixture traces match the hand-computed precision/recall "
                  "exactly (rational arithmetic)")


class _StubHandler(BaseHTTPRequestHandler):
    script: list = []

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        json.loads(self.rfile.read(length))
        content = _StubHandler.script.pop(0)
        payload = json.dumps({"choices": [{"message": {"content": content}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


class TestCriterion8:
    PROBLEM = (
        "fact: The cow is blue.\n"
        "fact: The cow sees the bear.\n"
        "rule: If the cow is blue and the cow sees the bear then the cow chases the lion.\n"
        "rule: If someone chases the lion then they are rough.\n"
        "hypothesis: The cow is rough.\n")
    SCRIPT = [
        "Fact Identify:\n1: The cow is blue.\n2: The cow sees the bear.",
        "Fact Check:\nThe truth of the hypothesis is unknown.",
        "Rule Selection:\nPremise 3, If the cow is blue and the cow sees the bear "
        "then the cow chases the lion.",
        "Inferences:\nWe know that the cow is blue (Premise 1) and the cow sees "
        "the bear (Premise 2). Therefore, the cow chases the lion (Premise 3).",
        "Fact Check:\nThe truth of the hypothesis is unknown.",
        "Confusion Check:\nFalse",
        "Rule Selection:\nPremise 4, If someone chases the lion then they are rough.",
        "Inferences:\nSince the cow chases the lion, we can deduce that the cow "
        "is rough (Premise 4).",
        "Fact Check:\nThe hypothesis can be directly proved by Premise 4.",
    ]

    def test_offline_remote_backend(self):
        problem = parse_problem(self.PROBLEM, meta="stub")

        # headers byte-for-byte in every rendered prompt kind that defines them
        for kind in ("fact_check", "fact_identify", "rule_select_forward",
                     "rule_select_backward"):
            prompt = render_prompt(kind, "The cow is rough.", "1: The cow is blue.")
            for header in ("Task Description:", "Hypothesis:", "Premises:"):
                assert header in prompt

        # a full run against a live stub endpoint replaying recorded responses
        _StubHandler.script = list(self.SCRIPT)
        server = HTTPServer(("127.0.0.1", 0), _StubHandler)
        threading.Thread(target=server.serve_forever, daemon=True).start()
        try:
            config = RemoteConfig(
                endpoint=f"http://127.0.0.1:{server.server_port}/v1/chat/completions",
                model="stub", retries=0)
            backend = RemoteBackend(config)
            verdict = prove_bidirectional(problem, EngineConfig(), backend)
        finally:
            server.shutdown()
        assert verdict.label is Label.PROVED
        assert verdict.calls == len(verdict.trace.steps) == backend.calls == 9
        assert bool(replay_validate(verdict.trace, problem))

        # a corrupted response stalls with a warning instead of crashing
        corrupted = list(self.SCRIPT)
        corrupted[2] = "%%% not a rule selection at all %%%"
        backend = RemoteBackend(RemoteConfig(endpoint="http://offline.invalid",
                                             retries=0),
                                transport=Cassette(corrupted))
        verdict = prove_bidirectional(problem, EngineConfig(max_steps=3), backend)
        assert any("stall" in w for w in verdict.warnings)
        report(8, "stub-endpoint run completed (9 calls = 9 steps), corrupted "
                  "response stalled with a warning, headers verbatim")
