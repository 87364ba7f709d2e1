from collections import defaultdict
from dataclasses import replace
import random

import pytest

from niche_nas.arch_space import DEFAULT_NICHES, assign_niche, decode
from niche_nas.coevolve.baseline import BaselineOperator
from niche_nas.coevolve.llm_operator import LLMOperator
from niche_nas.coevolve.operator_base import ArchitectureOperator, OperatorResult
from niche_nas.coevolve.proposals import CandidateProposal
from niche_nas.coevolve.text_service import TextServiceClient, TextServiceConfig, load_transcript
from niche_nas.config import EngineConfig
from niche_nas.engine import (
    EvaluatedArch, NicheState, ParetoArchive, SearchEngine, archive_update, initialize, run_search,
)
from niche_nas.coevolve.knowledge_base import KnowledgeBase
from niche_nas.errors import ConfigError
from niche_nas.objectives import dominates
from niche_nas.predictor import OraclePredictor, make_predictor
from niche_nas.report import write_report

A = "|nor_conv_3x3~0|+|nor_conv_3x3~0|none~1|+|none~0|none~1|none~2|"
B = "|nor_conv_3x3~0|+|nor_conv_3x3~0|skip_connect~1|+|none~0|none~1|none~2|"
C = "|nor_conv_3x3~0|+|nor_conv_3x3~0|avg_pool_3x3~1|+|none~0|none~1|none~2|"
THREE_CONV = (
    "|nor_conv_3x3~0|+|nor_conv_3x3~0|nor_conv_3x3~1|+|none~0|none~1|none~2|",
    "|nor_conv_3x3~0|+|nor_conv_3x3~0|nor_conv_3x3~1|+|skip_connect~0|none~1|none~2|",
)


def point(arch, acc, lat):
    return EvaluatedArch(arch, niche=3, z_pred=acc, latency=lat)


def state():
    return NicheState(DEFAULT_NICHES.get(3), ParetoArchive(), KnowledgeBase(), random.Random(0))


@pytest.fixture(scope="module")
def oracle(synthetic_store):
    return OraclePredictor(synthetic_store)


def test_dominated_point_is_rejected():
    s = state()
    assert archive_update(s, point(A, 90.0, 5.0))
    assert not archive_update(s, point(B, 80.0, 6.0))
    assert [m.arch for m in s.archive] == [A]


def test_dominating_point_evicts():
    archive = ParetoArchive()
    archive.insert(point(A, 90.0, 5.0))
    archive.insert(point(B, 85.0, 3.0))
    accepted, removed = archive.insert(point(C, 92.0, 4.0))
    assert accepted
    assert [m.arch for m in removed] == [A]
    assert [m.arch for m in archive] == [B, C]
    assert archive.is_mutually_non_dominated()


def test_literal_archive_keeps_dominated_newcomer():
    archive = ParetoArchive(literal=True)
    archive.insert(point(A, 90.0, 5.0))
    assert archive.update(point(B, 80.0, 6.0))
    assert len(archive) == 2
    assert not archive.is_mutually_non_dominated()


def test_latency_must_be_positive():
    with pytest.raises(ValueError):
        point(A, 90.0, 0.0)


def test_initialize(synthetic_store, oracle):
    config = EngineConfig(seed=1)
    states = initialize(config, synthetic_store, oracle)
    assert [s.niche_id for s in states] == DEFAULT_NICHES.ids
    for s in states:
        assert len(s.archive) >= 1
        assert all(assign_niche(decode(m.arch)) == s.niche_id for m in s.archive)

    engine = SearchEngine(config, synthetic_store, oracle)
    engine.initialize()
    assert len(engine.evaluations) == 30
    assert {e['child_id'] for e in engine.evaluations} == {"init"}
    assert len({e['arch'] for e in engine.evaluations}) == 30

    again = initialize(config, synthetic_store, oracle)
    assert [[m.arch for m in s.archive] for s in again] == [[m.arch for m in s.archive] for s in states]


def test_unknown_device_or_dataset(synthetic_store, oracle):
    with pytest.raises(ConfigError):
        SearchEngine(EngineConfig(device="tpu"), synthetic_store, oracle)
    with pytest.raises(ConfigError):
        SearchEngine(EngineConfig(dataset="imagenet"), synthetic_store, oracle)


class ScriptedOperator(ArchitectureOperator):
    kind = "scripted"

    def __init__(self, codes):
        super().__init__(codes=codes)

    def _generate(self, ctx):
        codes = self.codes.get(ctx.niche.niche_id, [])
        return OperatorResult(proposals=[CandidateProposal(str(i + 1), "mutation", c) for i, c in enumerate(codes)])


def test_gate_rejects_duplicates_and_out_of_niche(synthetic_store, oracle):
    config = EngineConfig(seed=2, generations=1)
    engine = SearchEngine(config, synthetic_store, oracle, ScriptedOperator({}))
    states = engine.initialize()
    duplicate = engine.evaluations[0]['arch']
    outside = next(c for c in THREE_CONV if c not in engine.seen)
    engine.operator = ScriptedOperator({3: [outside, duplicate]})
    engine.evolve_generation(states, 1)
    niche3 = [e for e in engine.evaluations if e['generation'] == 1 and e['niche'] == 3]
    assert [e['status'] for e in niche3] == ['constraint_violation', 'non_novel']
    others = [e for e in engine.evaluations if e['generation'] == 1 and e['niche'] != 3]
    assert all(e['child_id'] == "fallback" for e in others)
    assert engine.stats.fallbacks == 5
    with pytest.raises(ValueError):
        engine.evolve_generation(states, 0)


def test_baseline_without_crossover(synthetic_store, oracle):
    report = run_search(EngineConfig(seed=4, generations=3, crossover_prob=0.0), synthetic_store, oracle)
    operations = {e['operation'] for e in report.evaluations if e['generation'] > 0}
    assert operations == {"mutation"}


def _non_dominated(points):
    return {a for a, p in points.items() if not any(dominates(q, p) for q in points.values())}


@pytest.mark.parametrize("literal", [False, True])
@pytest.mark.parametrize("seed", range(100))
def test_archives_match_replayed_log(synthetic_store, oracle, seed, literal):
    config = EngineConfig(seed=seed, generations=3, init_per_niche=3, n_children=1, archive_literal=literal)
    report = run_search(config, synthetic_store, oracle)
    archives = defaultdict(dict)
    accepted = defaultdict(dict)
    for e in report.evaluations:
        if e['status'] not in ('accepted', 'rejected'):
            continue
        niche = e['niche']
        objectives = (-e['z_pred'], e['latency'])
        members = archives[niche]
        if e['status'] == 'rejected':
            assert not literal
            assert any(dominates(p, objectives) for p in members.values())
            continue
        assert set(e['removed']) == {a for a, p in members.items() if dominates(objectives, p)}
        for gone in e['removed']:
            del members[gone]
        members[e['arch']] = objectives
        if not literal:
            accepted[niche][e['arch']] = objectives
            assert set(members) == _non_dominated(accepted[niche])
    for niche, members in report.archives.items():
        assert {m.arch for m in members} == set(archives[niche])
        if not literal:
            assert _non_dominated(archives[niche]) == set(archives[niche])

    evaluated = [e['arch'] for e in report.evaluations if e['status'] in ('accepted', 'rejected')]
    assert len(evaluated) == len(set(evaluated))
    assert {e['niche'] for e in report.evaluations if e['status'] in ('accepted', 'rejected')} == set(DEFAULT_NICHES.ids)


def test_run_report_properties(synthetic_store, oracle):
    report = run_search(EngineConfig(seed=5, generations=5), synthetic_store, oracle)
    assert report.mode == "partitioned"
    assert report.objective_source == "true"
    assert len(report.hv_trace) == 6
    assert all(b >= a - 1e-12 for a, b in zip(report.hv_trace, report.hv_trace[1:]))
    assert report.hv == pytest.approx(report.hv_trace[-1])
    assert 0.0 < report.hv <= report.hv_truth + 1e-12
    assert report.igd is not None and report.igd >= 0.0

    evaluated = [
        (-e['accuracy'], e['latency'])
        for e in report.evaluations if e['status'] in ('accepted', 'rejected')
    ]
    for m in report.front:
        assert not any(dominates(p, (-m.accuracy, m.latency)) for p in evaluated)


def test_front_independent_of_worker_count(tmp_path, synthetic_store, oracle):
    fronts = []
    for workers in (1, 6):
        report = run_search(EngineConfig(seed=7, workers=workers), synthetic_store, oracle)
        paths = write_report(report, tmp_path / f"w{workers}")
        fronts.append(paths['front'].read_bytes())
    assert fronts[0] == fronts[1]


def test_unpartitioned_uses_same_budget(synthetic_store, oracle):
    report = run_search(EngineConfig(seed=3, generations=2, partitioned=False), synthetic_store, oracle)
    assert report.mode == "unpartitioned"
    assert list(report.archives) == [0]
    assert sum(1 for e in report.evaluations if e['generation'] == 0) == 30
    assert sum(1 for e in report.evaluations if e['generation'] == 1 and e['status'] != 'invalid') == 12


def test_llm_record_then_replay(tmp_path, synthetic_store, oracle, service_token, fake_session):
    transcript = tmp_path / "run.jsonl"
    service = TextServiceConfig(token_env=service_token, transcript_mode="record", transcript_path=transcript)
    config = EngineConfig(seed=11, operator="llm", service=service)
    operator = LLMOperator(TextServiceClient(service, session=fake_session))
    recorded = run_search(config, synthetic_store, oracle, operator)
    assert recorded.stats.stage2_calls == 120
    assert recorded.stats.stage1_calls == 54
    assert recorded.stats.service_failures == 0
    assert len(load_transcript(transcript)) == 174
    assert not recorded.service_unreachable

    replay = replace(config, service=TextServiceConfig(transcript_mode="replay", transcript_path=transcript))
    replayed = run_search(replay, synthetic_store, oracle)
    assert replayed.service_mode == "replay"
    assert replayed.stats.stage2_calls == 120
    assert replayed.stats.service_failures == 0
    assert [m.arch for m in replayed.front] == [m.arch for m in recorded.front]
    assert replayed.evaluations == recorded.evaluations


class BaselineChildrenLLM(LLMOperator):
    """
    Knowledge updates through the service, children from the baseline
    operator, so every niche evaluates children in each generation.
    """

    def _generate(self, ctx):
        return BaselineOperator()._generate(ctx)


def test_stage1_sees_children_of_previous_generation(synthetic_store, oracle, service_token, fake_session):
    service = TextServiceConfig(token_env=service_token)
    config = EngineConfig(seed=6, generations=2, operator="llm", service=service)
    engine = SearchEngine(config, synthetic_store, oracle, BaselineChildrenLLM(TextServiceClient(service, session=fake_session)))
    states = engine.initialize()
    engine.evolve_generation(states, 1)
    assert not fake_session.posts
    engine.evolve_generation(states, 2)

    prompts = [p['json']['messages'][0]['content'] for p in fake_session.posts]
    stage1 = "\n".join(p for p in prompts if "Updated_Knowledge_Base" in p)
    assert len([p for p in prompts if "Updated_Knowledge_Base" in p]) == 6
    children = [e for e in engine.evaluations if e['generation'] == 1 and e['status'] in ('accepted', 'rejected')]
    assert children
    for e in children:
        assert f"{e['arch']} | accuracy={e['z_pred']:.2f}% | latency={e['latency']:.3f} ms" in stage1
        assert f"rationale: {e['rationale']}" in stage1
    assert stage1.count(" | latency=") == len(children)
    for e in engine.evaluations:
        if e['generation'] == 0:
            assert f"{e['arch']} | accuracy=" not in stage1


def test_rank_predictors_do_not_claim_accuracy(synthetic_store, oracle):
    assert SearchEngine(EngineConfig(), synthetic_store, oracle).score_is_accuracy
    ranked = make_predictor("rank_ensemble", synthetic_store, "cifar10")
    engine = SearchEngine(EngineConfig(), synthetic_store, ranked)
    assert not engine.score_is_accuracy
    states = engine.initialize()
    assert not engine._context(states[0], 1).score_is_accuracy


def test_unreachable_service_still_finishes(synthetic_store, oracle, service_token, make_session):
    session = make_session(lambda payload: (503, {}))
    service = TextServiceConfig(token_env=service_token, backoff=0.0, max_retries=0)
    config = EngineConfig(seed=0, generations=2, operator="llm", max_operator_retries=0, service=service)
    report = run_search(config, synthetic_store, oracle, LLMOperator(TextServiceClient(service, session), max_retries=0))
    assert report.service_unreachable
    assert report.stats.fallbacks == 24
    assert report.n_evaluated > 30
