# tests/test_gateway.py
import json

import numpy as np
import pytest

from cohorts import subsystem_cohort
from errors import (
    AuthFailure, ConfigError, ContextOverflow, DataError, ProviderError, ProviderTimeout, RateLimited,
    RetriesExhausted,
)
from gateway import (
    AuditTrail, MockProvider, OpenAICompatibleProvider, ProviderProfile, ScriptedProvider, backoff_delay,
    complete, get_profile, make_provider, map_chunks, mock_complete, normalize_strategy, plan_chunks,
    sample_ids,
)
from promptkit import build_failure_mode_prompt, render

IDS = [f"ML{i:04d}" for i in range(1000)]


@pytest.fixture
def tiny_profile():
    return ProviderProfile('tiny', context_window_tokens=1000, max_output_tokens=100, max_retries=2)


class Recorder:
    def __init__(self):
        self.delays = []

    def __call__(self, seconds):
        self.delays.append(seconds)


# === PROFILS ===

def test_profile_budget_applies_safety_margin(tiny_profile):
    assert tiny_profile.budget == 810
    assert get_profile('mock').budget == int(0.9 * (1_000_000 - 32_000))


def test_unknown_profile_is_a_config_error():
    with pytest.raises(ConfigError) as excinfo:
        get_profile('gpt-0')
    assert excinfo.value.code == 'unknown_provider'
    assert excinfo.value.exit_code == 2


def test_profile_requires_room_for_the_output():
    with pytest.raises(ConfigError) as excinfo:
        ProviderProfile('bad', context_window_tokens=100, max_output_tokens=100)
    assert excinfo.value.code == 'bad_profile'


# === ÉCHANTILLONNAGE ===

def test_sampling_draws_the_rounded_fraction():
    assert len(sample_ids(IDS, 0.2, seed=3)) == 200
    assert len(sample_ids(IDS[:7], 0.5, seed=3)) == 4
    assert sample_ids(IDS, 1.0, seed=3) == set(IDS)


def test_sampling_is_seed_stable_and_ignores_input_order():
    shuffled = list(np.random.default_rng(9).permutation(IDS))
    first = sample_ids(IDS, 0.2, seed=42)
    assert sample_ids(IDS, 0.2, seed=42) == first
    assert sample_ids(shuffled, 0.2, seed=42) == first
    assert sample_ids(IDS, 0.2, seed=43) != first


def test_stratified_sampling_is_proportional():
    strata = {log_id: ('a' if i < 600 else 'b') for i, log_id in enumerate(IDS)}
    selected = sample_ids(IDS, 0.2, seed=1, stratify_by=strata)
    assert len(selected) == 200
    assert sum(1 for i in selected if strata[i] == 'a') == 120


def test_stratum_floor_keeps_small_strata():
    strata = {log_id: ('a' if i < 997 else 'b') for i, log_id in enumerate(IDS)}
    assert not any(strata[i] == 'b' for i in sample_ids(IDS, 0.01, seed=1, stratify_by=strata))
    selected = sample_ids(IDS, 0.01, seed=1, stratify_by=strata, min_per_stratum=1)
    assert len(selected) == 11
    assert sum(1 for i in selected if strata[i] == 'b') == 1


@pytest.mark.parametrize('fraction', [0, -0.1, 1.5])
def test_sampling_rejects_fractions_outside_unit_interval(fraction):
    with pytest.raises(ConfigError) as excinfo:
        sample_ids(IDS, fraction, seed=0)
    assert excinfo.value.code == 'bad_fraction'


# === PLANIFICATION ===

def test_full_strategy_keeps_one_chunk(tiny_profile):
    plan = plan_chunks(IDS[:10], {i: 50 for i in IDS[:10]}, 200, tiny_profile)
    assert plan.chunks == [IDS[:10]]
    assert plan.coverage == 1.0


def test_full_strategy_overflow_is_typed(tiny_profile):
    with pytest.raises(ContextOverflow) as excinfo:
        plan_chunks(IDS[:20], {i: 50 for i in IDS[:20]}, 200, tiny_profile)
    assert excinfo.value.details['required'] == 1200
    assert excinfo.value.details['budget'] == 810


def test_packed_chunks_respect_capacity_and_cover_everything(tiny_profile):
    rng = np.random.default_rng(4)
    estimates = {i: int(rng.integers(1, 300)) for i in IDS[:200]}
    plan = plan_chunks(IDS[:200], estimates, 210, tiny_profile, strategy='packed')

    flat = [i for chunk in plan.chunks for i in chunk]
    assert sorted(flat) == IDS[:200]
    assert all(sum(estimates[i] for i in chunk) <= 600 for chunk in plan.chunks)
    for chunk in plan.chunks:
        assert chunk == sorted(chunk)
    assert plan.to_dict()['n_chunks'] == len(plan.chunks)


def test_packing_fails_on_a_single_oversized_log(tiny_profile):
    with pytest.raises(ContextOverflow) as excinfo:
        plan_chunks(['A', 'B'], {'A': 10, 'B': 700}, 200, tiny_profile, strategy='packed')
    assert excinfo.value.details['log_id'] == 'B'


def test_sampled_strategy(tiny_profile):
    plan = plan_chunks(IDS, {i: 5 for i in IDS}, 100, tiny_profile, strategy='sampled', seed=7,
                       sample_fraction=0.2)
    assert plan.strategy == 'sampled_fraction'
    assert plan.n_selected == 200
    assert plan.coverage == pytest.approx(0.2)
    assert set(i for c in plan.chunks for i in c) == sample_ids(IDS, 0.2, seed=7)
    with pytest.raises(ConfigError):
        plan_chunks(IDS, {i: 5 for i in IDS}, 100, tiny_profile, strategy='sampled_fraction')


def test_plan_rejects_bad_inputs(tiny_profile):
    with pytest.raises(DataError) as excinfo:
        plan_chunks(['A'], {'A': 0}, 10, tiny_profile)
    assert excinfo.value.code == 'bad_estimate'
    with pytest.raises(ConfigError):
        normalize_strategy('greedy')


# === APPELS ET REPRISES ===

def test_transient_errors_are_retried_with_backoff(tiny_profile, tmp_path):
    provider = ScriptedProvider([RateLimited(), ProviderTimeout(), 'final answer'])
    recorder = Recorder()
    trail = AuditTrail(str(tmp_path / 'trail.jsonl'))

    assert complete('prompt', tiny_profile, provider, trail, recorder) == 'final answer'
    assert provider.calls == 3
    assert len(recorder.delays) == 2
    assert 2.0 <= recorder.delays[0] <= 3.0
    assert 4.0 <= recorder.delays[1] <= 5.0

    with open(tmp_path / 'trail.jsonl', encoding='utf-8') as f:
        events = [json.loads(line)['event'] for line in f]
    assert events == ['request', 'error', 'request', 'error', 'request', 'response']


@pytest.mark.parametrize('error', [AuthFailure(), ContextOverflow(), ProviderError('bad_request')])
def test_permanent_errors_are_not_retried(tiny_profile, sleep, error):
    provider = ScriptedProvider([error, 'never reached'])
    with pytest.raises(ProviderError) as excinfo:
        complete('prompt', tiny_profile, provider, sleep=sleep)
    assert excinfo.value is error
    assert provider.calls == 1
    assert excinfo.value.exit_code == 4


def test_exhausted_retries_carry_the_last_error(tiny_profile, sleep):
    provider = ScriptedProvider([ProviderTimeout()] * 3)
    with pytest.raises(RetriesExhausted) as excinfo:
        complete('prompt', tiny_profile, provider, sleep=sleep)
    assert excinfo.value.exit_code == 5
    assert excinfo.value.details['last_error'] == 'timeout'
    assert excinfo.value.details['attempts'] == 3
    assert provider.calls == 3


class FixedRng:
    def uniform(self, low, high):
        return 0.0


@pytest.mark.parametrize('attempt, delay', [(0, 2.0), (1, 4.0), (2, 8.0)])
def test_backoff_is_exponential(attempt, delay):
    assert backoff_delay(attempt, FixedRng()) == delay


def test_audit_trail_without_path_writes_nothing(tmp_path):
    AuditTrail(None).record('request', provider='mock')
    assert list(tmp_path.iterdir()) == []


# === BLOCS EN PARALLÈLE ===

def test_map_chunks_keeps_chunk_order():
    assert map_chunks(lambda index, item: (index, item * 2), [3, 1, 2], max_in_flight=3) == [
        (0, 6), (1, 2), (2, 4)]


def test_map_chunks_reports_the_failing_chunk():
    def fn(index, item):
        if index == 1:
            raise ProviderTimeout()
        return item

    with pytest.raises(ProviderTimeout) as excinfo:
        map_chunks(fn, ['a', 'b', 'c'], max_in_flight=2)
    assert excinfo.value.details['chunk_index'] == 1


# === FOURNISSEURS ===

def test_make_provider():
    assert isinstance(make_provider('mock'), MockProvider)
    live = make_provider('gemini-2.5-pro')
    assert isinstance(live, OpenAICompatibleProvider)
    assert live.settings['temperature'] == 0.0
    with pytest.raises(ConfigError):
        make_provider('carrier-pigeon')


def test_live_provider_needs_its_api_key(monkeypatch):
    monkeypatch.delenv('OPENAI_API_KEY', raising=False)
    with pytest.raises(AuthFailure):
        make_provider('gpt-5').send('prompt', get_profile('gpt-5'))


def test_mock_provider_is_a_function_of_the_prompt(converter_corpus, mock_profile):
    cohort = subsystem_cohort(converter_corpus, 'Power Converter')
    text, _ = render(build_failure_mode_prompt(cohort, converter_corpus))
    first = MockProvider().send(text, mock_profile).text
    assert MockProvider().send(text, mock_profile).text == first

    modes = json.loads(first)['failure_modes']
    assert [m['name'] for m in modes] == ['[FMQ8] related faults', '[FMIGBT] related faults']
    assert [m['estimated_count'] for m in modes] == [4, 3]
    assert modes[0]['supporting_quotes'][0] == {
        'log_id': 'L01', 'quote': '[FMQ8] Q8 breaker tripped, reset performed'}


def test_mock_provider_can_start_with_malformed_answers(mock_profile):
    provider = MockProvider(malformed_attempts=1)
    with pytest.raises(json.JSONDecodeError):
        json.loads(provider.send('# Role\nanything', mock_profile).text)
    assert provider.calls == 1


def test_mock_rejects_unknown_prompts():
    with pytest.raises(ProviderError) as excinfo:
        mock_complete('# Role\nYou are a poet working on sonnets.\n')
    assert excinfo.value.code == 'unparseable_payload'
