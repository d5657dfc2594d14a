# tests/test_app.py
import json
import os
import time

import pytest

from app import main
from insights import pareto, read_pareto_table, top_k_for_coverage
from schemas import load_report


class Pipeline:
    """Chaîne complète en ligne de commande dans un répertoire de travail."""

    def __init__(self, root, preset='fuzz'):
        self.root = str(root)
        self.preset = preset
        self.trail = os.path.join(self.root, 'trail', 'audit.jsonl')

    def path(self, *parts):
        return os.path.join(self.root, 'out', *parts)

    def run(self, *argv):
        return main(['--audit-trail', self.trail, *argv])

    def prepare(self):
        assert self.run('synth', '--preset', self.preset, '--out', self.path('synth')) == 0
        assert self.run('ingest', '--input', self.path('synth', 'maintenance_logs.csv'),
                        '--out', self.path('corpus.jsonl'), '--rejections', self.path('rejections.csv')) == 0
        assert self.run('prep', '--corpus', self.path('corpus.jsonl'), '--out', self.path('prep')) == 0
        return self

    @property
    def corpus(self):
        return self.path('prep', 'corpus.jsonl')

    def failure_modes(self):
        assert self.run('cohort', '--corpus', self.corpus, '--kind', 'subsystem', '--name', 'Power Converter',
                        '--out', self.path('converter.json')) == 0
        assert self.run('analyze', '--task', 'failure-modes', '--corpus', self.corpus,
                        '--cohort', self.path('converter.json'), '--out', self.path('modes.json')) == 0
        return self.path('modes.json')

    def causal(self):
        assert self.run('cohort', '--corpus', self.corpus, '--kind', 'turbine',
                        '--out', self.path('turbine.json')) == 0
        assert self.run('analyze', '--task', 'causal', '--corpus', self.corpus,
                        '--cohort', self.path('turbine.json'), '--out', self.path('chains.json')) == 0
        return self.path('chains.json')

    def score(self, task, report, capsys):
        capsys.readouterr()
        out = self.path(f"score-{task}.json")
        assert self.run('score', '--task', task, '--report', report,
                        '--truth', self.path('synth', 'truth.json'), '--out', out) == 0
        printed = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        with open(out, encoding='utf-8') as f:
            saved = json.load(f)
        assert saved.pop('meta')['template_version'] == 'v1'
        assert saved == printed
        return printed


def read_json(path):
    with open(path, encoding='utf-8') as f:
        return json.load(f)


def tree(root):
    files = {}
    for folder, _, names in os.walk(root):
        for name in names:
            path = os.path.join(folder, name)
            with open(path, 'rb') as f:
                files[os.path.relpath(path, root)] = f.read()
    return files


# === CHAÎNE COMPLÈTE ===

def test_end_to_end_on_the_fuzz_preset(tmp_path, capsys):
    pipeline = Pipeline(tmp_path).prepare()

    modes = pipeline.failure_modes()
    assert pipeline.score('failure-modes', modes, capsys) == {
        'count_exactness': 1.0, 'mode_precision': 1.0, 'mode_recall': 1.0}

    chains = pipeline.causal()
    assert pipeline.score('causal', chains, capsys) == {'chain_recall': 1.0, 'membership_jaccard_mean': 1.0}

    assert pipeline.run('report', '--report', modes, '--out', pipeline.path('modes.md')) == 0
    assert pipeline.run('report', '--report', modes, '--format', 'plot-data',
                        '--out', pipeline.path('pareto.csv')) == 0
    assert pipeline.run('report', '--report', chains, '--format', 'plot-data', '--corpus', pipeline.corpus,
                        '--out', pipeline.path('timeline.csv')) == 0
    assert pipeline.run('report', '--report', chains, '--format', 'figure', '--corpus', pipeline.corpus,
                        '--out', pipeline.path('timeline.html')) == 0

    with open(modes, encoding='utf-8') as f:
        report = load_report(f.read())
    assert read_pareto_table(pipeline.path('pareto.csv')).entries == pareto(report).entries
    with open(pipeline.path('timeline.html'), encoding='utf-8') as f:
        assert 'template_version=v1' in f.read()
    with open(pipeline.path('modes.md'), encoding='utf-8') as f:
        assert f.readline().startswith('<!-- meta: ')
        assert f.readline() == '# Failure Mode Analysis\n'
    assert os.path.exists(pipeline.trail)


def test_every_output_carries_run_metadata(tmp_path):
    pipeline = Pipeline(tmp_path).prepare()
    modes = pipeline.failure_modes()

    meta = read_json(modes)['meta']
    assert set(meta) == {'config_hash', 'seed', 'template_version'}
    with open(pipeline.corpus, encoding='utf-8') as f:
        assert 'config_hash' in json.loads(f.readline())['_meta']
    with open(pipeline.path('prep', 'decisions.csv'), encoding='utf-8') as f:
        assert f.readline().startswith('# config_hash=')
    assert read_json(pipeline.path('converter.json'))['meta']['template_version'] == 'v1'


def test_comparison_and_audit(tmp_path):
    pipeline = Pipeline(tmp_path).prepare()
    assert pipeline.run('cohort', '--corpus', pipeline.corpus, '--kind', 'farm-group',
                        '--sites', pipeline.path('synth', 'sites.csv'),
                        '--glossary', pipeline.path('prep', 'glossary.csv'), '--out', pipeline.path('group.json')) == 0
    assert pipeline.run('analyze', '--task', 'compare', '--corpus', pipeline.corpus,
                        '--cohort', pipeline.path('group.json'), '--out', pipeline.path('compare.json')) == 0
    compared = read_json(pipeline.path('compare.json'))
    group = read_json(pipeline.path('group.json'))
    assert sorted(f['farm_id'] for f in compared['farms']) == sorted(group['details']['farms'])

    assert pipeline.run('analyze', '--task', 'audit', '--corpus', pipeline.corpus, '--strategy', 'sampled',
                        '--fraction', '0.2', '--seed', '3', '--out', pipeline.path('audit.json')) == 0
    audit = read_json(pipeline.path('audit.json'))
    assert audit['chunk_coverage'] == 0.2
    assert audit['meta']['seed'] == 3
    assert pipeline.run('report', '--report', pipeline.path('audit.json'), '--out', pipeline.path('audit.md')) == 0


def test_two_runs_write_identical_trees(tmp_path):
    first = Pipeline(tmp_path / 'a').prepare()
    first.failure_modes()
    first.causal()
    second = Pipeline(tmp_path / 'b').prepare()
    second.failure_modes()
    second.causal()
    assert tree(first.path()) == tree(second.path())


def test_dump_prompts(tmp_path):
    pipeline = Pipeline(tmp_path).prepare()
    pipeline.failure_modes()
    assert pipeline.run('analyze', '--task', 'failure-modes', '--corpus', pipeline.corpus,
                        '--cohort', pipeline.path('converter.json'), '--dump-prompts', pipeline.path('prompts'),
                        '--out', pipeline.path('again.json')) == 0
    with open(pipeline.path('prompts', 'failure_modes.txt'), encoding='utf-8') as f:
        assert f.readline() == '# Role\n'


# === CODES DE SORTIE ===

@pytest.fixture(scope='module')
def prepared(tmp_path_factory):
    pipeline = Pipeline(tmp_path_factory.mktemp('cli')).prepare()
    pipeline.failure_modes()
    return pipeline


def test_unknown_provider_is_a_configuration_error(prepared):
    code = prepared.run('analyze', '--task', 'failure-modes', '--corpus', prepared.corpus,
                        '--cohort', prepared.path('converter.json'), '--provider', 'carrier-pigeon',
                        '--out', prepared.path('x.json'))
    assert code == 2
    assert not os.path.exists(prepared.path('x.json'))


def test_missing_credentials_are_a_provider_error(prepared, monkeypatch):
    monkeypatch.delenv('OPENAI_API_KEY', raising=False)
    code = prepared.run('analyze', '--task', 'failure-modes', '--corpus', prepared.corpus,
                        '--cohort', prepared.path('converter.json'), '--provider', 'gpt-5',
                        '--out', prepared.path('x.json'))
    assert code == 4


def test_empty_cohort_is_a_data_error(prepared):
    assert prepared.run('cohort', '--corpus', prepared.corpus, '--kind', 'subsystem', '--name', 'Gearbox',
                        '--out', prepared.path('gearbox.json')) == 3


def test_json_errors(prepared, capsys):
    capsys.readouterr()
    code = main(['--json-errors', '--audit-trail', prepared.trail, 'cohort', '--corpus',
                 prepared.path('absent.jsonl'), '--kind', 'subsystem', '--name', 'Power Converter',
                 '--out', prepared.path('y.json')])
    error = json.loads(capsys.readouterr().out)
    assert code == 2
    assert error['error'] == 'missing_file'
    assert error['family'] == 'ConfigError'
    assert error['exit_code'] == 2


@pytest.mark.parametrize('content, code', [
    ('colour=blue\n', 'unknown_config_key'),
    ('template_version=v2\n', 'template_version_mismatch'),
    ('seed=abc\n', 'bad_flag'),
])
def test_bad_config_files(prepared, tmp_path, capsys, content, code):
    config = tmp_path / 'run.env'
    config.write_text(content, encoding='utf-8')
    capsys.readouterr()
    exit_code = main(['--json-errors', '--config', str(config), '--audit-trail', prepared.trail, 'analyze',
                      '--task', 'failure-modes', '--corpus', prepared.corpus,
                      '--cohort', prepared.path('converter.json'), '--out', str(tmp_path / 'z.json')])
    assert exit_code == 2
    assert json.loads(capsys.readouterr().out)['error'] == code


def test_config_file_values_reach_the_run(prepared, tmp_path):
    config = tmp_path / 'run.env'
    config.write_text('strategy=sampled\nfraction=0.5\nseed=11\n', encoding='utf-8')
    out = str(tmp_path / 'modes.json')
    assert main(['--config', str(config), '--audit-trail', prepared.trail, 'analyze', '--task', 'failure-modes',
                 '--corpus', prepared.corpus, '--cohort', prepared.path('converter.json'), '--out', out]) == 0
    report = read_json(out)
    assert report['meta']['seed'] == 11
    assert report['provider_meta']['strategy'] == 'sampled_fraction'


def test_score_refuses_the_wrong_report_type(prepared):
    assert prepared.run('score', '--task', 'causal', '--report', prepared.path('modes.json'),
                        '--truth', prepared.path('synth', 'truth.json')) == 2


def test_figure_formats_need_a_supported_report(prepared, tmp_path):
    prepared.run('analyze', '--task', 'audit', '--corpus', prepared.corpus, '--out', prepared.path('audit.json'))
    assert prepared.run('report', '--report', prepared.path('audit.json'), '--format', 'plot-data',
                        '--out', str(tmp_path / 'audit.csv')) == 2


# === PRESET PAPER-SHAPE ===

@pytest.mark.slow
def test_paper_shape_end_to_end(tmp_path, capsys):
    started = time.perf_counter()
    pipeline = Pipeline(tmp_path, 'paper-shape').prepare()
    modes = pipeline.failure_modes()
    chains = pipeline.causal()
    assert time.perf_counter() - started < 60

    assert pipeline.score('failure-modes', modes, capsys) == {
        'count_exactness': 1.0, 'mode_precision': 1.0, 'mode_recall': 1.0}
    assert pipeline.score('causal', chains, capsys) == {
        'chain_recall': 1.0, 'membership_jaccard_mean': 1.0}

    with open(modes, encoding='utf-8') as f:
        report = load_report(f.read())
    assert report.cohort_size == 1065
    assert len(report.modes) == 15
    series = pareto(report)
    assert series.entries[0].percentage == pytest.approx(20.0, abs=0.5)
    assert top_k_for_coverage(series, 80.0) == 8

    assert len(read_json(chains)['chains']) == 12
    turbine = read_json(pipeline.path('turbine.json'))
    assert len(turbine['member_log_ids']) == 92
