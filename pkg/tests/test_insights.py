# tests/test_insights.py
import re
from datetime import date

import numpy as np
import pytest

from corpus import Corpus
from errors import DataError
from insights import (
    OTHER_LABEL, ParetoSeries, build_series, create_pareto_chart, create_timeline_chart, export_plot_data,
    generate_color_for_chain, pareto, read_pareto_table, render_markdown, timeline, top_k_for_coverage,
    truncate_annotation, write_figure, write_markdown, write_plot_data,
)
from schemas import (
    AuditIssue, AuditRecommendation, AuditReport, CausalChain, CausalChainReport, FailureModeReport,
    RankedFailureMode, SupportingQuote,
)


def mode_report(counts, unassigned=0):
    total = sum(counts) + unassigned
    modes = [
        RankedFailureMode(
            rank=i + 1, name=f"mode {i:02d}", description=f"Description {i}", estimated_count=n,
            reconciled_count=n, percentage=n / total * 100,
            supporting_quotes=[SupportingQuote(log_id=f"L{i:02d}", quote='fan replaced')],
        )
        for i, n in enumerate(counts)
    ]
    return FailureModeReport(cohort_ref='subsystem:Power Converter', cohort_size=total, modes=modes,
                             unassigned_count=unassigned)


# === PARETO ===

def test_pareto_on_random_reports():
    rng = np.random.default_rng(17)
    for _ in range(50):
        counts = [int(n) for n in rng.integers(1, 200, size=int(rng.integers(1, 15)))]
        unassigned = int(rng.integers(0, 3)) * int(rng.integers(0, 50))
        series = pareto(mode_report(counts, unassigned))

        entries = series.entries
        assert [e.rank for e in entries] == list(range(1, len(entries) + 1))
        assert series.total == sum(counts) + unassigned
        assert entries[-1].cumulative_percentage == 100.0
        assert all(a.cumulative_percentage <= b.cumulative_percentage for a, b in zip(entries, entries[1:]))
        ranked = [e for e in entries if e.label != OTHER_LABEL]
        assert all(a.count >= b.count for a, b in zip(ranked, ranked[1:]))
        if unassigned:
            assert entries[-1].label == OTHER_LABEL
            assert entries[-1].count == unassigned
        else:
            assert OTHER_LABEL not in series.labels


def test_pareto_breaks_count_ties_alphabetically():
    series = pareto(mode_report([5, 5, 9]))
    assert series.labels == ['mode 02', 'mode 00', 'mode 01']


@pytest.mark.parametrize('threshold, k', [(50, 1), (80, 2), (80.5, 3), (100, 3), (10, 1)])
def test_top_k_for_coverage(threshold, k):
    series = build_series([('a', 50), ('b', 30), ('c', 20)])
    assert top_k_for_coverage(series, threshold) == k


def test_pareto_refuses_an_empty_report():
    with pytest.raises(DataError) as excinfo:
        build_series([])
    assert excinfo.value.code == 'empty_report'


def test_pareto_chart_has_bars_and_cumulative_curve():
    fig = create_pareto_chart(build_series([('a', 3), ('b', 1)]))
    assert [trace.type for trace in fig.data] == ['bar', 'scatter']
    assert list(fig.data[1].y) == [75.0, 100.0]
    assert len(create_pareto_chart(ParetoSeries()).data) == 0


# === TIMELINE ===

@pytest.fixture
def turbine_corpus(make_log):
    return Corpus([
        make_log('E1', event_date=date(2020, 1, 10), subsystem_name='Pitch System'),
        make_log('E2', event_date=date(2020, 2, 1), subsystem_name='Nacelle'),
        make_log('E3', event_date=date(2020, 2, 20), subsystem_name='Hydraulic System'),
        make_log('E4', event_date=date(2020, 1, 5), subsystem_name='Yaw System'),
        make_log('E5', event_date=date(2020, 6, 5), subsystem_name='Yaw System'),
    ])


def chain_report(*chains):
    return CausalChainReport(cohort_ref='turbine:T01', turbine_id='T01', chains=list(chains))


def chain(chain_id, members, confidence='medium', hypothesis='Grease leak led to pressure loss.'):
    return CausalChain(chain_id=chain_id, member_log_ids=members, hypothesis=hypothesis,
                       confidence=confidence, homogeneous=False)


def test_timeline_orders_lanes_by_first_event(turbine_corpus):
    layout = timeline(chain_report(chain('C01', ['E3', 'E1'], 'high'), chain('C02', ['E5', 'E4'], 'low')),
                      turbine_corpus)
    assert [lane.chain_id for lane in layout.lanes] == ['C02', 'C01']
    assert [m.log_id for m in layout.lanes[1].markers] == ['E1', 'E3']
    assert layout.lanes[1].markers[1].subsystem == 'Hydraulic System'
    assert layout.axis_range == (date(2020, 1, 5), date(2020, 6, 5))


def test_timeline_without_chains_spans_the_turbine_history(turbine_corpus):
    layout = timeline(chain_report(), turbine_corpus)
    assert len(layout) == 0
    assert layout.axis_range == (date(2020, 1, 5), date(2020, 6, 5))
    assert len(create_timeline_chart(layout).data) == 0


def test_timeline_unknown_log(turbine_corpus):
    with pytest.raises(DataError) as excinfo:
        timeline(chain_report(chain('C01', ['E1', 'E9'])), turbine_corpus)
    assert excinfo.value.code == 'unknown_log_id'
    assert excinfo.value.details['log_id'] == 'E9'


def test_long_hypotheses_are_truncated_on_the_chart_only(turbine_corpus):
    hypothesis = 'Recurring grease leaks ' * 20
    layout = timeline(chain_report(chain('C01', ['E1'], hypothesis=hypothesis)), turbine_corpus)
    lane = layout.lanes[0]
    assert lane.hypothesis == hypothesis
    assert len(lane.annotation) <= 140
    assert lane.annotation.endswith('…')


@pytest.mark.parametrize('text, limit, expected', [
    ('short', 10, 'short'),
    ('abcdef ghij', 8, 'abcdef…'),
    ('exactly10!', 10, 'exactly10!'),
])
def test_truncate_annotation(text, limit, expected):
    assert truncate_annotation(text, limit) == expected


def test_chain_colours_are_stable():
    color = generate_color_for_chain('C01')
    assert color == generate_color_for_chain('C01')
    assert re.fullmatch(r'rgb\(\d{1,3}, \d{1,3}, \d{1,3}\)', color)


def test_timeline_chart_draws_one_trace_per_chain(turbine_corpus):
    layout = timeline(chain_report(chain('C01', ['E1', 'E3'], 'high'), chain('C02', ['E4'], 'low')),
                      turbine_corpus)
    fig = create_timeline_chart(layout)
    assert [trace.name for trace in fig.data] == ['C02 (low)', 'C01 (high)']
    assert fig.data[1].marker.symbol == 'circle'
    assert fig.data[0].marker.symbol == 'circle-open'


# === DOCUMENTS ===

def test_failure_mode_document():
    report = mode_report([6, 2], unassigned=2)
    text = render_markdown(report, {'seed': 0, 'config_hash': 'abc'})
    lines = text.splitlines()
    assert lines[0] == '<!-- meta: {"config_hash": "abc", "seed": 0} -->'
    assert lines[1] == '# Failure Mode Analysis'
    assert 'machine_generated_pending_expert_review' in text
    assert '| 1 | mode 00 | Description 0 | 6 | 60.0% |' in text
    assert '- `L00`: "fan replaced"' in text
    assert text.endswith('\n') and not text.endswith('\n\n')
    assert render_markdown(report, {'seed': 0, 'config_hash': 'abc'}) == text


def test_document_without_meta_starts_with_title():
    assert render_markdown(mode_report([1])).startswith('# Failure Mode Analysis\n')


def test_audit_document_sections(tmp_path):
    report = AuditReport(
        cohort_ref='corpus', chunk_coverage=0.2,
        issues=[AuditIssue(title='Vague entries', description='No measurements.', example_log_ids=['L01'])],
        recommendations=[AuditRecommendation(title='Use templates', description='Structured fields.')],
    )
    path = write_markdown(report, str(tmp_path / 'reports' / 'audit.md'))
    with open(path, encoding='utf-8') as f:
        text = f.read()
    assert 'Analysed coverage: 20.0% of the corpus.' in text
    assert text.index('## Issues') < text.index('### Vague entries') < text.index('## Recommendations')
    assert 'Example log_ids: L01' in text


# === DONNÉES DE GRAPHIQUES ===

def test_pareto_table_round_trip(tmp_path):
    series = pareto(mode_report([7, 5, 3], unassigned=1))
    path = str(tmp_path / 'pareto.csv')
    write_plot_data(series, path, {'seed': 1, 'template_version': 'v1'})

    with open(path, encoding='utf-8') as f:
        assert f.readline() == '# seed=1\n'
    again = read_pareto_table(path)
    assert again.entries == series.entries


def test_empty_pareto_exports_header_only():
    frame = export_plot_data(ParetoSeries())
    assert list(frame.columns) == ['rank', 'label', 'count', 'percentage', 'cumulative_percentage']
    assert frame.empty


def test_timeline_table_has_one_row_per_marker(turbine_corpus):
    layout = timeline(chain_report(chain('C01', ['E1', 'E3']), chain('C02', ['E4'])), turbine_corpus)
    frame = export_plot_data(layout)
    assert frame['log_id'].tolist() == ['E4', 'E1', 'E3']
    assert frame['lane'].tolist() == [0, 1, 1]
    assert frame['date'].tolist() == ['2020-01-05', '2020-01-10', '2020-02-20']


def test_export_rejects_other_objects():
    with pytest.raises(DataError) as excinfo:
        export_plot_data({'a': 1})
    assert excinfo.value.code == 'unsupported_plot_data'


# === FIGURES ===

def test_write_figure_html(tmp_path):
    path = write_figure(create_pareto_chart(build_series([('a', 1)])), str(tmp_path / 'fig' / 'pareto.html'))
    with open(path, encoding='utf-8') as f:
        assert 'id="figure"' in f.read()


def test_write_figure_embeds_run_metadata(tmp_path):
    fig = create_pareto_chart(build_series([('a', 1)]))
    path = write_figure(fig, str(tmp_path / 'pareto.html'),
                        {'config_hash': 'cafe1234', 'seed': 42, 'template_version': 'v1'})
    with open(path, encoding='utf-8') as f:
        html = f.read()
    assert html.count('cafe1234') >= 2
    assert 'config_hash=cafe1234, seed=42, template_version=v1' in html
    assert fig.layout.meta is None


def test_write_figure_unknown_format(tmp_path):
    with pytest.raises(DataError) as excinfo:
        write_figure(create_pareto_chart(build_series([('a', 1)])), str(tmp_path / 'pareto.gif'))
    assert excinfo.value.code == 'unsupported_figure_format'
