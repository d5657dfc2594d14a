# tests/test_corpus.py
from datetime import date

import pytest

from corpus import (
    Corpus, content_tokens, detect_delimiter, ingest, load_site_contexts, normalize_text,
    parse_event_date, read_corpus, read_table, write_corpus,
)
from errors import ConfigError, DataError

TODAY = date(2024, 1, 1)

HEADER = ('log_id,farm_id,turbine_id,subsystem_name,event_date,age_at_event_days,'
          'work_class,action_class,description,observations')


def write_rows(path, rows, header=HEADER, sep=','):
    lines = [header.replace(',', sep)] + [sep.join(row) for row in rows]
    path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    return str(path)


def good_row(log_id, **kw):
    row = {
        'log_id': log_id, 'farm_id': 'WF1', 'turbine_id': 'T01', 'subsystem_name': 'Power Converter',
        'event_date': '2021-03-04', 'age_at_event_days': '1200', 'work_class': 'Corrective',
        'action_class': 'Repair', 'description': 'Converter fan replaced', 'observations': '',
    }
    row.update(kw)
    return [row[c] for c in HEADER.split(',')]


# === INGESTION ===

def test_ingest_records_each_rejection_with_its_reason(tmp_path):
    rows = [good_row(f'G{i}') for i in range(8)] + [
        good_row('B1', farm_id=''),
        good_row('B2', description='', observations=''),
        good_row('G0'),
        good_row('B4', event_date='not a date'),
        good_row('B5', event_date='2031-01-01'),
        good_row('B6', age_at_event_days='-3'),
        good_row('B7', work_class='unknown'),
    ]
    corpus = ingest(write_rows(tmp_path / 'logs.csv', rows), today=TODAY)

    assert len(corpus) == 8
    reasons = {r.row_number: r.reason for r in corpus.rejections}
    assert reasons == {
        9: 'missing_field',
        10: 'no_free_text',
        11: 'duplicate_log_id',
        12: 'bad_date',
        13: 'date_out_of_range',
        14: 'negative_age',
        15: 'unknown_work_class',
    }
    assert corpus.provenance['rows_read'] == 15
    assert corpus.provenance['source'] == 'logs.csv'


def test_ingest_reads_semicolon_tables_with_portuguese_labels(tmp_path):
    rows = [
        good_row('P1', event_date='04/03/2021', work_class='Corretiva', action_class='Substituição'),
        good_row('P2', event_date='2021-02-01', work_class='Preventiva', action_class='Inspeção'),
    ]
    path = write_rows(tmp_path / 'logs.csv', rows, sep=';')

    assert detect_delimiter(path) == ';'
    corpus = ingest(path, today=TODAY)
    by_id = {r.log_id: r for r in corpus}
    assert by_id['P1'].event_date == date(2021, 3, 4)
    assert by_id['P1'].work_class == 'corrective'
    assert by_id['P1'].action_class == 'replacement'
    assert by_id['P2'].work_class == 'preventive'
    assert by_id['P2'].action_class == 'inspection'


def test_ingest_maps_unknown_actions_to_other_and_falls_back_to_observations(tmp_path):
    rows = [good_row('A1', action_class='whatever', description='', observations='Fan noise noted on top')]
    corpus = ingest(write_rows(tmp_path / 'logs.csv', rows), today=TODAY)
    record = corpus.get('A1')
    assert record.action_class == 'other'
    assert record.description == 'Fan noise noted on top'
    assert record.observations == ''


def test_ingest_sorts_by_date_then_log_id(tmp_path):
    rows = [
        good_row('Z9', event_date='2020-01-01'),
        good_row('B2', event_date='2021-01-01'),
        good_row('A1', event_date='2021-01-01'),
    ]
    corpus = ingest(write_rows(tmp_path / 'logs.csv', rows), today=TODAY)
    assert corpus.ids() == ['Z9', 'A1', 'B2']


def test_ingest_uses_a_column_mapping(tmp_path):
    header = HEADER.replace('log_id', 'Nº OT').replace('description', 'Descrição')
    path = write_rows(tmp_path / 'logs.csv', [good_row('M1')], header=header)
    corpus = ingest(path, mapping={**dict(zip(HEADER.split(','), HEADER.split(','))),
                                   'log_id': 'Nº OT', 'description': 'Descrição'}, today=TODAY)
    assert corpus.ids() == ['M1']


def test_ingest_fails_on_unmappable_mandatory_column(tmp_path):
    header = HEADER.replace('turbine_id', 'wtg')
    path = write_rows(tmp_path / 'logs.csv', [good_row('M1')], header=header)
    with pytest.raises(ConfigError) as excinfo:
        ingest(path, today=TODAY)
    assert excinfo.value.code == 'unmappable_column'
    assert excinfo.value.details['field'] == 'turbine_id'


def test_ingest_fails_when_most_rows_are_rejected(tmp_path):
    rows = [good_row('G1')] + [good_row(f'B{i}', event_date='garbage') for i in range(3)]
    with pytest.raises(DataError) as excinfo:
        ingest(write_rows(tmp_path / 'logs.csv', rows), today=TODAY)
    assert excinfo.value.code == 'excessive_rejects'
    assert excinfo.value.exit_code == 3


def test_missing_source_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError) as excinfo:
        ingest(str(tmp_path / 'absent.csv'), today=TODAY)
    assert excinfo.value.code == 'missing_file'


def test_read_table_skips_leading_metadata_lines_only(tmp_path):
    path = tmp_path / 'table.csv'
    path.write_text('# seed=3\n# config_hash=abc\nlabel,count\n#1 issue,4\n', encoding='utf-8')
    df = read_table(str(path))
    assert list(df.columns) == ['label', 'count']
    assert df.to_dict('records') == [{'label': '#1 issue', 'count': '4'}]


@pytest.mark.parametrize('value, expected', [
    ('2021-03-04', date(2021, 3, 4)),
    ('04/03/2021', date(2021, 3, 4)),
    ('04.03.2021', date(2021, 3, 4)),
    ('2021/13/40', None),
    ('', None),
])
def test_parse_event_date(value, expected):
    assert parse_event_date(value) == expected


def test_text_normalisation_ignores_case_and_accents():
    assert normalize_text('  Inspeção ÉLECTRIQUE ') == 'inspecao electrique'
    assert content_tokens('The IGBT module of phase L2 was replaced 3 times') == {
        'igbt', 'module', 'phase', 'l2', 'replaced', 'times'}


# === CONTEXTES DE SITE ===

def test_load_site_contexts_accepts_column_aliases(tmp_path):
    path = tmp_path / 'sites.csv'
    path.write_text(
        'farm,model,n_turbines,rated_power_mw,rotor_diameter_m,hub_height_m,site,notes\n'
        'WF1,Model A,14,2.5,100,80,S01,Coastal ridge\n'
        'WF2,Model B,20,2.5,90,80,S01,\n', encoding='utf-8')
    contexts = load_site_contexts(str(path))
    assert sorted(contexts) == ['WF1', 'WF2']
    assert contexts['WF1'].site_id == 'S01'
    assert contexts['WF1'].location_notes == 'Coastal ridge'
    assert contexts['WF2'].rotor_diameter_m == 90.0


def test_load_site_contexts_rejects_non_positive_dimensions(tmp_path):
    path = tmp_path / 'sites.csv'
    path.write_text(
        'farm_id,turbine_model_label,n_turbines,rated_power_mw,rotor_diameter_m,hub_height_m\n'
        'WF1,Model A,14,2.5,0,80\n', encoding='utf-8')
    with pytest.raises(DataError) as excinfo:
        load_site_contexts(str(path))
    assert excinfo.value.code == 'non_positive_field'


def test_load_site_contexts_rejects_duplicate_farms(tmp_path):
    path = tmp_path / 'sites.csv'
    path.write_text(
        'farm_id,turbine_model_label,n_turbines,rated_power_mw,rotor_diameter_m,hub_height_m\n'
        'WF1,Model A,14,2.5,90,80\nWF1,Model A,14,2.5,90,80\n', encoding='utf-8')
    with pytest.raises(DataError) as excinfo:
        load_site_contexts(str(path))
    assert excinfo.value.code == 'duplicate_farm_row'


def test_empty_sites_file_gives_no_contexts(tmp_path):
    path = tmp_path / 'sites.csv'
    path.write_text('', encoding='utf-8')
    assert load_site_contexts(str(path)) == {}


# === SÉRIALISATION ===

def test_written_corpus_reads_back_identically(tmp_path, converter_corpus):
    path = str(tmp_path / 'corpus.jsonl')
    write_corpus(converter_corpus, path, {'seed': 1})
    again = read_corpus(path)
    assert again.records == converter_corpus.records
    assert again.provenance == {'source': 'hand-built'}
    with open(path, encoding='utf-8') as f:
        assert f.readline().startswith('{"_meta"')


def test_corpus_file_excludes_ingestion_timestamp(tmp_path, converter_corpus):
    corpus = Corpus(converter_corpus.records, {'source': 'x.csv', 'ingested_at': '2024-01-01T10:00:00'})
    first, second = tmp_path / 'a.jsonl', tmp_path / 'b.jsonl'
    write_corpus(corpus, str(first))
    write_corpus(Corpus(corpus.records, {**corpus.provenance, 'ingested_at': '2025-06-01T08:00:00'}),
                 str(second))
    assert first.read_bytes() == second.read_bytes()
