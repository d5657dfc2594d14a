# tests/conftest.py
"""
Fixtures partagées : fabriques d'enregistrements, petit corpus écrit à la main
et pipelines synthétiques complets (preset fuzz, preset paper-shape pour les tests lents).
"""
import os
from datetime import date
from types import SimpleNamespace

import pytest

from corpus import Corpus, MaintenanceLog, SiteContext, ingest
from gateway import MockProvider, get_profile
from prep import prepare
from syntheval import SITES_FILENAME, generate, load_preset

# Date de référence fixe : l'ingestion rejette les dates futures
TODAY = date(2024, 1, 1)


def build_log(log_id, **overrides):
    values = {
        'log_id': log_id,
        'farm_id': 'WF1',
        'turbine_id': 'T01',
        'subsystem_name': 'Power Converter',
        'event_date': date(2021, 1, 1),
        'age_at_event_days': 1000,
        'work_class': 'corrective',
        'action_class': 'repair',
        'description': f"Converter fault investigated on {log_id}",
        'observations': '',
    }
    values.update(overrides)
    return MaintenanceLog(**values)


def build_context(farm_id, model='Model A', site_id='S1', n_turbines=10):
    return SiteContext(farm_id=farm_id, turbine_model_label=model, n_turbines=n_turbines,
                       rated_power_mw=2.5, rotor_diameter_m=90, hub_height_m=80, site_id=site_id)


@pytest.fixture
def make_log():
    return build_log


@pytest.fixture
def make_context():
    return build_context


@pytest.fixture
def converter_corpus():
    """Huit journaux convertisseur (deux modes tagués) et deux journaux pitch."""
    records = [
        build_log('L01', event_date=date(2020, 1, 5), description="[FMQ8] Q8 breaker tripped, reset performed"),
        build_log('L02', event_date=date(2020, 2, 9), description="[FMQ8] Q8 breaker failed to close"),
        build_log('L03', event_date=date(2020, 3, 1), turbine_id='T02',
                  description="[FMQ8] Disjuntor Q8 disparou, rearmado"),
        build_log('L04', event_date=date(2020, 4, 2), description="[FMIGBT] IGBT module damaged on phase L2"),
        build_log('L05', event_date=date(2020, 5, 7), turbine_id='T02',
                  description="[FMIGBT] IGBT desaturation alarm"),
        build_log('L06', event_date=date(2020, 6, 3), subsystem_name='Conversor',
                  description="[FMQ8] Q8 breaker tripped again after storm"),
        build_log('L07', event_date=date(2020, 7, 3), subsystem_name='Conversor',
                  description="Grid side filter inspected, dust removed"),
        build_log('L08', event_date=date(2020, 8, 3), description="[FMIGBT] IGBT module replaced"),
        build_log('L09', event_date=date(2020, 9, 3), subsystem_name='Pitch System',
                  description="Pitch bearing grease leak found on blade A"),
        build_log('L10', event_date=date(2020, 10, 3), subsystem_name='Pitch System',
                  description="Pitch motor overcurrent on blade A"),
    ]
    return Corpus(records, {'source': 'hand-built'})


@pytest.fixture
def mock_profile():
    return get_profile('mock')


@pytest.fixture
def mock_provider():
    return MockProvider()


def no_sleep(seconds):
    return None


@pytest.fixture
def sleep():
    return no_sleep


def _synthetic_run(tmp_path_factory, preset):
    spec = load_preset(preset)
    out_dir = str(tmp_path_factory.mktemp(preset))
    logs_path, truth = generate(spec, out_dir, {'config_hash': 'test', 'template_version': 'v1'})
    raw = ingest(logs_path, today=TODAY)
    return SimpleNamespace(
        spec=spec,
        out_dir=out_dir,
        logs_path=logs_path,
        sites_path=os.path.join(out_dir, SITES_FILENAME),
        truth=truth,
        raw=raw,
        prep=prepare(raw),
    )


@pytest.fixture(scope='session')
def fuzz_run(tmp_path_factory):
    return _synthetic_run(tmp_path_factory, 'fuzz')


@pytest.fixture(scope='session')
def full_run(tmp_path_factory):
    return _synthetic_run(tmp_path_factory, 'paper-shape')
