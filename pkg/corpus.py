# corpus.py
"""
Ingestion des tables brutes de journaux de maintenance vers un corpus validé.
Modèle d'enregistrement canonique, contextes de site et sérialisation JSONL.
"""
import json
import logging
import math
import os
import re
import unicodedata
from dataclasses import dataclass, field, asdict
from datetime import date, datetime

import pandas as pd

from config import (
    INGEST, MANDATORY_FIELDS, WORK_CLASS_SYNONYMS, ACTION_CLASS_SYNONYMS,
    SITE_COLUMN_ALIASES, load_mapping,
)
from constants import STOPWORDS
from errors import ConfigError, DataError

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r'[a-z0-9_]+')


def normalize_text(text):
    """Minuscules et suppression des accents (comparaisons insensibles)."""
    if not text:
        return ''
    decomposed = unicodedata.normalize('NFKD', str(text).casefold())
    return ''.join(ch for ch in decomposed if not unicodedata.combining(ch)).strip()


def tokenize(text):
    """Découpe un texte normalisé en jetons alphanumériques."""
    return _TOKEN_RE.findall(normalize_text(text))


def content_tokens(text):
    """Jetons porteurs de sens : ni mots vides, ni chiffres seuls, ni lettres isolées."""
    return {t for t in tokenize(text) if len(t) > 1 and t not in STOPWORDS and not t.isdigit()}


@dataclass(frozen=True)
class MaintenanceLog:
    log_id: str
    farm_id: str
    turbine_id: str
    subsystem_name: str
    event_date: date
    age_at_event_days: int
    work_class: str
    action_class: str
    description: str
    observations: str = ''

    @property
    def sort_key(self):
        return (self.event_date, self.log_id)

    @property
    def text(self):
        """Texte libre complet (description + observations)."""
        if self.observations:
            return f"{self.description} {self.observations}"
        return self.description

    def to_dict(self):
        row = asdict(self)
        row['event_date'] = self.event_date.isoformat()
        return row

    @classmethod
    def from_dict(cls, row):
        row = dict(row)
        row['event_date'] = date.fromisoformat(row['event_date'])
        row['age_at_event_days'] = int(row['age_at_event_days'])
        row.setdefault('observations', '')
        return cls(**row)


@dataclass(frozen=True)
class Rejection:
    row_number: int
    log_id: str
    reason: str


@dataclass
class Corpus:
    records: list
    provenance: dict = field(default_factory=dict)
    rejections: list = field(default_factory=list)

    def __post_init__(self):
        self.records = sorted(self.records, key=lambda r: r.sort_key)
        self._by_id = {r.log_id: r for r in self.records}

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def get(self, log_id):
        return self._by_id.get(log_id)

    def ids(self):
        return [r.log_id for r in self.records]

    def with_records(self, records, **provenance):
        """Nouveau corpus dérivé (même provenance, complétée)."""
        prov = dict(self.provenance)
        prov.update(provenance)
        return Corpus(list(records), prov, list(self.rejections))

    def to_frame(self):
        """Vue pandas du corpus, dans l'ordre canonique."""
        return pd.DataFrame([r.to_dict() for r in self.records],
                            columns=list(MaintenanceLog.__dataclass_fields__))


@dataclass(frozen=True)
class SiteContext:
    farm_id: str
    turbine_model_label: str
    n_turbines: int
    rated_power_mw: float
    rotor_diameter_m: float
    hub_height_m: float
    location_notes: str = ''
    site_id: str = ''

    def __post_init__(self):
        if self.n_turbines <= 0:
            raise DataError('non_positive_field', f"{self.farm_id}: n_turbines doit être > 0",
                            farm_id=self.farm_id, field='n_turbines')
        for name in ('rated_power_mw', 'rotor_diameter_m', 'hub_height_m'):
            if getattr(self, name) <= 0:
                raise DataError('non_positive_field', f"{self.farm_id}: {name} doit être > 0",
                                farm_id=self.farm_id, field=name)

    def to_dict(self):
        return asdict(self)


# === LECTURE DES TABLES ===

def _leading_comments(path):
    """Nombre de lignes de métadonnées '#' en tête de fichier, et la ligne d'en-tête."""
    skipped = 0
    with open(path, 'r', encoding='utf-8-sig') as f:
        for line in f:
            if not line.startswith('#'):
                return skipped, line
            skipped += 1
    return skipped, ''


def detect_delimiter(path):
    """Détecte ',' ou ';' à partir de la ligne d'en-tête."""
    _, header = _leading_comments(path)
    return ';' if header.count(';') > header.count(',') else ','


def read_table(path):
    """Lit une table délimitée en chaînes brutes (aucune conversion implicite)."""
    if not os.path.exists(path):
        raise ConfigError('missing_file', f"Fichier introuvable: {path}", path=path)
    skipped, header = _leading_comments(path)
    if not header.strip():
        return pd.DataFrame()
    # Les '#' du texte libre restent intacts : seules les lignes de tête sont sautées
    return pd.read_csv(
        path, sep=detect_delimiter(path), dtype=str, keep_default_na=False,
        encoding='utf-8-sig', skip_blank_lines=True, skiprows=skipped,
    )


def parse_event_date(value, formats=None):
    """Parse une date ISO-8601 ou JJ/MM/AAAA (les formes ambiguës sont lues jour d'abord)."""
    value = (value or '').strip()
    for fmt in formats or INGEST['date_formats']:
        try:
            return datetime.strptime(value, fmt).date()
        except ValueError:
            continue
    return None


def _parse_age(value):
    value = (value or '').strip()
    try:
        number = float(value)
    except ValueError:
        return None
    if math.isnan(number) or number != int(number):
        return None
    return int(number)


def _map_enum(value, synonyms):
    return synonyms.get(normalize_text(value)) or synonyms.get((value or '').strip().casefold())


def _normalized_synonyms(synonyms):
    return {normalize_text(k): v for k, v in synonyms.items()}


def ingest(source, mapping=None, max_reject_fraction=None, work_synonyms=None,
           action_synonyms=None, today=None):
    """
    Ingère une table de journaux bruts et retourne un Corpus validé.

    Args:
        source: chemin de la table délimitée (',' ou ';')
        mapping: dict champ canonique -> colonne, ou chemin d'un fichier clé=valeur
        max_reject_fraction: au-delà, échec franc (mapping probablement erroné)

    Returns:
        Corpus trié par (event_date, log_id), rejets consignés avec leur motif
    """
    if mapping is None or isinstance(mapping, str):
        mapping = load_mapping(mapping)
    max_reject_fraction = INGEST['max_reject_fraction'] if max_reject_fraction is None else max_reject_fraction
    work_synonyms = _normalized_synonyms(work_synonyms or WORK_CLASS_SYNONYMS)
    action_synonyms = _normalized_synonyms(action_synonyms or ACTION_CLASS_SYNONYMS)
    today = today or date.today()
    min_date = date.fromisoformat(INGEST['min_date'])

    df = read_table(source)
    columns = set(df.columns)
    for name in MANDATORY_FIELDS:
        column = mapping.get(name)
        if not column or column not in columns:
            raise ConfigError('unmappable_column',
                              f"Aucune colonne pour le champ obligatoire '{name}' (mapping: {column!r})",
                              field=name, column=column)
    obs_column = mapping.get('observations')
    if obs_column and obs_column not in columns:
        obs_column = None

    accepted = []
    rejections = []
    seen_ids = set()
    n_other = 0

    for row_number, row in enumerate(df.to_dict('records'), start=1):
        value = {name: str(row.get(mapping[name], '')).strip() for name in MANDATORY_FIELDS}
        value['observations'] = str(row.get(obs_column, '')).strip() if obs_column else ''
        log_id = value['log_id']

        reason = None
        if not all(value[k] for k in ('log_id', 'farm_id', 'turbine_id', 'subsystem_name')):
            reason = 'missing_field'
        elif not value['description'] and not value['observations']:
            reason = 'no_free_text'
        elif log_id in seen_ids:
            reason = 'duplicate_log_id'

        event_date = age = work_class = None
        if reason is None:
            event_date = parse_event_date(value['event_date'])
            if event_date is None:
                reason = 'bad_date'
            elif not (min_date <= event_date <= today):
                reason = 'date_out_of_range'
        if reason is None:
            age = _parse_age(value['age_at_event_days'])
            if age is None:
                reason = 'bad_age'
            elif age < 0:
                reason = 'negative_age'
        if reason is None:
            work_class = _map_enum(value['work_class'], work_synonyms)
            if work_class is None:
                reason = 'unknown_work_class'

        if reason is not None:
            rejections.append(Rejection(row_number, log_id, reason))
            continue

        action_class = _map_enum(value['action_class'], action_synonyms)
        if action_class is None:
            action_class = 'other'
            n_other += 1

        seen_ids.add(log_id)
        accepted.append(MaintenanceLog(
            log_id=log_id,
            farm_id=value['farm_id'],
            turbine_id=value['turbine_id'],
            subsystem_name=value['subsystem_name'],
            event_date=event_date,
            age_at_event_days=age,
            work_class=work_class,
            action_class=action_class,
            # La description ne reste jamais vide : on se replie sur les observations
            description=value['description'] or value['observations'],
            observations=value['observations'] if value['description'] else '',
        ))

    rows_read = len(accepted) + len(rejections)
    if rows_read and len(rejections) / rows_read > max_reject_fraction:
        raise DataError('excessive_rejects',
                        f"{len(rejections)}/{rows_read} lignes rejetées : mapping de colonnes probablement erroné",
                        rejected=len(rejections), rows_read=rows_read)

    if n_other:
        logger.info("⚠️ %d actions non reconnues classées 'other'", n_other)
    logger.info("✅ %d lignes lues, %d acceptées, %d rejetées (%s)",
                rows_read, len(accepted), len(rejections), source)

    provenance = {
        'source': os.path.basename(str(source)),
        'ingested_at': datetime.now().isoformat(timespec='seconds'),
        'rows_read': rows_read,
        'accepted': len(accepted),
        'rejected': len(rejections),
    }
    return Corpus(accepted, provenance, rejections)


def load_site_contexts(source):
    """
    Charge les contextes de site (une ligne par parc) -> {farm_id: SiteContext}.
    Un fichier vide donne un dict vide.
    """
    df = read_table(source)
    if df.empty:
        return {}

    resolved = {}
    for name, aliases in SITE_COLUMN_ALIASES.items():
        resolved[name] = next((c for c in aliases if c in df.columns), None)
    for name in ('farm_id', 'turbine_model_label', 'n_turbines', 'rated_power_mw',
                 'rotor_diameter_m', 'hub_height_m'):
        if resolved[name] is None:
            raise ConfigError('unmappable_column', f"Colonne manquante pour '{name}' dans {source}",
                              field=name)

    contexts = {}
    for row in df.to_dict('records'):
        def get(name, default=''):
            column = resolved.get(name)
            return str(row.get(column, default)).strip() if column else default

        farm_id = get('farm_id')
        if farm_id in contexts:
            raise DataError('duplicate_farm_row', f"Parc en double dans {source}: {farm_id}",
                            farm_id=farm_id)
        try:
            contexts[farm_id] = SiteContext(
                farm_id=farm_id,
                turbine_model_label=get('turbine_model_label'),
                n_turbines=int(float(get('n_turbines'))),
                rated_power_mw=float(get('rated_power_mw')),
                rotor_diameter_m=float(get('rotor_diameter_m')),
                hub_height_m=float(get('hub_height_m')),
                location_notes=get('location_notes'),
                site_id=get('site_id'),
            )
        except ValueError:
            raise DataError('bad_numeric_field', f"Valeur numérique invalide pour {farm_id}",
                            farm_id=farm_id)
    return contexts


# === SÉRIALISATION CANONIQUE ===

def write_jsonl(path, rows, meta=None):
    """Écrit une ligne JSON par enregistrement, ordre de champs stable ; 1re ligne = _meta."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        if meta is not None:
            f.write(json.dumps({'_meta': meta}, ensure_ascii=False, sort_keys=True) + '\n')
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + '\n')


def write_table(frame, path, meta=None):
    """Écrit une table CSV ; les métadonnées précèdent l'en-tête en lignes '# clé=valeur'."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        for key, value in sorted((meta or {}).items()):
            f.write(f"# {key}={value}\n")
        frame.to_csv(f, index=False, lineterminator='\n')


def write_corpus(corpus, path, meta=None):
    meta = dict(meta or {})
    # L'horodatage d'ingestion reste en mémoire : le fichier doit être reproductible
    meta['provenance'] = {k: v for k, v in corpus.provenance.items() if k != 'ingested_at'}
    write_jsonl(path, (r.to_dict() for r in corpus.records), meta)


def read_corpus(path):
    """Relit un corpus canonique écrit par write_corpus."""
    if not os.path.exists(path):
        raise ConfigError('missing_file', f"Corpus introuvable: {path}", path=path)
    records = []
    provenance = {}
    with open(path, 'r', encoding='utf-8') as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if '_meta' in row:
                provenance = row['_meta'].get('provenance', {})
                continue
            records.append(MaintenanceLog.from_dict(row))
    return Corpus(records, provenance)
