# config.py
"""
Configuration centralisée du pipeline d'analyse sémantique des journaux de maintenance.
Les valeurs par défaut vivent ici ; les fichiers opérateur (clé=valeur) les surchargent.
"""
import copy
import hashlib
import json
import logging
import os

from dotenv import load_dotenv, dotenv_values

from errors import ConfigError

load_dotenv()

logger = logging.getLogger(__name__)

BASE_DIR = os.path.dirname(os.path.abspath(__file__))
TEMPLATES_DIR = os.path.join(BASE_DIR, 'templates')
PRESETS_DIR = os.path.join(BASE_DIR, 'presets')

# Version des gabarits de prompts (répertoire templates/<version>/)
TEMPLATE_VERSION = 'v1'


# === INGESTION ===
# Champ canonique -> nom de colonne dans le fichier source
DEFAULT_COLUMN_MAPPING = {
    'log_id': 'log_id',
    'farm_id': 'farm_id',
    'turbine_id': 'turbine_id',
    'subsystem_name': 'subsystem_name',
    'event_date': 'event_date',
    'age_at_event_days': 'age_at_event_days',
    'work_class': 'work_class',
    'action_class': 'action_class',
    'description': 'description',
    'observations': 'observations',
}

MANDATORY_FIELDS = [
    'log_id', 'farm_id', 'turbine_id', 'subsystem_name', 'event_date',
    'age_at_event_days', 'work_class', 'action_class', 'description',
]

INGEST = {
    'max_reject_fraction': 0.5,
    'min_date': '1990-01-01',
    # ISO d'abord, puis convention portugaise jour/mois/année
    'date_formats': ['%Y-%m-%d', '%d/%m/%Y', '%d-%m-%Y', '%d.%m.%Y'],
}

# Synonymes (comparés sans casse ni accents)
WORK_CLASS_SYNONYMS = {
    'corrective': 'corrective', 'corretiva': 'corrective', 'corretivo': 'corrective',
    'correctiva': 'corrective', 'curativa': 'corrective', 'cm': 'corrective',
    'preventive': 'preventive', 'preventiva': 'preventive', 'preventivo': 'preventive',
    'preventative': 'preventive', 'pm': 'preventive',
}

ACTION_CLASS_SYNONYMS = {
    'repair': 'repair', 'reparacao': 'repair', 'reparação': 'repair', 'reparar': 'repair',
    'replacement': 'replacement', 'substituicao': 'replacement', 'substituição': 'replacement',
    'troca': 'replacement', 'replace': 'replacement',
    'inspection': 'inspection', 'inspecao': 'inspection', 'inspeção': 'inspection',
    'verificacao': 'inspection', 'verificação': 'inspection',
    'other': 'other', 'outro': 'other', 'outros': 'other',
}

# Colonnes acceptées pour le fichier des contextes de site
SITE_COLUMN_ALIASES = {
    'farm_id': ['farm_id', 'farm'],
    'turbine_model_label': ['turbine_model_label', 'model'],
    'n_turbines': ['n_turbines', 'n'],
    'rated_power_mw': ['rated_power_mw', 'mw'],
    'rotor_diameter_m': ['rotor_diameter_m', 'rotor'],
    'hub_height_m': ['hub_height_m', 'hub'],
    'site_id': ['site_id', 'site'],
    'location_notes': ['location_notes', 'notes'],
}


# === NETTOYAGE SECONDAIRE ===
INFORMATIVENESS = {
    'min_token_count': 3,
    'placeholders': ['none', 'n/a', 'na', 'ok', '-', '--', 'teste', 'test', 'nada',
                     'sem observacoes', 'sem observações', 'null', '.'],
    # Un texte composé uniquement de codes d'erreur n'est pas informatif
    'error_code_pattern': r'[a-z]{1,4}[-_]?\d{2,5}',
}

NON_TURBINE_SUBSYSTEMS = [
    'substation', 'subestacao', 'subestação', 'met mast', 'torre meteorologica',
    'torre meteorológica', 'roads', 'acessos', 'caminhos', 'buildings', 'edificio',
    'edifício', 'edificios', 'edifícios',
]

# Préfixes ajoutés par les outils GMAO, retirés en tête de texte
BOILERPLATE_PATTERNS = [
    r'^(?:ot|wo|os)\s*[#nº°]*\s*\d+\s*[-:]\s*',
    r'^(?:descri[cç][aã]o|description|obs(?:erva[cç][oõ]es)?)\s*:\s*',
    r'^\[?auto(?:matic|matico|mático)?\]?\s*[-:]\s*',
]

# Alias de sous-systèmes (clé et alias normalisés sans casse ni accents)
SUBSYSTEM_ALIASES = {
    'power converter': ['conversor', 'conversor de potencia', 'converter', 'power converter'],
    'rotor bearings': ['rolamentos do rotor', 'main bearing', 'rotor bearings'],
    'mv-transformer': ['transformador mt', 'mv transformer', 'mv-transformer'],
}


# === COHORTES ===
COHORTS = {
    'min_observation_days': 180,
    # 'span' : premier -> dernier événement ; 'commissioning' : âge au dernier événement
    'frequency_basis': 'span',
    'group_size': 3,
    'max_ratio': 2.0,
}


# === FOURNISSEURS LLM ===
PROVIDER_PROFILES = {
    'mock': {
        'context_window_tokens': 1_000_000,
        'max_output_tokens': 32_000,
        'request_timeout_s': 30,
        'max_retries': 3,
    },
    'mock-small': {
        'context_window_tokens': 24_000,
        'max_output_tokens': 4_000,
        'request_timeout_s': 30,
        'max_retries': 3,
    },
    'gpt-5': {
        'context_window_tokens': 400_000,
        'max_output_tokens': 128_000,
        'request_timeout_s': 600,
        'max_retries': 3,
    },
    'gemini-2.5-pro': {
        'context_window_tokens': 1_048_576,
        'max_output_tokens': 65_536,
        'request_timeout_s': 600,
        'max_retries': 3,
    },
}

# Adaptateurs : les profils live passent par un endpoint compatible OpenAI
PROVIDER_ENDPOINTS = {
    'mock': {'adapter': 'mock'},
    'mock-small': {'adapter': 'mock'},
    'gpt-5': {
        'adapter': 'openai',
        'model': 'gpt-5',
        'api_key_env': 'OPENAI_API_KEY',
        'base_url': None,
        'temperature': None,  # modèle de raisonnement : paramètre non supporté
    },
    'gemini-2.5-pro': {
        'adapter': 'openai',
        'model': 'gemini-2.5-pro',
        'api_key_env': 'GEMINI_API_KEY',
        'base_url': 'https://generativelanguage.googleapis.com/v1beta/openai/',
        'temperature': 0.0,
    },
}

CHUNKING = {
    'safety_margin': 0.9,
    'chars_per_token': 4,
    'max_in_flight': 4,
    'default_strategy': 'full',
}

RETRY = {
    'base_delay_s': 2.0,
    'factor': 2.0,
    'jitter_s': 1.0,
}

WORKFLOWS = {
    'max_repair_attempts': 3,
    'max_quotes_per_mode': 3,
    'annotation_chars': 140,
    'max_patterns_per_farm': 5,
}

AUDIT_TRAIL_PATH = os.environ.get('AUDIT_TRAIL_PATH', os.path.join('logs', 'audit_trail.jsonl'))


def get_default_config():
    """Retourne la configuration par défaut sous forme de dictionnaire (copie profonde)."""
    return copy.deepcopy({
        'template_version': TEMPLATE_VERSION,
        'column_mapping': DEFAULT_COLUMN_MAPPING,
        'ingest': INGEST,
        'work_class_synonyms': WORK_CLASS_SYNONYMS,
        'action_class_synonyms': ACTION_CLASS_SYNONYMS,
        'informativeness': INFORMATIVENESS,
        'non_turbine_subsystems': NON_TURBINE_SUBSYSTEMS,
        'boilerplate_patterns': BOILERPLATE_PATTERNS,
        'subsystem_aliases': SUBSYSTEM_ALIASES,
        'cohorts': COHORTS,
        'provider_profiles': PROVIDER_PROFILES,
        'provider_endpoints': PROVIDER_ENDPOINTS,
        'chunking': CHUNKING,
        'retry': RETRY,
        'workflows': WORKFLOWS,
    })


def load_key_value_file(path):
    """Lit un fichier clé=valeur (syntaxe .env) et retourne un dict ordonné."""
    if not path:
        return {}
    if not os.path.exists(path):
        raise ConfigError('missing_file', f"Fichier de configuration introuvable: {path}", path=path)
    values = dotenv_values(path)
    return {k.strip(): (v or '').strip() for k, v in values.items()}


def _coerce(raw, reference):
    """Convertit une chaîne selon le type de la valeur par défaut qu'elle remplace."""
    if isinstance(reference, bool):
        return raw.lower() in ('1', 'true', 'yes', 'oui', 'on')
    if isinstance(reference, int):
        return int(raw)
    if isinstance(reference, float):
        return float(raw)
    if isinstance(reference, list):
        return [item.strip() for item in raw.split(',') if item.strip()]
    return raw


def apply_overrides(section, overrides):
    """
    Applique des surcharges clé=valeur sur une section de config.
    Les clés pointées ('mock-small.max_retries') adressent les sous-dictionnaires.
    """
    section = copy.deepcopy(section)
    for key, raw in overrides.items():
        parts = key.split('.')
        target = section
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        leaf = parts[-1]
        try:
            target[leaf] = _coerce(raw, target.get(leaf, raw))
        except ValueError:
            raise ConfigError('bad_value', f"Valeur invalide pour {key}: {raw!r}", key=key)
    return section


def load_mapping(path=None):
    """Mapping des colonnes : défauts + fichier opérateur éventuel."""
    mapping = dict(DEFAULT_COLUMN_MAPPING)
    mapping.update(load_key_value_file(path))
    return mapping


def load_policy(path=None):
    """Politique de nettoyage (informativité, listes de blocage, motifs)."""
    config = get_default_config()
    policy = {
        'informativeness': config['informativeness'],
        'non_turbine_subsystems': config['non_turbine_subsystems'],
        'boilerplate_patterns': config['boilerplate_patterns'],
    }
    overrides = load_key_value_file(path)
    if not overrides:
        return policy
    flat = {}
    for key, value in overrides.items():
        flat[key if '.' in key or key in policy else f'informativeness.{key}'] = value
    return apply_overrides(policy, flat)


def load_provider_profiles(path=None):
    """Profils fournisseurs : défauts + fichier opérateur (clés 'profil.champ')."""
    return apply_overrides(PROVIDER_PROFILES, load_key_value_file(path))


def config_hash(run_config):
    """Empreinte stable de la configuration d'exécution (sha256 du JSON canonique)."""
    canonical = json.dumps(run_config, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:16]


def get_config_summary(config=None):
    """Retourne un résumé lisible de la configuration."""
    config = config or get_default_config()
    info = config['informativeness']
    cohorts = config['cohorts']
    return f"""
    === Configuration Actuelle ===

    Gabarits de prompts: {config['template_version']}
    Informativité: >= {info['min_token_count']} mots, {len(info['placeholders'])} valeurs bouche-trou
    Hors turbine: {len(config['non_turbine_subsystems'])} sous-systèmes exclus
    Cohortes: observation min {cohorts['min_observation_days']} j, base '{cohorts['frequency_basis']}', ratio max {cohorts['max_ratio']}
    Fournisseurs: {', '.join(sorted(config['provider_profiles']))}
    Marge de sécurité tokens: {config['chunking']['safety_margin']}
    """
