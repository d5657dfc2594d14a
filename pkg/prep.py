# prep.py
"""
Pipeline de nettoyage secondaire des journaux de maintenance :
bruit syntaxique, filtrage d'informativité, exclusion hors turbine,
dédoublonnage et anonymisation réversible des parcs.
"""
import functools
import logging
import re
import string
import unicodedata
from collections import Counter
from dataclasses import dataclass, field, replace

import pandas as pd

from config import load_policy
from corpus import Corpus, normalize_text, read_table, write_table
from errors import DataError

logger = logging.getLogger(__name__)

FILTER_REASONS = ('kept', 'uninformative_descriptor', 'non_turbine_infrastructure', 'duplicate_record')

MAX_FARMS = 26 * 26

_WS_RE = re.compile(r'\s+')
_REPEATED_PUNCT_RE = re.compile(r'([!?.,;:])\1+')
_LEADING_PUNCT_RE = re.compile(r'^[\s.,;:!?\-–—/\\|*#~]+')
# Les terminaisons de phrase et parenthèses fermantes restent
_TRAILING_PUNCT_RE = re.compile(r'[\s,;:\-–—/\\|*#~]+$')
_WORD_RE = re.compile(r'\w+')


@dataclass(frozen=True)
class FilterDecision:
    log_id: str
    kept: bool
    reason: str


@dataclass
class Glossary:
    forward: dict = field(default_factory=dict)
    reverse: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.forward)

    def to_frame(self):
        rows = sorted(self.forward.items(), key=lambda kv: kv[1])
        return pd.DataFrame(rows, columns=['farm_id', 'code'])

    @classmethod
    def from_frame(cls, df):
        forward = {str(r.farm_id): str(r.code) for r in df.itertuples(index=False)}
        return cls(forward, {code: farm for farm, code in forward.items()})

    def write(self, path, meta=None):
        write_table(self.to_frame(), path, meta)

    @classmethod
    def read(cls, path):
        return cls.from_frame(read_table(path))


@dataclass
class PrepResult:
    corpus: Corpus
    glossary: Glossary
    decisions: list
    counts: dict

    @property
    def reduction(self):
        total = len(self.decisions)
        return 0.0 if total == 0 else 1 - len(self.corpus) / total


# === NETTOYAGE DU TEXTE ===

@functools.lru_cache(maxsize=8)
def _compile_patterns(patterns):
    return [re.compile(p, re.IGNORECASE) for p in patterns]


def _strip_controls(text):
    text = text.replace('\t', ' ').replace('\n', ' ').replace('\r', ' ')
    return ''.join(ch for ch in text if unicodedata.category(ch) != 'Cc')


def _clean_once(text, compiled):
    text = _strip_controls(text)
    text = _WS_RE.sub(' ', text).strip()
    for pattern in compiled:
        text = pattern.sub('', text, count=1)
    text = _REPEATED_PUNCT_RE.sub(r'\1', text)
    text = _WS_RE.sub(' ', text).strip()
    text = _LEADING_PUNCT_RE.sub('', text)
    text = _TRAILING_PUNCT_RE.sub('', text)
    return text


def clean_text(text, patterns=None):
    """
    Retire le bruit syntaxique d'un texte libre.
    Les codes d'erreur (ex: FM300) sont conservés tels quels ; le résultat est idempotent.
    """
    if not text:
        return ''
    if patterns is None:
        patterns = load_policy()['boilerplate_patterns']
    compiled = _compile_patterns(tuple(patterns))
    previous = None
    text = str(text)
    # Point fixe : un préfixe retiré peut en révéler un autre
    while text != previous:
        previous = text
        text = _clean_once(text, compiled)
    return text


# === INFORMATIVITÉ ===

@functools.lru_cache(maxsize=8)
def _placeholder_set(placeholders):
    return frozenset(normalize_text(p).strip(string.punctuation + ' ') or normalize_text(p)
                     for p in placeholders)


def is_informative(text, policy=None):
    """
    Prédicat pur : le texte porte-t-il une information exploitable ?
    Insensible à la casse et aux accents ; un texte vide n'est pas informatif.
    """
    policy = policy or load_policy()['informativeness']
    normalized = normalize_text(text)
    if not normalized:
        return False

    placeholders = _placeholder_set(tuple(policy['placeholders']))
    bare = normalized.strip(string.punctuation + ' ')
    if normalized in placeholders or bare in placeholders or not bare:
        return False

    tokens = _WORD_RE.findall(normalized)
    code_re = re.compile(policy['error_code_pattern'])
    words = [t for t in tokens if not code_re.fullmatch(t) and not t.isdigit()]
    if not words:
        return False
    return len(tokens) >= int(policy['min_token_count'])


# === FILTRAGE ===

def _decide(record, policy, blocked_subsystems, seen):
    if normalize_text(record.subsystem_name) in blocked_subsystems:
        return 'non_turbine_infrastructure'
    info = policy['informativeness']
    if not is_informative(record.description, info) and not is_informative(record.observations, info):
        return 'uninformative_descriptor'
    key = (record.farm_id, record.turbine_id, record.event_date, record.description)
    if key in seen:
        return 'duplicate_record'
    seen.add(key)
    return 'kept'


def filter_corpus(corpus, policy=None):
    """
    Applique les filtres de membre (jamais de modification de contenu).

    Returns:
        (corpus conservé, liste de FilterDecision dans l'ordre canonique)
    """
    policy = policy or load_policy()
    blocked = {normalize_text(s) for s in policy['non_turbine_subsystems']}
    seen = set()
    decisions = []
    kept = []
    for record in corpus.records:
        reason = _decide(record, policy, blocked, seen)
        decisions.append(FilterDecision(record.log_id, reason == 'kept', reason))
        if reason == 'kept':
            kept.append(record)

    counts = Counter(d.reason for d in decisions)
    logger.info("📊 Filtrage: %d/%d conservés (%s)", len(kept), len(decisions),
                ', '.join(f"{r}={counts[r]}" for r in FILTER_REASONS[1:] if counts[r]) or 'aucun rejet')
    return corpus.with_records(kept), decisions


def decisions_frame(decisions):
    """Table d'audit (log_id, reason) des décisions de filtrage."""
    return pd.DataFrame([(d.log_id, d.reason) for d in decisions], columns=['log_id', 'reason'])


# === ANONYMISATION ===

def _code_for_index(index):
    letters = string.ascii_uppercase
    return letters[index // 26] + letters[index % 26]


def anonymize(corpus):
    """
    Remplace chaque farm_id par un code à deux lettres (AA, AB, ...)
    attribué dans l'ordre lexicographique des identifiants d'origine.
    """
    farms = sorted({r.farm_id for r in corpus.records})
    if len(farms) > MAX_FARMS:
        raise DataError('too_many_farms', f"{len(farms)} parcs : au plus {MAX_FARMS} codes à deux lettres",
                        n_farms=len(farms))
    forward = {farm: _code_for_index(i) for i, farm in enumerate(farms)}
    glossary = Glossary(forward, {code: farm for farm, code in forward.items()})
    records = [replace(r, farm_id=forward[r.farm_id]) for r in corpus.records]
    return corpus.with_records(records, anonymized=True), glossary


def deanonymize(code, glossary):
    """Retrouve l'identifiant d'origine d'un code du glossaire."""
    try:
        return glossary.reverse[code]
    except KeyError:
        raise DataError('unknown_code', f"Code inconnu du glossaire: {code}", code=code)


def anonymize_contexts(contexts, glossary):
    """Applique le glossaire aux contextes de site ; les parcs hors corpus sont ignorés."""
    anonymized = {}
    for farm_id, context in contexts.items():
        code = glossary.forward.get(farm_id)
        if code is None:
            logger.debug("Contexte ignoré (parc absent du corpus): %s", farm_id)
            continue
        anonymized[code] = replace(context, farm_id=code)
    return anonymized


# === PIPELINE COMPLET ===

def clean_corpus(corpus, policy=None):
    """Nettoie description et observations de chaque enregistrement."""
    policy = policy or load_policy()
    patterns = policy['boilerplate_patterns']
    records = [
        replace(r, description=clean_text(r.description, patterns),
                observations=clean_text(r.observations, patterns))
        for r in corpus.records
    ]
    return corpus.with_records(records)


def prepare(corpus, policy=None):
    """
    Nettoyage -> filtrage -> anonymisation.
    La contribution de chaque filtre est exposée dans PrepResult.counts.
    """
    policy = policy or load_policy()
    cleaned = clean_corpus(corpus, policy)
    kept, decisions = filter_corpus(cleaned, policy)
    anonymized, glossary = anonymize(kept)
    counts = Counter(d.reason for d in decisions)
    result = PrepResult(anonymized, glossary, decisions, {r: counts.get(r, 0) for r in FILTER_REASONS})
    logger.info("✅ Préparation terminée: %d -> %d journaux (réduction %.1f%%), %d parcs anonymisés",
                len(corpus), len(anonymized), result.reduction * 100, len(glossary))
    return result
