# cohorts.py
"""
Sélection des cohortes analytiques :
sous-système critique, turbine à plus forte fréquence normalisée d'événements,
groupe de parcs comparables avec contexte de site.
"""
import itertools
import json
import logging
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

from config import COHORTS, SUBSYSTEM_ALIASES
from constants import COHORT_KINDS
from corpus import SiteContext, normalize_text
from errors import ConfigError, DataError

logger = logging.getLogger(__name__)

DAYS_PER_YEAR = Fraction(36525, 100)


@dataclass
class Cohort:
    kind: str
    member_log_ids: list
    rationale: str
    context: list = None
    name: str = ''
    details: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.member_log_ids)

    def records(self, corpus):
        """Résout les membres dans le corpus, dans l'ordre de la cohorte."""
        resolved = []
        for log_id in self.member_log_ids:
            record = corpus.get(log_id)
            if record is None:
                raise DataError('unknown_member', f"log_id absent du corpus: {log_id}", log_id=log_id)
            resolved.append(record)
        return resolved

    def to_dict(self):
        return {
            'kind': self.kind,
            'name': self.name,
            'rationale': self.rationale,
            'member_log_ids': list(self.member_log_ids),
            'context': [c.to_dict() for c in self.context] if self.context is not None else None,
            'details': self.details,
        }

    @classmethod
    def from_dict(cls, data):
        context = data.get('context')
        return cls(
            kind=data['kind'],
            member_log_ids=list(data['member_log_ids']),
            rationale=data.get('rationale', ''),
            context=[SiteContext(**c) for c in context] if context is not None else None,
            name=data.get('name', ''),
            details=data.get('details', {}),
        )


def make_cohort(corpus, kind, member_log_ids, rationale, context=None, name='', details=None):
    """Construit une cohorte en vérifiant ses invariants contre le corpus source."""
    if kind not in COHORT_KINDS:
        raise ConfigError('bad_cohort_kind', f"Type de cohorte inconnu: {kind}", kind=kind)
    missing = [i for i in member_log_ids if corpus.get(i) is None]
    if missing:
        raise DataError('unknown_member', f"{len(missing)} membres absents du corpus", log_ids=missing[:10])
    if kind == 'turbine_sequence':
        keys = [corpus.get(i).sort_key for i in member_log_ids]
        if keys != sorted(keys):
            raise DataError('unsorted_members', "La séquence de turbine doit être triée par (date, log_id)")
    if kind == 'farm_group':
        farms = {corpus.get(i).farm_id for i in member_log_ids}
        if len(farms) < 2:
            raise DataError('too_few_farms', "Un groupe de parcs exige au moins 2 parcs avec des journaux")
    return Cohort(kind, list(member_log_ids), rationale, context, name, dict(details or {}))


# === SOUS-SYSTÈME ===

def _alias_index(aliases):
    index = {}
    for canonical, names in aliases.items():
        key = normalize_text(canonical)
        index[key] = key
        for alias in names:
            index[normalize_text(alias)] = key
    return index


def canonical_subsystem(name, aliases=None):
    """Clé de comparaison d'un sous-système (casse, accents et alias neutralisés)."""
    normalized = normalize_text(name)
    return _alias_index(aliases or SUBSYSTEM_ALIASES).get(normalized, normalized)


def subsystem_cohort(corpus, subsystem_name, aliases=None):
    """Tous les journaux d'un sous-système, dans l'ordre canonique."""
    if not subsystem_name or not subsystem_name.strip():
        raise ConfigError('empty_subsystem_name', "Nom de sous-système vide")
    index = _alias_index(aliases or SUBSYSTEM_ALIASES)
    target = index.get(normalize_text(subsystem_name), normalize_text(subsystem_name))
    members = [r.log_id for r in corpus.records
               if index.get(normalize_text(r.subsystem_name), normalize_text(r.subsystem_name)) == target]
    if not members:
        raise DataError('empty_cohort', f"Aucun journal pour le sous-système '{subsystem_name}'",
                        subsystem=subsystem_name)
    logger.info("📊 Cohorte sous-système '%s': %d journaux", subsystem_name, len(members))
    return make_cohort(
        corpus, 'subsystem', members,
        rationale=f"All {len(members)} maintenance logs recorded against the '{subsystem_name}' subsystem.",
        name=subsystem_name,
        details={'subsystem': subsystem_name},
    )


def subsystem_frequency_table(corpus):
    """(sous-système, nombre) trié par nombre décroissant, égalités par ordre alphabétique."""
    if len(corpus) == 0:
        raise DataError('empty_corpus', "Corpus vide")
    counts = Counter(r.subsystem_name for r in corpus.records)
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


# === TURBINE À FORTE FRÉQUENCE ===

def turbine_frequencies(corpus, min_observation_days=None, frequency_basis=None):
    """
    Fréquence normalisée (événements par année observée) de chaque turbine éligible.
    Les valeurs sont des Fraction pour des comparaisons exactes.

    Returns:
        dict turbine_id -> (fréquence, nombre d'événements, dénominateur en jours)
    """
    min_days = COHORTS['min_observation_days'] if min_observation_days is None else min_observation_days
    basis = frequency_basis or COHORTS['frequency_basis']
    if basis not in ('span', 'commissioning'):
        raise ConfigError('bad_frequency_basis', f"Base de fréquence inconnue: {basis}", basis=basis)

    by_turbine = defaultdict(list)
    for record in corpus.records:
        by_turbine[record.turbine_id].append(record)

    frequencies = {}
    for turbine_id, records in by_turbine.items():
        if basis == 'span':
            dates = [r.event_date for r in records]
            denominator = (max(dates) - min(dates)).days
        else:
            denominator = max(r.age_at_event_days for r in records)
        if denominator < min_days or denominator <= 0:
            continue
        frequencies[turbine_id] = (len(records) * DAYS_PER_YEAR / denominator, len(records), denominator)
    return frequencies


def high_failure_turbine(corpus, min_observation_days=None, frequency_basis=None):
    """
    Turbine ayant la plus forte fréquence normalisée d'événements.
    Égalités : nombre brut le plus élevé, puis turbine_id.

    Returns:
        (turbine_id, événements par an)
    """
    if len(corpus) == 0:
        raise DataError('empty_corpus', "Corpus vide")
    frequencies = turbine_frequencies(corpus, min_observation_days, frequency_basis)
    if not frequencies:
        raise DataError('insufficient_observation',
                        "Aucune turbine n'atteint la durée d'observation minimale")
    turbine_id, (freq, count, _) = min(frequencies.items(), key=lambda kv: (-kv[1][0], -kv[1][1], kv[0]))
    logger.info("📊 Turbine à plus forte fréquence: %s (%.2f événements/an, %d journaux)",
                turbine_id, float(freq), count)
    return turbine_id, float(freq)


def turbine_cohort(corpus, turbine_id=None, min_observation_days=None, frequency_basis=None):
    """Séquence chronologique complète d'une turbine (la plus défaillante par défaut)."""
    basis = frequency_basis or COHORTS['frequency_basis']
    events_per_year = None
    if turbine_id is None:
        turbine_id, events_per_year = high_failure_turbine(corpus, min_observation_days, basis)
    members = [r.log_id for r in corpus.records if r.turbine_id == turbine_id]
    if not members:
        raise DataError('empty_cohort', f"Aucun journal pour la turbine {turbine_id}", turbine_id=turbine_id)
    if events_per_year is None:
        info = turbine_frequencies(corpus, 0, basis).get(turbine_id)
        events_per_year = float(info[0]) if info else None
    rationale = (f"Complete chronological maintenance sequence of turbine {turbine_id} ({len(members)} logs)"
                 + (f", normalised event frequency {events_per_year:.2f} events per year"
                    f" ({'first-to-last event span' if basis == 'span' else 'age since commissioning'} basis)."
                    if events_per_year is not None else "."))
    return make_cohort(
        corpus, 'turbine_sequence', members, rationale, name=turbine_id,
        details={'turbine_id': turbine_id, 'events_per_year': events_per_year, 'frequency_basis': basis},
    )


# === GROUPE DE PARCS COMPARABLES ===

def _is_natural_experiment(farms, contexts):
    """Vrai si le groupe contient une paire même site/modèles différents et une paire même modèle/sites différents."""
    selected = [contexts.get(f) for f in farms]
    if any(c is None for c in selected):
        return False
    same_site = same_model = False
    for a, b in itertools.combinations(selected, 2):
        if a.site_id and a.site_id == b.site_id and a.turbine_model_label != b.turbine_model_label:
            same_site = True
        if a.turbine_model_label == b.turbine_model_label and (not a.site_id or a.site_id != b.site_id):
            same_model = True
    return same_site and same_model


def _qualifying_groups(counts, size, max_ratio):
    """Toutes les combinaisons de `size` parcs dont le rapport max/min <= max_ratio."""
    ordered = sorted(counts, key=lambda f: (counts[f], f))
    for i, low in enumerate(ordered):
        window = [f for f in ordered[i + 1:] if counts[f] <= max_ratio * counts[low]]
        for rest in itertools.combinations(window, size - 1):
            yield tuple(sorted((low,) + rest))


def select_farm_group(counts, contexts, group_size=None, max_ratio=None):
    """
    Recherche exhaustive du meilleur groupe : expérience naturelle d'abord,
    puis volume total de journaux, puis ordre lexicographique.
    """
    group_size = group_size or COHORTS['group_size']
    max_ratio = COHORTS['max_ratio'] if max_ratio is None else max_ratio
    for size in range(min(group_size, len(counts)), 1, -1):
        best = None
        for group in _qualifying_groups(counts, size, max_ratio):
            score = (_is_natural_experiment(group, contexts), sum(counts[f] for f in group))
            if best is None or score > best[0] or (score == best[0] and group < best[1]):
                best = (score, group)
        if best is not None:
            return list(best[1]), best[0][0]
    return None, False


def comparative_group(corpus, contexts, strategy='auto', group_size=None, max_ratio=None):
    """
    Groupe de parcs pour l'analyse comparative.

    Args:
        strategy: liste explicite de farm_id, ou 'auto'
    """
    counts = Counter(r.farm_id for r in corpus.records)
    if isinstance(strategy, (list, tuple)):
        farms = list(strategy)
        selection = 'explicit'
        empty = [f for f in farms if counts.get(f, 0) == 0]
        if empty:
            raise DataError('no_qualifying_group', f"Parcs sans journaux: {', '.join(empty)}", farms=empty)
        if len(set(farms)) < 2:
            raise DataError('no_qualifying_group', "Un groupe de parcs exige au moins 2 parcs")
        natural = _is_natural_experiment(farms, contexts)
    elif strategy == 'auto':
        selection = 'automatic'
        farms, natural = select_farm_group(counts, contexts, group_size, max_ratio)
        if not farms:
            raise DataError('no_qualifying_group',
                            f"Aucun groupe de parcs au rapport de volumes <= {max_ratio or COHORTS['max_ratio']}",
                            counts=dict(counts))
    else:
        raise ConfigError('bad_strategy', f"Stratégie de groupe inconnue: {strategy}", strategy=strategy)

    missing = [f for f in farms if f not in contexts]
    if missing:
        raise DataError('missing_context', f"Contexte de site manquant: {', '.join(missing)}", farms=missing)

    selected = set(farms)
    members = [r.log_id for r in corpus.records if r.farm_id in selected]
    farm_counts = {f: counts[f] for f in farms}
    logger.info("📊 Groupe comparatif (%s): %s", selection,
                ', '.join(f"{f}={n}" for f, n in farm_counts.items()))
    rationale = (f"{len(farms)} wind farms with high and comparable log volumes "
                 f"({', '.join(f'{f}: {n}' for f, n in farm_counts.items())})"
                 + (", forming a same-site/different-model and same-model/different-site comparison."
                    if natural else "."))
    return make_cohort(
        corpus, 'farm_group', members, rationale,
        context=[contexts[f] for f in farms],
        name='+'.join(farms),
        details={'farms': farms, 'counts': farm_counts, 'selection': selection, 'natural_experiment': natural},
    )


# === MANIFESTE ===

def write_manifest(cohort, path, meta=None):
    """Manifeste JSON de la cohorte (clés triées, sans horodatage)."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    payload = {'meta': meta or {}, **cohort.to_dict()}
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(payload, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write('\n')


def read_manifest(path):
    if not os.path.exists(path):
        raise ConfigError('missing_file', f"Manifeste de cohorte introuvable: {path}", path=path)
    with open(path, 'r', encoding='utf-8') as f:
        data = json.load(f)
    return Cohort.from_dict(data)
