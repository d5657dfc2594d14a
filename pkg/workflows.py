# workflows.py
"""
Orchestration des quatre analyses : prompt, appel, analyse syntaxique,
validation stricte, réparation, fusion entre blocs et rapprochement des comptes.
"""
import json
import logging
import re
import time
from dataclasses import dataclass

from pydantic import ValidationError

from config import WORKFLOWS, TEMPLATE_VERSION
from constants import AUDIT_HEADINGS
from corpus import content_tokens, normalize_text
from errors import (
    DataError, SchemaError, MalformedSyntax, SchemaViolation, UnknownLogReference,
    MissingHeading, ContextOverflow, SequenceExceedsContext, RetriesExhausted,
)
from gateway import AuditTrail, ChunkPlan, complete, map_chunks, plan_chunks, sample_ids
from promptkit import (
    build_failure_mode_prompt, build_causal_prompt, build_comparison_prompt, build_audit_prompt,
    render, overhead_tokens, log_token_estimates, with_correction, escape_field,
)
from schemas import (
    OUTPUT_SCHEMAS, FailureModeReport, RankedFailureMode, SupportingQuote, CausalChainReport,
    CausalChain, ComparativeReport, AuditReport, AuditIssue, AuditRecommendation,
)

logger = logging.getLogger(__name__)

_FENCE_RE = re.compile(r'^\s*```[A-Za-z]*\s*\n(.*?)\n?```\s*$', re.DOTALL)
_H2_RE = re.compile(r'^##\s+(.+?)\s*#*\s*$')
_ITEM_RE = re.compile(r'^(?:###\s+|[-*]\s+|\d+[.)]\s+)(.+)$')
_EXAMPLES_RE = re.compile(r'^\**example log_ids?\**\s*:\s*\**(.*?)\**\s*$', re.IGNORECASE)

_ENUM_ERRORS = {'literal_error', 'enum'}


@dataclass
class ValidationScope:
    """Ce que la sortie du modèle a le droit de citer."""
    corpus: object
    log_ids: frozenset
    farms: tuple = ()
    turbine_id: str = None

    @classmethod
    def for_cohort(cls, cohort, corpus):
        farms = ()
        if cohort.kind == 'farm_group':
            farms = tuple(sorted({corpus.get(i).farm_id for i in cohort.member_log_ids}))
        return cls(corpus, frozenset(cohort.member_log_ids), farms, cohort.details.get('turbine_id'))


# === VALIDATION ===

def _strip_fence(raw_text):
    match = _FENCE_RE.match(raw_text or '')
    return match.group(1) if match else (raw_text or '').strip()


def _schema_violation(error):
    """Traduit la première erreur pydantic en SchemaViolation(champ, motif)."""
    first = error.errors()[0]
    loc = [str(part) for part in first['loc']]
    names = [part for part in first['loc'] if isinstance(part, str)]
    kind = first['type']
    if kind in _ENUM_ERRORS:
        reason = 'not_in_enum'
    elif kind == 'missing':
        reason = 'missing'
    elif kind == 'extra_forbidden':
        reason = 'unknown_field'
    else:
        reason = kind
    return SchemaViolation(names[-1] if names else 'root', reason, path='.'.join(loc), detail=first['msg'])


def _check_ids(log_ids, scope):
    for log_id in log_ids:
        if log_id not in scope.log_ids:
            raise UnknownLogReference(log_id)


def _quote_in_log(quote, record):
    fields = (record.description, record.observations,
              escape_field(record.description), escape_field(record.observations))
    return any(quote in f for f in fields if f)


def _check_failure_modes(parsed, scope):
    for mode in parsed.failure_modes:
        for quote in mode.supporting_quotes:
            _check_ids([quote.log_id], scope)
            if not _quote_in_log(quote.quote, scope.corpus.get(quote.log_id)):
                raise SchemaViolation('quote', 'not_in_log', log_id=quote.log_id)


def _check_chains(parsed, scope):
    if scope.turbine_id and parsed.turbine_id != scope.turbine_id:
        raise SchemaViolation('turbine_id', 'mismatch', expected=scope.turbine_id, actual=parsed.turbine_id)
    chain_ids = set()
    for chain in parsed.chains:
        if chain.chain_id in chain_ids:
            raise SchemaViolation('chain_id', 'duplicate', chain_id=chain.chain_id)
        chain_ids.add(chain.chain_id)
        _check_ids(chain.member_log_ids, scope)
        if len(chain.member_log_ids) < 2:
            raise SchemaViolation('member_log_ids', 'too_few_members', chain_id=chain.chain_id)
        if len(set(chain.member_log_ids)) != len(chain.member_log_ids):
            raise SchemaViolation('member_log_ids', 'duplicate_member', chain_id=chain.chain_id)
        dates = [scope.corpus.get(i).event_date for i in chain.member_log_ids]
        if any(a > b for a, b in zip(dates, dates[1:])):
            raise SchemaViolation('member_log_ids', 'not_chronological', chain_id=chain.chain_id)


def _check_farms(parsed, scope):
    returned = [f.farm_id for f in parsed.farms]
    if sorted(returned) != sorted(scope.farms) or len(set(returned)) != len(returned):
        raise SchemaViolation('farms', 'farm_coverage', expected=sorted(scope.farms), actual=returned)


def parse_audit_markdown(text):
    """
    Lit un rapport Markdown d'audit : sections '## Issues' et '## Recommendations',
    une entrée par titre '###' (ou élément de liste), suivie de sa description.
    """
    sections = {}
    current = None
    item = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        h2 = _H2_RE.match(line)
        if h2 and not line.startswith('###'):
            current = normalize_text(h2.group(1).strip('*: '))
            sections.setdefault(current, [])
            item = None
            continue
        if current is None:
            continue
        examples = _EXAMPLES_RE.match(line)
        if examples and item is not None:
            item['example_log_ids'] = [i.strip(' `*') for i in examples.group(1).split(',') if i.strip(' `*')]
            continue
        entry = _ITEM_RE.match(line)
        if entry:
            title, _, description = entry.group(1).partition(':') if not line.startswith('###') \
                else (entry.group(1), '', '')
            item = {'title': title.strip(' *'), 'description': description.strip(), 'example_log_ids': []}
            sections[current].append(item)
            continue
        if item is not None:
            item['description'] = f"{item['description']} {line}".strip()
    return sections


def _validate_markdown(raw_text, scope):
    sections = parse_audit_markdown(_strip_fence(raw_text))
    found = {}
    for heading in AUDIT_HEADINGS:
        key = normalize_text(heading)
        if key not in sections:
            raise MissingHeading(heading)
        found[heading] = sections[key]
    issues_heading, recommendations_heading = AUDIT_HEADINGS
    if not found[issues_heading]:
        raise SchemaViolation('issues', 'empty')
    if not found[recommendations_heading]:
        raise SchemaViolation('recommendations', 'empty')
    for issue in found[issues_heading]:
        _check_ids(issue['example_log_ids'], scope)
    return {
        'markdown': _strip_fence(raw_text),
        'issues': [AuditIssue(**i) for i in found[issues_heading]],
        'recommendations': [AuditRecommendation(title=r['title'], description=r['description'])
                            for r in found[recommendations_heading]],
    }


def validate_output(raw_text, workflow, scope):
    """
    Validation stricte d'une réponse du modèle.

    Returns:
        modèle pydantic de sortie (JSON) ou dict issues/recommendations (Markdown)

    Raises:
        MalformedSyntax, SchemaViolation, UnknownLogReference, MissingHeading
    """
    if workflow == 'quality_audit':
        return _validate_markdown(raw_text, scope)

    text = _strip_fence(raw_text)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedSyntax(f"JSON invalide: {e.msg} (ligne {e.lineno}, colonne {e.colno})")
    if not isinstance(data, dict):
        raise SchemaViolation('root', 'not_an_object')
    try:
        parsed = OUTPUT_SCHEMAS[workflow].model_validate(data)
    except ValidationError as e:
        raise _schema_violation(e)

    if workflow == 'failure_modes':
        _check_failure_modes(parsed, scope)
    elif workflow == 'causal_chain':
        _check_chains(parsed, scope)
    else:
        _check_farms(parsed, scope)
    return parsed


def repair_loop(spec, profile, provider, scope, max_attempts=None, audit_trail=None,
                sleep=time.sleep, context=None):
    """
    Appel + validation ; en cas de SchemaError, le prompt est renvoyé avec une
    section de correction citant l'erreur du validateur.

    Returns:
        (sortie validée, nombre de tentatives)
    """
    max_attempts = max_attempts or WORKFLOWS['max_repair_attempts']
    text, _ = render(spec)
    prompt = text
    last_error = None
    for attempt in range(1, max_attempts + 1):
        raw = complete(prompt, profile, provider, audit_trail, sleep, context)
        try:
            return validate_output(raw, spec.workflow, scope), attempt
        except SchemaError as e:
            last_error = e
            logger.warning("⚠️ Sortie rejetée (%s, tentative %d/%d): %s",
                           spec.workflow, attempt, max_attempts, e.message)
            prompt = with_correction(text, e.message)
    raise RetriesExhausted('retries_exhausted_with_last_error', last_error=last_error,
                           attempts=max_attempts, workflow=spec.workflow)


# === MÉTADONNÉES ===

def _provider_meta(profile, provider, plan, attempts, seed):
    return {
        'profile': profile.name,
        'provider': provider.name,
        'provider_settings': provider.settings,
        'strategy': plan.strategy,
        'chunk_plan': plan.to_dict(),
        'sample_fraction': plan.sample_fraction,
        'seed': seed,
        'template_version': TEMPLATE_VERSION,
        'attempts': attempts,
        'merged': len(plan.chunks) > 1,
    }


def _single_plan(log_ids, strategy='full', seed=0, fraction=None, budget=0):
    return ChunkPlan(strategy, [list(log_ids)], fraction, seed, len(log_ids), budget)


# === MODES DE DÉFAILLANCE ===

def merge_modes(chunk_outputs, corpus, max_quotes=None):
    """
    Fusion entre blocs par nom (insensible à la casse) : estimations sommées,
    citations réunies puis ramenées aux premières dans l'ordre canonique.
    """
    max_quotes = max_quotes or WORKFLOWS['max_quotes_per_mode']
    merged = {}
    for output in chunk_outputs:
        for mode in output.failure_modes:
            key = mode.name.casefold()
            entry = merged.setdefault(key, {'name': mode.name, 'description': mode.description,
                                            'estimated_count': 0, 'quotes': {}})
            entry['estimated_count'] += mode.estimated_count
            for quote in mode.supporting_quotes:
                entry['quotes'].setdefault(quote.log_id, quote.quote)
    modes = []
    for entry in merged.values():
        ordered = sorted(entry['quotes'].items(), key=lambda kv: corpus.get(kv[0]).sort_key)[:max_quotes]
        modes.append({
            'name': entry['name'],
            'description': entry['description'],
            'estimated_count': entry['estimated_count'],
            'supporting_quotes': [SupportingQuote(log_id=i, quote=q) for i, q in ordered],
        })
    return modes


def _mode_tokens(mode):
    text = ' '.join([mode['name'], mode['description']] + [q.quote for q in mode['supporting_quotes']])
    return content_tokens(text)


def reconcile_counts(modes, cohort, corpus):
    """
    Affecte chaque journal de la cohorte à au plus un mode par recouvrement de jetons
    discriminants (les jetons communs à tous les modes sont ignorés).
    Égalité de score : rang préliminaire le plus bas (estimation décroissante, puis nom).

    Returns:
        (liste de (mode, reconciled_count), unassigned_count)
    """
    preliminary = sorted(modes, key=lambda m: (-m['estimated_count'], m['name'].casefold()))
    token_sets = [_mode_tokens(m) for m in preliminary]
    if len(token_sets) > 1:
        # Un jeton présent dans tous les modes ne départage rien
        shared = set.intersection(*token_sets)
        token_sets = [tokens - shared for tokens in token_sets]
    counts = [0] * len(preliminary)
    unassigned = 0
    for record in cohort.records(corpus):
        tokens = content_tokens(record.text)
        best_index, best_score = None, 0
        for index, mode_tokens in enumerate(token_sets):
            score = len(tokens & mode_tokens)
            if score > best_score:
                best_index, best_score = index, score
        if best_index is None:
            unassigned += 1
        else:
            counts[best_index] += 1
    return list(zip(preliminary, counts)), unassigned


def rank_modes(reconciled, cohort_size):
    ordered = sorted(reconciled, key=lambda mc: (-mc[1], mc[0]['name']))
    return [
        RankedFailureMode(
            rank=rank,
            name=mode['name'],
            description=mode['description'],
            estimated_count=mode['estimated_count'],
            reconciled_count=count,
            percentage=count / cohort_size * 100 if cohort_size else 0.0,
            supporting_quotes=mode['supporting_quotes'],
        )
        for rank, (mode, count) in enumerate(ordered, start=1)
    ]


def run_failure_mode_analysis(cohort, corpus, profile, provider, strategy='full', seed=0,
                              sample_fraction=None, stratify=False, audit_trail=None,
                              max_in_flight=None, sleep=time.sleep):
    """
    Blocs -> prompt/appel/validation par bloc -> fusion -> rapprochement -> classement.
    """
    full_spec = build_failure_mode_prompt(cohort, corpus)
    records = cohort.records(corpus)
    strata = {r.log_id: r.turbine_id for r in records} if stratify else None
    plan = plan_chunks(cohort.member_log_ids, log_token_estimates(records), overhead_tokens(full_spec),
                       profile, strategy, seed, sample_fraction, strata)
    scope = ValidationScope.for_cohort(cohort, corpus)
    audit_trail = audit_trail or AuditTrail(None)

    def analyze_chunk(index, chunk):
        spec = build_failure_mode_prompt(cohort, corpus, log_ids=chunk)
        return repair_loop(spec, profile, provider, scope, audit_trail=audit_trail, sleep=sleep,
                           context={'workflow': 'failure_modes', 'chunk_index': index})

    results = map_chunks(analyze_chunk, plan.chunks, max_in_flight)
    modes = merge_modes([parsed for parsed, _ in results], corpus)
    reconciled, unassigned = reconcile_counts(modes, cohort, corpus)
    report = FailureModeReport(
        cohort_ref=f"{cohort.kind}:{cohort.name}",
        cohort_size=len(cohort),
        modes=rank_modes(reconciled, len(cohort)),
        unassigned_count=unassigned,
        provider_meta=_provider_meta(profile, provider, plan, [a for _, a in results], seed),
    )
    logger.info("✅ %d modes de défaillance (%d blocs), %d journaux non affectés",
                len(report.modes), len(plan.chunks), unassigned)
    return report


# === CHAÎNES CAUSALES ===

def run_causal_inference(cohort, corpus, profile, provider, audit_trail=None, sleep=time.sleep):
    """Analyse en un seul prompt : découper la séquence romprait le contexte entre événements."""
    spec = build_causal_prompt(cohort, corpus)
    _, tokens = render(spec)
    if tokens > profile.budget:
        raise SequenceExceedsContext(
            f"Séquence de {len(cohort)} journaux ({tokens} tokens) au-delà du budget {profile.budget} "
            f"du profil {profile.name} : choisir un profil à plus grande fenêtre de contexte",
            tokens=tokens, budget=profile.budget, profile=profile.name)

    scope = ValidationScope.for_cohort(cohort, corpus)
    parsed, attempts = repair_loop(spec, profile, provider, scope, audit_trail=audit_trail, sleep=sleep,
                                   context={'workflow': 'causal_chain'})
    chains = []
    for chain in parsed.chains:
        members = [corpus.get(i) for i in chain.member_log_ids]
        chains.append(CausalChain(
            chain_id=chain.chain_id,
            member_log_ids=chain.member_log_ids,
            hypothesis=chain.hypothesis,
            confidence=chain.confidence,
            # Dérivé du corpus, jamais repris de la sortie du modèle
            homogeneous=len({m.subsystem_name for m in members}) == 1,
        ))
    chains.sort(key=lambda c: (corpus.get(c.member_log_ids[0]).sort_key, c.chain_id))
    plan = _single_plan(cohort.member_log_ids, budget=profile.budget)
    report = CausalChainReport(
        cohort_ref=f"{cohort.kind}:{cohort.name}",
        turbine_id=parsed.turbine_id,
        chains=chains,
        provider_meta=_provider_meta(profile, provider, plan, [attempts], 0),
    )
    logger.info("✅ %d chaînes causales pour la turbine %s", len(chains), report.turbine_id)
    return report


# === COMPARAISON DE SITES ===

def run_comparison(cohort, corpus, profile, provider, strategy='full', seed=0, sample_fraction=None,
                   audit_trail=None, sleep=time.sleep):
    """Un seul prompt réunissant les sections de chaque parc et leurs contextes."""
    log_ids = None
    plan_strategy = 'full'
    if strategy in ('sampled', 'sampled_fraction'):
        by_farm = {r.log_id: r.farm_id for r in cohort.records(corpus)}
        # Chaque parc garde au moins un journal : la sortie doit couvrir tous les parcs
        selected = sample_ids(cohort.member_log_ids, sample_fraction, seed, stratify_by=by_farm,
                              min_per_stratum=1)
        log_ids = [i for i in cohort.member_log_ids if i in selected]
        plan_strategy = 'sampled_fraction'
    spec = build_comparison_prompt(cohort, corpus, log_ids=log_ids)
    _, tokens = render(spec)
    if tokens > profile.budget:
        raise ContextOverflow(
            f"Prompt comparatif ({tokens} tokens) au-delà du budget {profile.budget} : "
            "utiliser --strategy sampled avec une fraction", tokens=tokens, budget=profile.budget)

    scope = ValidationScope.for_cohort(cohort, corpus)
    parsed, attempts = repair_loop(spec, profile, provider, scope, audit_trail=audit_trail, sleep=sleep,
                                   context={'workflow': 'site_comparison'})
    farms = sorted(parsed.farms, key=lambda f: scope.farms.index(f.farm_id))
    plan = _single_plan(spec.log_ids, plan_strategy, seed, sample_fraction, profile.budget)
    plan.n_input = len(cohort)
    report = ComparativeReport(
        cohort_ref=f"{cohort.kind}:{cohort.name}",
        farms=farms,
        provider_meta=_provider_meta(profile, provider, plan, [attempts], seed),
    )
    logger.info("✅ Comparaison de %d parcs", len(farms))
    return report


# === AUDIT DE QUALITÉ ===

def _title_key(title):
    return ' '.join(normalize_text(title).split())


def merge_audit(chunk_results, corpus):
    """Issues fusionnées par titre normalisé ; recommandations dédoublonnées."""
    issues, recommendations = {}, {}
    for result in chunk_results:
        for issue in result['issues']:
            entry = issues.setdefault(_title_key(issue.title),
                                      {'title': issue.title, 'description': issue.description, 'ids': []})
            entry['ids'].extend(i for i in issue.example_log_ids if i not in entry['ids'])
        for recommendation in result['recommendations']:
            recommendations.setdefault(_title_key(recommendation.title), recommendation)
    merged_issues = [
        AuditIssue(title=e['title'], description=e['description'],
                   example_log_ids=sorted(e['ids'], key=lambda i: corpus.get(i).sort_key))
        for e in issues.values()
    ]
    return merged_issues, list(recommendations.values())


def run_quality_audit(corpus, profile, provider, strategy='full', seed=0, sample_fraction=None,
                      stratify=False, audit_trail=None, max_in_flight=None, sleep=time.sleep):
    """Audit par blocs selon la stratégie ; la couverture analysée est consignée."""
    if len(corpus) == 0:
        raise DataError('empty_corpus', "Corpus vide")
    records = corpus.records
    strata = {r.log_id: r.subsystem_name for r in records} if stratify else None
    overhead = overhead_tokens(build_audit_prompt(records[:1]))
    plan = plan_chunks(corpus.ids(), log_token_estimates(records), overhead, profile, strategy,
                       seed, sample_fraction, strata)
    if not plan.chunks:
        raise DataError('empty_sample', "L'échantillon ne contient aucun journal", fraction=sample_fraction)
    scope = ValidationScope(corpus, frozenset(corpus.ids()))

    def audit_chunk(index, chunk):
        spec = build_audit_prompt([corpus.get(i) for i in chunk])
        return repair_loop(spec, profile, provider, scope, audit_trail=audit_trail or AuditTrail(None),
                           sleep=sleep, context={'workflow': 'quality_audit', 'chunk_index': index})

    results = map_chunks(audit_chunk, plan.chunks, max_in_flight)
    issues, recommendations = merge_audit([parsed for parsed, _ in results], corpus)
    report = AuditReport(
        cohort_ref='corpus',
        issues=issues,
        recommendations=recommendations,
        chunk_coverage=round(plan.coverage, 4),
        source_markdown=[parsed['markdown'] for parsed, _ in results],
        provider_meta=_provider_meta(profile, provider, plan, [a for _, a in results], seed),
    )
    logger.info("✅ Audit: %d problèmes, %d recommandations, couverture %.0f%%",
                len(issues), len(recommendations), report.chunk_coverage * 100)
    return report
