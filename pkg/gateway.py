# gateway.py
"""
Passerelle vers les fournisseurs LLM : profils, planification des blocs selon
le budget de tokens, appels avec reprise exponentielle, journal d'audit et
fournisseur simulé déterministe pour les essais hors ligne.
"""
import json
import logging
import math
import os
import random
import re
import threading
import time
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from config import PROVIDER_PROFILES, PROVIDER_ENDPOINTS, CHUNKING, RETRY
from constants import WORKFLOW_PROMPTS, AUDIT_ISSUES, AUDIT_RECOMMENDATIONS, AUDIT_HEADINGS
from corpus import content_tokens, tokenize
from errors import (
    ConfigError, DataError, PipelineError, ProviderError, AuthFailure, RateLimited,
    ProviderTimeout, ContextOverflow, RetriesExhausted,
)

logger = logging.getLogger(__name__)

STRATEGIES = ('full', 'packed', 'sampled_fraction')
STRATEGY_ALIASES = {'sampled': 'sampled_fraction'}


# === PROFILS ===

@dataclass(frozen=True)
class ProviderProfile:
    name: str
    context_window_tokens: int
    max_output_tokens: int
    request_timeout_s: int = 600
    max_retries: int = 3

    def __post_init__(self):
        if not (self.context_window_tokens > self.max_output_tokens > 0):
            raise ConfigError('bad_profile',
                              f"{self.name}: il faut context_window_tokens > max_output_tokens > 0",
                              profile=self.name)
        if self.max_retries < 0:
            raise ConfigError('bad_profile', f"{self.name}: max_retries négatif", profile=self.name)

    @property
    def budget(self):
        """Tokens de prompt autorisés par requête (marge de sécurité appliquée)."""
        return math.floor(CHUNKING['safety_margin'] * (self.context_window_tokens - self.max_output_tokens))

    def to_dict(self):
        return {
            'name': self.name,
            'context_window_tokens': self.context_window_tokens,
            'max_output_tokens': self.max_output_tokens,
            'request_timeout_s': self.request_timeout_s,
            'max_retries': self.max_retries,
        }


def get_profile(name, profiles=None):
    profiles = profiles or PROVIDER_PROFILES
    if name not in profiles:
        raise ConfigError('unknown_provider', f"Profil fournisseur inconnu: {name}",
                          provider=name, known=sorted(profiles))
    values = profiles[name]
    return ProviderProfile(
        name=name,
        context_window_tokens=int(values['context_window_tokens']),
        max_output_tokens=int(values['max_output_tokens']),
        request_timeout_s=int(values.get('request_timeout_s', 600)),
        max_retries=int(values.get('max_retries', 3)),
    )


# === PLANIFICATION DES BLOCS ===

@dataclass
class ChunkPlan:
    strategy: str
    chunks: list
    sample_fraction: float = None
    seed: int = 0
    n_input: int = 0
    budget: int = 0

    @property
    def n_selected(self):
        return sum(len(c) for c in self.chunks)

    @property
    def coverage(self):
        return 0.0 if self.n_input == 0 else self.n_selected / self.n_input

    def to_dict(self):
        return {
            'strategy': self.strategy,
            'n_chunks': len(self.chunks),
            'chunk_sizes': [len(c) for c in self.chunks],
            'sample_fraction': self.sample_fraction,
            'seed': self.seed,
            'n_input': self.n_input,
            'budget_tokens': self.budget,
        }


def normalize_strategy(strategy):
    strategy = STRATEGY_ALIASES.get(strategy, strategy)
    if strategy not in STRATEGIES:
        raise ConfigError('bad_strategy', f"Stratégie de découpage inconnue: {strategy}", strategy=strategy)
    return strategy


def _pack(log_ids, estimates, capacity):
    """First-fit dans l'ordre canonique : chaque journal va dans le premier bloc où il tient."""
    chunks, loads = [], []
    for log_id in log_ids:
        cost = estimates[log_id]
        if cost > capacity:
            raise ContextOverflow(f"Le journal {log_id} ({cost} tokens) dépasse à lui seul le budget",
                                  log_id=log_id, tokens=cost, capacity=capacity)
        for i, load in enumerate(loads):
            if load + cost <= capacity:
                chunks[i].append(log_id)
                loads[i] += cost
                break
        else:
            chunks.append([log_id])
            loads.append(cost)
    return chunks


def _largest_remainder(sizes, k):
    """Répartition proportionnelle de k tirages entre strates (méthode du plus fort reste)."""
    total = sum(sizes.values())
    quotas = {s: k * n / total for s, n in sizes.items()}
    allocation = {s: math.floor(q) for s, q in quotas.items()}
    remaining = k - sum(allocation.values())
    for s in sorted(quotas, key=lambda s: (-(quotas[s] - allocation[s]), s))[:remaining]:
        allocation[s] += 1
    return allocation


def sample_ids(log_ids, fraction, seed, stratify_by=None, min_per_stratum=0):
    """
    Tirage uniforme sans remise de round(fraction * n) identifiants.
    La graine porte sur les identifiants triés : le tirage ne dépend pas de l'ordre d'entrée.
    min_per_stratum relève les strates sous-allouées (le total peut alors dépasser k).
    """
    if not (0 < fraction <= 1):
        raise ConfigError('bad_fraction', f"Fraction d'échantillonnage hors de (0, 1]: {fraction}",
                          fraction=fraction)
    ordered = sorted(log_ids)
    k = math.floor(fraction * len(ordered) + 0.5)
    rng = np.random.default_rng(seed)
    if not stratify_by:
        picked = rng.choice(len(ordered), size=k, replace=False)
        return {ordered[i] for i in picked}

    strata = defaultdict(list)
    for log_id in ordered:
        strata[stratify_by[log_id]].append(log_id)
    allocation = _largest_remainder({s: len(ids) for s, ids in strata.items()}, k)
    for stratum, members in strata.items():
        allocation[stratum] = max(allocation[stratum], min(min_per_stratum, len(members)))
    selected = set()
    for stratum in sorted(strata):
        members = strata[stratum]
        picked = rng.choice(len(members), size=allocation[stratum], replace=False)
        selected.update(members[i] for i in picked)
    return selected


def plan_chunks(log_ids, per_log_token_estimates, overhead_tokens, profile, strategy='full',
                seed=0, sample_fraction=None, stratify_by=None):
    """
    Découpe une liste de journaux en blocs respectant le budget du profil.

    Args:
        log_ids: identifiants dans l'ordre canonique
        per_log_token_estimates: dict log_id -> tokens estimés
        overhead_tokens: part fixe du prompt (rôle, contexte, tâches, contrat)
        strategy: 'full', 'packed' ou 'sampled_fraction'
        stratify_by: dict log_id -> strate (tirage stratifié, optionnel)

    Returns:
        ChunkPlan
    """
    strategy = normalize_strategy(strategy)
    log_ids = list(log_ids)
    estimates = dict(per_log_token_estimates)
    bad = [i for i in log_ids if not estimates.get(i, 0) > 0]
    if bad:
        raise DataError('bad_estimate', f"Estimations de tokens non positives pour {len(bad)} journaux",
                        log_ids=bad[:10])
    budget = profile.budget
    capacity = budget - overhead_tokens
    plan = ChunkPlan(strategy, [], None, seed, len(log_ids), budget)

    if strategy == 'full':
        required = overhead_tokens + sum(estimates[i] for i in log_ids)
        if required > budget:
            raise ContextOverflow(
                f"Charge utile complète ({required} tokens) au-delà du budget {budget} du profil "
                f"{profile.name} : utiliser 'packed' ou 'sampled_fraction'",
                required=required, budget=budget, profile=profile.name)
        plan.chunks = [log_ids] if log_ids else []
    elif strategy == 'packed':
        plan.chunks = _pack(log_ids, estimates, capacity)
    else:
        if sample_fraction is None:
            raise ConfigError('bad_fraction', "sampled_fraction exige une fraction")
        selected = sample_ids(log_ids, sample_fraction, seed, stratify_by)
        plan.sample_fraction = sample_fraction
        plan.chunks = _pack([i for i in log_ids if i in selected], estimates, capacity)

    logger.debug("Plan %s: %d blocs, %d/%d journaux, budget %d", strategy, len(plan.chunks),
                 plan.n_selected, len(log_ids), budget)
    return plan


# === JOURNAL D'AUDIT ===

class AuditTrail:
    """Enregistrements JSON en ajout seul ; écritures sérialisées par un verrou."""

    def __init__(self, path=None):
        self.path = path
        self._lock = threading.Lock()
        if path:
            os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)

    def record(self, event, **fields):
        if not self.path:
            return
        entry = {'timestamp': datetime.now(timezone.utc).isoformat(), 'event': event, **fields}
        line = json.dumps(entry, ensure_ascii=False, default=str)
        with self._lock:
            with open(self.path, 'a', encoding='utf-8') as f:
                f.write(line + '\n')


# === FOURNISSEURS ===

@dataclass
class ProviderResponse:
    text: str
    usage: dict = field(default_factory=dict)


class Provider:
    name = 'base'
    settings = {}

    def send(self, prompt_text, profile):
        raise NotImplementedError


class MockProvider(Provider):
    """
    Fournisseur simulé : extraction à base de règles sur la charge utile.
    malformed_attempts=n renvoie une réponse invalide aux n premiers appels.
    """
    name = 'mock'

    def __init__(self, malformed_attempts=0):
        self.malformed_attempts = malformed_attempts
        self.calls = 0
        self._lock = threading.Lock()

    def send(self, prompt_text, profile):
        with self._lock:
            self.calls += 1
            call = self.calls
        if call <= self.malformed_attempts:
            text = "I could not complete the analysis for this request."
        else:
            text = mock_complete(prompt_text)
        return ProviderResponse(text, {'prompt_tokens': math.ceil(len(prompt_text) / 4),
                                       'completion_tokens': math.ceil(len(text) / 4)})


class ScriptedProvider(Provider):
    """Rejoue une suite de réponses (texte) ou d'exceptions (levées), dans l'ordre."""
    name = 'scripted'

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.calls = 0
        self._lock = threading.Lock()

    def send(self, prompt_text, profile):
        with self._lock:
            if self.calls >= len(self.outcomes):
                raise ProviderError('script_exhausted', "Plus de réponses scriptées")
            outcome = self.outcomes[self.calls]
            self.calls += 1
        if isinstance(outcome, Exception):
            raise outcome
        if callable(outcome):
            outcome = outcome(prompt_text)
        return ProviderResponse(outcome)


class OpenAICompatibleProvider(Provider):
    """
    Adaptateur chat-completions compatible OpenAI (OpenAI, Gemini via son endpoint compatible).
    La clé d'API vient uniquement de l'environnement.
    """

    def __init__(self, name, model, api_key_env, base_url=None, temperature=None):
        self.name = name
        self.model = model
        self.api_key_env = api_key_env
        self.base_url = base_url
        self.temperature = temperature
        self.settings = {'model': model, 'base_url': base_url, 'temperature': temperature}
        self._client = None

    def _get_client(self):
        if self._client is None:
            api_key = os.environ.get(self.api_key_env)
            if not api_key:
                raise AuthFailure(f"Variable d'environnement {self.api_key_env} absente",
                                  provider=self.name)
            from openai import OpenAI
            self._client = OpenAI(api_key=api_key, base_url=self.base_url, max_retries=0)
        return self._client

    def send(self, prompt_text, profile):
        import openai

        client = self._get_client()
        kwargs = {
            'model': self.model,
            'messages': [{'role': 'user', 'content': prompt_text}],
            'max_completion_tokens': profile.max_output_tokens,
            'timeout': profile.request_timeout_s,
        }
        if self.temperature is not None:
            kwargs['temperature'] = self.temperature
        try:
            response = client.chat.completions.create(**kwargs)
        except (openai.AuthenticationError, openai.PermissionDeniedError) as e:
            raise AuthFailure(str(e), provider=self.name)
        except openai.RateLimitError as e:
            raise RateLimited(str(e), provider=self.name)
        except (openai.APITimeoutError, openai.APIConnectionError) as e:
            raise ProviderTimeout(str(e), provider=self.name)
        except openai.BadRequestError as e:
            if 'context' in str(e).lower() or 'token' in str(e).lower():
                raise ContextOverflow(str(e), provider=self.name)
            raise ProviderError('bad_request', str(e), provider=self.name)
        except openai.InternalServerError as e:
            # 5xx : indisponibilité passagère, traitée comme un délai dépassé
            raise ProviderTimeout(str(e), provider=self.name, status=e.status_code)
        except openai.APIStatusError as e:
            raise ProviderError('provider_error', str(e), provider=self.name, status=e.status_code)

        usage = {}
        if response.usage is not None:
            usage = {'prompt_tokens': response.usage.prompt_tokens,
                     'completion_tokens': response.usage.completion_tokens}
        return ProviderResponse(response.choices[0].message.content or '', usage)


def make_provider(name, endpoints=None):
    endpoints = endpoints or PROVIDER_ENDPOINTS
    if name not in endpoints:
        raise ConfigError('unknown_provider', f"Fournisseur inconnu: {name}", provider=name)
    endpoint = endpoints[name]
    if endpoint['adapter'] == 'mock':
        return MockProvider()
    if endpoint['adapter'] == 'openai':
        return OpenAICompatibleProvider(name, endpoint['model'], endpoint['api_key_env'],
                                        endpoint.get('base_url'), endpoint.get('temperature'))
    raise ConfigError('unknown_adapter', f"Adaptateur inconnu: {endpoint['adapter']}", provider=name)


# === APPEL AVEC REPRISE ===

def backoff_delay(attempt, rng=random):
    """Délai avant la reprise n°attempt+1 : base * facteur^attempt + gigue."""
    return RETRY['base_delay_s'] * RETRY['factor'] ** attempt + rng.uniform(0, RETRY['jitter_s'])


def complete(prompt_text, profile, provider, audit_trail=None, sleep=time.sleep, context=None):
    """
    Envoie un prompt et retourne le texte de la réponse.
    Les erreurs passagères (rate_limited, timeout) sont retentées jusqu'à max_retries ;
    auth_failure et context_overflow ne le sont jamais.
    """
    audit_trail = audit_trail or AuditTrail(None)
    context = context or {}
    last_error = None
    for attempt in range(profile.max_retries + 1):
        audit_trail.record('request', provider=provider.name, profile=profile.name, attempt=attempt + 1,
                           chars=len(prompt_text), estimated_tokens=math.ceil(len(prompt_text) / 4),
                           settings=provider.settings, **context)
        try:
            response = provider.send(prompt_text, profile)
        except ProviderError as e:
            audit_trail.record('error', provider=provider.name, attempt=attempt + 1, error=e.code,
                               message=e.message, **context)
            if not e.transient:
                logger.error("❌ %s: %s (sans reprise)", provider.name, e.code)
                raise
            last_error = e
            if attempt < profile.max_retries:
                delay = backoff_delay(attempt)
                logger.warning("⚠️ %s: %s (tentative %d/%d), nouvelle tentative dans %.1fs",
                               provider.name, e.code, attempt + 1, profile.max_retries + 1, delay)
                sleep(delay)
            continue
        audit_trail.record('response', provider=provider.name, attempt=attempt + 1,
                           chars=len(response.text), usage=response.usage, **context)
        return response.text

    raise RetriesExhausted(last_error=last_error, attempts=profile.max_retries + 1, provider=provider.name)


def map_chunks(fn, items, max_in_flight=None):
    """
    Exécute fn(index, item) avec au plus max_in_flight appels simultanés.
    Résultats rendus dans l'ordre des blocs ; une erreur porte l'indice de son bloc.
    """
    max_in_flight = max_in_flight or CHUNKING['max_in_flight']
    items = list(items)

    def run(index):
        try:
            return fn(index, items[index])
        except PipelineError as e:
            e.details.setdefault('chunk_index', index)
            raise

    if len(items) <= 1:
        return [run(i) for i in range(len(items))]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        futures = [pool.submit(run, i) for i in range(len(items))]
        return [f.result() for f in futures]


# === FOURNISSEUR SIMULÉ : EXTRACTION À BASE DE RÈGLES ===

_SECTION_RE = re.compile(r'^# ([A-Za-z][A-Za-z ]*)$', re.MULTILINE)
_ROLE_RE = re.compile(r'You are an? (.+?) working on')
_MODE_TOKEN_RE = re.compile(r'\[(FM[A-Z0-9_]+)\]')
_CHAIN_RE = re.compile(r'\[CH(\d{2,3})([HML])\]')
_FARM_RE = re.compile(r'^## Farm (\S+)$')
_TURBINE_RE = re.compile(r'^Turbine: (\S+?)\.', re.MULTILINE)
_SITE_RE = re.compile(r'^- Farm (\S+): (.+)$', re.MULTILINE)
_CONFIDENCE = {'H': 'high', 'M': 'medium', 'L': 'low'}


@dataclass(frozen=True)
class _PayloadLine:
    log_id: str
    date: str
    subsystem: str
    description: str
    observations: str
    farm: str = ''

    @property
    def text(self):
        return f"{self.description} {self.observations}".strip()


def _sections(prompt_text):
    sections = {}
    matches = list(_SECTION_RE.finditer(prompt_text))
    for i, match in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(prompt_text)
        sections.setdefault(match.group(1).strip(), prompt_text[match.end():end].strip('\n'))
    return sections


def _parse_payload(data):
    lines = []
    farm = ''
    for raw in data.split('\n'):
        if not raw.strip():
            continue
        if raw.startswith('log_id | '):
            continue
        farm_match = _FARM_RE.match(raw)
        if farm_match:
            farm = farm_match.group(1)
            continue
        parts = raw.split(' | ', 4)
        if len(parts) < 4:
            raise ProviderError('unparseable_payload', f"Ligne de charge utile illisible: {raw[:80]!r}")
        parts += [''] * (5 - len(parts))
        lines.append(_PayloadLine(*parts, farm=farm))
    if not lines:
        raise ProviderError('unparseable_payload', "Aucune ligne de journal dans la section Data")
    return lines


def _mock_failure_modes(lines):
    groups = defaultdict(list)
    for line in lines:
        match = _MODE_TOKEN_RE.search(line.text)
        if match:
            groups[match.group(1)].append(line)
    ordered = sorted(groups.items(), key=lambda kv: (-len(kv[1]), kv[0]))
    modes = [{
        'name': f"[{token}] related faults",
        'description': f"Maintenance events tagged with the code {token}.",
        'estimated_count': len(members),
        'supporting_quotes': [{'log_id': m.log_id, 'quote': m.description or m.observations}
                              for m in members[:3]],
    } for token, members in ordered]
    return {'failure_modes': modes}


def _mock_chains(lines, context):
    chains = {}
    for line in lines:
        match = _CHAIN_RE.search(line.text)
        if match:
            number, level = match.groups()
            chains.setdefault(number, {'level': level, 'members': []})['members'].append(line)
    turbine = _TURBINE_RE.search(context)
    output = []
    for number, chain in chains.items():
        members = chain['members']
        if len(members) < 2:
            continue
        subsystems = sorted({m.subsystem for m in members})
        output.append({
            'chain_id': f"C{number}",
            'member_log_ids': [m.log_id for m in members],
            'hypothesis': (f"Events tagged CH{number} on {', '.join(subsystems)} between {members[0].date} "
                           f"and {members[-1].date} share a plausible common root cause."),
            'confidence': _CONFIDENCE[chain['level']],
        })
    return {'turbine_id': turbine.group(1) if turbine else 'unknown', 'chains': output}


def _mock_comparison(lines, context, top_n=3):
    sites = {m.group(1): m.group(2).strip() for m in _SITE_RE.finditer(context)}
    by_farm = defaultdict(list)
    for line in lines:
        by_farm[line.farm].append(line)
    farms = []
    for farm in sorted(by_farm):
        docs = by_farm[farm]
        frequency = Counter()
        for doc in docs:
            frequency.update(content_tokens(doc.text))
        top = sorted(frequency.items(), key=lambda kv: (-kv[1], kv[0]))[:top_n]
        site = sites.get(farm, 'no site context supplied')
        patterns = [{
            'pattern': f"Recurring '{token}' entries ({count} of {len(docs)} logs)",
            'hypothesis': f"The prevalence of '{token}' at farm {farm} may relate to its context: {site}",
        } for token, count in top]
        if not patterns:
            patterns = [{'pattern': 'No recurring pattern',
                         'hypothesis': f"Too few descriptive entries at farm {farm} to relate to its context: {site}"}]
        farms.append({'farm_id': farm, 'patterns': patterns})
    return {'farms': farms}


def _mock_audit(lines):
    redundant = [l.log_id for l in lines if l.observations and tokenize(l.observations) == tokenize(l.description)]
    unquantified = [l.log_id for l in lines if not any(ch.isdigit() for ch in l.text)]
    examples = [redundant, unquantified, [l.log_id for l in lines]]
    issues_heading, recommendations_heading = AUDIT_HEADINGS
    out = [f"## {issues_heading}", ""]
    for issue, ids in zip(AUDIT_ISSUES, examples):
        out += [f"### {issue['title']}", issue['description']]
        if ids:
            out.append(f"Example log_ids: {', '.join(ids[:3])}")
        out.append("")
    out += [f"## {recommendations_heading}", ""]
    for recommendation in AUDIT_RECOMMENDATIONS:
        out += [f"### {recommendation['title']}", recommendation['description'], ""]
    return '\n'.join(out).rstrip('\n') + '\n'


def mock_complete(prompt_text):
    """
    Réponse déterministe, fonction du seul texte du prompt.
    Le workflow est reconnu par le rôle ; la charge utile est lue ligne à ligne.
    """
    sections = _sections(prompt_text)
    role_match = _ROLE_RE.search(sections.get('Role', ''))
    workflow = None
    if role_match:
        workflow = next((w for w, d in WORKFLOW_PROMPTS.items() if d['role'] == role_match.group(1)), None)
    if workflow is None or 'Data' not in sections:
        raise ProviderError('unparseable_payload', "Gabarit de prompt non reconnu par le fournisseur simulé")

    lines = _parse_payload(sections['Data'])
    context = sections.get('Context', '')
    if workflow == 'quality_audit':
        return _mock_audit(lines)
    if workflow == 'failure_modes':
        result = _mock_failure_modes(lines)
    elif workflow == 'causal_chain':
        result = _mock_chains(lines, context)
    else:
        result = _mock_comparison(lines, context)
    return json.dumps(result, ensure_ascii=False, indent=2)
