# promptkit.py
"""
Assemblage des quatre prompts structurés : rôle, contexte, tâches,
contrat de sortie et charge utile de journaux, avec estimation de tokens.
"""
import functools
import logging
import math
import os
import re
from dataclasses import dataclass, field
from string import Template

from config import TEMPLATES_DIR, TEMPLATE_VERSION, CHUNKING
from constants import WORKFLOW_PROMPTS, PAYLOAD_HEADER, AUDIT_HEADINGS
from errors import ConfigError, DataError
from schemas import schema_text

logger = logging.getLogger(__name__)

_NEWLINES_RE = re.compile(r'[\r\n]+')


@dataclass(frozen=True)
class PromptSpec:
    workflow: str
    role: str
    context_block: str
    task_list: tuple
    output_contract: str
    contract_text: str
    data_payload: str
    log_ids: tuple = field(default=())
    template_version: str = TEMPLATE_VERSION

    def __post_init__(self):
        if not self.role:
            raise DataError('invalid_prompt', "Rôle vide")
        if not self.task_list:
            raise DataError('invalid_prompt', "Liste de tâches vide")
        if not self.log_ids:
            raise DataError('invalid_prompt', "Charge utile sans journal")


# === CHARGE UTILE ===

def escape_field(text):
    """Une valeur de champ tient sur une ligne et ne contient pas le séparateur '|'."""
    return _NEWLINES_RE.sub(' ', (text or '')).replace('|', '/')


def payload_line(record):
    return ' | '.join([
        record.log_id,
        record.event_date.isoformat(),
        escape_field(record.subsystem_name),
        escape_field(record.description),
        escape_field(record.observations),
    ])


def _payload(records):
    return '\n'.join([PAYLOAD_HEADER] + [payload_line(r) for r in records])


def estimate_tokens(text):
    """Heuristique : ceil(caractères / 4)."""
    return math.ceil(len(text) / CHUNKING['chars_per_token'])


def log_token_estimates(records):
    """Estimation par journal (ligne de charge utile + saut de ligne)."""
    return {r.log_id: estimate_tokens(payload_line(r) + '\n') for r in records}


# === CONTRATS DE SORTIE ===

def _json_contract(workflow):
    return (
        "Respond with a single JSON object that validates against the JSON Schema below. "
        "Do not add fields that the schema does not define. Cite log_ids exactly as they appear "
        "in the Data section; quotes must be copied verbatim from the cited log.\n"
        "```json\n" + schema_text(workflow) + "\n```"
    )


def _markdown_contract():
    issues, recommendations = AUDIT_HEADINGS
    return (
        "Respond with a Markdown report using exactly the following level-2 sections, in this order. "
        "Each finding is a level-3 heading followed by its description; issues may end with a line "
        "listing example log_ids from the Data section.\n\n"
        f"## {issues}\n"
        "### <issue title>\n"
        "<description>\n"
        "Example log_ids: <log_id>, <log_id>\n\n"
        f"## {recommendations}\n"
        "### <recommendation title>\n"
        "<description>"
    )


def _spec(workflow, context_extra, payload, log_ids):
    definition = WORKFLOW_PROMPTS[workflow]
    contract = definition['contract']
    contract_text = _markdown_contract() if contract == 'markdown_report' else _json_contract(workflow)
    context = definition['context'] + ('\n\n' + context_extra if context_extra else '')
    return PromptSpec(
        workflow=workflow,
        role=definition['role'],
        context_block=context,
        task_list=tuple(definition['tasks']),
        output_contract=contract,
        contract_text=contract_text,
        data_payload=payload,
        log_ids=tuple(log_ids),
    )


def _require_kind(cohort, kind):
    if cohort.kind != kind:
        raise DataError('wrong_cohort_kind', f"Cohorte '{cohort.kind}' au lieu de '{kind}'",
                        expected=kind, actual=cohort.kind)
    if len(cohort) == 0:
        raise DataError('empty_cohort', "Cohorte vide")


def _subset(cohort, corpus, log_ids):
    records = cohort.records(corpus)
    if log_ids is None:
        return records
    wanted = set(log_ids)
    return [r for r in records if r.log_id in wanted]


# === CONSTRUCTEURS PAR WORKFLOW ===

def build_failure_mode_prompt(cohort, corpus, log_ids=None):
    """
    Prompt d'identification des modes de défaillance (cohorte sous-système).
    log_ids restreint la charge utile à un bloc du plan de découpage.
    """
    _require_kind(cohort, 'subsystem')
    records = _subset(cohort, corpus, log_ids)
    extra = (f"Subsystem: {cohort.details.get('subsystem', cohort.name)}. "
             f"The full cohort contains {len(cohort)} logs; {cohort.rationale}")
    return _spec('failure_modes', extra, _payload(records), [r.log_id for r in records])


def build_causal_prompt(cohort, corpus):
    """Prompt d'inférence causale sur la séquence complète d'une turbine."""
    _require_kind(cohort, 'turbine_sequence')
    records = cohort.records(corpus)
    keys = [r.sort_key for r in records]
    if keys != sorted(keys):
        raise DataError('unsorted_members', "Les membres de la séquence ne sont pas triés par date")
    extra = f"Turbine: {cohort.details.get('turbine_id', cohort.name)}. {cohort.rationale}"
    return _spec('causal_chain', extra, _payload(records), [r.log_id for r in records])


def _site_line(context):
    line = (f"- Farm {context.farm_id}: {context.turbine_model_label}, {context.n_turbines} turbines, "
            f"{context.rated_power_mw:g} MW rated power, {context.rotor_diameter_m:g} m rotor diameter, "
            f"{context.hub_height_m:g} m hub height.")
    if context.site_id:
        line += f" Site: {context.site_id}."
    if context.location_notes:
        line += f" Location notes: {context.location_notes}"
    return line


def build_comparison_prompt(cohort, corpus, log_ids=None):
    """
    Prompt comparatif : contexte de chaque parc puis une section de données par parc.
    log_ids restreint la charge utile à un échantillon.
    """
    _require_kind(cohort, 'farm_group')
    records = _subset(cohort, corpus, log_ids)
    contexts = {c.farm_id: c for c in cohort.context or []}
    farms = sorted({r.farm_id for r in records})
    missing = [f for f in farms if f not in contexts]
    if missing:
        raise DataError('missing_context', f"Contexte de site manquant: {', '.join(missing)}", farms=missing)

    extra = "Site characteristics:\n" + '\n'.join(_site_line(contexts[f]) for f in farms)
    sections = [PAYLOAD_HEADER]
    for farm in farms:
        sections.append(f"## Farm {farm}")
        sections.extend(payload_line(r) for r in records if r.farm_id == farm)
    return _spec('site_comparison', extra, '\n'.join(sections), [r.log_id for r in records])


def build_audit_prompt(chunk):
    """Prompt d'audit de qualité sur un bloc de journaux (liste de MaintenanceLog)."""
    chunk = list(chunk)
    if not chunk:
        raise DataError('empty_chunk', "Bloc d'audit vide")
    return _spec('quality_audit', '', _payload(chunk), [r.log_id for r in chunk])


# === RENDU ===

@functools.lru_cache(maxsize=4)
def load_template(version=TEMPLATE_VERSION):
    path = os.path.join(TEMPLATES_DIR, version, 'layout.txt')
    if not os.path.exists(path):
        raise ConfigError('missing_template', f"Gabarit de prompt introuvable: {path}", version=version)
    with open(path, 'r', encoding='utf-8') as f:
        return Template(f.read())


def render(spec):
    """
    Rendu déterministe : rôle, contexte, tâches, contrat, données.

    Returns:
        (texte du prompt, estimation de tokens)
    """
    tasks = '\n'.join(f"{i}. {task}" for i, task in enumerate(spec.task_list, start=1))
    text = load_template(spec.template_version).substitute(
        role=spec.role,
        context=spec.context_block,
        tasks=tasks,
        contract=spec.contract_text,
        payload=spec.data_payload,
    )
    return text, estimate_tokens(text)


def overhead_tokens(spec):
    """Part du prompt indépendante des journaux (majorant utilisé par le planificateur)."""
    text, _ = render(spec)
    lines = [line for line in spec.data_payload.split('\n')[1:] if not line.startswith('## ')]
    payload_chars = sum(len(line) + 1 for line in lines)
    return math.ceil(max(0, len(text) - payload_chars) / CHUNKING['chars_per_token'])


def with_correction(prompt_text, error):
    """Ajoute une section de correction citant l'erreur du validateur."""
    return (prompt_text.rstrip('\n') + "\n\n# Correction\n"
            f"Your previous response was rejected by the validator: {error}\n"
            "Return a corrected response that follows the Output Contract exactly.\n")


def dump_prompt(text, directory, name):
    """Écrit un prompt rendu sur disque pour audit."""
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"{name}.txt")
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(text)
    return path
