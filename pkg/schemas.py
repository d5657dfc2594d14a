# schemas.py
"""
Schémas stricts des sorties du modèle (contrats de sortie embarqués dans les prompts)
et des rapports validés persistés par le pipeline.
"""
import json
from typing import List, Literal

from pydantic import BaseModel, ConfigDict, Field

from constants import REVIEW_STATUS
from errors import DataError

Confidence = Literal['low', 'medium', 'high']


class StrictModel(BaseModel):
    model_config = ConfigDict(extra='forbid')


# === SORTIES BRUTES DU MODÈLE ===

class SupportingQuote(StrictModel):
    log_id: str = Field(min_length=1)
    quote: str = Field(min_length=1)


class FailureModeItem(StrictModel):
    name: str = Field(min_length=1)
    description: str = Field(min_length=1)
    estimated_count: int = Field(ge=0)
    supporting_quotes: List[SupportingQuote] = Field(min_length=1)


class FailureModeOutput(StrictModel):
    failure_modes: List[FailureModeItem]


class ChainItem(StrictModel):
    chain_id: str = Field(min_length=1)
    member_log_ids: List[str]
    hypothesis: str = Field(min_length=1)
    confidence: Confidence


class CausalChainOutput(StrictModel):
    turbine_id: str = Field(min_length=1)
    chains: List[ChainItem]


class PatternItem(StrictModel):
    pattern: str = Field(min_length=1)
    hypothesis: str = Field(min_length=1)


class FarmPatterns(StrictModel):
    farm_id: str = Field(min_length=1)
    patterns: List[PatternItem] = Field(min_length=1, max_length=5)


class ComparativeOutput(StrictModel):
    farms: List[FarmPatterns]


OUTPUT_SCHEMAS = {
    'failure_modes': FailureModeOutput,
    'causal_chain': CausalChainOutput,
    'site_comparison': ComparativeOutput,
}


def schema_text(workflow):
    """Schéma JSON du contrat de sortie, sérialisé de façon stable."""
    return json.dumps(OUTPUT_SCHEMAS[workflow].model_json_schema(), indent=2, sort_keys=True)


# === RAPPORTS VALIDÉS ===

class RankedFailureMode(StrictModel):
    rank: int = Field(ge=1)
    name: str
    description: str
    estimated_count: int
    reconciled_count: int
    percentage: float
    supporting_quotes: List[SupportingQuote]


class FailureModeReport(StrictModel):
    report_type: Literal['failure_modes'] = 'failure_modes'
    cohort_ref: str
    cohort_size: int
    modes: List[RankedFailureMode]
    unassigned_count: int
    review_status: str = REVIEW_STATUS
    provider_meta: dict = Field(default_factory=dict)


class CausalChain(StrictModel):
    chain_id: str
    member_log_ids: List[str]
    hypothesis: str
    confidence: Confidence
    homogeneous: bool


class CausalChainReport(StrictModel):
    report_type: Literal['causal_chain'] = 'causal_chain'
    cohort_ref: str
    turbine_id: str
    chains: List[CausalChain]
    review_status: str = REVIEW_STATUS
    provider_meta: dict = Field(default_factory=dict)


class ComparativeReport(StrictModel):
    report_type: Literal['site_comparison'] = 'site_comparison'
    cohort_ref: str
    farms: List[FarmPatterns]
    review_status: str = REVIEW_STATUS
    provider_meta: dict = Field(default_factory=dict)


class AuditIssue(StrictModel):
    title: str
    description: str
    example_log_ids: List[str] = Field(default_factory=list)


class AuditRecommendation(StrictModel):
    title: str
    description: str


class AuditReport(StrictModel):
    report_type: Literal['quality_audit'] = 'quality_audit'
    cohort_ref: str
    issues: List[AuditIssue]
    recommendations: List[AuditRecommendation]
    chunk_coverage: float
    source_markdown: List[str] = Field(default_factory=list)
    review_status: str = REVIEW_STATUS
    provider_meta: dict = Field(default_factory=dict)


REPORT_TYPES = {
    'failure_modes': FailureModeReport,
    'causal_chain': CausalChainReport,
    'site_comparison': ComparativeReport,
    'quality_audit': AuditReport,
}


def dump_report(report, meta=None):
    """Sérialisation canonique d'un rapport (clés triées, bloc meta en tête)."""
    payload = report.model_dump(mode='json')
    if meta is not None:
        payload['meta'] = meta
    return json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + '\n'


def load_report(text):
    """Relit un rapport persisté en choisissant le modèle d'après report_type."""
    data = json.loads(text)
    data.pop('meta', None)
    model = REPORT_TYPES.get(data.get('report_type'))
    if model is None:
        raise DataError('bad_report', f"report_type inconnu: {data.get('report_type')!r}")
    return model.model_validate(data)
