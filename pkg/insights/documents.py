# insights/documents.py
"""
Rendu Markdown déterministe des quatre rapports et écriture des figures.
"""
import json
import logging
import os

import plotly.graph_objects as go

from constants import REVIEW_BANNER, AUDIT_HEADINGS, WORKFLOW_LABELS
from errors import ConfigError, DataError

logger = logging.getLogger(__name__)

DOCUMENT_TITLES = {
    'failure_modes': 'Failure Mode Analysis',
    'causal_chain': 'Causal Chain Inference',
    'site_comparison': 'Comparative Site Analysis',
    'quality_audit': 'Data Quality Audit',
}

IMAGE_FORMATS = ('svg', 'pdf', 'png')


def _cell(text):
    return ' '.join(str(text).split()).replace('|', '\\|')


def _header(report, meta):
    lines = []
    if meta:
        lines.append(f"<!-- meta: {json.dumps(meta, sort_keys=True, ensure_ascii=False)} -->")
    lines += [
        f"# {DOCUMENT_TITLES[report.report_type]}",
        "",
        f"> **{report.review_status}**: {REVIEW_BANNER}",
        "",
        f"Cohort: `{report.cohort_ref}`",
        "",
    ]
    return lines


# === RENDUS PAR TYPE DE RAPPORT ===

def _failure_modes(report):
    lines = [
        f"Cohort size: {report.cohort_size} logs; {len(report.modes)} failure modes; "
        f"{report.unassigned_count} logs not assigned to any mode.",
        "",
        "| Rank | Failure Mode | Synthesised Description | Events | Share |",
        "|---:|---|---|---:|---:|",
    ]
    for mode in report.modes:
        lines.append(f"| {mode.rank} | {_cell(mode.name)} | {_cell(mode.description)} | "
                     f"{mode.reconciled_count} | {mode.percentage:.1f}% |")
    lines += ["", "## Supporting Evidence", ""]
    for mode in report.modes:
        lines.append(f"### {mode.rank}. {mode.name}")
        lines.append("")
        for quote in mode.supporting_quotes:
            lines.append(f"- `{quote.log_id}`: \"{_cell(quote.quote)}\"")
        lines.append("")
    return lines


def _causal_chains(report):
    lines = [f"Turbine: `{report.turbine_id}`; {len(report.chains)} inferred chains.", ""]
    for chain in report.chains:
        scope = 'single subsystem' if chain.homogeneous else 'multiple subsystems'
        lines += [
            f"## {chain.chain_id}",
            "",
            f"- Confidence: **{chain.confidence}**",
            f"- Members ({len(chain.member_log_ids)}, {scope}): "
            + ', '.join(f"`{i}`" for i in chain.member_log_ids),
            "",
            chain.hypothesis,
            "",
        ]
    return lines


def _comparison(report):
    lines = []
    for farm in report.farms:
        lines += [f"## Farm {farm.farm_id}", ""]
        for item in farm.patterns:
            lines.append(f"- **Pattern:** {item.pattern}")
            lines.append(f"  **Hypothesis:** {item.hypothesis}")
        lines.append("")
    return lines


def _audit(report):
    issues_heading, recommendations_heading = AUDIT_HEADINGS
    lines = [f"Analysed coverage: {report.chunk_coverage * 100:.1f}% of the corpus.", "",
             f"## {issues_heading}", ""]
    for issue in report.issues:
        lines += [f"### {issue.title}", "", issue.description]
        if issue.example_log_ids:
            lines.append("Example log_ids: " + ', '.join(issue.example_log_ids))
        lines.append("")
    lines += [f"## {recommendations_heading}", ""]
    for recommendation in report.recommendations:
        lines += [f"### {recommendation.title}", "", recommendation.description, ""]
    return lines


_RENDERERS = {
    'failure_modes': _failure_modes,
    'causal_chain': _causal_chains,
    'site_comparison': _comparison,
    'quality_audit': _audit,
}


def render_markdown(report, meta=None):
    """
    Document Markdown d'un rapport validé, ordre des sections fixe.
    Fonction pure : deux appels identiques donnent les mêmes octets.
    """
    lines = _header(report, meta) + _RENDERERS[report.report_type](report)
    while lines and not lines[-1]:
        lines.pop()
    return '\n'.join(lines) + '\n'


def write_markdown(report, path, meta=None):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(render_markdown(report, meta))
    logger.info("✅ %s rendu: %s", WORKFLOW_LABELS[report.report_type], path)
    return path


# === FIGURES ===

def _stamp(fig, meta):
    """Métadonnées de run dans layout.meta et en pied de figure (lisibles sur les images)."""
    fig = go.Figure(fig)
    fig.update_layout(meta=dict(meta))
    fig.add_annotation(
        text=", ".join(f"{k}={meta[k]}" for k in sorted(meta)),
        xref="paper", yref="paper", x=1, y=-0.12, xanchor="right", yanchor="top",
        showarrow=False, font=dict(size=9, color="#888888"),
    )
    return fig


def write_figure(fig, path, meta=None):
    """
    HTML autonome (identifiant de div fixe pour des octets stables) ou,
    avec kaleido installé, image vectorielle SVG/PDF.
    """
    if meta:
        fig = _stamp(fig, meta)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    extension = os.path.splitext(path)[1].lower().lstrip('.')
    if extension == 'html':
        fig.write_html(path, include_plotlyjs='cdn', full_html=True, div_id='figure')
    elif extension in IMAGE_FORMATS:
        try:
            fig.write_image(path, format=extension)
        except (ImportError, ValueError) as e:
            raise ConfigError('missing_image_engine',
                              f"Export {extension.upper()} indisponible (installer kaleido): {e}",
                              path=path)
    else:
        raise DataError('unsupported_figure_format', f"Format de figure non supporté: {extension}",
                        path=path)
    logger.info("✅ Figure écrite: %s", path)
    return path
