# insights/pareto.py
"""
Analyse de Pareto des modes de défaillance : série classée, couverture cumulée
et graphique barres + courbe cumulée.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import plotly.graph_objects as go

from errors import DataError

logger = logging.getLogger(__name__)

OTHER_LABEL = 'other'
PARETO_COLUMNS = ('rank', 'label', 'count', 'percentage', 'cumulative_percentage')

# Tolérance sur les pourcentages cumulés calculés en flottants
_COVERAGE_EPSILON = 1e-9


@dataclass(frozen=True)
class ParetoEntry:
    rank: int
    label: str
    count: int
    percentage: float
    cumulative_percentage: float

    def to_dict(self):
        return {name: getattr(self, name) for name in PARETO_COLUMNS}


@dataclass
class ParetoSeries:
    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    @property
    def total(self):
        return sum(e.count for e in self.entries)

    @property
    def labels(self):
        return [e.label for e in self.entries]


def build_series(labelled_counts):
    """
    Série de Pareto à partir de paires (label, count) déjà ordonnées.
    Le cumul est calculé sur les comptes entiers : la dernière valeur vaut exactement 100.
    """
    labels = [label for label, _ in labelled_counts]
    counts = np.array([count for _, count in labelled_counts], dtype=np.int64)
    total = int(counts.sum())
    if total <= 0:
        raise DataError('empty_report', "Rapport sans journal à répartir")
    cumulative = np.cumsum(counts)
    entries = [
        ParetoEntry(
            rank=rank,
            label=label,
            count=int(count),
            percentage=float(count) / total * 100,
            cumulative_percentage=float(running) / total * 100,
        )
        for rank, (label, count, running) in enumerate(zip(labels, counts, cumulative), start=1)
    ]
    return ParetoSeries(entries)


def pareto(report):
    """
    Classement par reconciled_count décroissant (égalité : ordre alphabétique).
    Les journaux non affectés forment une dernière entrée 'other'.
    """
    ordered = sorted(report.modes, key=lambda m: (-m.reconciled_count, m.name))
    labelled = [(m.name, m.reconciled_count) for m in ordered]
    if report.unassigned_count:
        labelled.append((OTHER_LABEL, report.unassigned_count))
    series = build_series(labelled)
    logger.debug("📊 Pareto: %d entrées, total %d", len(series), series.total)
    return series


def top_k_for_coverage(series, threshold_pct):
    """Plus petit k dont le pourcentage cumulé atteint le seuil."""
    for entry in series.entries:
        if entry.cumulative_percentage >= threshold_pct - _COVERAGE_EPSILON:
            return entry.rank
    return len(series)


def create_pareto_chart(series, title="Pareto analysis of failure modes", guide_pct=80.0):
    """Barres des comptes, courbe du cumul (axe secondaire) et ligne guide à 80 %."""
    if not series.entries:
        fig = go.Figure()
        fig.add_annotation(
            x=0.5, y=0.5,
            xref="paper", yref="paper",
            text="Aucun mode de défaillance",
            showarrow=False,
            font=dict(size=16, color="#6c757d")
        )
        fig.update_layout(template='plotly_dark', height=300,
                          xaxis=dict(visible=False), yaxis=dict(visible=False))
        return fig

    labels = series.labels
    fig = go.Figure()
    fig.add_trace(go.Bar(
        x=labels,
        y=[e.count for e in series.entries],
        name="Events",
        marker_color='#42a5f5',
        text=[f"{e.percentage:.1f}%" for e in series.entries],
        textposition='outside',
        hovertemplate="<b>%{x}</b><br>Events: %{y}<extra></extra>",
    ))
    fig.add_trace(go.Scatter(
        x=labels,
        y=[e.cumulative_percentage for e in series.entries],
        name="Cumulative %",
        mode='lines+markers',
        line=dict(color='#ffa726', width=2),
        yaxis='y2',
        hovertemplate="<b>%{x}</b><br>Cumulative: %{y:.1f}%<extra></extra>",
    ))
    fig.add_shape(type='line', xref='paper', x0=0, x1=1, yref='y2', y0=guide_pct, y1=guide_pct,
                  line=dict(color="#ef5350", dash="dash"), opacity=0.7)

    fig.update_layout(
        template='plotly_dark',
        height=500,
        title=dict(text=title, font=dict(size=14)),
        legend=dict(orientation="h", yanchor="bottom", y=1.02, xanchor="right", x=1),
        margin=dict(l=50, r=50, t=80, b=140),
        xaxis=dict(title="Failure mode", tickangle=-45),
        yaxis=dict(title="Events"),
        yaxis2=dict(title="Cumulative %", overlaying='y', side='right', range=[0, 105]),
    )
    return fig
