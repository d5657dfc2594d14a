# insights/timeline.py
"""
Timeline des chaînes causales d'une turbine : une ligne par chaîne,
marqueurs datés, couleur stable par chain_id et style selon la confiance.
"""
import hashlib
import logging
from dataclasses import dataclass, field

import plotly.graph_objects as go

from config import WORKFLOWS
from errors import DataError

logger = logging.getLogger(__name__)

TIMELINE_COLUMNS = ('lane', 'chain_id', 'confidence', 'log_id', 'date', 'subsystem', 'hypothesis')

CONFIDENCE_SYMBOLS = {
    'high': 'circle',
    'medium': 'diamond',
    'low': 'circle-open',
}


@dataclass(frozen=True)
class TimelineMarker:
    log_id: str
    date: object
    subsystem: str


@dataclass
class TimelineLane:
    chain_id: str
    confidence: str
    annotation: str
    hypothesis: str
    markers: list = field(default_factory=list)


@dataclass
class TimelineLayout:
    turbine_id: str
    lanes: list = field(default_factory=list)
    axis_range: tuple = (None, None)

    def __len__(self):
        return len(self.lanes)


def generate_color_for_chain(chain_id):
    """
    Couleur unique et cohérente pour une chaîne, dérivée de son identifiant.
    La même couleur sera toujours générée pour le même chain_id.
    """
    hash_hex = hashlib.md5(chain_id.encode()).hexdigest()

    h = int(hash_hex[:2], 16) / 255
    s = 0.6 + (int(hash_hex[2:4], 16) / 255) * 0.3
    l = 0.45 + (int(hash_hex[4:6], 16) / 255) * 0.15

    def hue_to_rgb(p, q, t):
        t = t % 1
        if t < 1/6:
            return p + (q - p) * 6 * t
        if t < 1/2:
            return q
        if t < 2/3:
            return p + (q - p) * (2/3 - t) * 6
        return p

    q = l * (1 + s) if l < 0.5 else l + s - l * s
    p = 2 * l - q
    r, g, b = (int(hue_to_rgb(p, q, h + offset) * 255) for offset in (1/3, 0, -1/3))
    return f'rgb({r}, {g}, {b})'


def truncate_annotation(text, limit=None):
    limit = limit or WORKFLOWS['annotation_chars']
    if len(text) <= limit:
        return text
    return text[:limit - 1].rstrip() + '…'


def _cohort_span(report, corpus):
    records = [r for r in corpus.records if r.turbine_id == report.turbine_id] or list(corpus.records)
    if not records:
        return (None, None)
    dates = [r.event_date for r in records]
    return (min(dates), max(dates))


def timeline(report, corpus):
    """
    Construit la disposition de la timeline.
    Les lignes sont ordonnées par date du premier événement ; l'annotation est
    tronquée, l'hypothèse complète reste dans la donnée.
    """
    lanes = []
    for chain in report.chains:
        members = []
        for log_id in chain.member_log_ids:
            record = corpus.get(log_id)
            if record is None:
                raise DataError('unknown_log_id', f"Journal introuvable dans le corpus: {log_id}",
                                log_id=log_id, chain_id=chain.chain_id)
            members.append(record)
        members.sort(key=lambda r: r.sort_key)
        lanes.append(TimelineLane(
            chain_id=chain.chain_id,
            confidence=chain.confidence,
            annotation=truncate_annotation(chain.hypothesis),
            hypothesis=chain.hypothesis,
            markers=[TimelineMarker(r.log_id, r.event_date, r.subsystem_name) for r in members],
        ))

    lanes.sort(key=lambda lane: (lane.markers[0].date, lane.markers[0].log_id, lane.chain_id))

    dates = [m.date for lane in lanes for m in lane.markers]
    axis_range = (min(dates), max(dates)) if dates else _cohort_span(report, corpus)
    logger.debug("📊 Timeline: %d chaînes pour la turbine %s", len(lanes), report.turbine_id)
    return TimelineLayout(report.turbine_id, lanes, axis_range)


def create_timeline_chart(layout, title=None):
    """Graphique : une ligne horizontale par chaîne, marqueurs aux dates des événements."""
    title = title or f"Causal chains over time, turbine {layout.turbine_id}"
    if not layout.lanes:
        fig = go.Figure()
        fig.add_annotation(
            x=0.5, y=0.5,
            xref="paper", yref="paper",
            text="Aucune chaîne causale détectée",
            showarrow=False,
            font=dict(size=16, color="#6c757d")
        )
        fig.update_layout(template='plotly_dark', height=300,
                          xaxis=dict(visible=False), yaxis=dict(visible=False))
        return fig

    fig = go.Figure()
    for index, lane in enumerate(layout.lanes):
        color = generate_color_for_chain(lane.chain_id)
        fig.add_trace(go.Scatter(
            x=[m.date for m in lane.markers],
            y=[index] * len(lane.markers),
            name=f"{lane.chain_id} ({lane.confidence})",
            mode='lines+markers',
            line=dict(color=color, width=1, dash='solid' if lane.confidence == 'high' else 'dot'),
            marker=dict(color=color, size=11, symbol=CONFIDENCE_SYMBOLS.get(lane.confidence, 'circle')),
            text=[f"{m.log_id}<br>{m.subsystem}" for m in lane.markers],
            hovertemplate=(
                f"<b>{lane.chain_id}</b><br>"
                "Date: %{x}<br>"
                "%{text}<br>"
                "<extra></extra>"
            ),
            legendgroup=lane.chain_id,
        ))
        fig.add_annotation(
            x=lane.markers[-1].date, y=index,
            text=lane.annotation,
            showarrow=False,
            xanchor='left',
            xshift=10,
            font=dict(size=9, color=color),
        )

    start, end = layout.axis_range
    fig.update_layout(
        template='plotly_dark',
        height=max(300, 60 * len(layout.lanes) + 120),
        title=dict(text=title, font=dict(size=14)),
        legend=dict(orientation="h", yanchor="bottom", y=1.02, xanchor="right", x=1, font=dict(size=9)),
        margin=dict(l=80, r=50, t=80, b=50),
        xaxis=dict(title="Date", tickformat="%d/%m/%Y", tickangle=-45,
                   range=[start, end] if start is not None else None),
        yaxis=dict(tickmode='array', tickvals=list(range(len(layout.lanes))),
                   ticktext=[lane.chain_id for lane in layout.lanes], autorange='reversed'),
    )
    return fig
