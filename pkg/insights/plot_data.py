# insights/plot_data.py
"""
Export des données de graphiques en tables plates (CSV) utilisables par tout outil de tracé.

Colonnes Pareto : rank, label, count, percentage, cumulative_percentage (pleine précision).
Colonnes timeline : lane, chain_id, confidence, log_id, date (ISO), subsystem, hypothesis.
"""
import logging

import pandas as pd

from corpus import read_table, write_table
from errors import DataError
from .pareto import PARETO_COLUMNS, ParetoEntry, ParetoSeries
from .timeline import TIMELINE_COLUMNS, TimelineLayout

logger = logging.getLogger(__name__)


def _pareto_frame(series):
    return pd.DataFrame([e.to_dict() for e in series.entries], columns=list(PARETO_COLUMNS))


def _timeline_frame(layout):
    rows = [
        {
            'lane': index,
            'chain_id': lane.chain_id,
            'confidence': lane.confidence,
            'log_id': marker.log_id,
            'date': marker.date.isoformat(),
            'subsystem': marker.subsystem,
            'hypothesis': lane.hypothesis,
        }
        for index, lane in enumerate(layout.lanes)
        for marker in lane.markers
    ]
    return pd.DataFrame(rows, columns=list(TIMELINE_COLUMNS))


def export_plot_data(data):
    """Table plate d'une ParetoSeries ou d'une TimelineLayout, ordre stable."""
    if isinstance(data, ParetoSeries):
        return _pareto_frame(data)
    if isinstance(data, TimelineLayout):
        return _timeline_frame(data)
    raise DataError('unsupported_plot_data', f"Type non exportable: {type(data).__name__}")


def write_plot_data(data, path, meta=None):
    frame = export_plot_data(data)
    write_table(frame, path, meta)
    logger.info("✅ Données de graphique écrites: %s (%d lignes)", path, len(frame))
    return path


def read_pareto_table(path):
    """Relit une table Pareto exportée ; les flottants sont restitués à l'identique."""
    df = read_table(path)
    missing = [c for c in PARETO_COLUMNS if c not in df.columns]
    if missing:
        raise DataError('bad_plot_data', f"Colonnes manquantes: {', '.join(missing)}", columns=missing)
    entries = [
        ParetoEntry(
            rank=int(row['rank']),
            label=row['label'],
            count=int(row['count']),
            percentage=float(row['percentage']),
            cumulative_percentage=float(row['cumulative_percentage']),
        )
        for row in df.to_dict('records')
    ]
    return ParetoSeries(entries)
