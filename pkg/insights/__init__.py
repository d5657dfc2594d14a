# insights/__init__.py
from .pareto import (
    pareto,
    top_k_for_coverage,
    build_series,
    create_pareto_chart,
    ParetoSeries,
    ParetoEntry,
    OTHER_LABEL
)
from .timeline import (
    timeline,
    create_timeline_chart,
    generate_color_for_chain,
    truncate_annotation,
    TimelineLayout,
    TimelineLane,
    TimelineMarker
)
from .documents import (
    render_markdown,
    write_markdown,
    write_figure
)
from .plot_data import (
    export_plot_data,
    write_plot_data,
    read_pareto_table
)
