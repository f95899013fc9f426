"""Publication-style figures from platelab CSV/JSON artifacts.

Strictly read-only over its inputs: figures are regeneratable artifacts
and never feed back into any computation.
"""

from .figures import (
    FIGURE_KINDS,
    EnvelopeViolation,
    FigureSpec,
    SchemaError,
    check_under_envelope,
    decay_series,
    read_table,
    render,
)

__version__ = "0.1.0"
