"""Figure scripts for the battery charging experiment artifacts.

Each module renders one figure kind from the experiment's CSV/JSON
outputs and returns the series exactly as handed to matplotlib, so
tests can check plotted values against the source files verbatim.
Nothing here recomputes science: inputs are read, validated, and drawn.
"""

from .schema import SchemaError

__all__ = ["SchemaError"]
