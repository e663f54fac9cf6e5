"""Batch rendering of membrane-solver CSV outputs.

The CSV schemas are the entire contract with the solver: this package never
imports it.
"""

from .readers import SchemaError, read_table
from .render import render_scaling, render_snapshot, render_timeseries

__all__ = ["SchemaError", "read_table", "render_scaling", "render_snapshot",
           "render_timeseries"]

__version__ = "0.1.0"
