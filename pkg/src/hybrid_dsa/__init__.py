"""Dynamic security analysis of power systems modelled as hybrid automata
with index-1 DAE dynamics, searched with a hybrid RRT."""

from __future__ import annotations

__version__ = "0.1.0"
