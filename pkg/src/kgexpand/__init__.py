"""Taxonomy expansion toolkit.

Ranks candidate parents for new concepts with a graph-aware margin
objective, verifies distance bounds on the ranking error, and serves a
review workflow for human curators.
"""

__version__ = "0.1.0"
