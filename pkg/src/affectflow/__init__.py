"""Mine emotion-regulation patterns from team chat logs.

The pipeline turns raw chat into pseudonymized episodes (:mod:`.ingest`),
labels messages with pain-point events and valence (:mod:`.annotate`),
builds directly-follows graphs over the composite labels (:mod:`.graph`),
detects and classifies regulation instances (:mod:`.patterns`) and compiles
them into trigger rules that can be replayed on new chat (:mod:`.intervene`).
"""

__version__ = "0.1.0"
__all__ = ["annotate", "graph", "ingest", "intervene", "patterns", "errors"]
