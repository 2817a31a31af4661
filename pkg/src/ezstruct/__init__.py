"""Computational toolkit for compactifications of graphs of flat groups.

Modules: metric_models, compression, graph_of_groups, bass_serre,
nullity_lab, obstructions, cli.
"""

__version__ = "0.1.0"
