"""
Sphere KGE

Knowledge graph embeddings on a positive-orthant hypersphere (SKGE and its
ablations) alongside a translational TransE baseline, with filtered
link-prediction evaluation and embedding-space analysis.
"""

__version__ = "1.0.0"
