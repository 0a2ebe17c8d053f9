"""Polypharmacy side-effect prediction on a drug/protein knowledge graph.

Two experts score a (drug, side effect, drug) triple: a DistMult embedding
expert and a linear expert over sparse relational path features.  Their
product is trained with a sampled softmax against corrupted triples.
"""

__version__ = "0.1.0"
