"""roadsense: measure road quality from sampled street-level imagery.

The pipeline: parse an OpenStreetMap extract, chunk the major roads into
fixed-length segments, draw a reproducible random sample, query imagery
availability for the sampled points, aggregate crowdsourced condition
labels, and compute condition proportions and regression summaries.
"""

__version__ = "0.1.0"
