"""Rule-enhanced learned database components: label collection, a rule
knowledge base, a credibility gate and the two learning loops built on them."""

__version__ = "0.1.0"
