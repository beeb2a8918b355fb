"""Parallel multilingual prompting for text-to-image generation.

Builds prompts that pair an English caption with its translations, enumerates
the ordered-subset variant space over the translation languages, drives image
generation through pluggable backends, reranks candidates by text-image
embedding similarity, and scores runs with a metric suite.
"""

__version__ = "0.1.0"
