"""Cross-lingual in-context learning evaluation harness.

Builds gradual code-switching demonstrations, assembles prompts for the full
baseline/ablation matrix, queries chat-completion endpoints with caching,
extracts and scores answers, and runs paired-bootstrap significance tests.
"""

__version__ = "0.1.0"
