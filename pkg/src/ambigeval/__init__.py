"""Toolkit for evaluating lexical disambiguation of chat LLMs in multi-domain translation.

The pipeline runs in stages: load a multi-domain parallel corpus with word
alignments, build per-domain bilingual lexicons, derive cross-domain
ambiguous vocabularies, annotate test sets, run prompt strategies T1-T10
against a chat-completion backend, and score the results (BLEU,
disambiguation accuracy, paired bootstrap, GPT judge) into report tables.
"""

__version__ = "0.1.0"
