"""Syntactically controlled paraphrase generation on closed toy grammars.

A dual-encoder sequence-to-sequence model trained by reconstruction on
parsed but otherwise unannotated text, together with the parse toolkit,
parse generator, generation pipeline, and evaluation metrics needed to
exercise it end to end.
"""

__version__ = "0.1.0"


def toy_grammar_path():
    """Path of the bundled toy grammar file."""
    from importlib.resources import files

    return str(files("synpg").joinpath("data/toy_grammar.txt"))
