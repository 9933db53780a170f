import pytest

from synpg import toy_grammar_path
from synpg.parsekit import Grammar


@pytest.fixture(scope="session")
def toy_grammar():
    return Grammar.load(toy_grammar_path())
