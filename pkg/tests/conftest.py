import pytest

from convpr import _bm25
from convpr.corpus import Passage
from convpr.index import build_index


@pytest.fixture(params=["numpy", "numba"])
def backend(request):
    """Run a test under each scoring backend."""
    if request.param not in _bm25.available_backends():
        pytest.skip(f"{request.param} backend unavailable")
    previous = _bm25.get_backend()
    _bm25.set_backend(request.param)
    yield request.param
    _bm25.set_backend(previous)


def passages_from(docs: dict[str, list[str]]) -> list[Passage]:
    """Turn oracle-style token-list corpora into Passage objects whose text
    tokenizes back to exactly those tokens."""
    return [Passage(doc_id, " ".join(tokens)) for doc_id, tokens in docs.items()]


def index_from(docs: dict[str, list[str]]):
    return build_index(passages_from(docs))
