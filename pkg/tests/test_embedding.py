from __future__ import annotations

import json

import httpx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from formula_checks import disjoint_cosine_rate, params_for
from skillbank.embedding import HashEmbedder, RemoteEmbedder, cosine, key_text
from skillbank.errors import DimensionMismatch, RemoteUnavailable


@params_for("embedding")
def test_worked_example(fn):
    fn()


words = st.lists(st.text(alphabet="abcdefgh-0123456789", min_size=1, max_size=6), max_size=10)


@given(words, st.sampled_from([8, 64, 256]))
def test_unit_norm_and_dimension(tokens, dim):
    v = HashEmbedder(dim).embed(" ".join(tokens))
    assert v.shape == (dim,)
    assert abs(np.linalg.norm(v) - 1.0) <= 1e-6


def test_empty_text_is_canonical():
    v = HashEmbedder(16).embed("   ")
    assert v[0] == 1.0 and np.count_nonzero(v) == 1


def test_salt_changes_buckets():
    a, b = HashEmbedder(64), HashEmbedder(64, salt="x")
    assert not np.array_equal(a.embed("alpha beta gamma"), b.embed("alpha beta gamma"))


@pytest.mark.parametrize("seed", [1, 2])
def test_disjoint_rate_other_seeds(seed):
    assert disjoint_cosine_rate(trials=1000, seed=seed) >= 0.95


def test_cosine_shape_mismatch():
    with pytest.raises(DimensionMismatch):
        cosine(np.ones(3) / 3**0.5, np.ones(4) / 2)


def test_key_text_layout():
    assert key_text("g", None) == "g"
    assert key_text("g", "o") == "g || o"


def _vector_service(dim, fail_first=0):
    calls = {"n": 0}

    def handler(request: httpx.Request) -> httpx.Response:
        calls["n"] += 1
        if calls["n"] <= fail_first:
            return httpx.Response(503)
        texts = json.loads(request.content)["texts"]
        return httpx.Response(200, json={"vectors": [[float(len(t)) + 1.0] + [1.0] * (dim - 1) for t in texts]})

    return httpx.Client(transport=httpx.MockTransport(handler), base_url="http://embed"), calls


def test_remote_embedder_normalizes_and_batches():
    client, calls = _vector_service(4)
    emb = RemoteEmbedder("http://embed", 4, client=client, backoff=0)
    out = emb.embed_many([f"t{i}" for i in range(130)])
    assert len(out) == 130 and calls["n"] == 3
    assert all(abs(np.linalg.norm(v) - 1.0) < 1e-12 for v in out)


def test_remote_embedder_retries_then_fails():
    client, calls = _vector_service(4, fail_first=1)
    assert RemoteEmbedder("http://embed", 4, client=client, retries=1, backoff=0).embed("x").shape == (4,)
    client, calls = _vector_service(4, fail_first=10)
    with pytest.raises(RemoteUnavailable):
        RemoteEmbedder("http://embed", 4, client=client, retries=2, backoff=0).embed("x")
    assert calls["n"] == 3


def test_remote_embedder_dimension_check():
    client, _ = _vector_service(5)
    with pytest.raises(RemoteUnavailable):
        RemoteEmbedder("http://embed", 4, client=client, backoff=0).embed("x")
