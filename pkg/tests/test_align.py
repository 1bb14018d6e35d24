import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rulevad.align import (
    PromptBank,
    TextEmbedder,
    alignment_loss,
    alignment_matrix,
    contrastive_loss,
    embed_text,
    hash_vector,
    load_embedding_table,
    row_softmax_tau,
    save_embedding_table,
    tokenize,
    total_loss,
    video_embedding,
)
from rulevad.errors import DegenerateEmbedding, IndexOutOfRange, TooFewClasses, UnknownToken


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def test_tokenize():
    assert tokenize("{People,Stick} => {Fight} (sup=0.600)") == ["people", "stick", "fight", "sup", "0", "600"]


def test_single_token_table_embedding():
    v = np.array([3.0, 4.0, 0.0])
    emb = TextEmbedder(3, "table-lookup", table={"fire": v})
    np.testing.assert_allclose(embed_text(["fire"], None, emb), v / 5)
    np.testing.assert_allclose(embed_text(["fire fire fire"], None, emb), v / 5)
    with pytest.raises(UnknownToken):
        embed_text(["smoke"], None, emb)


def test_hash_embedding_is_deterministic():
    a = embed_text(["people stick"], None, TextEmbedder(16, seed=4))
    b = embed_text(["people stick"], None, TextEmbedder(16, seed=4))
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(hash_vector("people", 4, 16), hash_vector("people", 5, 16))
    assert np.abs(hash_vector("x", 0, 1000)).max() <= 1.0


def test_prompts_enter_the_mean():
    emb = TextEmbedder(2, "table-lookup", table={"a": np.array([1.0, 0.0])})
    prompts = PromptBank(np.array([[0.0, 1.0]]))
    np.testing.assert_allclose(embed_text(["a"], prompts, emb), unit([1, 1]))
    with pytest.raises(DegenerateEmbedding):
        embed_text([], None, emb)


def test_table_file_round_trip(tmp_path):
    table = {"people": np.array([1.0, 2.0]), "stick": np.array([-1.5, 0.25])}
    save_embedding_table(tmp_path / "t.rve", table)
    dim, back = load_embedding_table(tmp_path / "t.rve")
    assert dim == 2 and set(back) == set(table)
    np.testing.assert_array_equal(back["stick"], table["stick"])
    emb = TextEmbedder.from_table_file(tmp_path / "t.rve")
    np.testing.assert_array_equal(emb.vector("people"), table["people"])


def test_video_embedding_cases():
    np.testing.assert_allclose(video_embedding([[3.0, 4.0]]), [0.6, 0.8])
    np.testing.assert_allclose(video_embedding(np.tile([1.0, 1.0], (5, 1))), unit([1, 1]))
    psi = np.random.default_rng(0).normal(size=(7, 4))
    np.testing.assert_allclose(video_embedding(psi), unit(psi.mean(0)), atol=1e-9)


def test_alignment_matrix_cases():
    rng = np.random.default_rng(1)
    V = np.array([unit(r) for r in rng.normal(size=(3, 5))])
    np.testing.assert_allclose(np.diag(alignment_matrix(V, V)), 1.0)
    np.testing.assert_array_equal(alignment_matrix(np.eye(2), np.eye(2)), np.eye(2))
    T = np.array([unit(r) for r in rng.normal(size=(3, 5))])
    M = alignment_matrix(T, V)
    ref = [[float(np.dot(t, v)) for v in V] for t in T]
    np.testing.assert_allclose(M, ref, atol=1e-15)
    assert np.abs(M).max() <= 1.0


def test_row_softmax_cases():
    np.testing.assert_allclose(row_softmax_tau(np.full((2, 4), 0.3)), 0.25)
    e = math.e
    np.testing.assert_allclose(row_softmax_tau([[1.0, 0.0]], 1.0), [[e / (e + 1), 1 / (e + 1)]], rtol=1e-14)
    np.testing.assert_allclose(row_softmax_tau([[0.5, 0.2, 0.1]], 1e-3), [[1, 0, 0]], atol=1e-6)


def test_alignment_loss_cases():
    P = np.array([[1 - 1e-9, 1e-9], [1e-9, 1 - 1e-9]])
    assert alignment_loss(P, [0, 1], 0.0) == pytest.approx(0.0, abs=1e-8)
    assert alignment_loss(np.full((2, 2), 0.5), [0, 1], 0.0) == pytest.approx(2 * math.log(2), rel=1e-14)
    rng = np.random.default_rng(2)
    P = row_softmax_tau(rng.normal(size=(4, 4)), 0.5)
    labels, theta = rng.integers(0, 4, 4), rng.normal(size=(3, 4))
    ref = -sum(math.log(P[i, labels[i]]) for i in range(4)) + 5e-4 * float((theta**2).sum())
    assert alignment_loss(P, labels, 5e-4, theta) == pytest.approx(ref, abs=1e-9)
    with pytest.raises(IndexOutOfRange):
        alignment_loss(P, [0, 1, 2, 9], 0.0)


def test_contrastive_loss_cases():
    E = np.eye(3)
    assert contrastive_loss(E, 0, 0.1, 0.0) == 0.0
    E = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert contrastive_loss(E, 0, 0.1, 0.0) == pytest.approx(0.9, rel=1e-14)
    with pytest.raises(TooFewClasses):
        contrastive_loss(E[:1], 0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), m=st.integers(2, 6))
def test_contrastive_loss_matches_formula(seed, m):
    rng = np.random.default_rng(seed)
    E = np.array([unit(r) for r in rng.normal(size=(m, 5))])
    theta = rng.normal(size=(2, 5))
    normal = int(rng.integers(m))
    ref = sum(max(0.0, float(E[k] @ E[normal]) - 0.1) for k in range(m) if k != normal)
    ref += 6e-4 * float((theta**2).sum())
    assert contrastive_loss(E, normal, 0.1, 6e-4, theta) == pytest.approx(ref, abs=1e-12)


def test_total_loss():
    assert total_loss(0, 0, 0) == 0
    assert total_loss(1.5, 0.2, 0.7) == pytest.approx(2.4, abs=1e-15)
