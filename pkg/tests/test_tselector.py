import itertools
import pytest

import numpy as np

from trackkit.tselector import (init_params, identity_params, gate_scores, keep_top_k, forward,
                                backward, gradient_check, min_score_gap, timestamp_layout,
                                save_params, load_params, check_selector, PARAM_NAMES)
from trackkit.errors import ShapeError, NonFiniteInput, InvalidK

from util import gate_scores_oracle


def brute_top_k(scores, k):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return sorted(order[:k])


def test_tselector_keep_top_k_matches_brute_force():
    rng = np.random.default_rng(0)
    for n in range(1, 13):
        F = rng.standard_normal((n, 3))
        for trial in range(5):
            # few distinct values so that ties are common
            scores = rng.integers(0, 4, n).astype(float) if trial % 2 else rng.uniform(0, 1, n)
            for k in range(1, n + 1):
                indices, G = keep_top_k(scores, k, F)
                assert indices.tolist() == brute_top_k(scores.tolist(), k)
                assert np.array_equal(G, F[indices])


def test_tselector_keep_top_k_ties_go_to_lower_index():
    scores = np.array([0.2, 0.5, 0.5, 0.1, 0.5])
    indices, _ = keep_top_k(scores, 2, np.zeros((5, 1)))
    assert indices.tolist() == [1, 2]


def test_tselector_keep_top_k_invalid_k():
    with pytest.raises(InvalidK):
        keep_top_k(np.ones(4), 0, np.zeros((4, 2)))
    with pytest.raises(InvalidK):
        keep_top_k(np.ones(4), 5, np.zeros((4, 2)))


def test_tselector_gate_scores_softmax():
    p = init_params(8, 6, 3, seed=1)
    F = np.random.default_rng(1).standard_normal((10, 8))
    scores = gate_scores(F, p)
    assert scores.shape == (10,)
    assert np.all(scores > 0)
    assert scores.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("k", [1, 36, 72, 108, 144, 256, 288])
def test_tselector_forward_shape_over_ratios(k):
    n, c, d = 576, 8, 6
    p = init_params(c, d, k, seed=k)
    F = np.random.default_rng(k).standard_normal((n, c))
    result = forward(F, p)
    assert result.output.shape == (k, d)
    assert result.k == k
    assert np.all(np.diff(result.indices) > 0)


def test_tselector_identity_composition():
    F = np.random.default_rng(2).standard_normal((7, 5))
    result = forward(F, identity_params(5, 5, 3))
    assert result.indices.tolist() == [0, 1, 2]
    assert np.allclose(result.output, F[:3])


def test_tselector_gradient_check_random_instances():
    rng = np.random.default_rng(3)
    checked = 0
    seed = 0
    while checked < 20:
        seed += 1
        n, c, d = (int(x) for x in rng.integers(3, 8, 3))
        k = int(rng.integers(1, n + 1))
        weighting = "score" if seed % 2 else "none"
        proj_act = "gelu" if seed % 3 else "identity"
        p = init_params(c, d, k, hidden=int(rng.integers(1, 5)), seed=seed,
                        weighting=weighting, proj_act=proj_act)
        F = rng.standard_normal((n, c))
        if min_score_gap(gate_scores(F, p)) <= 1e-3:
            continue
        errors = gradient_check(F, p, eps=1e-5)
        assert set(errors) == {"tokens", *PARAM_NAMES}
        assert max(errors.values()) < 1e-4, (seed, errors)
        checked += 1


def test_tselector_pure_selection_zero_gate_gradient():
    rng = np.random.default_rng(4)
    p = init_params(6, 4, 3, seed=4, weighting="none")
    F = rng.standard_normal((9, 6))
    grads = backward(F, p, rng.standard_normal((3, 4)))
    for name in ("gate_w1", "gate_b1", "gate_w2", "gate_b2"):
        assert np.all(grads.params[name] == 0.0)
    scored = init_params(6, 4, 3, seed=4, weighting="score")
    grads = backward(F, scored, rng.standard_normal((3, 4)))
    assert np.any(grads.params["gate_w1"] != 0.0)


def test_tselector_input_errors():
    p = init_params(4, 3, 2)
    with pytest.raises(ShapeError):
        forward(np.zeros((5, 3)), p)
    with pytest.raises(ShapeError):
        forward(np.zeros(4), p)
    F = np.zeros((5, 4))
    F[2, 1] = np.nan
    with pytest.raises(NonFiniteInput):
        forward(F, p)
    with pytest.raises(InvalidK):
        forward(np.zeros((1, 4)), p)
    with pytest.raises(ShapeError):
        backward(np.zeros((5, 4)), p, np.zeros((3, 3)))


def test_tselector_params_are_read_only():
    p = init_params(4, 3, 2)
    with pytest.raises(ValueError):
        p.gate_w1[0, 0] = 1.0


def test_tselector_timestamp_layout():
    rng = np.random.default_rng(5)
    ks = [3, 1, 4]
    results = [forward(rng.standard_normal((6, 4)), init_params(4, 3, k)) for k in ks]
    layout = timestamp_layout(results, [0, 8, 16])
    assert layout.total == sum(k + 1 for k in ks)
    assert [b.timestamp_position for b in layout.blocks] == [0, 4, 6]
    assert [(b.token_start, b.token_end) for b in layout.blocks] == [(1, 4), (5, 6), (7, 11)]
    with pytest.raises(ShapeError):
        timestamp_layout(results, [0, 8])


def test_tselector_save_load(tmp_path):
    p = init_params(5, 4, 2, seed=9, weighting="none", proj_act="identity")
    path = tmp_path / "selector.bin"
    save_params(p, path)
    q = load_params(path)
    assert q.metadata == p.metadata
    for name in PARAM_NAMES:
        assert np.array_equal(getattr(p, name), getattr(q, name))
    path.write_bytes(path.read_bytes() + b"\0")
    with pytest.raises(ShapeError):
        load_params(path)


def test_tselector_check_selector_report():
    report = check_selector(8, 5, 4, 3, seed=1, pure_selection=True, samples=None)
    assert report["output_shape"] == [3, 4]
    assert report["weighting"] == "none"
    assert report["relative_errors"]["gate_w1"] == 0.0
    assert set(report) >= {"min_score_gap", "max_relative_error", "passed", "off_tie"}
    if report["off_tie"]:
        assert report["passed"]


def test_tselector_combinations_of_modes():
    F = np.random.default_rng(6).standard_normal((6, 4))
    for weighting, proj_act in itertools.product(("score", "none"), ("gelu", "identity")):
        p = init_params(4, 3, 2, seed=6, weighting=weighting, proj_act=proj_act)
        assert forward(F, p).output.shape == (2, 3)


def test_tselector_gate_scores_match_row_by_row():
    rng = np.random.default_rng(3)
    for seed in range(3):
        p = init_params(6, 4, 2, seed=seed)
        F = rng.standard_normal((9, 6))
        assert np.allclose(gate_scores(F, p), gate_scores_oracle(F, p), atol=1e-12, rtol=0)


def test_tselector_scores_invariant_to_logit_shift():
    p = init_params(8, 6, 3, seed=4)
    F = np.random.default_rng(4).standard_normal((12, 8))
    shifted = p.replace(gate_b2=p.gate_b2 + 7.5)
    assert np.allclose(gate_scores(F, shifted), gate_scores(F, p), atol=1e-12, rtol=0)
    a, b = forward(F, p), forward(F, shifted)
    assert np.array_equal(a.indices, b.indices)
    assert np.allclose(a.output, b.output, atol=1e-12, rtol=0)


def test_tselector_selection_follows_token_permutation():
    rng = np.random.default_rng(5)
    for weighting in ("score", "none"):
        p = init_params(8, 6, 4, seed=5, weighting=weighting)
        F = rng.standard_normal((15, 8))
        result = forward(F, p)
        assert min_score_gap(result.scores) > 1e-9
        perm = rng.permutation(15)
        permuted = forward(F[perm], p)
        assert sorted(perm[permuted.indices].tolist()) == result.indices.tolist()
        kept, kept_permuted = F[result.indices], F[perm][permuted.indices]
        order, order_permuted = np.argsort(kept[:, 0]), np.argsort(kept_permuted[:, 0])
        assert np.array_equal(kept[order], kept_permuted[order_permuted])
        assert np.allclose(result.output[order], permuted.output[order_permuted],
                           atol=1e-12, rtol=0)


def test_tselector_identity_composition_keeps_all_tokens():
    F = np.random.default_rng(6).standard_normal((7, 5))
    result = forward(F, identity_params(5, 5, 7))
    assert result.indices.tolist() == list(range(7))
    assert np.allclose(result.output, F)
    assert np.allclose(forward(F, identity_params(5, 3, 7)).output, F[:, :3])
    padded = forward(F, identity_params(5, 8, 7)).output
    assert np.allclose(padded[:, :5], F) and np.all(padded[:, 5:] == 0)
