import numpy as np
import pytest

from visprune.analysis import (
    ActivityMode, cross_modal_profile, distance_profile, head_activity, max_mass_beyond, records_are_normalized,
    select_query_tokens,
)
from visprune.config import ModelConfig, PruneConfig
from visprune.layout import TokenLayout
from visprune.model import AttentionRecord, forward, init_weights, random_input

from conftest import random_instance
from oracles import cross_modal_oracle, distance_profile_oracle, head_activity_oracle

GRID3 = TokenLayout(3, 3, 2)


def _records(cfg, prune, seed=0):
    w, x = init_weights(cfg, seed), random_input(cfg, seed + 1)
    return forward(cfg, w, x, prune, capture=True).attention_records


def _synthetic(layout, weights, head_outputs=None):
    H, n, _ = weights.shape
    if head_outputs is None:
        head_outputs = np.ones((H, n, 2))
    return AttentionRecord(0, weights, head_outputs, np.ones((H, n), dtype=bool), True)


def test_radius_zero_mass_only_at_zero_distance():
    cfg = ModelConfig(2, 8, 2, 8, GRID3)
    prof = distance_profile(_records(cfg, PruneConfig(radius=0.0, last_visual_layer=2)), GRID3, range(9), 4)
    for pts in prof.profiles.values():
        first_center, first_mean = pts[0]
        assert first_center == pytest.approx(prof.bin_width / 2) and first_mean > 0
        assert all(m == 0.0 for _, m in pts[1:])


def test_uniform_attention_every_bin_one_ninth():
    w = np.zeros((2, 11, 11))
    w[:, :9, :9] = 1 / 9
    w[:, 9:, :] = 1 / 11
    prof = distance_profile([_synthetic(GRID3, w)], GRID3, range(9), 5)
    for pts in prof.profiles.values():
        assert [c for c, _ in pts] == sorted(c for c, _ in pts)
        for _, m in pts:
            assert m == pytest.approx(1 / 9, abs=1e-15)


def test_distance_profile_token4_matches_oracle():
    cfg = ModelConfig(1, 8, 2, 8, GRID3)
    recs = _records(cfg, PruneConfig(radius=5.0, last_visual_layer=1), seed=3)
    prof = distance_profile(recs, GRID3, [4], 3)
    oracle = distance_profile_oracle(recs, GRID3, [4], 3)
    got = {round((c / prof.bin_width) - 0.5): m for c, m in prof.profiles[(0, 4)]}
    assert got.keys() == oracle[(0, 4)].keys()
    for b in got:
        assert got[b] == pytest.approx(oracle[(0, 4)][b], abs=1e-10)


def test_distance_profile_rejects_text_query():
    with pytest.raises(ValueError, match="not a visual token"):
        distance_profile([], GRID3, [9], 2)


def test_distance_profile_head_permutation_invariant():
    cfg = ModelConfig(1, 12, 3, 8, GRID3)
    (rec,) = _records(cfg, PruneConfig(radius=1.5, last_visual_layer=1, kept_heads=((0, 2),)))
    perm = [2, 0, 1]
    swapped = AttentionRecord(0, rec.weights[perm], rec.head_outputs[perm], rec.row_active[perm], True)
    assert distance_profile([rec], GRID3, range(9), 4).profiles == \
        distance_profile([swapped], GRID3, range(9), 4).profiles


@pytest.mark.parametrize("radius", [0.0, 1.0, 1.5, 2.0])
def test_no_mass_beyond_radius(radius):
    lay = TokenLayout(4, 4, 3)
    cfg = ModelConfig(2, 8, 2, 8, lay)
    prof = distance_profile(_records(cfg, PruneConfig(radius=radius, last_visual_layer=2)), lay, range(16), 8)
    assert max_mass_beyond(prof, radius) == 0.0


def test_cross_modal_zero_in_text_only_layers():
    cfg = ModelConfig(3, 8, 2, 8, GRID3)
    prof = cross_modal_profile(_records(cfg, PruneConfig(radius=1.0, last_visual_layer=1)), GRID3)
    assert np.all(prof.values[1:] == 0) and np.all(prof.values[0] > 0)


def test_cross_modal_single_pair():
    lay = TokenLayout(1, 1, 1)
    w = np.array([[[1.0, 0.0], [0.3, 0.7]]])
    assert cross_modal_profile([_synthetic(lay, w)], lay).values[0, 0] == 0.3


def test_activity_equal_statistics_gives_one():
    lay = TokenLayout(2, 1, 2)
    w = np.full((2, 4, 4), 0.25)
    rec = _synthetic(lay, w, np.ones((2, 4, 3)))
    for mode in ActivityMode:
        np.testing.assert_allclose(head_activity([rec], lay, mode).rho, 1.0)


def test_dropped_head_output_norm_zero():
    cfg = ModelConfig(1, 8, 2, 8, GRID3)
    recs = _records(cfg, PruneConfig(radius=1.0, last_visual_layer=1, kept_heads=((0,),)))
    rho = head_activity(recs, GRID3, "output_norm").rho
    assert rho[0, 1] == 0.0 and rho[0, 0] > 0


def test_activity_zero_denominator_names_head():
    lay = TokenLayout(1, 1, 1)
    rec = _synthetic(lay, np.array([[[1.0, 0.0], [1.0, 0.0]]]))
    with pytest.raises(ZeroDivisionError, match="layer 0 head 0"):
        head_activity([rec], lay, "weight_mass")


def test_weight_mass_scale_invariant():
    cfg = ModelConfig(2, 8, 2, 8, GRID3, causal_text=True)
    recs = _records(cfg, PruneConfig(radius=1.0, last_visual_layer=2))
    scaled = [AttentionRecord(r.layer, r.weights * 3.7, r.head_outputs, r.row_active, r.visual_active) for r in recs]
    np.testing.assert_allclose(head_activity(scaled, GRID3).rho, head_activity(recs, GRID3).rho, atol=1e-10, rtol=0)


def test_activity_pools_samples():
    cfg = ModelConfig(1, 8, 2, 8, GRID3)
    a, b = _records(cfg, None, 0), _records(cfg, None, 5)
    pooled = head_activity([a, b], GRID3, "output_norm").rho
    ra, rb = head_activity(a, GRID3, "output_norm").rho, head_activity(b, GRID3, "output_norm").rho
    assert np.all(pooled >= np.minimum(ra, rb) - 1e-12) and np.all(pooled <= np.maximum(ra, rb) + 1e-12)


@pytest.mark.parametrize("seed", range(15))
def test_analysis_matches_oracles(seed):
    cfg, w, x, prune = random_instance(seed, allow_empty_grid=False)
    lay = cfg.layout
    recs = forward(cfg, w, x, prune, capture=True).attention_records
    assert records_are_normalized(recs)
    tokens = select_query_tokens(lay, min(3, lay.n_visual), seed)
    prof = distance_profile(recs, lay, tokens, 3)
    oracle = distance_profile_oracle(recs, lay, tokens, 3)
    assert prof.profiles.keys() == oracle.keys()
    for key, pts in prof.profiles.items():
        got = {min(int(c // prof.bin_width), 2): m for c, m in pts}
        assert got.keys() == oracle[key].keys()
        for b, m in got.items():
            assert abs(m - oracle[key][b]) <= 1e-10
    np.testing.assert_allclose(cross_modal_profile(recs, lay).values, cross_modal_oracle(recs, lay), atol=1e-10)
    for mode in ("weight_mass", "output_norm"):
        np.testing.assert_allclose(head_activity(recs, lay, mode).rho, head_activity_oracle(recs, lay, mode),
                                   atol=1e-10, rtol=0)


def test_token_selection_seeded():
    lay = TokenLayout(24, 24, 1)
    a = select_query_tokens(lay, 10, 3)
    assert a == select_query_tokens(lay, 10, 3) and len(set(a)) == 10
    assert select_query_tokens(lay, lay.n_visual, 0) == list(range(576))
