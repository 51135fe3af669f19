import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tactile_transfer.exceptions import EmptyMaskError, LengthMismatchError, TopologyMismatchError
from tactile_transfer.metrics import (
    MESH_METRICS,
    EvalReport,
    Summary,
    deformation_mask,
    emit_report,
    evaluate_meshes,
    mesh_euclidean,
    mesh_rmse,
    parse_report_csv,
    signal_rmse,
)


def brute_rmse(p, t, mask):
    total, count = 0.0, 0
    for i in range(len(p)):
        if mask[i]:
            for k in range(3):
                total += (p[i][k] - t[i][k]) ** 2
                count += 1
    return math.sqrt(total / count) * 1000.0


def brute_euclidean(p, t, mask):
    total, count = 0.0, 0
    for i in range(len(p)):
        if mask[i]:
            total += math.sqrt(sum((p[i][k] - t[i][k]) ** 2 for k in range(3)))
            count += 1
    return total / count * 1000.0


def test_identical_meshes_give_zero():
    m = np.random.default_rng(0).normal(size=(30, 3))
    assert mesh_rmse(m, m) == 0.0
    assert mesh_euclidean(m, m) == 0.0


def test_single_vertex_345_offset():
    ref = np.zeros((1, 3))
    pred = np.array([[0.003, 0.0, 0.004]])  # (3, 0, 4) um
    assert mesh_euclidean(pred, ref) == pytest.approx(5.0, abs=1e-12)
    assert mesh_rmse(pred, ref) == pytest.approx(math.sqrt(25 / 3), abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_random_pair_matches_double_loop(seed):
    rng = np.random.default_rng(seed)
    p, t = rng.normal(size=(40, 3)), rng.normal(size=(40, 3))
    mask = rng.random(40) < 0.4
    mask[0] = True
    full = np.ones(40, bool)
    assert mesh_rmse(p, t) == pytest.approx(brute_rmse(p, t, full), abs=1e-9)
    assert mesh_euclidean(p, t) == pytest.approx(brute_euclidean(p, t, full), abs=1e-9)
    assert mesh_rmse(p, t, mask) == pytest.approx(brute_rmse(p, t, mask), abs=1e-9)
    assert mesh_euclidean(p, t, mask) == pytest.approx(brute_euclidean(p, t, mask), abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_full_set_is_weighted_combination_of_region_and_complement(seed):
    rng = np.random.default_rng(seed)
    p, t = rng.normal(size=(50, 3)), rng.normal(size=(50, 3))
    region = rng.random(50) < 0.3
    region[:2] = [True, False]
    n_r, n_c = region.sum(), (~region).sum()
    r, c = mesh_rmse(p, t, region), mesh_rmse(p, t, ~region)
    assert mesh_rmse(p, t) == pytest.approx(math.sqrt((n_r * r**2 + n_c * c**2) / 50), abs=1e-9)
    e_r, e_c = mesh_euclidean(p, t, region), mesh_euclidean(p, t, ~region)
    assert mesh_euclidean(p, t) == pytest.approx((n_r * e_r + n_c * e_c) / 50, abs=1e-9)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_metrics_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    p, t = rng.normal(size=(12, 3)), rng.normal(size=(12, 3))
    mask = rng.random(12) < 0.5
    mask[0] = True
    perm = rng.permutation(12)
    assert mesh_rmse(p[perm], t[perm], mask[perm]) == pytest.approx(mesh_rmse(p, t, mask), rel=1e-12)
    assert mesh_euclidean(p[perm], t[perm], mask[perm]) == pytest.approx(mesh_euclidean(p, t, mask), rel=1e-12)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_metrics_nonnegative(seed):
    rng = np.random.default_rng(seed)
    p, t = rng.normal(size=(8, 3)), rng.normal(size=(8, 3))
    assert mesh_rmse(p, t) > 0 and mesh_euclidean(p, t) > 0


def test_mask_empty_for_reference():
    ref = np.random.default_rng(1).normal(size=(20, 3))
    assert not deformation_mask(ref, ref).any()


def test_mask_threshold_inclusive_at_10um():
    ref = np.array([[5.0, 2.0, 1.0], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
    gt = ref.copy()
    gt[0, 0] += 0.010  # exactly 10 um (subject to float rounding)
    gt[1, 2] -= 0.005  # 5 um
    mask = deformation_mask(gt, ref)
    assert mask.tolist() == [True, False, False]


def test_mask_batched():
    ref = np.zeros((4, 3))
    gt = np.zeros((2, 4, 3))
    gt[1, 2, 1] = 0.02
    m = deformation_mask(gt, ref)
    assert m.shape == (2, 4) and m.sum() == 1 and m[1, 2]


def test_topology_and_mask_errors():
    with pytest.raises(TopologyMismatchError):
        mesh_rmse(np.zeros((3, 3)), np.zeros((4, 3)))
    with pytest.raises(TopologyMismatchError):
        deformation_mask(np.zeros((3, 3)), np.zeros((4, 3)))
    with pytest.raises(EmptyMaskError):
        mesh_euclidean(np.zeros((3, 3)), np.ones((3, 3)), np.zeros(3, bool))


def test_signal_rmse_values():
    x = np.random.default_rng(0).normal(size=(6, 19))
    assert np.all(signal_rmse(x, x) == 0)
    np.testing.assert_allclose(signal_rmse(x + 0.1, x), 0.1, atol=1e-12)
    with pytest.raises(LengthMismatchError):
        signal_rmse(x[:5], x)


def test_summary_population_std():
    s = Summary.of([1.0, 3.0])
    assert s.mean == 2.0 and s.std == 1.0
    assert str(Summary(0.0, 0.0)) == "0.00 (0.00)"


def test_evaluate_meshes_skips_empty_regions():
    ref = np.zeros((5, 3))
    target = np.zeros((2, 5, 3))
    target[1, 0, 2] = -0.5
    pred = target + 0.001
    res = evaluate_meshes(pred, target, ref)
    assert res[("rmse", "all")].mean == pytest.approx(1.0)
    assert res[("rmse", "region")].std == 0.0
    assert res[("euclidean", "region")].mean == pytest.approx(math.sqrt(3))


def _row(values):
    return {k: Summary(*v) for k, v in zip(MESH_METRICS, values)}


def test_report_formats_reference_row():
    reference = [(78.21, 41.88), (85.00, 49.80), (94.07, 48.32), (121.02, 62.31)]
    text, _ = emit_report(EvalReport({"S2MPN": _row(reference)}))
    line = [ln for ln in text.splitlines() if ln.startswith("S2MPN")][0]
    for cell in ("78.21 (41.88)", "85.00 (49.80)", "94.07 (48.32)", "121.02 (62.31)"):
        assert cell in line


def test_report_zero_row_and_order():
    zeros = _row([(0.0, 0.0)] * 4)
    rows = {"M2MPN": zeros, "MVD": zeros, "S2MPN": zeros, "MVB": zeros}
    text, csv_text = emit_report(EvalReport(rows, Summary(0.06, 0.034)))
    names = [ln.split()[0] for ln in text.splitlines() if ln.split() and ln.split()[0] in rows]
    assert names == ["S2MPN", "MVB", "MVD", "M2MPN"]
    assert "0.00 (0.00)" in text
    assert "SVB signal RMSE (normalized units): 0.06 (0.03)" in text


def test_report_csv_round_trip():
    rng = np.random.default_rng(3)
    rows = {n: _row([(round(rng.uniform(0, 200), 6), round(rng.uniform(0, 50), 6)) for _ in range(4)])
            for n in ("S2MPN", "MVB")}
    report = EvalReport(rows, Summary(0.123456, 0.05))
    _, csv_text = emit_report(report)
    assert csv_text.splitlines()[0] == "network,metric,scope,mean_um,std_um"
    back = parse_report_csv(csv_text)
    assert back.rows == rows and back.signal == report.signal


def test_report_needs_a_row():
    with pytest.raises(ValueError):
        emit_report(EvalReport({}))
