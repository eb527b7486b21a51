import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact.decomposition import build_partition, delta_from_posterior, estimate_delta
from artifact.domain import GroupPriors, ValidationError
from artifact.estimators import OraclePosterior


def _const(p):
    return OraclePosterior(lambda X: np.full(X.shape[0], p))


def test_delta_examples():
    pri = GroupPriors(0.3, 0.7)
    assert estimate_delta(_const(0.3), pri, [[0.0]]) == pytest.approx(0.0, abs=1e-15)
    half = GroupPriors(0.5, 0.5)
    assert estimate_delta(_const(0.8), half, [[0.0]]) == pytest.approx(1.2)
    assert estimate_delta(_const(1.0), half, [[0.0]]) == 2.0
    assert delta_from_posterior(0.0, pri) == pytest.approx(-1 / 0.7)


def test_partition_examples():
    p = build_partition([1.0, 2.0, 3.0], [0.5, -0.3, 0.0], 1e-6)
    assert p.plus_indices.tolist() == [0] and p.minus_indices.tolist() == [1] and p.zero_indices.tolist() == [2]
    assert p.measure_plus.w.tolist() == [1.0] and p.measure_minus.w.tolist() == [1.0]
    assert p.zero_h.tolist() == [3.0]
    q = build_partition([0.0, 0.0, 1.0], [0.6, 0.2, -1.0])
    np.testing.assert_allclose(q.measure_plus.w, [0.75, 0.25], rtol=1e-15)
    r = build_partition([0.0, 1.0], [1e-7, -1e-7])
    assert r.degenerate and r.zero_indices.tolist() == [0, 1]


def test_partition_errors():
    with pytest.raises(ValidationError):
        build_partition([0.0], [1.0, 2.0])
    with pytest.raises(ValidationError):
        build_partition([0.0], [1.0], tau=-1.0)


# subnormals carry no relative precision, so scale-invariance cannot hold for them
finite = st.floats(-5, 5, allow_nan=False, allow_subnormal=False)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=40), st.floats(1e-3, 1e3))
def test_partition_properties(pairs, scale):
    h = np.array([p[0] for p in pairs])
    d = np.array([p[1] for p in pairs])
    part = build_partition(h, d, 1e-6)
    idx = np.concatenate([part.plus_indices, part.minus_indices, part.zero_indices])
    assert sorted(idx.tolist()) == list(range(len(pairs)))
    for m in (part.measure_plus, part.measure_minus):
        if len(m):
            assert abs(m.w.sum() - 1.0) <= 1e-12
    # with tau = 0 both membership and weights are scale-free
    a = build_partition(h, d, 0.0)
    b = build_partition(h, d * scale, 0.0)
    assert a.plus_indices.tolist() == b.plus_indices.tolist()
    assert a.minus_indices.tolist() == b.minus_indices.tolist()
    np.testing.assert_allclose(a.measure_plus.w, b.measure_plus.w, rtol=1e-12)
    np.testing.assert_allclose(a.measure_minus.w, b.measure_minus.w, rtol=1e-12)
