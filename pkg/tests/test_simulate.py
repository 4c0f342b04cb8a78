import math

import numpy as np
import pytest
from scipy import stats

from awgnlab.rng import stream, stream_id
from awgnlab.simulate import (CustomDrift, Drift, GridMismatch, LinearFeedback,
                              MessageScaled, PathRecord, SampleGrid, brownian,
                              check_conditions, dump_path, euler_maruyama,
                              integrate_and_dump, normalize_increments,
                              transmit_feedback, transmit_nonfeedback)


def test_grid_invariants():
    g = SampleGrid(2.0, 8)
    t = g.times
    assert t[0] == 0.0 and t[-1] == 2.0
    np.testing.assert_allclose(np.diff(t), g.delta, rtol=1e-15)
    assert SampleGrid(2.0, 4).nests_in(g) and not SampleGrid(2.0, 3).nests_in(g)
    # shared times are bit-identical across nested grids
    np.testing.assert_array_equal(SampleGrid(2.0, 4).times, t[::2])
    with pytest.raises(ValueError):
        SampleGrid(0.0, 4)
    with pytest.raises(ValueError):
        SampleGrid(1.0, 0)


def test_brownian_moments():
    g = SampleGrid(2.0, 16)
    b = brownian(g, stream(1), size=100_000)
    assert np.all(b[:, 0] == 0.0)
    end = b[:, -1]
    se_mean = math.sqrt(2.0 / end.size)
    assert abs(end.mean()) <= 3 * se_mean
    se_var = 2.0 * math.sqrt(2.0 / end.size)
    assert abs(end.var() - 2.0) <= 3 * se_var


def test_brownian_max_reflection_law():
    g = SampleGrid(1.0, 4096)
    paths = brownian(g, stream(2), size=4000)
    top = paths.max(axis=1)
    # max of B on [0, 1] has the law of |N(0, 1)|; discrete monitoring bias is small
    assert stats.kstest(top, stats.halfnorm.cdf).pvalue > 0.01


def test_nonfeedback_examples():
    g = SampleGrid(1.0, 64)
    b = brownian(g, stream(3))
    zero = PathRecord(g, np.zeros(65))
    np.testing.assert_array_equal(transmit_nonfeedback(zero, b).values, b.values)
    ones = transmit_nonfeedback(PathRecord(g, np.ones(65)), zero)
    np.testing.assert_allclose(ones.values, g.times, atol=1e-12)
    ramp = transmit_nonfeedback(PathRecord(g, g.times), zero)
    assert ramp.values[-1] == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(GridMismatch):
        transmit_nonfeedback(PathRecord(SampleGrid(1.0, 32), np.zeros(33)), b)


def test_feedback_zero_drift_is_noise():
    g = SampleGrid(1.0, 128)
    y, b = transmit_feedback(MessageScaled(theta=0.0), 1.0, g, rng=stream(4))
    np.testing.assert_array_equal(y.values, b.values)


def test_linear_feedback_ode_oracle():
    g = SampleGrid(2.0, 2000)
    zero = PathRecord(g, np.zeros(2001))
    for m in (-1.0, 1.0):
        y, _ = transmit_feedback(LinearFeedback(theta=1.0, kappa=1.0), m, g, b=zero)
        exact = m * (1 - np.exp(-g.times))
        assert np.max(np.abs(y.values - exact)) <= 5e-3


def test_message_scaled_mean():
    g = SampleGrid(1.5, 32)
    dB = stream(5).standard_normal((100_000, 32)) * math.sqrt(g.delta)
    end = euler_maruyama(MessageScaled(theta=1.0), 1.0, g.times, dB)[:, -1]
    assert abs(end.mean() - 1.5) <= 3 * end.std() / math.sqrt(end.size)


def test_non_anticipation_splice():
    g = SampleGrid(1.0, 256)
    drift = CustomDrift(func=lambda t, m, times, v: m * np.tanh(v.max(axis=1)) - 0.5 * v[:, -1],
                        lip=1.5, growth=1.5)
    r = stream(6)
    head = r.standard_normal(100) * math.sqrt(g.delta)
    tail1 = r.standard_normal(156) * math.sqrt(g.delta)
    tail2 = r.standard_normal(156) * math.sqrt(g.delta)
    y1 = euler_maruyama(drift, 1.0, g.times, np.concatenate([head, tail1])[None])[0]
    y2 = euler_maruyama(drift, 1.0, g.times, np.concatenate([head, tail2])[None])[0]
    np.testing.assert_array_equal(y1[:101], y2[:101])
    assert not np.array_equal(y1[101:], y2[101:])


def test_along_path_matches_stepwise_drift():
    g = SampleGrid(1.0, 32)
    y = brownian(g, stream(7), size=5)
    for drift in (LinearFeedback(theta=0.7, kappa=1.3), MessageScaled(theta=2.0)):
        fast = drift.along_path(1.0, g.times, y)
        slow = Drift.along_path(drift, 1.0, g.times, y)
        np.testing.assert_array_equal(fast, slow)


def test_strong_refinement_rate():
    drift = LinearFeedback(theta=1.0, kappa=1.0)
    T, ref_n, paths = 1.0, 4096, 2000
    ref_grid = SampleGrid(T, ref_n)
    dB = stream(8).standard_normal((paths, ref_n)) * math.sqrt(ref_grid.delta)
    y_ref = euler_maruyama(drift, 1.0, ref_grid.times, dB)[:, -1]
    deltas, errs = [], []
    for n in (16, 32, 64, 128, 256):
        g = SampleGrid(T, n)
        coarse_dB = dB.reshape(paths, n, ref_n // n).sum(axis=2)
        y = euler_maruyama(drift, 1.0, g.times, coarse_dB)[:, -1]
        deltas.append(g.delta)
        errs.append(math.sqrt(np.mean((y - y_ref) ** 2)))
    slope = np.polyfit(np.log(deltas), np.log(errs), 1)[0]
    assert slope >= 0.45


def test_integrate_and_dump():
    g = SampleGrid(1.0, 64)
    y = brownian(g, stream(9))
    np.testing.assert_array_equal(integrate_and_dump(y, g), y.values)
    one = integrate_and_dump(y, SampleGrid(1.0, 1))
    np.testing.assert_array_equal(one, [y.values[0], y.values[-1]])
    s8 = integrate_and_dump(y, SampleGrid(1.0, 8))
    s16 = integrate_and_dump(y, SampleGrid(1.0, 16))
    np.testing.assert_array_equal(s8, s16[::2])
    with pytest.raises(GridMismatch):
        integrate_and_dump(y, SampleGrid(1.0, 3))
    batch = brownian(g, stream(9), size=3)
    np.testing.assert_array_equal(integrate_and_dump(batch, SampleGrid(1.0, 4)), batch[:, ::16])


def test_normalize_increments():
    g = SampleGrid(4.0, 20000)
    z = normalize_increments(brownian(g, stream(10)).values, g.delta)
    se = math.sqrt(2.0 / z.size)
    assert abs(z.var() - 1.0) <= 3 * se
    np.testing.assert_array_equal(normalize_increments(np.full(5, 2.0), 0.5), 0.0)
    ramp = normalize_increments(g.times[:6], g.delta)
    np.testing.assert_allclose(ramp, math.sqrt(g.delta), rtol=1e-9)


def test_determinism():
    g = SampleGrid(1.0, 64)
    a = brownian(g, stream(11, stream_id("brownian", 2))).values
    b = brownian(g, stream(11, stream_id("brownian", 2))).values
    np.testing.assert_array_equal(a, b)


def test_check_conditions():
    g = SampleGrid(1.0, 64)
    ok = check_conditions(LinearFeedback(theta=1.0, kappa=2.0), g, stream(12))
    assert ok["lip_violations"] == 0 and ok["growth_violations"] == 0
    liar = CustomDrift(func=lambda t, m, times, v: 10 * v[:, -1], lip=0.1, growth=0.1)
    bad = check_conditions(liar, g, stream(12))
    assert bad["lip_violations"] > 0 and bad["growth_violations"] > 0


def test_drift_rejects_bad_prior():
    with pytest.raises(ValueError):
        LinearFeedback(messages=(-1.0, 1.0), prior=(0.3, 0.3))
    with pytest.raises(ValueError):
        LinearFeedback(messages=(-1.0, 1.0), prior=(1.0, 0.0))


def test_non_finite_drift_raises():
    g = SampleGrid(1.0, 8)
    blow = CustomDrift(func=lambda t, m, times, v: np.full(v.shape[0], np.inf))
    with pytest.raises(FloatingPointError):
        transmit_feedback(blow, 1.0, g, rng=stream(0))


def test_dump_path(tmp_path):
    g = SampleGrid(1.0, 4)
    y = brownian(g, stream(13))
    out = tmp_path / "p.csv"
    dump_path(y, out, seed=13, sid=0)
    text = out.read_text()
    assert text.startswith("# seed=13 stream_id=0")
    np.testing.assert_array_equal(np.loadtxt(out, delimiter=",")[:, 1], y.values)
