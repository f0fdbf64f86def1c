import csv
import math

import numpy as np
import pytest

from lerwkit.sle import (
    DrivingFunction,
    bm_sle_avoidance,
    capacity_derivative,
    curve_distance,
    forward_flow,
    lerw_sle_comparison,
    sample_driving,
    trace_points,
)


def _constant(T=1.0, dt=1e-3):
    n = int(round(T / dt))
    return DrivingFunction(0.0, dt, np.zeros(n + 1))


def test_driver_basics():
    U = sample_driving(0.0, 1.0, 1e-2, np.random.default_rng(0), theta0=0.3)
    assert np.allclose(U.values, np.exp(0.3j))
    V = sample_driving(2.0, 2.0, 1e-3, np.random.default_rng(1))
    assert np.abs(np.abs(V.values) - 1).max() < 1e-12
    W = sample_driving(2.0, 2.0, 1e-3, np.random.default_rng(1))
    assert np.array_equal(V.angles, W.angles)
    with pytest.raises(ValueError):
        sample_driving(-1.0, 1.0, 1e-3, np.random.default_rng(0))
    with pytest.raises(ValueError):
        sample_driving(2.0, 1e-3, 1e-2, np.random.default_rng(0))


def test_driver_increment_variance():
    rng = np.random.default_rng(2)
    dt = 1e-3
    inc = np.concatenate([np.diff(sample_driving(2.0, 0.01, dt, rng).angles) for _ in range(10_000)])
    assert abs(inc.var() / (2 * dt) - 1) < 0.05


def test_forward_flow_fixed_point_and_domain():
    U = sample_driving(2.0, 1.0, 1e-3, np.random.default_rng(3))
    assert np.all(forward_flow(U, 0j).values == 0)
    with pytest.raises(ValueError):
        forward_flow(U, 1.0 + 0j)


@pytest.mark.parametrize("seed", [None, 4, 5])
def test_capacity_normalization(seed):
    U = _constant() if seed is None else sample_driving(2.0, 1.0, 1e-3, np.random.default_rng(seed))
    d = capacity_derivative(U)
    assert np.abs(d / np.exp(U.times) - 1).max() < 0.005


def test_slit_swallow_times_increase_with_distance():
    U = _constant(T=3.0)
    times = [forward_flow(U, complex(x)).swallow_time for x in (0.9, 0.7, 0.5)]
    assert all(t is not None for t in times)
    assert times[0] < times[1] < times[2]


def test_trace_start_and_disk():
    U = sample_driving(2.0, 1.0, 1e-3, np.random.default_rng(6))
    tr = trace_points(U)
    assert abs(tr.points[0] - U.values[0]) < 1e-9
    assert np.abs(tr.points).max() <= 1 + 1e-9
    sub = trace_points(U, [0.0, 0.5, 1.0])
    assert np.allclose(sub.points, tr.points[[0, 500, 1000]])
    with pytest.raises(ValueError):
        trace_points(U, [0.00051])


def test_constant_driver_traces_real_slit():
    tr = trace_points(_constant())
    assert np.abs(tr.points.imag).max() < 1e-6
    assert (tr.points.real > 0).all()
    assert np.all(np.diff(tr.points.real) < 0)


def test_trace_approaches_origin():
    hits = 0
    for seed in range(20):
        tr = trace_points(sample_driving(2.0, 3.0, 1e-3, np.random.default_rng(100 + seed)))
        hits += np.abs(tr.points).min() < 0.3
    assert hits >= 18


def test_trace_forward_consistency():
    ok = tot = 0
    for seed in range(3):
        U = sample_driving(2.0, 1.0, 1e-3, np.random.default_rng(seed))
        tr = trace_points(U)
        for k in range(50, 1001, 50):
            z = tr.points[k]
            if abs(z) >= 1:
                continue
            f = forward_flow(U, z)
            tot += 1
            ok += f.swallow_time is not None and abs(f.swallow_time - k * U.dt) <= 5 * U.dt
    assert ok >= 0.95 * tot


def test_avoidance_monotone_in_r():
    reps = bm_sle_avoidance(2.0, [0.9, 0.5, 0.25], 400, 0)
    by_r = {rep.params["r"]: rep for rep in reps}
    assert all(0 <= rep.estimate <= 1 for rep in reps)
    for big, small in ((0.9, 0.5), (0.5, 0.25)):
        a, b = by_r[big], by_r[small]
        assert a.estimate >= b.estimate - 2 * math.hypot(a.stderr, b.stderr)
    with pytest.raises(ValueError):
        bm_sle_avoidance(2.0, 1.0, 10, 0)
    with pytest.raises(ValueError):
        bm_sle_avoidance(2.0, 0.5, 10, 0, method="other")


def test_avoidance_methods_agree():
    a = bm_sle_avoidance(2.0, 0.5, 300, 1)
    b = bm_sle_avoidance(2.0, 0.5, 300, 1, method="bm", bm_per_trace=32)
    assert abs(a.estimate - b.estimate) < 4 * math.hypot(a.stderr, b.stderr)


def test_curve_distance_examples():
    seg = np.array([0, 1], dtype=complex)
    assert curve_distance(seg, seg) == 0.0
    d = 0.37
    assert abs(curve_distance(seg, seg + 1j * d) - d) < 1e-12
    h = 0.2
    detour = np.array([0, 0.5, 0.5 + 1j * h, 0.5, 1], dtype=complex)
    val = curve_distance(seg, detour, spacing=1e-3)
    assert abs(val - h) < 2e-3
    assert curve_distance(detour, seg, spacing=1e-3) == val
    with pytest.raises(ValueError):
        curve_distance([], seg)


def test_lerw_sle_comparison():
    summary = lerw_sle_comparison(256, 2.0, 1000, 0)
    for r in (0.25, 0.9):
        row = summary.row(r)
        assert abs(row.difference) < 3 * row.joint_stderr
    assert summary.row(0.9).lerw > summary.row(0.25).lerw
    assert len(summary.reports()) == 4
    with pytest.raises(ValueError):
        lerw_sle_comparison(1024, 2.0, 10, 0)


def test_comparison_gap_trend():
    rows = [lerw_sle_comparison(n, 2.0, 600, 1, r_grid=(0.5,)).row(0.5) for n in (64, 128, 256)]
    for small, big in zip(rows, rows[1:]):
        assert abs(big.difference) <= abs(small.difference) or abs(big.difference) < 3 * big.joint_stderr


def test_csv_exports(tmp_path):
    U = sample_driving(2.0, 0.01, 1e-3, np.random.default_rng(0))
    with open(U.to_csv(tmp_path / "driver.csv")) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "arg_U"] and len(rows) == U.steps + 2
    assert float(rows[-1][1]) == U.angles[-1]
    tr = trace_points(U)
    with open(tr.to_csv(tmp_path / "trace.csv")) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "re", "im"] and len(rows) == len(tr.points) + 1
    assert complex(float(rows[3][1]), float(rows[3][2])) == tr.points[2]
