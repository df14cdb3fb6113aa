import numpy as np
import pytest

from vhyst.experiments import (
    BENCH_J_S,
    ExcitationSequence,
    SweepRow,
    bench,
    benchmark_material,
    dissipation_increment,
    eps_sweep,
    excitation_rot,
    excitation_uni,
    loglog_slope,
    relative_error_sq,
    roundtrip,
    run_loop,
    sample_times,
    trajectory_dissipation,
)
from vhyst.forward import SolverError
from vhyst.model import MagnetizationState, MaterialModel, PinningCell, SolverConfig


@pytest.mark.parametrize("K", [1, 2, 5, 20, 100])
def test_benchmark_material(K):
    model = benchmark_material(K)
    chi = model.stacked.chi
    assert model.K == K
    assert chi[0] == 0.0
    if K > 1:
        assert chi[-1] == 140.0
        assert np.all(np.diff(chi) > 0)
    assert model.stacked.j_s.sum() == pytest.approx(BENCH_J_S, rel=1e-14)
    assert np.all(model.stacked.a_s == 50.0)


def test_benchmark_material_rejects_empty():
    with pytest.raises(ValueError):
        benchmark_material(0)


def test_sample_times():
    t = sample_times(500)
    assert t[0] == 0.0 and t[-1] == 1.0 and len(t) == 500
    np.testing.assert_array_equal(sample_times(1), [0.0])


def test_excitation_examples():
    np.testing.assert_array_equal(excitation_uni(0, 500), [0.0, 0.0])
    np.testing.assert_array_equal(excitation_rot(0, 500), [0.0, 0.0])
    np.testing.assert_allclose(excitation_rot(400, 501), [0.0, 375.0], atol=1e-10)
    np.testing.assert_allclose(excitation_uni(100, 501), [500.0, 0.0], rtol=1e-15)


def test_excitation_index_range():
    with pytest.raises(IndexError):
        excitation_uni(500, 500)
    with pytest.raises(IndexError):
        excitation_rot(-1, 500)
    with pytest.raises(ValueError):
        ExcitationSequence.build("square", 10)


def test_rotating_amplitude_ramp():
    seq = ExcitationSequence.build("rot", 401)
    radius = np.linalg.norm(seq.samples, axis=1)
    np.testing.assert_allclose(radius, 500 * np.minimum(seq.t, 0.75), atol=1e-10)


def test_relative_error_examples():
    b = np.array([[1.0, 2.0], [3.0, -1.0], [0.5, 0.0]])
    assert relative_error_sq(b, b) == 0.0
    assert relative_error_sq(2 * b, b) == pytest.approx(1.0)
    c = np.array([0.3, -0.4])
    assert relative_error_sq(b + c, b) == pytest.approx(3 * 0.25 / np.sum(b * b))


def test_relative_error_rejects_bad_input():
    with pytest.raises(ZeroDivisionError):
        relative_error_sq(np.ones((2, 2)), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        relative_error_sq(np.ones((2, 2)), np.ones((3, 2)))


def test_dissipation_examples(cell):
    model = MaterialModel((cell,))
    before = MagnetizationState(np.array([[0.0]]))
    after = MagnetizationState(np.array([[0.8617]]))
    assert dissipation_increment(model, before, before) == 0.0
    assert dissipation_increment(model, before, after) == pytest.approx(140 * 0.8617)
    assert dissipation_increment(model, before, after) == pytest.approx(120.6, abs=0.05)


def test_zero_excitation_keeps_demagnetized_state(material20):
    record = run_loop(material20, SolverConfig(), np.zeros((10, 2)))
    np.testing.assert_array_equal(record.B, np.zeros((10, 2)))
    np.testing.assert_array_equal(record.J, np.zeros((10, 20, 2)))


@pytest.mark.parametrize("kind", ["uni", "rot"])
def test_trajectory_consistency(material20, kind):
    seq = ExcitationSequence.build(kind, 500)
    record = run_loop(material20, SolverConfig(), seq.samples)
    assert record.N == 500
    expected = material20.mu0 * record.H + record.J.sum(axis=1)
    np.testing.assert_allclose(record.B, expected, rtol=1e-12, atol=1e-12 * np.abs(record.B).max())
    assert 3 <= record.mean_iters <= 12
    assert record.total_time > 0


def test_inverse_loop_consistency(material20):
    fwd = run_loop(material20, SolverConfig(), ExcitationSequence.build("rot", 200).samples)
    inv = run_loop(material20, SolverConfig(), fwd.B, "inverse")
    expected = material20.mu0 * inv.H + inv.J.sum(axis=1)
    np.testing.assert_allclose(inv.B, expected, rtol=1e-12, atol=1e-12)


def test_uni_loop_is_odd_symmetric(material20):
    seq = ExcitationSequence.build("uni", 501)
    record = run_loop(material20, SolverConfig(), seq.samples)
    descending = slice(100, 301)
    ascending = slice(300, 501)
    np.testing.assert_allclose(seq.samples[descending], -seq.samples[ascending], atol=1e-9)
    gap = np.abs(record.B[descending] + record.B[ascending]).max()
    assert gap <= 1e-3 * np.abs(record.B).max()


def test_uni_loop_has_remanence_and_loss(material20):
    seq = ExcitationSequence.build("uni", 501)
    record = run_loop(material20, SolverConfig(), seq.samples)
    # H crosses zero going down at t = 0.4
    assert record.B[200, 0] > 0.1
    losses = trajectory_dissipation(material20, record)
    assert np.all(losses >= 0)
    cycle = losses[100:501].sum()
    assert cycle > 0
    # the loop area matches the dissipated energy over the closed cycle
    H, B = record.H[100:, 0], record.B[100:, 0]
    area = np.sum(0.5 * (H[1:] + H[:-1]) * np.diff(B))
    assert area == pytest.approx(cycle, rel=0.05)


def test_step_dissipation_matches_trajectory(material5):
    record = run_loop(material5, SolverConfig(), ExcitationSequence.build("rot", 50).samples)
    states = [MagnetizationState.demagnetized(5, 2)] + [MagnetizationState(J) for J in record.J]
    per_step = [dissipation_increment(material5, a, b) for a, b in zip(states, states[1:])]
    np.testing.assert_allclose(trajectory_dissipation(material5, record), per_step, rtol=1e-14)


def test_single_step_loop(material5):
    record = run_loop(material5, SolverConfig(), ExcitationSequence.build("uni", 1).samples)
    assert record.N == 1
    np.testing.assert_array_equal(record.B, [[0.0, 0.0]])


def test_loop_reports_failing_step(material5):
    samples = ExcitationSequence.build("uni", 50).samples
    with pytest.raises(SolverError) as info:
        run_loop(material5, SolverConfig(max_newton=1), samples)
    assert info.value.step is not None and 0 < info.value.step < 50
    assert "step" in str(info.value)


def test_run_loop_rejects_unknown_mode(material5):
    with pytest.raises(ValueError):
        run_loop(material5, SolverConfig(), np.zeros((2, 2)), "sideways")


def test_roundtrip_summary():
    result = roundtrip(5, "rot", N=100)
    assert result["K"] == 5 and result["steps"] == 100
    assert result["rel_err_sq"] <= 1e-10
    assert result["max_rel_err"] <= 1e-6


def test_eps_sweep_small():
    rows = eps_sweep(5, "uni", [1e-2, 1e-4, 1e-6], N=60)
    assert [r.eps for r in rows] == [1e-2, 1e-4, 1e-6]
    assert all(isinstance(r, SweepRow) for r in rows)
    forward = [r.err_forward for r in rows]
    assert all(b <= 1.1 * a for a, b in zip(forward, forward[1:]))
    with pytest.raises(ValueError):
        eps_sweep(5, "uni", [1e-6, 1e-2], N=10)


def test_loglog_slope():
    x = np.logspace(-8, -2, 7)
    assert loglog_slope(x, 3 * x**0.75) == pytest.approx(0.75)


def test_bench_small():
    rows = bench([2, 4], excitation="uni", N=40)
    assert [(r.K, r.method) for r in rows] == [
        (2, "forward"), (2, "inverse-dense"), (2, "inverse-schur"),
        (4, "forward"), (4, "inverse-dense"), (4, "inverse-schur"),
    ]
    assert all(r.time_ms > 0 and r.mean_iters > 0 for r in rows)
    with pytest.raises(ValueError):
        bench([2], methods=["inverse-qr"], N=10)
