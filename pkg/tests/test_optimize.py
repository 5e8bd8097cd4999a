import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adjointpde.core import Boundary, CoefficientVector, Dataset, Grid, Hyperparameters, TermKey, build_library, ranged_library
from adjointpde.datagen import generate, recommended_hyperparameters
from adjointpde.optimize import (
    DiscoveryReport,
    DivergenceError,
    Flag,
    apply_threshold,
    convergence_metrics,
    discover,
    learning_rate,
    update_step,
)

ONE = build_library(1, 1, [(1,)], [(1,)])


def _grid(h):
    return Grid((10,), (h,))


def test_learning_rate_examples():
    lib = ranged_library(1, 1, [1, 2, 3], [1])
    top = TermKey(0, (3,), (1,))
    assert learning_rate(top, Hyperparameters(beta=0.7), _grid(0.1), lib.d_max) == 0.7
    assert learning_rate(TermKey(0, (2,), (1,)), Hyperparameters(beta=1.0), _grid(0.1), 3) == pytest.approx(10.0)
    assert learning_rate(TermKey(0, (1,), (1,)), Hyperparameters(beta=0.02), _grid(0.01), 3) == pytest.approx(200.0)


def test_update_step_examples():
    hp = Hyperparameters(beta=1.0)
    g = _grid(0.5)
    assert update_step([0.3], [0.0], hp, g, ONE).values[0] == 0.3
    assert update_step([0.0], [-0.5], hp, g, ONE).values[0] == 0.5
    assert update_step([0.0], [-0.5], hp, g, ONE, frozen=[True]).values[0] == 0.0


def test_update_step_rejects_non_finite_gradient():
    with pytest.raises(DivergenceError):
        update_step([0.0], [np.nan], Hyperparameters(), _grid(0.1), ONE)


def test_threshold_examples():
    lib = build_library(1, 1, [(1,), (2,)], [(1,)])
    out, frozen = apply_threshold(CoefficientVector(lib, [1.0, 5e-4]), 1e-3)
    assert list(out.values) == [1.0, 0.0] and list(frozen) == [False, True]
    out, frozen = apply_threshold(CoefficientVector(lib, [1e-9, -1e-9]), 0.0)
    assert not frozen.any()
    out, frozen = apply_threshold(CoefficientVector(lib, [1e-5, -1e-4]), 1e-3)
    assert not out.values.any() and frozen.all()


coeffs = st.lists(st.floats(-2, 2, allow_nan=False), min_size=9, max_size=9)


@settings(max_examples=100)
@given(coeffs, st.floats(0, 1))
def test_threshold_idempotent(values, sigma):
    lib = ranged_library(1, 1, [1, 2, 3], [1, 2, 3])
    once, m1 = apply_threshold(CoefficientVector(lib, values), sigma)
    twice, m2 = apply_threshold(once, sigma)
    assert np.array_equal(once.values, twice.values)
    assert np.array_equal(m1, m2)


@settings(max_examples=100)
@given(coeffs, coeffs, st.floats(0, 1))
def test_frozen_slots_stay_frozen(first, second, sigma):
    lib = ranged_library(1, 1, [1, 2, 3], [1, 2, 3])
    _, frozen = apply_threshold(CoefficientVector(lib, first), sigma)
    out, frozen2 = apply_threshold(CoefficientVector(lib, second), sigma, frozen)
    assert np.all(out.values[frozen] == 0)
    assert np.all(frozen2[frozen])


def _constant_data(nt=4, n=16):
    g = Grid((n,), (1.0 / n,), (0.0,), Boundary.PERIODIC)
    vals = np.full((nt, 1, n), 0.7)
    return Dataset(g, np.arange(nt) * 0.01, vals)


def test_constant_data_converges_to_zero_immediately(lib9):
    report = discover(_constant_data(), lib9, Hyperparameters())
    assert report.converged
    # one epoch freezes every slot, the next confirms the frozen set is stable
    assert report.epochs_run <= 2
    assert not report.per_epoch_alpha.any()
    assert not report.final_alpha.values.any()
    assert report.active_terms == []


def test_pure_ridge_decay_is_geometric():
    lib = build_library(1, 1, [(1,), (2,)], [(1,), (2,)])
    data = _constant_data(nt=2)
    hp = Hyperparameters(beta=1.0, eps0=0.1, sigma_thr=0.0, max_epochs=20, gamma=0.0)
    report = discover(data, lib, hp, initial_alpha=[0.5, -0.25, 1.0, 2.0])
    traj = report.per_epoch_alpha
    ratios = traj[1:] / traj[:-1]
    assert np.all(ratios < 1) and np.all(ratios > 0)
    # identical contraction factor every epoch, per slot
    assert np.allclose(ratios, ratios[0], rtol=1e-12)


def test_single_interval_averaging_equals_per_interval():
    data, _, lib = generate("heat1d")
    two = Dataset(data.grid, data.times[:2], data.values[:2])
    base = recommended_hyperparameters("heat1d", max_epochs=15)
    a = discover(two, lib, base.__class__(**{**base.as_dict(), "averaging": False}))
    b = discover(two, lib, base.__class__(**{**base.as_dict(), "averaging": True, "ridge_once": False}))
    assert np.array_equal(a.per_epoch_alpha, b.per_epoch_alpha)


def test_heat_discovery_and_report_invariants():
    data, truth, lib = generate("heat1d")
    report = discover(data, lib, recommended_hyperparameters("heat1d"))
    assert report.active_terms == [TermKey(0, (2,), (1,))]
    assert abs(report.final_alpha.values[lib.index(TermKey(0, (2,), (1,)))] + 1) <= 1e-6
    assert report.converged
    # frozen slots read zero in every later epoch
    traj = report.per_epoch_alpha
    for k in range(len(lib)):
        zero_from = np.flatnonzero(traj[:, k] == 0)
        if zero_from.size and report.frozen[k]:
            assert np.all(traj[zero_from[0]:, k] == 0)
    summary = convergence_metrics(report, truth)
    assert summary.l1_error[-1] < 1e-6
    assert convergence_metrics(report, report.final_alpha).l1_error[-1] == 0
    csv_text = report.trajectory_csv().splitlines()
    assert csv_text[0].startswith("epoch,term_0") and len(csv_text) == report.epochs_run + 1


def test_threads_do_not_change_the_result():
    data, _, lib = generate("heat1d")
    hp = recommended_hyperparameters("heat1d", averaging=True, max_epochs=10)
    a = discover(data, lib, hp, threads=1)
    b = discover(data, lib, hp, threads=3)
    assert np.array_equal(a.per_epoch_alpha, b.per_epoch_alpha)


def test_all_intervals_blowing_up_aborts():
    data, _, lib = generate("heat1d")
    report = discover(data, lib, recommended_hyperparameters("heat1d", beta=1e9, max_epochs=5))
    assert Flag.ABORTED in report.flags and Flag.INTERVAL_BLOWUPS in report.flags


def test_final_only_mode_thresholds_at_the_end():
    data, _, lib = generate("heat1d")
    hp = recommended_hyperparameters("heat1d", threshold_mode="final-only", max_epochs=5)
    report = discover(data, lib, hp)
    assert report.pre_threshold_alpha is not None
    kept = np.abs(report.pre_threshold_alpha) >= hp.sigma_thr
    assert np.array_equal(report.final_alpha.values != 0, kept & (report.pre_threshold_alpha != 0))


def test_report_rejects_inconsistent_active_set(lib9):
    alpha = CoefficientVector(lib9, np.eye(9)[0])
    with pytest.raises(ValueError):
        DiscoveryReport(alpha, [], 0, np.zeros((0, 9)), np.zeros(0))


def test_convergence_metrics_monotone_flags(lib9):
    alpha = CoefficientVector.zeros(lib9)
    traj = np.outer(np.array([1.0, 0.5, 0.25]), np.ones(9))
    report = DiscoveryReport(alpha, [], 3, traj, np.array([3.0, 2.0, 1.0]))
    s = convergence_metrics(report, alpha)
    assert s.residual_monotone and s.l1_monotone


def test_initial_alpha_length_checked(lib9):
    with pytest.raises(ValueError):
        discover(_constant_data(), lib9, Hyperparameters(), initial_alpha=[0.0])


def test_suggested_beta_is_stable_for_heat():
    from adjointpde.optimize import suggest_beta

    data, truth, lib = generate("heat1d")
    hp = recommended_hyperparameters("heat1d", max_epochs=400)
    beta = suggest_beta(data, lib, hp)
    report = discover(data, lib, hp.__class__(**{**hp.as_dict(), "beta": beta}))
    assert Flag.ABORTED not in report.flags
    assert report.active_terms == [TermKey(0, (2,), (1,))]


def test_suggested_beta_needs_curvature(lib9):
    from adjointpde.optimize import suggest_beta

    with pytest.raises(ValueError):
        suggest_beta(_constant_data(), lib9)
