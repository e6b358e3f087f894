from __future__ import annotations

from types import SimpleNamespace

import numpy as np
import pytest

from instances import CASE1_SPLIT, CASE2_SPLIT, REF_A, REF_B, REF_X
from lsqswarm.dynamics import SwarmState, compact_system, init_state, make_field
from lsqswarm.errors import DivergenceError, InsufficientDecay, InvalidInputError, NumericalError
from lsqswarm.numerics import least_squares_oracle
from lsqswarm.partitioning import make_case1, make_case2, make_homogeneous
from lsqswarm.simulation import (
    Classification,
    RunRecord,
    SimConfig,
    conservation_drift,
    consensus_projection,
    estimate_rate,
    fit_log_decay,
    rk4_propagator,
    rk4_step,
    simulate,
)
from lsqswarm.topology import standard_double_layer, standard_grid


def reference_config(variant: str, **kw) -> SimConfig:
    if variant == "hom":
        p, net = make_homogeneous(REF_A, REF_B), standard_grid(4, 3)
    elif variant == "case1":
        p = make_case1(REF_A, REF_B, **CASE1_SPLIT)
        net = standard_double_layer(p.cluster_sizes)
    else:
        p = make_case2(REF_A, REF_B, **CASE2_SPLIT)
        net = standard_double_layer(p.cluster_sizes)
    kw.setdefault("h", 0.01)
    kw.setdefault("record_every", 10)
    return SimConfig(p, net, **kw)


@pytest.fixture(scope="module")
def reference_runs():
    return {v: simulate(reference_config(v)) for v in ("hom", "case1", "case2")}


class TestRK4:
    def test_zero_field(self):
        x = np.array([1.0, -2.0])
        np.testing.assert_array_equal(rk4_step(lambda s: 0 * s, x, 0.1), x)

    def test_scalar_decay(self):
        assert rk4_step(lambda s: -s, np.array([1.0]), 0.1)[0] == pytest.approx(0.9048375, abs=1e-12)

    def test_linear_field_is_taylor_polynomial(self, rng):
        Q = rng.normal(size=(5, 5))
        s = rng.normal(size=5)
        h = 0.05
        hQ = h * Q
        poly = np.eye(5) + hQ + hQ @ hQ / 2 + hQ @ hQ @ hQ / 6 + hQ @ hQ @ hQ @ hQ / 24
        np.testing.assert_allclose(rk4_step(lambda v: Q @ v, s, h), poly @ s, atol=1e-12)

    def test_rejects_non_positive_step(self):
        with pytest.raises(InvalidInputError):
            rk4_step(lambda s: s, np.ones(1), 0.0)

    def test_non_finite_derivative(self):
        with pytest.raises(NumericalError, match="stage 1"):
            rk4_step(lambda s: s * np.nan, np.ones(2), 0.1)

    def test_propagator_matches_step(self, rng):
        cfg = reference_config("case2")
        f = make_field(cfg.partition, cfg.network)
        s0 = init_state(cfg.partition, cfg.network)
        R, r = rk4_propagator(f, s0, 0.01)
        s = s0.from_flat(rng.normal(size=s0.flat().size))
        np.testing.assert_allclose(R @ s.flat() + r, rk4_step(f, s, 0.01).flat(), atol=1e-13)


class TestConfig:
    def test_defaults(self):
        cfg = reference_config("hom", h=1e-3, record_every=100)
        assert (cfg.tol_converge, cfg.tol_exact, cfg.t_end) == (1e-6, 1e-8, 200.0)

    @pytest.mark.parametrize(
        "kw", [dict(h=0.0), dict(h=0.1, t_end=0.05), dict(tol_converge=0.0), dict(tol_exact=-1.0), dict(record_every=0)]
    )
    def test_invalid(self, kw):
        with pytest.raises(InvalidInputError):
            reference_config("hom", **kw)


class TestReferenceRuns:
    def test_hom_reproduces_least_squares(self, reference_runs):
        rec = reference_runs["hom"]
        assert rec.classification is Classification.LEAST_SQUARES_ONLY
        assert np.abs(rec.final_x - REF_X).max() <= 1e-3

    def test_case1_agrees_with_hom(self, reference_runs):
        assert np.abs(reference_runs["case1"].final_x - reference_runs["hom"].final_x).max() <= 2e-3

    @pytest.mark.parametrize("variant", ["hom", "case1", "case2"])
    def test_series_consistent(self, reference_runs, variant):
        rec = reference_runs[variant]
        n = len(rec.times)
        for series in (rec.E, rec.Ye, rec.grad_norm, rec.disagreement, rec.conservation_drift):
            assert len(series) == n
        assert (rec.Ye >= 0).all()
        assert rec.reference_kind == "oracle"

    def test_steady_state_ye(self, reference_runs):
        x = least_squares_oracle(REF_A, REF_B)
        r = REF_A @ x - REF_B
        assert reference_runs["hom"].Ye[-1] == pytest.approx(r @ r / 3, abs=1e-6)
        assert reference_runs["case1"].Ye[-1] == pytest.approx(r @ r / 3, abs=1e-6)
        # case 2: y averages inside each row cluster of sizes 3, 2, 3
        expected = (r[:2] @ r[:2]) / 3 + r[2] ** 2 / 2 + r[3] ** 2 / 3
        assert reference_runs["case2"].Ye[-1] == pytest.approx(expected, abs=1e-6)

    @pytest.mark.parametrize("variant", ["hom", "case1", "case2"])
    def test_limit_properties(self, reference_runs, variant):
        rec = reference_runs[variant]
        assert rec.converged
        A, b = REF_A, REF_B
        assert np.linalg.norm(A.T @ (A @ rec.final_x - b)) <= 10 * 1e-6
        assert rec.disagreement[-1] <= 1e-6
        assert rec.conservation_drift.max() <= 1e-8

    @pytest.mark.parametrize("variant", ["hom", "case1", "case2"])
    def test_log_linear_decay(self, reference_runs, variant):
        rec = reference_runs[variant]
        fit = fit_log_decay(rec.times, rec.E)
        assert fit.slope < -0.01
        assert fit.residual_fraction < 0.2
        assert estimate_rate(rec) == pytest.approx(rec.rate_estimate)

    def test_step_size_robustness(self):
        a = simulate(reference_config("hom", h=0.01, t_end=300, stop_early=False, record_every=100))
        b = simulate(reference_config("hom", h=0.005, t_end=300, stop_early=False, record_every=200))
        assert np.abs(a.final_x - b.final_x).max() <= 1e-6

    def test_deterministic(self):
        a = simulate(reference_config("case2", x0_rule="seeded_uniform", seed=4, t_end=20))
        b = simulate(reference_config("case2", x0_rule="seeded_uniform", seed=4, t_end=20))
        np.testing.assert_array_equal(a.E, b.E)
        np.testing.assert_array_equal(a.final_x, b.final_x)


class TestClassification:
    @pytest.mark.parametrize("variant", ["hom", "case1", "case2"])
    def test_identity_is_exact(self, variant):
        A, b = np.eye(2), np.array([1.0, 2.0])
        if variant == "hom":
            p, net = make_homogeneous(A, b, "uniform"), standard_grid(2, 2)
        elif variant == "case1":
            p = make_case1(A, b, [1, 1], [[1, 1], [2]])
            net = standard_double_layer(p.cluster_sizes)
        else:
            p = make_case2(A, b, [1, 1], [[1, 1], [1, 1]])
            net = standard_double_layer(p.cluster_sizes)
        rec = simulate(SimConfig(p, net, h=0.01, record_every=10))
        assert rec.classification is Classification.EXACT
        assert rec.Ye[-1] < 1e-8

    def test_short_run_is_not_converged(self):
        rec = simulate(reference_config("hom", t_end=1.0))
        assert rec.classification is Classification.NOT_CONVERGED

    def test_rank_deficient_uses_own_limit(self, rng):
        A = rng.normal(size=(4, 1)) @ rng.normal(size=(1, 3))
        b = rng.normal(size=4)
        rec = simulate(SimConfig(make_homogeneous(A, b), standard_grid(4, 3), h=0.01, record_every=10, t_end=400))
        assert rec.reference_kind == "final_consensus"
        assert rec.converged
        assert np.linalg.norm(A.T @ (A @ rec.final_x - b)) <= 1e-5

    def test_divergence_reports_step(self):
        with pytest.raises(DivergenceError) as exc:
            simulate(reference_config("hom", h=1.0, auto_step=False))
        assert exc.value.h == 1.0

    def test_auto_step_reduces_h(self):
        cfg = reference_config("hom", h=1.0, t_end=5.0)
        rec = simulate(cfg)
        rho = np.abs(np.linalg.eigvals(compact_system(cfg.partition, cfg.network).Q)).max()
        assert rec.h < 1.0 and rec.h * rho < 0.625


class TestRate:
    def test_exact_exponential(self):
        t = np.linspace(0.0, 10.0, 201)
        rec = SimpleNamespace(times=t, E=np.exp(-2.0 * t))
        assert estimate_rate(rec) == pytest.approx(-2.0, abs=1e-6)

    def test_constant_raises(self):
        t = np.linspace(0.0, 10.0, 50)
        with pytest.raises(InsufficientDecay):
            estimate_rate(SimpleNamespace(times=t, E=np.ones_like(t)))

    def test_too_few_samples(self):
        t = np.arange(5.0)
        with pytest.raises(InsufficientDecay):
            estimate_rate(SimpleNamespace(times=t, E=np.exp(-3 * t)))


class TestConservation:
    def test_zero_at_start(self):
        cfg = reference_config("case1")
        s = init_state(cfg.partition, cfg.network, "seeded_uniform", "seeded_uniform", 2)
        assert conservation_drift(s, cfg.partition) == 0.0

    @pytest.mark.parametrize("variant", ["hom", "case1", "case2"])
    def test_after_1000_steps(self, variant):
        cfg = reference_config(variant)
        p, net = cfg.partition, cfg.network
        f = make_field(p, net)
        s = init_state(p, net, "seeded_uniform", "seeded_uniform", 9)
        for _ in range(1000):
            s = rk4_step(f, s, 1e-3)
        assert conservation_drift(s, p) <= 1e-8

    def test_nonzero_xi_negative_control(self):
        cfg = reference_config("hom")
        s = init_state(cfg.partition, cfg.network)
        s = SwarmState(s.layout, s.x, np.full_like(s.xi, 0.1), s.z)
        assert conservation_drift(s, cfg.partition) > 0

    def test_consensus_projection_averages_copies(self):
        cfg = reference_config("hom")
        s = init_state(cfg.partition, cfg.network)
        s = SwarmState(s.layout, np.tile([1.0, 2.0, 3.0], 4) + np.repeat([0.1, -0.1, 0.2, -0.2], 3), s.xi, s.z)
        np.testing.assert_allclose(consensus_projection(s, cfg.partition), [1.0, 2.0, 3.0])


class TestCsv:
    def test_format(self, reference_runs, tmp_path):
        rec: RunRecord = reference_runs["hom"]
        path = tmp_path / "ts.csv"
        rec.write_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,E,Ye,grad_norm,disagreement,conservation_drift"
        assert len(lines) == len(rec.times) + 1
        assert float(lines[-1].split(",")[2]) == rec.Ye[-1]
