import datetime as dt

import numpy as np
import pytest

from odflow.errors import FitError
from odflow.fitting import build_cgm_design, fit_cgm, fit_gravity
from odflow.geo import DailyFlowMatrix, StringencyPanel, distance_matrix
from odflow.models import DecayKind
from odflow.synthgen import SynthConfig, generate


def gravity_truth(decay_model, scale, beta, *, noise="none", zones=20, seed=7, days=1):
    cfg = SynthConfig(
        zones=zones, population_range=(5e5, 5e6), model=decay_model,
        params={"scale": scale, "beta": beta}, noise=noise, days=days, seed=seed,
    )
    return generate(cfg)


CGM_TRUTH = {"epsilon": -18.0, "alpha": 0.9, "beta": 0.8, "gamma": 1.3,
             "delta1": -0.02, "delta2": -0.03}


def cgm_truth(*, zones, days, noise, seed, params=CGM_TRUTH, dispersion=1.0):
    cfg = SynthConfig(zones=zones, days=days, model="cgm-exp", params=params,
                      noise=noise, dispersion=dispersion, seed=seed)
    return generate(cfg)


class TestFitGravity:
    def test_noiseless_recovery(self):
        res = gravity_truth("gravity-exp", 1e-9, 0.002)
        dist = distance_matrix(res.registry)
        report = fit_gravity(res.flows[0], dist, res.registry.populations,
                             DecayKind.EXPONENTIAL)
        assert report.converged
        assert report.params.beta == pytest.approx(0.002, rel=1e-6)
        assert report.params.scale == pytest.approx(1e-9, rel=1e-6)

    def test_distance_free_truth(self):
        res = gravity_truth("gravity-exp", 1e-11, 0.0)
        dist = distance_matrix(res.registry)
        report = fit_gravity(res.flows[0], dist, res.registry.populations,
                             DecayKind.EXPONENTIAL)
        assert abs(report.params.beta) < 1e-6
        assert report.params.scale == pytest.approx(1e-11, rel=1e-6)

    def test_poisson_noise_recovery(self):
        res = gravity_truth("gravity-exp", 1e-9, 0.002, noise="poisson")
        mask = ~np.eye(20, dtype=bool)
        assert res.flows[0].counts[mask].mean() >= 50  # informative counts
        dist = distance_matrix(res.registry)
        report = fit_gravity(res.flows[0], dist, res.registry.populations,
                             DecayKind.EXPONENTIAL)
        assert report.params.beta == pytest.approx(0.002, rel=0.05)

    def test_power_law_recovery(self):
        res = gravity_truth("gravity-pow", 1e-4, 1.6)
        dist = distance_matrix(res.registry)
        report = fit_gravity(res.flows[0], dist, res.registry.populations,
                             DecayKind.POWER_LAW)
        assert report.params.beta == pytest.approx(1.6, rel=1e-6)
        assert report.params.scale == pytest.approx(1e-4, rel=1e-6)

    def test_objective_trace_nonincreasing(self):
        res = gravity_truth("gravity-exp", 1e-9, 0.002, noise="poisson")
        dist = distance_matrix(res.registry)
        report = fit_gravity(res.flows[0], dist, res.registry.populations,
                             DecayKind.EXPONENTIAL)
        assert len(report.trace) >= 2
        assert all(b <= a for a, b in zip(report.trace, report.trace[1:]))

    def test_scale_equivariance(self):
        res = gravity_truth("gravity-exp", 1e-9, 0.002, noise="poisson")
        dist = distance_matrix(res.registry)
        masses = res.registry.populations
        base = fit_gravity(res.flows[0], dist, masses, DecayKind.EXPONENTIAL)
        scaled = DailyFlowMatrix(date=res.flows[0].date,
                                 counts=res.flows[0].counts * 4.0)
        other = fit_gravity(scaled, dist, masses, DecayKind.EXPONENTIAL)
        assert other.params.scale / base.params.scale == pytest.approx(4.0, rel=1e-9)
        assert other.params.beta == pytest.approx(base.params.beta, abs=1e-12)

    def test_deterministic(self):
        res = gravity_truth("gravity-exp", 1e-9, 0.002, noise="poisson")
        dist = distance_matrix(res.registry)
        masses = res.registry.populations
        a = fit_gravity(res.flows[0], dist, masses, DecayKind.EXPONENTIAL)
        b = fit_gravity(res.flows[0], dist, masses, DecayKind.EXPONENTIAL)
        assert a == b  # bit-identical report, trace included

    def test_all_zero_flows_raise(self):
        res = gravity_truth("gravity-exp", 1e-9, 0.002)
        dist = distance_matrix(res.registry)
        zero = DailyFlowMatrix(date=res.flows[0].date, counts=np.zeros((20, 20)))
        with pytest.raises(FitError, match="zero"):
            fit_gravity(zero, dist, res.registry.populations, DecayKind.EXPONENTIAL)

    def test_too_few_nonzero_cells_raise(self):
        res = gravity_truth("gravity-exp", 1e-9, 0.002)
        dist = distance_matrix(res.registry)
        counts = np.zeros((20, 20))
        counts[0, 1] = 5.0
        counts[1, 0] = 3.0
        sparse = DailyFlowMatrix(date=res.flows[0].date, counts=counts)
        with pytest.raises(FitError, match="3 nonzero"):
            fit_gravity(sparse, dist, res.registry.populations, DecayKind.EXPONENTIAL)

    def test_pooled_panel(self):
        res = gravity_truth("gravity-exp", 1e-9, 0.002, noise="poisson", days=4)
        dist = distance_matrix(res.registry)
        report = fit_gravity(res.flows, dist, res.registry.populations,
                             DecayKind.EXPONENTIAL)
        assert report.params.beta == pytest.approx(0.002, rel=0.05)


class TestFitCgm:
    def test_noiseless_recovery(self):
        res = cgm_truth(zones=30, days=10, noise="none", seed=11)
        dist = distance_matrix(res.registry)
        report = fit_cgm(res.flows, dist, res.registry, res.stringency,
                         DecayKind.EXPONENTIAL)
        assert report.converged
        for name, value in CGM_TRUTH.items():
            assert getattr(report.params, name) == pytest.approx(value, rel=1e-4), name
        assert report.params.decay_rate == res.truth.decay_rate

    def test_null_deltas_recovered_as_zero(self):
        params = dict(CGM_TRUTH, delta1=0.0, delta2=0.0)
        res = cgm_truth(zones=20, days=6, noise="none", seed=31, params=params)
        dist = distance_matrix(res.registry)
        report = fit_cgm(res.flows, dist, res.registry, res.stringency,
                         DecayKind.EXPONENTIAL)
        assert abs(report.params.delta1) < 1e-3
        assert abs(report.params.delta2) < 1e-3

    def test_nb_noise_recovery(self):
        res = cgm_truth(zones=30, days=20, noise="negative_binomial", seed=99)
        dist = distance_matrix(res.registry)
        report = fit_cgm(res.flows, dist, res.registry, res.stringency,
                         DecayKind.EXPONENTIAL)
        for name, value in CGM_TRUTH.items():
            assert getattr(report.params, name) == pytest.approx(value, rel=0.10), name
        assert report.dispersion == pytest.approx(1.0, rel=0.15)

    def test_power_law_recovery(self):
        params = {"epsilon": -16.0, "alpha": 0.9, "beta": 0.8, "gamma": 1.1,
                  "delta1": -0.02, "delta2": -0.03}
        cfg = SynthConfig(zones=25, days=8, model="cgm-pow", params=params,
                          noise="none", seed=55)
        res = generate(cfg)
        dist = distance_matrix(res.registry)
        report = fit_cgm(res.flows, dist, res.registry, res.stringency,
                         DecayKind.POWER_LAW)
        for name, value in params.items():
            assert getattr(report.params, name) == pytest.approx(value, rel=1e-4), name
        assert report.params.decay_rate == 1.0

    def test_loglik_trace_monotone(self):
        res = cgm_truth(zones=20, days=5, noise="negative_binomial", seed=3)
        dist = distance_matrix(res.registry)
        report = fit_cgm(res.flows, dist, res.registry, res.stringency,
                         DecayKind.EXPONENTIAL)
        # objective is negative log-likelihood: nonincreasing within slack
        assert all(b <= a + 1e-9 for a, b in zip(report.trace, report.trace[1:]))

    def test_scale_equivariance_shifts_intercept(self):
        res = cgm_truth(zones=15, days=4, noise="none", seed=5)
        dist = distance_matrix(res.registry)
        base = fit_cgm(res.flows, dist, res.registry, res.stringency,
                       DecayKind.EXPONENTIAL)
        scaled_panel = [DailyFlowMatrix(date=m.date, counts=m.counts * 3.5)
                        for m in res.flows]
        other = fit_cgm(scaled_panel, dist, res.registry, res.stringency,
                        DecayKind.EXPONENTIAL)
        assert other.params.epsilon - base.params.epsilon == pytest.approx(
            np.log(3.5), abs=1e-6)
        for name in ("alpha", "beta", "gamma", "delta1", "delta2"):
            assert getattr(other.params, name) == pytest.approx(
                getattr(base.params, name), abs=1e-6), name

    def test_deterministic(self):
        res = cgm_truth(zones=15, days=4, noise="negative_binomial", seed=5)
        dist = distance_matrix(res.registry)
        a = fit_cgm(res.flows, dist, res.registry, res.stringency,
                    DecayKind.EXPONENTIAL)
        b = fit_cgm(res.flows, dist, res.registry, res.stringency,
                    DecayKind.EXPONENTIAL)
        assert a == b

    def test_constant_stringency_is_collinear(self):
        res = cgm_truth(zones=15, days=4, noise="poisson", seed=5)
        dist = distance_matrix(res.registry)
        dates = [m.date for m in res.flows]
        flat = StringencyPanel(
            {z.id: {d: 50.0 for d in dates} for z in res.registry})
        with pytest.raises(FitError, match="si_"):
            fit_cgm(res.flows, dist, res.registry, flat, DecayKind.EXPONENTIAL)

    def test_missing_stringency_raises_keyerror(self):
        res = cgm_truth(zones=15, days=4, noise="none", seed=5)
        dist = distance_matrix(res.registry)
        partial = StringencyPanel({res.registry.ids[0]: {res.flows[0].date: 10.0}})
        with pytest.raises(KeyError):
            fit_cgm(res.flows, dist, res.registry, partial, DecayKind.EXPONENTIAL)

    def test_all_zero_flows_raise(self):
        res = cgm_truth(zones=15, days=1, noise="none", seed=5)
        dist = distance_matrix(res.registry)
        zero = [DailyFlowMatrix(date=res.flows[0].date, counts=np.zeros((15, 15)))]
        with pytest.raises(FitError, match="zero"):
            fit_cgm(zero, dist, res.registry, res.stringency, DecayKind.EXPONENTIAL)

    def test_design_shape_and_columns(self):
        res = cgm_truth(zones=10, days=3, noise="none", seed=6)
        dist = distance_matrix(res.registry)
        y, design, rate = build_cgm_design(res.flows, dist, res.registry,
                                           res.stringency, DecayKind.EXPONENTIAL)
        assert y.shape == (3 * 10 * 9,)
        assert design.shape == (3 * 10 * 9, 6)
        assert np.all(design[:, 0] == 1.0)
        assert rate > 0
