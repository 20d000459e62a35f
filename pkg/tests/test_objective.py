"""Transformed objective wrapper: caching, accounting, and transforms."""

import math

import numpy as np
import pytest

from dfop import privacy, rng
from dfop.exceptions import EvaluationError, ParameterError, ProtocolError
from dfop.objective import (
    ObjectiveSpec,
    TransformSchedule,
    TransformedObjective,
    delta_k,
    plain_objective,
    residual_from_sync,
)


def sphere_spec():
    return ObjectiveSpec(
        dimension=2,
        public_part=lambda x: float(np.dot(x, x)),
        private_part=lambda x: float(x[0]),
        name="sphere+lin",
    )


class TestSpec:
    def test_raw_splits_public_private(self):
        f, h = sphere_spec().raw(np.array([1.0, 2.0]))
        assert f == 5.0 and h == 1.0

    def test_dimension_validation(self):
        with pytest.raises(ParameterError):
            ObjectiveSpec(dimension=0, public_part=lambda x: 0.0,
                          private_part=lambda x: 0.0)

    def test_plain_objective_has_zero_private_part(self):
        spec = plain_objective(lambda x: float(x[0]) ** 2, 1)
        f, h = spec.raw(np.array([3.0]))
        assert f == 9.0 and h == 0.0


class TestCachingAndNf:
    def test_cache_hits_are_free(self):
        obj = TransformedObjective(sphere_spec(), TransformSchedule.identity())
        pts = [np.array([0.0, 0.0]), np.array([1.0, 0.0])]
        obj.evaluate_batch(pts, 1)
        assert obj.nf == 2
        obj.evaluate_batch(pts, 2)
        assert obj.nf == 2
        obj.evaluate_batch(pts + [np.array([0.0, 1.0])], 3)
        assert obj.nf == 3

    def test_iteration_index_cannot_go_backwards(self):
        obj = TransformedObjective(sphere_spec(), TransformSchedule.identity())
        obj.evaluate_batch([np.array([0.0, 0.0])], 3)
        with pytest.raises(ProtocolError):
            obj.evaluate_batch([np.array([1.0, 0.0])], 2)

    def test_iteration_index_must_be_positive(self):
        obj = TransformedObjective(sphere_spec(), TransformSchedule.identity())
        with pytest.raises(ProtocolError):
            obj.evaluate_batch([np.array([0.0, 0.0])], 0)

    def test_shape_validation(self):
        obj = TransformedObjective(sphere_spec(), TransformSchedule.identity())
        with pytest.raises(ParameterError):
            obj.evaluate_batch([np.array([0.0, 0.0, 0.0])], 1)

    def test_non_finite_value_raises(self):
        spec = plain_objective(lambda x: math.inf, 1)
        obj = TransformedObjective(spec, TransformSchedule.identity())
        with pytest.raises(EvaluationError):
            obj.evaluate_batch([np.array([0.0])], 1)

    def test_raw_at_requires_prior_evaluation(self):
        obj = TransformedObjective(sphere_spec(), TransformSchedule.identity())
        with pytest.raises(ParameterError):
            obj.raw_at(np.array([2.0, 2.0]))
        obj.evaluate_batch([np.array([2.0, 2.0])], 1)
        assert obj.raw_at(np.array([2.0, 2.0])) == pytest.approx(10.0)


class TestTransformKinds:
    def test_identity(self):
        obj = TransformedObjective(sphere_spec(), TransformSchedule.identity())
        vals = obj.evaluate_batch([np.array([1.0, 2.0])], 1)
        assert vals[0] == pytest.approx(6.0)

    def test_translation_adds_schedule_value(self):
        sched = TransformSchedule.translation(lambda k: 10.0 * k)
        obj = TransformedObjective(sphere_spec(), sched)
        v1 = obj.evaluate_batch([np.array([1.0, 2.0])], 1)[0]
        v2 = obj.evaluate_batch([np.array([1.0, 2.0])], 2)[0]
        assert v1 == pytest.approx(16.0)
        assert v2 == pytest.approx(26.0)

    def test_linear_scales_then_shifts(self):
        sched = TransformSchedule.linear(lambda k: 2.0, lambda k: 1.0)
        obj = TransformedObjective(sphere_spec(), sched)
        assert obj.evaluate_batch([np.array([1.0, 2.0])], 1)[0] == pytest.approx(13.0)

    def test_linear_rejects_nonpositive_scale(self):
        sched = TransformSchedule.linear(lambda k: 0.0)
        obj = TransformedObjective(sphere_spec(), sched)
        with pytest.raises(ParameterError):
            obj.evaluate_batch([np.array([0.0, 0.0])], 1)

    def test_additive_noise_shared_within_iteration(self):
        lp = privacy.LaplaceParams(scale_schedule=lambda k: 1.0, C=2.0)
        obj = TransformedObjective(sphere_spec(), TransformSchedule.additive(lp, seed=3))
        pts = [np.array([0.0, 0.0]), np.array([1.0, 0.0])]
        vals = obj.evaluate_batch(pts, 1)
        # same eta on both points: difference equals true F difference
        assert vals[1] - vals[0] == pytest.approx(2.0, abs=1e-12)
        # and the offset matches the iteration-1 shared draw
        eta = privacy.iteration_draws(3, 1, laplace=lp).eta
        assert vals[0] == pytest.approx(2.0 * eta, abs=1e-12)

    def test_additive_noise_changes_across_iterations(self):
        lp = privacy.LaplaceParams(scale_schedule=lambda k: 1.0)
        obj = TransformedObjective(sphere_spec(), TransformSchedule.additive(lp, seed=3))
        pt = [np.array([1.0, 1.0])]
        v1 = obj.evaluate_batch(pt, 1)[0]
        v2 = obj.evaluate_batch(pt, 2)[0]
        assert v1 != v2
        assert obj.nf == 1

    def test_multiplicative_mechanism(self):
        up = privacy.UniformParams(halfwidth_schedule=lambda k: 0.5)
        obj = TransformedObjective(
            sphere_spec(), TransformSchedule.multiplicative(up, seed=5)
        )
        x = np.array([1.0, 2.0])
        val = obj.evaluate_batch([x], 1)[0]
        gamma = privacy.iteration_draws(5, 1, uniform=up, prob_additive=0.0).gamma
        assert val == pytest.approx(6.0 + gamma * 6.0, abs=1e-12)

    def test_mixed_mechanism_tags_new_points(self):
        lp = privacy.LaplaceParams(scale_schedule=lambda k: 1.0)
        up = privacy.UniformParams(halfwidth_schedule=lambda k: 0.5)
        mix = privacy.MixParams(laplace=lp, uniform=up, prob_additive=0.5, rng_seed=7)
        obj = TransformedObjective(sphere_spec(), TransformSchedule.mixed(mix))
        for k in range(1, 9):
            obj.evaluate_batch([np.array([float(k), 0.0])], k)
        tags = set(obj.ledger.new_point_mechanisms)
        assert tags <= {"A", "B"} and len(obj.ledger.new_point_mechanisms) == 8

    def test_custom_table_overrides(self):
        sched = TransformSchedule.custom_table()
        x = np.array([1.0, 2.0])
        sched.set_override(2, [x], [99.0])
        obj = TransformedObjective(sphere_spec(), sched)
        assert obj.evaluate_batch([x], 1)[0] == pytest.approx(6.0)
        assert obj.evaluate_batch([x], 2)[0] == pytest.approx(99.0)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ParameterError):
            TransformSchedule(kind="rot13")


class TestAudit:
    def test_audit_rows_and_csv(self, tmp_path):
        lp = privacy.LaplaceParams(scale_schedule=lambda k: 1.0)
        obj = TransformedObjective(
            sphere_spec(), TransformSchedule.additive(lp, seed=1), audit=True
        )
        obj.evaluate_batch([np.array([0.0, 0.0]), np.array([1.0, 0.0])], 1)
        assert len(obj.ledger.audit_rows) == 2
        assert 1 in obj.ledger.noise_log
        path = tmp_path / "audit.csv"
        obj.export_audit_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "k,point_id,f,h,noise,F_k"
        assert len(lines) == 3

    def test_no_noise_log_without_audit(self):
        lp = privacy.LaplaceParams(scale_schedule=lambda k: 1.0)
        obj = TransformedObjective(sphere_spec(), TransformSchedule.additive(lp))
        obj.evaluate_batch([np.array([0.0, 0.0])], 1)
        assert obj.ledger.noise_log == {}


class TestResiduals:
    def test_delta_k_definition(self):
        assert delta_k(5.0, 3.0, 4.0, 3.5) == pytest.approx(1.5)

    def test_delta_k_rejects_non_finite(self):
        with pytest.raises(EvaluationError):
            delta_k(math.nan, 0.0, 0.0, 0.0)

    def test_residual_from_sync_components(self):
        old = np.array([1.0, 2.0, 3.0])
        new = np.array([1.5, 2.0, 3.25])
        r = residual_from_sync(old, new, f_new_at_xnew=4.0, q_at_xnew=3.0,
                               q_at_xopt=1.0, t=1, opt_index=0)
        # off-t entries: change of transformed values between iterations
        assert r[0] == pytest.approx(0.5)
        assert r[2] == pytest.approx(0.25)
        # t entry: (F_new(x_new) - F_old(x_opt)) - (Q(x_new) - Q(x_opt))
        assert r[1] == pytest.approx((4.0 - 1.0) - (3.0 - 1.0))

    def test_identity_residual_is_zero_off_t(self):
        # with no transformation, retained points contribute exactly zero
        obj = TransformedObjective(sphere_spec(), TransformSchedule.identity())
        pts = [np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])]
        old = obj.evaluate_batch(pts, 1)
        new = obj.evaluate_batch(pts, 2)
        np.testing.assert_array_equal(old, new)
