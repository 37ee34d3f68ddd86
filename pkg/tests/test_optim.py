import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from samlab.errors import ConfigError
from samlab.models import MLP, Batch, CountingModel, GraphFunction, ModelSpec, init_params, linear, quadratic
from samlab.optim import (
    AscentConfig,
    OptimizerConfig,
    ascent_multi,
    ascent_single,
    msam_direction,
    msam_step,
    parse_ratio,
    ratio_radii,
    sam_direction,
    sam_step,
    sgd_step,
    step,
)

from oracles import naive_ascent_endpoint


def _bowl():
    # nonquadratic so multi-step ascent actually bends
    return GraphFunction(
        lambda g, w: g.add(g.sum(g.square(g.square(w))), g.sum(g.sin(g.scale(w, 2.0)))), 3, name="bowl"
    )


def _net():
    spec = ModelSpec((2, 5, 2), "tanh", "softmax_ce", init_seed=3)
    x = np.array([[0.5, -1.0], [1.0, 0.2], [-0.3, 0.7], [0.9, 0.9]])
    return MLP(spec), init_params(spec), Batch(x, np.eye(2)[[0, 1, 1, 0]])


points = arrays(np.float64, 3, elements=st.floats(-1.5, 1.5)).filter(lambda w: np.linalg.norm(w) > 0.1)


@given(w=points, rho=st.floats(0.01, 2.0), n=st.integers(1, 8))
def test_ascent_matches_reference_and_is_normalized(w, rho, n):
    model = _bowl()
    traj = ascent_multi(model, w, None, AscentConfig(rho=rho, steps=n))
    if traj.degenerate:
        return
    endpoint, direction = naive_ascent_endpoint(lambda p: model.loss_and_grad(p)[1], w, [rho / n] * n)
    np.testing.assert_allclose(traj.intermediates[-1], endpoint, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(traj.direction, direction, rtol=1e-9, atol=1e-9)
    assert abs(np.linalg.norm(traj.direction) - 1.0) <= 1e-12
    assert abs(np.linalg.norm(traj.final_perturbed - w) - rho) <= 1e-9
    assert len(traj.intermediates) == n


def test_single_step_equals_multi_with_one_step():
    model, w, batch = _net()
    a = ascent_single(model, w, batch, 0.2)
    b = ascent_multi(model, w, batch, AscentConfig(rho=0.2, steps=1))
    np.testing.assert_array_equal(a.final_perturbed, b.final_perturbed)
    np.testing.assert_array_equal(a.direction, b.direction)


def test_ascent_does_not_mutate_params():
    model, w, batch = _net()
    before = w.copy()
    ascent_multi(model, w, batch, AscentConfig(rho=0.3, steps=4))
    step(model, w, batch, OptimizerConfig("msam", 0.1, AscentConfig(rho=0.3, steps=4)))
    np.testing.assert_array_equal(w, before)


def test_ascent_without_renormalization_keeps_raw_endpoint():
    model = _bowl()
    w = np.array([0.4, -0.2, 0.9])
    traj = ascent_multi(model, w, None, AscentConfig(rho=0.5, steps=3, renormalize_final=False))
    np.testing.assert_array_equal(traj.final_perturbed, traj.intermediates[-1])


def test_ratio_radii_sum_to_rho():
    assert ratio_radii(0.1, [1, 2]) == pytest.approx([0.1 / 3, 0.2 / 3], abs=1e-15)
    assert parse_ratio("1:2") == [1.0, 2.0]
    cfg = AscentConfig.from_ratio(0.3, [2, 1, 1])
    assert sum(cfg.step_radii) == pytest.approx(0.3, abs=1e-15)
    with pytest.raises(ConfigError):
        ratio_radii(0.1, [0, 0])
    with pytest.raises(ConfigError):
        parse_ratio("1:x")


@pytest.mark.parametrize("kwargs", [
    {"rho": -0.1},
    {"rho": 0.1, "steps": 0},
    {"rho": 0.1, "steps": 2, "step_radii": (0.1,)},
    {"rho": 0.1, "steps": 1, "step_radii": (-0.1,)},
])
def test_ascent_config_rejects_invalid(kwargs):
    with pytest.raises(ConfigError):
        AscentConfig(**kwargs)


@pytest.mark.parametrize("weights", [(0.5,), (0.7, 0.7), (1.5, -0.5)])
def test_msam_weights_validated(weights):
    with pytest.raises(ConfigError):
        OptimizerConfig("msam", 0.1, AscentConfig(rho=0.1, steps=2), msam_weights=weights)


def test_unknown_kind_and_bad_lr():
    with pytest.raises(ConfigError):
        OptimizerConfig("adam", 0.1)
    with pytest.raises(ConfigError):
        OptimizerConfig("sgd", 0.0)


def test_degenerate_at_stationary_point():
    model = quadratic(np.diag([1.0, 2.0]))
    traj = ascent_multi(model, np.zeros(2), None, AscentConfig(rho=0.5, steps=3))
    assert traj.degenerate
    assert not traj.direction.any()
    np.testing.assert_array_equal(traj.final_perturbed, np.zeros(2))
    # degenerate ascent falls back to the plain gradient (zero here)
    cfg = OptimizerConfig("sam", 0.1, AscentConfig(rho=0.5, steps=3))
    assert not sam_direction(model, np.zeros(2), None, cfg).any()


def test_ascent_stops_when_an_intermediate_gradient_vanishes():
    # -0.5 * (x - 1)^2: from 0, a step of radius 1 lands exactly on the maximum
    model = GraphFunction(lambda g, w: g.scale(g.square(g.shift(g.index(w, 0), -1.0)), -0.5), 1)
    cfg = OptimizerConfig("msam", 0.1, AscentConfig(rho=2.0, steps=2))
    traj = ascent_multi(model, np.zeros(1), None, cfg.ascent, endpoint_grad=True)
    assert traj.stopped_early and traj.steps_taken == 1
    assert traj.endpoint_grad.tolist() == [0.0]
    assert msam_direction(model, np.zeros(1), None, cfg).tolist() == [0.0]


def test_msam_is_weighted_average_of_raw_point_gradients():
    model = _bowl()
    w = np.array([0.4, -0.7, 0.2])
    cfg = OptimizerConfig("msam", 0.1, AscentConfig(rho=0.6, steps=3), msam_weights=(0.2, 0.3, 0.5))
    traj = ascent_multi(model, w, None, cfg.ascent)
    expected = sum(c * model.loss_and_grad(p)[1] for c, p in zip((0.2, 0.3, 0.5), traj.intermediates))
    np.testing.assert_allclose(msam_direction(model, w, None, cfg), expected, rtol=1e-13, atol=1e-15)


def test_sam_descends_along_gradient_at_perturbed_point():
    model = _bowl()
    w = np.array([0.4, -0.7, 0.2])
    cfg = OptimizerConfig("sam", 0.1, AscentConfig(rho=0.6, steps=3))
    traj = ascent_multi(model, w, None, cfg.ascent)
    np.testing.assert_array_equal(sam_direction(model, w, None, cfg), model.loss_and_grad(traj.final_perturbed)[1])


def test_msam1_bit_identical_to_sam1():
    model, w, batch = _net()
    asc = AscentConfig(rho=0.25, steps=1)
    a = sam_step(model, w, batch, OptimizerConfig("sam", 0.1, asc))
    b = msam_step(model, w, batch, OptimizerConfig("msam", 0.1, asc))
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("kind", ["sam", "msam"])
def test_zero_rho_is_sgd(kind):
    model, w, batch = _net()
    a = sgd_step(model, w, batch, 0.1)
    b = step(model, w, batch, OptimizerConfig(kind, 0.1, AscentConfig(rho=0.0, steps=3)))
    np.testing.assert_array_equal(a, b)


def test_step_kind_checks():
    model, w, batch = _net()
    with pytest.raises(ConfigError):
        sam_step(model, w, batch, OptimizerConfig("msam", 0.1, AscentConfig(rho=0.1)))
    with pytest.raises(ConfigError):
        msam_step(model, w, batch, OptimizerConfig("sam", 0.1, AscentConfig(rho=0.1)))


@pytest.mark.parametrize("n", [1, 2, 3, 5])
@pytest.mark.parametrize("kind", ["sam", "msam"])
def test_gradient_evaluations_per_step(kind, n):
    # N ascent gradients plus one more: at the perturbed point (SAM) or at p_N (MSAM)
    model, w, batch = _net()
    counted = CountingModel(model)
    step(counted, w, batch, OptimizerConfig(kind, 0.1, AscentConfig(rho=0.2, steps=n)))
    assert counted.grad_evals == n + 1
    assert counted.loss_evals == 0
    assert counted.distinct_batches == 1


def test_linear_loss_collapse():
    model = linear([0.3, -1.2, 0.5])
    w = np.array([1.0, 2.0, -1.0])
    v1 = ascent_multi(model, w, None, AscentConfig(rho=0.4, steps=1)).direction
    for n in range(2, 11):
        vn = ascent_multi(model, w, None, AscentConfig(rho=0.4, steps=n)).direction
        assert np.max(np.abs(vn - v1)) <= 1e-12


def test_labels():
    assert OptimizerConfig("sgd", 0.1).label == "SGD"
    assert OptimizerConfig("msam", 0.1, AscentConfig(rho=0.1, steps=2)).label == "MSAM-2"
