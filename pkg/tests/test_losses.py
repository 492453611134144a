import numpy as np
import pytest

from visemefit.camera import Pose, identity_pose, project
from visemefit.errors import DataError, NumericError
from visemefit.fitting import FitConfig
from visemefit.guidance import GuidanceSets
from visemefit.images import bilinear_sample
from visemefit.losses import (
    FrameProblem,
    FrameState,
    grad_total,
    loss_act,
    loss_diff,
    loss_flow,
    loss_lmk,
    loss_range,
    loss_rgb,
    loss_sup,
    total_loss,
)
from visemefit.observations import FrameObservation
from visemefit.rig import blend_vertices

from conftest import INTR, make_rig, random_pose


def test_loss_lmk_hand_value(tiny_rig, cam_pose):
    w = np.zeros(tiny_rig.viseme_count)
    proj = project(tiny_rig.neutral.vertices, cam_pose)
    # two landmarks offset by known pixel residuals
    lms = [
        (0, (proj[0, 0] + 3.0, proj[0, 1]), 2.0),  # r^2 = 9, beta 2
        (1, (proj[1, 0], proj[1, 1] - 4.0), 1.0),  # r^2 = 16, beta 1
    ]
    # beta-weighted sum over the landmark count
    expect = (2.0 * 9.0 + 1.0 * 16.0) / 2.0
    assert abs(loss_lmk(cam_pose, w, tiny_rig, lms) - expect) < 1e-9


def test_loss_lmk_zero_at_exact_projection(tiny_rig, cam_pose, rng):
    w = rng.uniform(0, 1, tiny_rig.viseme_count)
    proj = project(blend_vertices(tiny_rig, w), cam_pose)
    lms = [(i, tuple(proj[i]), 1.0) for i in range(4)]
    assert loss_lmk(cam_pose, w, tiny_rig, lms) < 1e-18


def test_loss_lmk_rejects(tiny_rig, cam_pose):
    with pytest.raises(DataError):
        loss_lmk(cam_pose, np.zeros(tiny_rig.viseme_count), tiny_rig, [])
    with pytest.raises(DataError):
        loss_lmk(cam_pose, np.zeros(tiny_rig.viseme_count), tiny_rig, [(0, (1.0, 1.0), 0.0)])
    with pytest.raises(DataError):
        # landmark id 99 is not bound
        loss_lmk(cam_pose, np.zeros(tiny_rig.viseme_count), tiny_rig, [(99, (1.0, 1.0), 1.0)])


def test_loss_rgb_matches_bilinear_oracle(tiny_rig, cam_pose, rng):
    img = rng.uniform(0, 1, (64, 64, 3))
    w = np.zeros(tiny_rig.viseme_count)
    got = loss_rgb(cam_pose, w, tiny_rig, img)
    proj = project(tiny_rig.neutral.vertices, cam_pose)
    vals = bilinear_sample(img, proj)
    expect = float(((vals - tiny_rig.neutral.colors) ** 2).sum() / len(proj))
    assert abs(got - expect) < 1e-12


def test_loss_rgb_zero_when_image_matches_colors(tiny_rig, cam_pose):
    # paint a constant image equal to a constant-color rig
    rig = tiny_rig
    img = np.full((64, 64, 3), 0.5)
    colors = np.full_like(rig.neutral.colors, 0.5)
    from visemefit.mesh import Mesh
    from visemefit.rig import Rig

    rig2 = Rig(
        neutral=Mesh(vertices=rig.neutral.vertices, triangles=rig.neutral.triangles, colors=colors),
        visemes=rig.visemes,
        viseme_labels=rig.viseme_labels,
    )
    assert loss_rgb(cam_pose, np.zeros(rig2.viseme_count), rig2, img) < 1e-18


def test_loss_rgb_rejects(tiny_rig, cam_pose):
    from visemefit.mesh import Mesh
    from visemefit.rig import Rig

    plain = Rig(
        neutral=Mesh(vertices=tiny_rig.neutral.vertices, triangles=tiny_rig.neutral.triangles),
        visemes=tuple(
            Mesh(vertices=m.vertices, triangles=m.triangles) for m in tiny_rig.visemes
        ),
        viseme_labels=tiny_rig.viseme_labels,
    )
    img = np.zeros((8, 8, 3))
    with pytest.raises(DataError):
        loss_rgb(cam_pose, np.zeros(plain.viseme_count), plain, img)
    with pytest.raises(DataError):
        loss_rgb(cam_pose, np.zeros(tiny_rig.viseme_count), tiny_rig, np.zeros((8, 8)))
    # everything projects outside a 2x2 image
    with pytest.raises(NumericError):
        loss_rgb(cam_pose, np.zeros(tiny_rig.viseme_count), tiny_rig, np.zeros((2, 2, 3)))


def test_guidance_losses_hand_values():
    w = np.array([0.5, 0.2, 0.1, 0.8])
    sets = GuidanceSets(suppress=frozenset({1, 2}), activate=frozenset({0, 3}))
    assert abs(loss_sup(w, sets) - (0.04 + 0.01) / 2.0) < 1e-12
    assert abs(loss_act(w, sets) - (-(0.25 + 0.64) / 2.0)) < 1e-12
    empty = GuidanceSets(suppress=frozenset(), activate=frozenset())
    assert loss_sup(w, empty) == 0.0
    assert loss_act(w, empty) == 0.0


def test_loss_flow_hand_value(tiny_rig, cam_pose):
    w_prev = np.zeros(tiny_rig.viseme_count)
    w_cur = np.zeros(tiny_rig.viseme_count)
    w_cur[0] = 0.5
    # displacement chosen so current frame misses the advected target
    prev_proj = project(blend_vertices(tiny_rig, w_prev), cam_pose)
    cur_proj = project(blend_vertices(tiny_rig, w_cur), cam_pose)
    vidx = np.array([0, 2, 5])
    disp = np.array([[1.0, 0.0], [0.0, 0.0], [-0.5, 2.0]])
    targets = prev_proj[vidx] + disp
    expect = float(((cur_proj[vidx] - targets) ** 2).sum() / 3)
    got = loss_flow(cam_pose, w_cur, cam_pose, w_prev, tiny_rig, (vidx, disp))
    assert abs(got - expect) < 1e-12
    # no previous frame or no correspondences: zero
    assert loss_flow(cam_pose, w_cur, None, None, tiny_rig, (vidx, disp)) == 0.0
    assert loss_flow(cam_pose, w_cur, cam_pose, w_prev, tiny_rig, (np.zeros(0, int), np.zeros((0, 2)))) == 0.0
    with pytest.raises(DataError):
        loss_flow(cam_pose, w_cur, cam_pose, w_prev, tiny_rig, (np.array([99]), np.zeros((1, 2))))


def test_loss_diff_and_range_hand_values():
    w = np.array([0.1, 0.4, 0.9])
    nb = np.array([0.2, 0.2, 0.9])
    assert abs(loss_diff(w, nb) - (0.01 + 0.04 + 0.0) / 3.0) < 1e-12
    assert loss_diff(w, None) == 0.0
    with pytest.raises(DataError):
        loss_diff(w, np.zeros(2))

    assert loss_range(np.array([0.0, 0.5, 1.0])) == 0.0
    # above: (0.2^2 + 0.1^2)/2, below: (0.3^2)/1
    got = loss_range(np.array([1.2, 1.1, -0.3, 0.5]))
    assert abs(got - ((0.04 + 0.01) / 2.0 + 0.09)) < 1e-12


def _full_setup(rng, with_flow=True):
    rig = make_rig(rng, n_verts=8, n_visemes=3)
    pose = random_pose(rng, scale=0.02)
    w = rng.uniform(0.0, 1.0, 3)
    img = rng.uniform(0, 1, (64, 64, 3))
    gt_proj = project(blend_vertices(rig, rng.uniform(0, 1, 3)), pose)
    obs = FrameObservation(
        landmark_ids=np.arange(8),
        landmark_points=gt_proj + rng.normal(0, 1, (8, 2)),
        landmark_betas=rng.uniform(1, 5, 8),
        image=img,
        flow_vertices=np.array([1, 3, 4]) if with_flow else None,
        flow_displacements=rng.normal(0, 2, (3, 2)) if with_flow else None,
    )
    guidance = GuidanceSets(suppress=frozenset({2}), activate=frozenset({0}))
    prev = FrameState(weights=rng.uniform(0, 1, 3), pose=random_pose(rng, scale=0.02))
    nb = rng.uniform(0, 1, 3)
    return rig, pose, w, obs, guidance, prev, nb


def test_total_loss_equals_sum_of_standalone_terms(rng):
    rig, pose, w, obs, guidance, prev, nb = _full_setup(rng)
    cfg = FitConfig()
    state = FrameState(weights=w, pose=pose)
    got = total_loss(rig, state, obs, guidance, cfg, prev_state=prev, neighbor_weights=nb)

    lw = cfg.loss_weights
    lms = list(zip(obs.landmark_ids, obs.landmark_points, obs.landmark_betas))
    expect = (
        lw[0] * loss_lmk(pose, w, rig, lms)
        + lw[1] * loss_rgb(pose, w, rig, obs.image)
        + lw[2] * loss_sup(w, guidance)
        + lw[3] * loss_act(w, guidance)
        + lw[4] * loss_flow(
            pose, w, prev.pose, prev.weights, rig,
            (obs.flow_vertices, obs.flow_displacements),
        )
        + lw[5] * loss_diff(w, nb)
        + lw[6] * loss_range(w)
    )
    assert abs(got - expect) < 1e-9


def test_total_loss_skips_absent_terms(rng):
    rig, pose, w, obs, guidance, prev, nb = _full_setup(rng, with_flow=False)
    cfg = FitConfig()
    bare = FrameObservation(
        landmark_ids=obs.landmark_ids,
        landmark_points=obs.landmark_points,
        landmark_betas=obs.landmark_betas,
    )
    state = FrameState(weights=w, pose=pose)
    got = total_loss(rig, state, bare, None, cfg)
    lms = list(zip(obs.landmark_ids, obs.landmark_points, obs.landmark_betas))
    expect = cfg.loss_weights[0] * loss_lmk(pose, w, rig, lms) + cfg.loss_weights[6] * loss_range(w)
    assert abs(got - expect) < 1e-9


def test_gradient_matches_finite_differences(rng):
    rig, pose, w, obs, guidance, prev, nb = _full_setup(rng)
    cfg = FitConfig()
    state = FrameState(weights=w, pose=pose)
    g = grad_total(rig, state, obs, guidance, cfg, prev_state=prev, neighbor_weights=nb)

    h = 1e-6

    def value(wv, q, t):
        st = FrameState(weights=wv, pose=Pose(rotation=q, translation=t, intrinsics=INTR))
        return total_loss(rig, st, obs, guidance, cfg, prev_state=prev, neighbor_weights=nb)

    q0, t0 = pose.rotation, pose.translation
    for i in range(len(w)):
        e = np.zeros_like(w)
        e[i] = h
        fd = (value(w + e, q0, t0) - value(w - e, q0, t0)) / (2 * h)
        assert abs(fd - g.weights[i]) < 1e-3 * max(1.0, abs(fd))
    for i in range(4):
        e = np.zeros(4)
        e[i] = h
        fd = (value(w, q0 + e, t0) - value(w, q0 - e, t0)) / (2 * h)
        assert abs(fd - g.rotation[i]) < 1e-3 * max(1.0, abs(fd))
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        fd = (value(w, q0, t0 + e) - value(w, q0, t0 - e)) / (2 * h)
        assert abs(fd - g.translation[i]) < 1e-3 * max(1.0, abs(fd))


def test_frame_problem_skips_unbound_landmarks(rng, cam_pose):
    rig = make_rig(rng)
    obs = FrameObservation(
        landmark_ids=np.array([0, 42]),  # 42 unbound
        landmark_points=np.array([[30.0, 30.0], [10.0, 10.0]]),
        landmark_betas=np.array([1.0, 1.0]),
    )
    prob = FrameProblem.from_observation(
        rig, FitConfig().loss_weights, None, INTR, obs
    )
    assert prob.lm_vidx is not None and len(prob.lm_vidx) == 1


def test_behind_camera_projection_raises(tiny_rig):
    w = np.zeros(tiny_rig.viseme_count)
    behind = Pose(
        rotation=np.array([0.0, 0.0, 0.0, 1.0]),
        translation=np.array([0.0, 0.0, -5.0]),
        intrinsics=INTR,
    )
    with pytest.raises(NumericError):
        loss_lmk(behind, w, tiny_rig, [(0, (1.0, 1.0), 1.0)])
