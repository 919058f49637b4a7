import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import central_diff, random_q
from reactgrasp.geometry import (
    ENVIRONMENT, TARGET, CollisionPairSet, HalfSpace, PointCloud, SdfObject, Superellipsoid,
    build_collision_pairs, clearance_values, gamma, load_point_cloud, object_distance_stack, save_point_cloud,
    sdf_eval,
)
from reactgrasp.kinematics import CollisionSphere, Joint, RobotModel, forward_kinematics, make_transform, rpy_to_matrix
from reactgrasp.robots import default_self_pairs
from reactgrasp.scenes import Bowl, table


def pose(xyz, rpy=(0, 0, 0)):
    return make_transform(rpy_to_matrix(rpy), xyz)


def two_link_model():
    """Two prismatic-free revolute links along x with one sphere each."""
    z = np.array([0.0, 0.0, 1.0])
    joints = [Joint(z, np.eye(4), -1, "j0"), Joint(z, make_transform(np.eye(3), (0.2, 0, 0)), 0, "j1")]
    spheres = [CollisionSphere(-1, np.array([0.0, 0.2, 0.1]), 0.05), CollisionSphere(1, np.zeros(3), 0.05)]
    return RobotModel(joints, [], spheres, [], -np.pi * np.ones(2), np.pi * np.ones(2), -np.ones(2), np.ones(2))


# -- shapes ------------------------------------------------------------------


def test_unit_sphere_superellipsoid():
    r = sdf_eval(SdfObject(Superellipsoid(1, 1, 1, 1, 1)), [2.0, 0, 0])
    assert r.value == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(r.gradient, [1, 0, 0])


def test_sphere_superellipsoid_is_exact(rng):
    obj = SdfObject(Superellipsoid(0.3, 0.3, 0.3, 1, 1), pose([0.1, -0.2, 0.4], (0.3, 0.2, 0.1)))
    x = rng.normal(size=(500, 3))
    v, g = obj.evaluate(x)
    assert np.allclose(v, np.linalg.norm(x - [0.1, -0.2, 0.4], axis=1) - 0.3, atol=1e-12)
    assert np.allclose(np.linalg.norm(g, axis=1), 1.0)


def test_superellipsoid_sign_and_surface(rng):
    s = Superellipsoid(0.1, 0.05, 0.2, 0.5, 1.5)
    assert s.local_eval(np.zeros((1, 3)))[0][0] <= 0
    assert s.local_eval(np.array([[0.0, 0.0, 0.1]]))[0][0] < 0
    assert s.local_eval(np.array([[0.0, 0.0, 0.2]]))[0][0] == pytest.approx(0.0, abs=1e-15)
    assert s.local_eval(np.array([[0.3, 0.0, 0.0]]))[0][0] > 0


def test_center_point_is_inside():
    s = Superellipsoid(0.1, 0.05, 0.2, 0.5, 1.5)
    assert s.local_eval(np.zeros((1, 3)))[0][0] == pytest.approx(-0.05)
    assert Superellipsoid(0.3, 0.3, 0.3).local_eval(np.zeros((1, 3)))[0][0] == pytest.approx(-0.3)


def test_single_point_cloud():
    r = sdf_eval(SdfObject(PointCloud([[0.0, 0, 0]])), [0, 0, 3.0])
    assert r.value == 3.0
    assert np.allclose(r.gradient, [0, 0, 1])


def test_half_space():
    obj = SdfObject(HalfSpace((0.0, 0.0, 1.0), 0.1), role=ENVIRONMENT)
    r = sdf_eval(obj, [0.3, 2.0, 0.4])
    assert r.value == pytest.approx(0.3)
    assert np.allclose(r.gradient, [0, 0, 1])


def test_cloud_matches_linear_scan(rng):
    """Spatial index agrees with an exhaustive scan, down to the argmin point."""
    pts = Bowl().cloud(512) + [0.5, 0.0, 0.0]
    cloud = PointCloud(pts)
    q = rng.uniform([0.3, -0.2, -0.1], [0.7, 0.2, 0.25], size=(10_000, 3))
    d, idx = cloud.nearest(q)
    full = np.linalg.norm(q[:, None, :] - pts[None, :, :], axis=2)
    assert np.allclose(d, full.min(axis=1), atol=1e-9)
    assert np.array_equal(idx, full.argmin(axis=1))


def test_cutoff_does_not_change_near_values(rng):
    shapes = [Superellipsoid(0.05, 0.08, 0.03, 0.3, 0.7), PointCloud(Bowl().cloud(300)), HalfSpace((0, 0, 1.0))]
    x = rng.uniform(-0.3, 0.3, size=(2000, 3))
    for s in shapes:
        obj = SdfObject(s, pose([0.02, 0.01, 0.0], (0.1, 0.0, 0.3)))
        v, g = obj.evaluate(x)
        vc, gc = obj.evaluate(x, cutoff=0.1)
        near = v <= 0.1
        assert np.array_equal(v[near], vc[near]) and np.array_equal(g[near], gc[near])
        # anything skipped really is beyond the cutoff
        assert np.all(v[~np.isfinite(vc)] > 0.1)


def test_values_only_path_matches_evaluate(rng):
    shapes = [Superellipsoid(0.05, 0.08, 0.03, 0.3, 0.7), PointCloud(Bowl().cloud(300)), HalfSpace((0, 0, 1.0))]
    x = rng.uniform(-0.3, 0.3, size=(500, 3))
    for s in shapes:
        obj = SdfObject(s, pose([0.02, 0.01, 0.0], (0.1, 0.0, 0.3)))
        assert np.allclose(obj.values(x), obj.evaluate(x)[0], rtol=0, atol=1e-14)


def test_superellipsoid_gradient_matches_fd(rng):
    worst = 0.0
    for _ in range(1000):
        a, b, c = rng.uniform(0.02, 0.2, 3)
        e1, e2 = rng.uniform(0.2, 2.0, 2)
        obj = SdfObject(Superellipsoid(a, b, c, e1, e2), pose(rng.normal(size=3) * 0.1, rng.uniform(-3, 3, 3)))
        local = rng.normal(size=3) * 0.2
        if np.min(np.abs(local)) < 1e-3:  # the exponent switch on coordinate planes
            continue
        x = obj.pose[:3, :3] @ local + obj.pose[:3, 3]
        _, g = obj.evaluate(x)
        fd = central_diff(lambda p: obj.evaluate(p)[0], x)[0]
        worst = max(worst, np.abs(g[0] - fd).max() / max(1.0, np.abs(fd).max()))
    assert worst < 1e-4


def test_point_cloud_gradient_is_unit_and_matches_fd(rng):
    pts = Bowl().cloud(512)
    obj = SdfObject(PointCloud(pts), pose([0.5, 0, 0], (0, 0, 0.7)))
    checked = 0
    for _ in range(1000):
        x = obj.pose[:3, 3] + rng.uniform(-0.15, 0.15, 3) + [0, 0, 0.05]
        local = (x - obj.pose[:3, 3]) @ obj.pose[:3, :3]
        d2 = np.sort(np.linalg.norm(pts - local, axis=1))[:2]
        if d2[1] - d2[0] < 1e-3:  # nearest-point switching locus
            continue
        _, g = obj.evaluate(x)
        assert np.linalg.norm(g[0]) == pytest.approx(1.0, abs=1e-12)
        fd = central_diff(lambda p: obj.evaluate(p)[0], x)[0]
        assert np.abs(g[0] - fd).max() < 1e-4
        checked += 1
    assert checked > 300


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 0.3), st.floats(0.01, 0.3), st.floats(0.01, 0.3), st.floats(0.1, 2.0), st.floats(0.1, 2.0),
       st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_superellipsoid_value_is_continuous(a, b, c, e1, e2, p):
    s = Superellipsoid(a, b, c, e1, e2)
    p = np.array([p])
    if np.linalg.norm(p) < 1e-3:  # the radial value is direction dependent at the center
        return
    v0, _ = s.local_eval(p)
    v1, _ = s.local_eval(p + 1e-7)
    assert np.isfinite(v0[0]) and abs(v1[0] - v0[0]) < 1e-5


def test_bad_shapes_are_rejected():
    with pytest.raises(ValueError):
        Superellipsoid(0.0, 1, 1)
    with pytest.raises(ValueError):
        Superellipsoid(1, 1, 1, 2.5, 1)
    with pytest.raises(ValueError):
        PointCloud(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        HalfSpace((0, 0, 2.0))
    with pytest.raises(ValueError):
        SdfObject(HalfSpace((0, 0, 1.0)), role="furniture")


def test_point_cloud_files_round_trip(tmp_path, rng):
    pts = rng.normal(size=(50, 3))
    for name in ("c.csv", "c.bin"):
        save_point_cloud(pts, tmp_path / name)
        back = load_point_cloud(tmp_path / name)
        assert np.allclose(back, pts, atol=1e-6 if name.endswith("bin") else 1e-8)


# -- distance stacks -----------------------------------------------------------


def test_sphere_pair_row_value():
    model = two_link_model()
    # put the moving sphere 0.2 m from the fixed one
    q = np.array([np.pi / 2, 0.0])  # moving sphere at (0, 0.2, 0)
    kin = forward_kinematics(model, q)
    pairs = CollisionPairSet(np.array([[0, 1]]), np.zeros((0, 2), dtype=int))
    st_ = gamma(model, kin, pairs, [])
    d = np.linalg.norm(kin.sphere_centers[0] - kin.sphere_centers[1])
    assert st_.values[0] == pytest.approx(d - 0.1)
    kin2 = forward_kinematics(model, np.array([0.0, 0.0]))
    kin2.sphere_centers[1] = kin2.sphere_centers[0] + [0.2, 0, 0]
    assert gamma(model, kin2, pairs, []).values[0] == pytest.approx(0.10)


def test_table_row_is_z_row_of_point_jacobian(robot, rng):
    env = [table()]
    pairs = build_collision_pairs(robot, [], env)
    q = random_q(robot, rng)
    kin = forward_kinematics(robot, q)
    st_ = gamma(robot, kin, pairs, env)
    from reactgrasp.kinematics import point_jacobian
    for row, s in enumerate(st_.spheres):
        assert st_.values[row] == pytest.approx(kin.sphere_centers[s][2] - robot.sphere_radii[s])
        assert np.allclose(st_.jacobian[row], point_jacobian(robot, q, s, kin)[2])


def test_same_link_pairs_are_rejected(robot):
    par = robot._sphere_parent
    a = next(i for i in range(len(par)) if list(par).count(par[i]) > 1)
    b = next(j for j in range(len(par)) if j != a and par[j] == par[a])
    with pytest.raises(ValueError):
        build_collision_pairs(robot, [(a, b)], [])


def test_pair_count_matches_gamma_rows(robot, rng):
    env = [table()]
    pairs = build_collision_pairs(robot, default_self_pairs(robot), env)
    st_ = gamma(robot, forward_kinematics(robot, random_q(robot, rng)), pairs, env)
    assert len(st_) == pairs.k


def test_coincident_spheres_flag_degeneracy():
    model = two_link_model()
    kin = forward_kinematics(model, np.zeros(2))
    kin.sphere_centers[1] = kin.sphere_centers[0]
    st_ = gamma(model, kin, CollisionPairSet(np.array([[0, 1]]), np.zeros((0, 2), dtype=int)), [])
    assert st_.degenerate and np.all(st_.jacobian == 0)


def test_gamma_jacobian_matches_fd(robot, rng):
    env = [table(), SdfObject(Superellipsoid(0.1, 0.1, 0.05, 0.5, 0.5), pose([0.4, 0.1, 0.3]), ENVIRONMENT)]
    pairs = build_collision_pairs(robot, default_self_pairs(robot), env)
    worst = 0.0
    for _ in range(100):
        q = random_q(robot, rng)
        st_ = gamma(robot, forward_kinematics(robot, q), pairs, env)
        fd = central_diff(lambda v: gamma(robot, forward_kinematics(robot, v), pairs, env).values, q)
        worst = max(worst, np.abs(st_.jacobian - fd).max() / max(1.0, np.abs(fd).max()))
    assert worst < 1e-4


def test_object_stack(robot, rng):
    q = random_q(robot, rng)
    kin = forward_kinematics(robot, q)
    assert len(object_distance_stack(robot, kin, [])) == 0
    obj = SdfObject(Superellipsoid(0.05, 0.05, 0.05, 0.4, 0.4), pose([0.5, 0.0, 0.2]), TARGET)
    st_ = object_distance_stack(robot, kin, [obj])
    s = st_.spheres[0]
    assert st_.values[0] == pytest.approx(sdf_eval(obj, kin.sphere_centers[s]).value - robot.sphere_radii[s])
    fd = central_diff(lambda v: object_distance_stack(robot, forward_kinematics(robot, v), [obj]).values, q)
    assert np.abs(st_.jacobian - fd).max() / max(1.0, np.abs(fd).max()) < 1e-4


def test_pruning_keeps_near_rows_unchanged(robot, rng):
    env = [table()]
    pairs = build_collision_pairs(robot, default_self_pairs(robot), env)
    kin = forward_kinematics(robot, robot.named_configurations["center_up"])
    full = gamma(robot, kin, pairs, env)
    cut = gamma(robot, kin, pairs, env, cutoff=0.15)
    assert len(cut) == int(np.sum(full.values <= 0.15))
    assert np.allclose(np.sort(cut.values), np.sort(full.values[full.values <= 0.15]))


def test_clearance_values_agree_with_stacks(robot, rng):
    env = [table()]
    obj = SdfObject(PointCloud(Bowl().cloud(400)), pose([0.5, 0, 0]), TARGET)
    pairs = build_collision_pairs(robot, default_self_pairs(robot), env)
    kin = forward_kinematics(robot, random_q(robot, rng))
    g, per = clearance_values(robot, kin, pairs, env, [obj])
    assert g == pytest.approx(gamma(robot, kin, pairs, env).values.min())
    assert per[0] == pytest.approx(object_distance_stack(robot, kin, [obj]).values.min())


def test_gamma_continuous_along_segments(robot, rng):
    env = [table()]
    pairs = build_collision_pairs(robot, default_self_pairs(robot), env)
    for _ in range(3):
        q0, q1 = random_q(robot, rng), random_q(robot, rng)
        steps = int(np.ceil(np.abs(q1 - q0).max() / 1e-4))
        steps = min(steps, 2000)  # a 2000-substep prefix of the segment
        dq = (q1 - q0) / np.ceil(np.abs(q1 - q0).max() / 1e-4)
        prev = None
        for k in range(steps):
            v = gamma(robot, forward_kinematics(robot, q0 + k * dq), pairs, env).values
            if prev is not None:
                assert np.abs(v - prev).max() < 1e-3
            prev = v
