import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phenoscan.calib import (
    CalibrationError,
    CornerObservations,
    DegenerateGeometryError,
    RigCalibration,
    TargetModel,
    axis_alignment,
    calibrate_mono,
    calibrate_rig,
    calibrate_stereo,
    camera_pose_at,
    derive_world_pose,
    estimate_axis,
    fit_circle,
    fit_orbit_plane,
    homography_dlt,
    load_calibration,
    read_corners,
    refine_all,
    save_calibration,
    target_zero_pose,
    write_corners,
)
from phenoscan.calib.io import CornerFileError
from phenoscan.calib.types import AxisEstimate
from phenoscan.geom import Pose, rodrigues, rot_y, rotation_angle
from phenoscan.synth.rig import RigSpec, render_corner_observations, truth_rig

TARGET = TargetModel(7, 10, 20.0)
SIZES = {0: (1024, 1024), 1: (1024, 1024)}


@pytest.fixture(scope="module")
def clean():
    return render_corner_observations(RigSpec(), TARGET)


@pytest.fixture(scope="module")
def noisy():
    return render_corner_observations(RigSpec(), TARGET, noise=0.2, seed=7)


def random_unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


# --- homography / mono -------------------------------------------------------


def test_homography_exact_on_projective_map():
    H = np.array([[1.2, 0.1, 30.0], [-0.05, 0.9, 12.0], [1e-4, 2e-4, 1.0]])
    src = TARGET.points[:, :2]
    d = np.column_stack([src, np.ones(len(src))]) @ H.T
    dst = d[:, :2] / d[:, 2:]
    np.testing.assert_allclose(homography_dlt(src, dst), H, rtol=1e-9, atol=1e-12)


def test_homography_collinear_is_degenerate():
    src = np.column_stack([np.arange(6.0), np.zeros(6)])
    with pytest.raises(DegenerateGeometryError):
        homography_dlt(src, src)


def test_mono_noiseless_recovers_intrinsics(clean):
    obs, truth = clean
    res = calibrate_mono(TARGET, obs.select(camera=0), SIZES[0])
    k, kt = res.intrinsics, truth.intrinsics[0]
    assert abs(k.f / kt.f - 1) < 1e-3
    assert res.rms < 1e-6
    np.testing.assert_allclose(k.params(), kt.params(), rtol=1e-7, atol=1e-8)


def test_mono_noisy_twelve_views(noisy):
    obs, truth = noisy
    sel = obs.select(camera=0)
    pans = sorted(set(zip(sel.tilt.tolist(), sel.pan.tolist())))[:12]
    keep = np.array([(j, i) in pans for j, i in zip(sel.tilt, sel.pan)])
    res = calibrate_mono(TARGET, sel.subset(keep), SIZES[0])
    assert res.n_views == 12
    assert abs(res.intrinsics.f / truth.intrinsics[0].f - 1) < 5e-3
    assert res.rms <= 0.3


def test_mono_poses_in_front(noisy):
    obs, _ = noisy
    res = calibrate_mono(TARGET, obs.select(camera=1), SIZES[1])
    for p in res.poses.values():
        assert np.all(p.apply(TARGET.points)[:, 2] > 0)


def test_mono_too_few_views(clean):
    obs, _ = clean
    sel = obs.select(camera=0, tilt=0)
    first = sorted(set(sel.pan.tolist()))[:2]
    with pytest.raises(DegenerateGeometryError):
        calibrate_mono(TARGET, sel.subset(np.isin(sel.pan, first)))


def test_mono_rejects_parallel_views():
    # pure translations of a fronto-parallel board constrain nothing
    K = np.array([[1000.0, 0, 500], [0, 1000, 500], [0, 0, 1]])
    rows = []
    for n, t in enumerate(([0, 0, 500], [20, 0, 600], [0, 30, 700], [-10, 5, 550])):
        X = TARGET.points + t
        uv = (X @ K.T)[:, :2] / X[:, 2:]
        for c, p in enumerate(uv):
            rows.append((0, 0, n, np.radians(10 * n), c, *p))
    a = np.array(rows)
    obs = CornerObservations(a[:, 0], a[:, 1], a[:, 2], a[:, 3], a[:, 4], a[:, 5:7])
    with pytest.raises(DegenerateGeometryError):
        calibrate_mono(TARGET, obs)


# --- stereo -------------------------------------------------------------------


def test_stereo_single_view_is_exact_composition():
    rng = np.random.default_rng(0)
    a = Pose.from_rotvec(rng.normal(size=3), rng.normal(size=3) * 100)
    b = Pose.from_rotvec(rng.normal(size=3), rng.normal(size=3) * 100)
    s = calibrate_stereo({3: a}, {3: b})
    assert s.pose.allclose(b.compose(a.inverse()), 1e-12, 1e-9)


def test_stereo_noiseless_tilt_pair(clean):
    obs, truth = clean
    ex = {}
    for node in [(0, 0), (0, 1)]:
        sel = obs.select(camera=node[0], tilt=node[1])
        tz = truth.target_zero_pose
        ex[node] = {
            int(i): truth.pose_for_view(node[0], node[1], int(i)).compose(tz) for i in np.unique(sel.pan)
        }
    s = calibrate_stereo(ex[(0, 0)], ex[(0, 1)])
    expect = truth.base_poses[(0, 1)].compose(truth.base_poses[(0, 0)].inverse())
    assert s.pose.allclose(expect, 1e-9, 1e-9)


def test_stereo_noisy_translation_error():
    rng = np.random.default_rng(1)
    rel = Pose.from_rotvec([0, 0.7, 0.05], [500.0, 20.0, 100.0])
    a, b = {}, {}
    for i in range(10):
        p = Pose.from_rotvec(rng.normal(scale=0.3, size=3), [0, 0, 600] + rng.normal(scale=30, size=3))
        a[i] = Pose.from_rotvec(p.rotvec + rng.normal(scale=1e-3, size=3), p.t + rng.normal(scale=0.3, size=3))
        q = rel.compose(p)
        b[i] = Pose.from_rotvec(q.rotvec + rng.normal(scale=1e-3, size=3), q.t + rng.normal(scale=0.3, size=3))
    s = calibrate_stereo(a, b)
    assert np.linalg.norm(s.pose.t - rel.t) < 1.0
    assert len(s.rot_spread) == 10


def test_stereo_no_shared_views():
    with pytest.raises(CalibrationError):
        calibrate_stereo({0: Pose()}, {1: Pose()})


# --- orbit plane / alignment / circle -------------------------------------------


def circle_points(n=12, y=5.0, r=1.0, arc=2 * np.pi):
    a = np.linspace(0, arc, n, endpoint=False)
    return np.column_stack([r * np.cos(a), np.full(n, y), r * np.sin(a)])


def test_plane_exact():
    n, c = fit_orbit_plane(circle_points())
    np.testing.assert_allclose(n, [0, 1, 0], atol=1e-12)
    assert abs(c[1] - 5) < 1e-12


def test_plane_noise():
    rng = np.random.default_rng(2)
    angs = []
    for _ in range(50):
        P = circle_points(36) + rng.normal(scale=1e-3, size=(36, 3))
        n, _ = fit_orbit_plane(P)
        angs.append(np.degrees(np.arccos(min(1.0, n[1]))))
    assert max(angs) < 0.1


def test_plane_three_points_is_cross_product():
    P = np.array([[0.0, 1, 0], [2, 1.5, 0], [0, 1.2, 3]])
    n, _ = fit_orbit_plane(P)
    cr = np.cross(P[1] - P[0], P[2] - P[0])
    cr /= np.linalg.norm(cr)
    cr *= np.sign(cr[1])
    np.testing.assert_allclose(n, cr, atol=1e-12)
    assert np.abs((P - P.mean(0)) @ n).max() < 1e-12


def test_plane_collinear():
    with pytest.raises(DegenerateGeometryError):
        fit_orbit_plane(np.outer(np.arange(5.0), [1, 2, 3]))


def test_alignment_cases():
    np.testing.assert_array_equal(axis_alignment([0, 1, 0]), np.zeros(3))
    rv = axis_alignment([1, 0, 0])
    assert abs(np.linalg.norm(rv) - np.pi / 2) < 1e-12
    np.testing.assert_allclose(rv / np.linalg.norm(rv), [0, 0, 1], atol=1e-12)
    rv = axis_alignment([0, -1, 0])
    np.testing.assert_allclose(rv, [np.pi, 0, 0])
    np.testing.assert_allclose(rodrigues(rv) @ [0, -1, 0], [0, 1, 0], atol=1e-12)


def test_alignment_property():
    rng = np.random.default_rng(3)
    for _ in range(500):
        n = random_unit(rng)
        np.testing.assert_allclose(rodrigues(axis_alignment(n)) @ n, [0, 1, 0], atol=1e-9)


def test_circle_symmetric():
    c, r = fit_circle([(1, 0), (0, 1), (-1, 0), (0, -1)])
    np.testing.assert_allclose(c, [0, 0], atol=1e-15)
    assert abs(r - 1) < 1e-15


def test_circle_quarter_arc():
    a = np.linspace(0.3, 0.3 + np.pi / 2, 9)
    P = np.column_stack([3 + 7 * np.cos(a), -2 + 7 * np.sin(a)])
    c, r = fit_circle(P)
    np.testing.assert_allclose(c, [3, -2], atol=1e-9)
    assert abs(r - 7) < 1e-9


def test_circle_noisy_arc():
    rng = np.random.default_rng(4)
    a = np.linspace(0, 2 * np.pi / 3, 40)
    errs = []
    for _ in range(50):
        P = np.column_stack([3 + 7 * np.cos(a), -2 + 7 * np.sin(a)]) + rng.normal(scale=0.01, size=(40, 2))
        c, _ = fit_circle(P)
        errs.append(np.linalg.norm(c - [3, -2]))
    assert max(errs) < 0.05


@settings(max_examples=100, deadline=None)
@given(st.floats(-np.pi, np.pi), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_circle_rigid_invariance(phi, tx, ty):
    a = np.linspace(0.1, 2.0, 10)
    P = np.column_stack([5 + 40 * np.cos(a), 1 + 40 * np.sin(a)])
    c0, r0 = fit_circle(P)
    R = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
    t = np.array([tx, ty])
    c1, r1 = fit_circle(P @ R.T + t)
    np.testing.assert_allclose(c1, R @ c0 + t, atol=1e-9)
    assert abs(r1 - r0) < 1e-9


def test_circle_collinear():
    with pytest.raises(DegenerateGeometryError):
        fit_circle([(0, 0), (1, 1), (2, 2), (3, 3)])


# --- axis / world pose ---------------------------------------------------------------


def partial_orbits(rng, n, o, fraction=1 / 3, n_corners=6, n_views=12):
    """Corner orbits rotating about axis n through o, seen over ``fraction`` of a turn."""
    u = np.cross(n, random_unit(rng))
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    start = rng.uniform(0, 2 * np.pi)
    ang = start + np.linspace(0, 2 * np.pi * fraction, n_views, endpoint=False)
    out = []
    for _ in range(n_corners):
        r, h, ph = rng.uniform(30, 150), rng.uniform(-60, 60), rng.uniform(0, 2 * np.pi)
        a = ang + ph
        out.append(o + h * n + r * (np.cos(a)[:, None] * u + np.sin(a)[:, None] * v))
    return out


def test_axis_from_partial_arcs_random_rigs():
    rng = np.random.default_rng(5)
    for _ in range(100):
        n = random_unit(rng)
        n *= np.sign(n[1])
        o = rng.uniform(-300, 300, 3) + [0, 0, 600]
        ax = estimate_axis(partial_orbits(rng, n, o))
        assert np.arctan2(np.linalg.norm(np.cross(ax.normal, n)), ax.normal @ n) < 1e-9
        # centre sits on the axis; its height along n is a free choice
        d = ax.center - o
        assert np.linalg.norm(d - (d @ n) * n) < 1e-9


def test_world_pose_trivial():
    ax = AxisEstimate(np.array([0, 1.0, 0]), np.zeros(3), np.zeros(3), np.zeros(3))
    assert derive_world_pose(ax).allclose(Pose(), 1e-15, 1e-15)


def test_world_pose_maps_origin_to_orbit_centre():
    rng = np.random.default_rng(6)
    n = random_unit(rng)
    n *= np.sign(n[1])
    o = np.array([10.0, -20.0, 700.0])
    ax = estimate_axis(partial_orbits(rng, n, o))
    W = derive_world_pose(ax)
    np.testing.assert_allclose(W.apply([0, 0, 0]), ax.center, atol=1e-9)
    np.testing.assert_allclose(W.R @ [0, 1, 0], ax.normal, atol=1e-12)
    np.testing.assert_allclose(rodrigues(ax.rotvec) @ ax.center, ax.t0, atol=1e-9)


def test_world_pose_camera_distance(clean):
    obs, truth = clean
    rig, _ = calibrate_rig(TARGET, obs, SIZES, refine=False)
    for node, p in truth.base_poses.items():
        c_true, c_est = p.center, rig.base_poses[node].center
        rho = lambda c: np.hypot(c[0], c[2])  # distance to the y-axis
        assert abs(rho(c_est) - rho(c_true)) < 1e-9


def test_target_zero_pose_single_view():
    p = Pose.from_rotvec([0.1, 0.2, 0.3], [1, 2, 3])
    z = target_zero_pose({0: p}, {0: 0.0})
    assert z.pose.allclose(p, 1e-15, 1e-15)


def test_target_zero_pose_consistency(clean):
    _, truth = clean
    T0 = truth.target_zero_pose
    est = {i: Pose(rot_y(a)).compose(T0) for i, a in enumerate(truth.pan_angles)}
    z = target_zero_pose(est, dict(enumerate(truth.pan_angles)))
    assert z.max_rot < 1e-9 and z.max_trans < 1e-9
    assert z.pose.allclose(T0, 1e-9, 1e-9)


def test_target_zero_pose_mean_translation():
    rng = np.random.default_rng(8)
    est = {i: Pose.from_rotvec(rng.normal(scale=0.01, size=3), rng.normal(size=3)) for i in range(5)}
    z = target_zero_pose(est, {i: 0.0 for i in range(5)})
    np.testing.assert_allclose(z.pose.t, np.mean([p.t for p in est.values()], axis=0))


def test_target_zero_pose_empty():
    with pytest.raises(ValueError):
        target_zero_pose({}, {})


# --- camera_pose_at ---------------------------------------------------------------------


def test_camera_pose_at(clean):
    _, rig = clean
    base = rig.base_poses[(1, 2)]
    assert camera_pose_at(rig, 1, 2, 0.0).allclose(base, 1e-15, 1e-15)
    assert camera_pose_at(rig, 1, 2, 2 * np.pi).allclose(base, 1e-9, 1e-9)
    cs = np.array([camera_pose_at(rig, 1, 2, np.radians(a)).center for a in (0, 90, 180, 270)])
    rho = np.hypot(cs[:, 0], cs[:, 2])
    assert np.ptp(rho) < 1e-9
    assert np.ptp(cs[:, 1]) < 1e-9
    with pytest.raises(KeyError):
        camera_pose_at(rig, 5, 0, 0.0)
    with pytest.raises(ValueError):
        camera_pose_at(rig, 0, 0, np.nan)


# --- full chain / refinement -----------------------------------------------------------------


def max_pose_error(a: RigCalibration, b: RigCalibration):
    er = et = 0.0
    for node in a.nodes:
        for th in a.pan_angles:
            p, q = a.camera_pose_at(*node, th), b.camera_pose_at(*node, th)
            er = max(er, rotation_angle(p.R.T @ q.R))
            et = max(et, float(np.abs(p.t - q.t).max()))
    return er, et


def test_chain_noiseless_closure(clean):
    obs, truth = clean
    rig, rep = calibrate_rig(TARGET, obs, SIZES)
    er, et = max_pose_error(truth, rig)
    assert er < 1e-6 and et < 1e-3
    assert rep.final_rms < 1e-6


def test_refine_from_truth_takes_no_steps(clean):
    obs, truth = clean
    rig, rep = refine_all(truth, TARGET, obs)
    assert rep.n_accepted == 0
    assert rep.final_rms < 1e-6


def perturbed(rig: RigCalibration, rng, deg=0.5, mm=2.0):
    def jitter(p):
        return Pose(rodrigues(random_unit(rng) * np.radians(deg)) @ p.R, p.t + random_unit(rng) * mm)

    base = {k: jitter(p) for k, p in rig.base_poses.items()}
    return RigCalibration(rig.intrinsics, base, jitter(rig.target_zero_pose), rig.pan_angles)


def test_refine_recovers_perturbation(clean):
    obs, truth = clean
    rig, rep = refine_all(perturbed(truth, np.random.default_rng(9)), TARGET, obs)
    assert rep.initial_rms > 1.0
    assert rep.final_rms < 1e-6
    assert np.all(np.diff(rep.costs) < 0)
    er, et = max_pose_error(truth, rig)
    assert er < 1e-6 and et < 1e-3


def test_refine_noisy(noisy):
    obs, truth = noisy
    rig, rep = calibrate_rig(TARGET, obs, SIZES)
    assert rep.final_rms <= 0.3
    assert rep.final_rms <= rep.initial_rms
    for k in (0, 1):
        assert abs(rig.intrinsics[k].f / truth.intrinsics[k].f - 1) < 5e-3
    assert rep.refine.null_dim == 2
    assert set(rep.refine.per_view_rms) == set(obs.views())


def test_refine_rank_warning(clean):
    obs, truth = clean
    # a node without observations leaves its pose unconstrained
    sel = obs.subset(~((obs.camera == 1) & (obs.tilt == 4)))
    with pytest.warns(Warning):
        refine_all(truth, TARGET, sel, max_iter=3)


# --- files -----------------------------------------------------------------------------------


def test_corner_file_round_trip(tmp_path, noisy):
    obs, _ = noisy
    path = tmp_path / "c.csv"
    write_corners(path, obs)
    back = read_corners(path)
    for name in ("camera", "tilt", "pan", "corner"):
        np.testing.assert_array_equal(getattr(back, name), getattr(obs, name))
    np.testing.assert_array_equal(back.uv, obs.uv)
    np.testing.assert_allclose(back.pan_angle, obs.pan_angle, rtol=1e-14, atol=1e-15)


def test_corner_file_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("# header\n0,0,0,0.0,1,10.0,20.0\n0,0,1,10.0,x,1,2\n")
    with pytest.raises(CornerFileError) as e:
        read_corners(p)
    assert e.value.lineno == 3
    p.write_text("0,0,0,0.0,1,10.0\n")
    with pytest.raises(CornerFileError) as e:
        read_corners(p)
    assert e.value.lineno == 1


def test_calibration_round_trip(tmp_path, clean):
    _, truth = clean
    path = tmp_path / "calib.json"
    save_calibration(path, truth)
    back = load_calibration(path)
    assert back.intrinsics == truth.intrinsics
    for node in truth.nodes:
        np.testing.assert_array_equal(back.base_poses[node].R, truth.base_poses[node].R)
        np.testing.assert_array_equal(back.base_poses[node].t, truth.base_poses[node].t)
    np.testing.assert_array_equal(back.target_zero_pose.R, truth.target_zero_pose.R)
    assert back.pan_angles == truth.pan_angles


def test_truth_rig_is_already_canonical():
    rig, M = truth_rig(RigSpec(), TARGET)
    assert M.allclose(Pose(), 1e-12, 1e-9)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert rig.target_zero_pose.apply(TARGET.centroid)[1] == pytest.approx(0, abs=1e-12)
