import shutil

import numpy as np
import pytest

from phenoscan.calib import TargetModel, load_calibration, save_calibration
from phenoscan.cli import main
from phenoscan.config import ConfigError, default_config, load_config
from phenoscan.geom import rotation_angle
from phenoscan.mesh import read_ply, write_ply
from phenoscan.silhouette import read_mask, write_mask
from phenoscan.synth import RigSpec, f1_score, icosphere, render_sphere_mask, truth_rig, view_name


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def kv(out):
    return dict(line.split(",", 1) for line in out.splitlines() if "," in line)


@pytest.fixture(scope="module")
def scene(tmp_path_factory):
    """Small synthetic scan: 12 pans, with colour images."""
    d = tmp_path_factory.mktemp("scan")
    assert main(["synth", str(d), "-q", "--set", "synth.n_pans=12", "--set", "synth.images=true"]) == 0
    return d


def copy_scene(scene, tmp_path):
    d = tmp_path / "scan"
    shutil.copytree(scene, d)
    return d


# --- config ------------------------------------------------------------------


def test_config_defaults_and_overrides(tmp_path):
    (tmp_path / "c.ini").write_text("[reconstruct]\nresolution = 256\n[paths]\nmesh = out/m.ply\n")
    cfg = load_config(tmp_path / "c.ini", ["reconstruct.tolerance=1"])
    assert cfg["reconstruct", "resolution"] == 256
    assert cfg["reconstruct", "tolerance"] == 1
    assert cfg.path("mesh") == tmp_path.resolve() / "out" / "m.ply"
    assert cfg["segment", "alpha"] == 0.1


def test_config_rejects_unknown_keys(tmp_path):
    (tmp_path / "c.ini").write_text("[reconstruct]\nresolutoin = 256\n")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.ini")
    with pytest.raises(ConfigError):
        load_config(None, ["nosuch.key=1"])
    with pytest.raises(ConfigError):
        load_config(None, ["reconstruct.resolution=abc"])


def test_config_round_trip(tmp_path):
    cfg = default_config(tmp_path)
    cfg.set("reconstruct", "pot_p0", "1, 2, 3")
    (tmp_path / "c.ini").write_text(cfg.to_ini())
    again = load_config(tmp_path / "c.ini")
    assert again.values == cfg.values


def test_pot_needs_all_fields():
    cfg = default_config()
    assert cfg.pot() is None
    cfg.set("reconstruct", "pot_r0", "10")
    with pytest.raises(ConfigError):
        cfg.pot()


def test_missing_config_file_exit_2(capsys, tmp_path):
    code, _, err = run(capsys, "measure", "-c", tmp_path / "nope.ini")
    assert code == 2 and "nope.ini" in err


# --- calibrate ---------------------------------------------------------------


def test_calibrate_closes_on_synthetic_corners(capsys, scene, tmp_path):
    d = copy_scene(scene, tmp_path)
    code, out, _ = run(capsys, "calibrate", "-c", d / "config.ini")
    assert code == 0
    vals = kv(out)
    assert float(vals["rms_final_px"]) < 0.3
    est = load_calibration(d / "calibration.json")
    ref = load_calibration(d / "calibration_truth.json")
    for k in ref.intrinsics:
        assert est.intrinsics[k].f == pytest.approx(ref.intrinsics[k].f, rel=5e-3)
    for node, p in ref.base_poses.items():
        q = est.base_poses[node]
        assert rotation_angle(q.R @ p.R.T) < 2e-3
        assert np.linalg.norm(q.t - p.t) < 3.0


def test_calibrate_missing_corner_file(capsys, tmp_path):
    code, _, err = run(capsys, "calibrate", "--set", f"paths.corners={tmp_path / 'c.csv'}")
    assert code == 2
    assert "c.csv" in err


def test_calibrate_malformed_line(capsys, tmp_path):
    (tmp_path / "c.csv").write_text("0,0,0,0.0,0,1.0,2.0\n0,0,1,10.0,zero,1.0,2.0\n")
    code, _, err = run(capsys, "calibrate", "--set", f"paths.corners={tmp_path / 'c.csv'}")
    assert code == 2
    assert "c.csv:2" in err


def test_calibrate_degenerate_exit_3(capsys, tmp_path):
    # a single view of the board cannot calibrate anything
    t = TargetModel(7, 10, 40.0)
    rows = [f"0,0,0,0.0,{i},{100 + 3 * x:.3f},{120 + 3 * y:.3f}" for i, (x, y, _) in enumerate(t.points)]
    (tmp_path / "c.csv").write_text("\n".join(rows) + "\n")
    code, _, err = run(capsys, "calibrate", "--set", f"paths.corners={tmp_path / 'c.csv'}")
    assert code == 3
    assert "Error" in err


# --- segment -----------------------------------------------------------------


def test_segment_reproduces_masks(capsys, scene, tmp_path):
    d = copy_scene(scene, tmp_path)
    code, out, _ = run(capsys, "segment", "-c", d / "config.ini", "--set", "paths.masks=seg")
    assert code == 0
    assert kv(out)["masks"] == "24"
    for name in [view_name(0, 0, 0), view_name(1, 0, 7)]:
        got = read_mask(d / "seg" / f"{name}.pgm")
        ref = read_mask(d / "masks" / f"{name}.pgm")
        assert f1_score(got, ref) >= 0.99


def test_segment_missing_background(capsys, scene, tmp_path):
    d = copy_scene(scene, tmp_path)
    (d / "backgrounds" / "cam1_tilt0.ppm").unlink()
    code, _, err = run(capsys, "segment", "-c", d / "config.ini", "--set", "paths.masks=seg")
    assert code == 2
    assert "cam1_tilt0.ppm" in err


def test_segment_skips_wrong_size(capsys, scene, tmp_path):
    from phenoscan.silhouette import write_ppm

    d = copy_scene(scene, tmp_path)
    write_ppm(d / "images" / f"{view_name(0, 0, 3)}.ppm", np.zeros((10, 10, 3), np.uint8))
    code, out, err = run(capsys, "segment", "-c", d / "config.ini", "--set", "paths.masks=seg")
    assert code == 0
    assert kv(out)["masks"] == "23"
    assert "skipping" in err and view_name(0, 0, 3) in err


# --- reconstruct -------------------------------------------------------------


@pytest.fixture(scope="module")
def sphere_scene(tmp_path_factory):
    d = tmp_path_factory.mktemp("sphere")
    spec = RigSpec(n_pans=18, tilt_deg=(0.0,))
    rig, _ = truth_rig(spec, TargetModel(7, 10, 20.0))
    save_calibration(d / "calibration.json", rig)
    (d / "masks").mkdir()
    for k, j in rig.nodes:
        for i in range(len(rig.pan_angles)):
            m = render_sphere_mask((0.0, -60.0, 0.0), 60.0, rig.pose_for_view(k, j, i), rig.intrinsics[k])
            write_mask(d / "masks" / f"{view_name(k, j, i)}.pgm", m)
    (d / "config.ini").write_text("[reconstruct]\nresolution = 128\ntolerance = 0\n")
    return d


def test_reconstruct_sphere(capsys, sphere_scene, tmp_path):
    code, out, err = run(capsys, "reconstruct", "-c", sphere_scene / "config.ini",
                         "--set", f"paths.mesh={tmp_path / 'h.ply'}", "--set", f"paths.voxels={tmp_path / 'h.rle'}")
    assert code == 0
    m = read_ply(tmp_path / "h.ply")
    assert m.is_watertight() and m.euler_characteristic() == 2
    assert 1.0 <= m.volume() / (4 / 3 * np.pi * 60.0**3) <= 1.15
    assert "level 0" in err and "carve" in err
    assert (tmp_path / "h.rle").read_text().startswith("phenoscan-voxels")
    # rerun is byte-identical
    first = (tmp_path / "h.ply").read_bytes()
    assert run(capsys, "reconstruct", "-c", sphere_scene / "config.ini", "--set", f"paths.mesh={tmp_path / 'h.ply'}")[0] == 0
    assert (tmp_path / "h.ply").read_bytes() == first


def test_reconstruct_full_box_warning(capsys, sphere_scene, tmp_path):
    code, _, err = run(capsys, "reconstruct", "-c", sphere_scene / "config.ini", "--resolution", "16",
                       "--tolerance", "36", "--set", f"paths.mesh={tmp_path / 'h.ply'}")
    assert code == 0
    assert "full box" in err


def test_reconstruct_zero_masks(capsys, sphere_scene, tmp_path):
    (tmp_path / "empty").mkdir()
    code, _, err = run(capsys, "reconstruct", "-c", sphere_scene / "config.ini",
                       "--set", f"paths.masks={tmp_path / 'empty'}")
    assert code == 2
    assert "no cam" in err


def test_reconstruct_inconsistent_mask_size(capsys, sphere_scene, tmp_path):
    d = tmp_path / "s"
    shutil.copytree(sphere_scene, d)
    write_mask(d / "masks" / f"{view_name(1, 0, 4)}.pgm", np.zeros((100, 80), bool))
    code, _, err = run(capsys, "reconstruct", "-c", d / "config.ini")
    assert code == 2
    assert "inconsistent mask dimensions" in err


def test_reconstruct_empty_hull_exit_3(capsys, sphere_scene, tmp_path):
    d = tmp_path / "s"
    shutil.copytree(sphere_scene, d)
    # the second camera only sees a speck in an image corner: no voxel agrees with both
    for f in (d / "masks").glob("cam1_*.pgm"):
        m = np.zeros_like(read_mask(f))
        m[:2, :2] = True
        write_mask(f, m)
    code, _, err = run(capsys, "reconstruct", "-c", d / "config.ini")
    assert code == 3
    assert "EmptyVolumeError" in err


# --- measure -----------------------------------------------------------------


def test_measure_empty_mesh_exit_2(capsys, tmp_path):
    from phenoscan.mesh import TriMesh

    write_ply(tmp_path / "e.ply", TriMesh(np.zeros((0, 3)), np.zeros((0, 3), int)))
    code, _, err = run(capsys, "measure", "--set", f"paths.mesh={tmp_path / 'e.ply'}")
    assert code == 2 and "empty" in err


def test_measure_no_regions_exit_3(capsys, tmp_path):
    write_ply(tmp_path / "s.ply", icosphere(4, 20.0))
    code, _, err = run(capsys, "measure", "--set", f"paths.mesh={tmp_path / 's.ply'}",
                       "--set", f"paths.report={tmp_path / 'r.csv'}")
    assert code == 3
    assert "NoSeedError" in err


def test_measure_flat_slab_with_truth(capsys, tmp_path):
    from phenoscan.carve import marching_cubes

    # a 2 mm voxel slab 200 x 100 x 4 mm; truth equal to the one-side measurement gives small epsilon
    occ = np.zeros((110, 60, 6), bool)
    occ[5:105, 5:55, 2:4] = True
    m = marching_cubes(occ)
    m.vertices = m.vertices * 2.0
    write_ply(tmp_path / "slab.ply", m)
    (tmp_path / "t.csv").write_text("leaf,length_mm,width_mm,perimeter_mm,area_mm2\nslab,223.6,100,600,20000\n")
    code, out, _ = run(capsys, "measure", "--set", f"paths.mesh={tmp_path / 'slab.ply'}",
                       "--set", f"paths.truth={tmp_path / 't.csv'}", "--set", f"paths.report={tmp_path / 'r.csv'}",
                       "--set", "measure.min_component=10")
    assert code == 0
    vals = kv(out)
    assert vals["leaves"] == "1"
    assert float(vals["epsilon"]) < 0.05
    rep = (tmp_path / "r.csv").read_text()
    assert rep.startswith("region,length_mm,width_mm,perimeter_mm,area_mm2,truth_leaf")
    assert "# epsilon," in rep


def test_measure_bad_truth_exit_2(capsys, tmp_path):
    write_ply(tmp_path / "s.ply", icosphere(2, 20.0))
    (tmp_path / "t.csv").write_text("garbage\n")
    code, _, _ = run(capsys, "measure", "--set", f"paths.mesh={tmp_path / 's.ply'}",
                     "--set", f"paths.truth={tmp_path / 't.csv'}")
    assert code == 2


# --- synth / evaluate ----------------------------------------------------------


def test_synth_unwritable(capsys, tmp_path):
    (tmp_path / "file").write_text("x")
    code, _, err = run(capsys, "synth", tmp_path / "file" / "sub", "--set", "synth.n_pans=4")
    assert code == 2


def test_synth_counts(capsys, tmp_path):
    code, out, _ = run(capsys, "synth", tmp_path / "s", "--set", "synth.n_pans=4", "--tilts", "5", "-q")
    assert code == 0
    assert kv(out)["masks"] == "40"
    assert len(list((tmp_path / "s" / "masks").glob("*.pgm"))) == 40


def test_evaluate_small_run(capsys, tmp_path):
    code, out, _ = run(capsys, "evaluate", "--workdir", tmp_path / "w", "--truth-calibration",
                       "--resolution", "256", "--set", "synth.n_pans=18", "-q")
    assert code == 0
    vals = kv(out)
    assert vals["views"] == "36"
    assert 0.0 <= float(vals["epsilon"]) < 0.5
