"""HTTP service endpoints and the command-line client."""

import warnings

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from fastapi.testclient import TestClient

from chopplan import fileio
from chopplan.cli import cli
from chopplan.service.app import app

SCENE_DOC = {
    "format": "scene/1",
    "objects": [
        {"id": "ball", "shape": "sphere", "position": [0.0, 0.05, 0.008],
         "radius": 0.008},
    ],
}

TASK_DOC = {
    "format": "task/1",
    "items": [
        {"object": "ball", "mode": "move", "goal": {"position": [0.05, 0.0, 0.008]}},
    ],
}


@pytest.fixture(scope="module")
def client():
    with TestClient(app) as c:
        yield c


# ---------------------------------------------------------------------------
# service endpoints


def test_styles_endpoint(client):
    data = client.get("/styles").json()
    assert data["count"] == 17
    assert len(data["styles"]) == 17
    codes = [s["code"] for s in data["styles"]]
    assert "1,1,1,2,0" in codes
    assert all(len(s["fingers"]) == 5 for s in data["styles"])


def test_validate_endpoint_ok(client):
    data = client.post("/validate", json={"scene": SCENE_DOC, "task": TASK_DOC}).json()
    assert data["ok"] is True
    assert data["diagnostics"] == []


def test_validate_endpoint_unknown_task_object(client):
    bad_task = {"format": "task/1",
                "items": [{"object": "ghost", "mode": "move",
                           "goal": {"position": [0, 0, 0.01]}}]}
    data = client.post("/validate", json={"scene": SCENE_DOC, "task": bad_task}).json()
    assert data["ok"] is False
    assert any("ghost" in d["message"] for d in data["diagnostics"])


def test_validate_endpoint_bad_scene(client):
    resp = client.post("/validate", json={"scene": {"format": "scene/2"}})
    assert resp.status_code == 422


def test_throw_plan_endpoint(client):
    resp = client.post("/throw-plan", json={"target": [0.4, 0.1, 0.0]})
    assert resp.status_code == 200
    data = resp.json()
    assert data["landing_error"] < 1e-9
    np.testing.assert_allclose(data["landing"], [0.4, 0.1, 0.0], atol=1e-9)
    assert data["release"]["position"][2] == pytest.approx(0.3)


def test_throw_plan_endpoint_infeasible(client):
    resp = client.post("/throw-plan", json={"target": [50.0, 0.0, 0.0]})
    assert resp.status_code == 422
    assert "speed" in resp.json()["detail"].lower()


def test_grip_ik_endpoint(client):
    resp = client.post("/grip/ik", json={"style": "1,1,1,2,0"})
    assert resp.status_code == 200
    data = resp.json()
    assert data["max_residual"] < 0.001
    assert data["max_penetration"] < 0.001
    assert len(data["pose"]["q"]) > 0


def test_grip_ik_endpoint_invalid_style(client):
    resp = client.post("/grip/ik", json={"style": "1,1,1,1,1"})
    assert resp.status_code == 422


def test_score_endpoint_perfect(client, tmp_path, model, standard_grip):
    from chopplan.geometry import RigidTransform, UnitQuaternion
    from chopplan.grasp import RigidObject, complete_config
    from chopplan.trajectory import Environment, assemble_task

    obj = RigidObject("sphere", RigidTransform([0.0, 0.04, 0.008]), radius=0.008)
    grasp = complete_config(UnitQuaternion.identity(), obj)
    traj = assemble_task(obj, grasp, RigidTransform([0.0, -0.04, 0.008]),
                         standard_grip, model, Environment(0.0, (obj,)), seed=0)
    path = tmp_path / "t.traj"
    fileio.write_trajectory(traj, path)
    text = path.read_text()
    data = client.post("/score", json={"sim": text, "ref": text}).json()
    assert data["score"] == 1.0
    assert data["frames"] == len(traj.frames)
    assert data["r_hand"] == 0.0


# ---------------------------------------------------------------------------
# CLI client (in-process service)


def invoke(args, env=None):
    runner = CliRunner()
    return runner.invoke(cli, args, env=env, auto_envvar_prefix="CHOPPLAN",
                         catch_exceptions=False)


def test_cli_styles_list():
    result = invoke(["styles", "list"])
    assert result.exit_code == 0
    assert "17 valid styles" in result.output
    assert "1,1,1,2,0" in result.output


def test_cli_validate(tmp_path):
    scene = tmp_path / "scene.yaml"
    scene.write_text(yaml.safe_dump(SCENE_DOC))
    task = tmp_path / "task.yaml"
    task.write_text(yaml.safe_dump(TASK_DOC))
    result = invoke(["validate", "--scene", str(scene), "--task", str(task)])
    assert result.exit_code == 0
    assert "ok: no problems found" in result.output

    bad = dict(SCENE_DOC)
    bad["objects"] = [{"id": "sunk", "shape": "sphere",
                       "position": [0, 0, 0.004], "radius": 0.008}]
    scene.write_text(yaml.safe_dump(bad))
    result = invoke(["validate", "--scene", str(scene)])
    assert result.exit_code == 1
    assert "error:" in result.output


def test_cli_throw_plan():
    result = invoke(["throw-plan", "--target", "0.4,0.1,0"])
    assert result.exit_code == 0
    assert "landing error" in result.output
    assert "release velocity" in result.output


def test_cli_grip_ik_writes_pose(tmp_path):
    result = invoke(["--out-dir", str(tmp_path), "grip", "ik",
                     "--style", "1,1,1,2,0"])
    assert result.exit_code == 0
    out = tmp_path / "grip_11120.pose"
    assert out.exists()
    pose = fileio.read_grip_pose(out)
    assert pose.style == (1, 1, 1, 2, 0)
    assert float(np.max(pose.residuals)) < 0.001


def test_cli_score_round_trip(tmp_path, model, standard_grip):
    from chopplan.geometry import RigidTransform, UnitQuaternion
    from chopplan.grasp import RigidObject, complete_config
    from chopplan.trajectory import Environment, assemble_task

    obj = RigidObject("sphere", RigidTransform([0.0, 0.04, 0.008]), radius=0.008)
    grasp = complete_config(UnitQuaternion.identity(), obj)
    traj = assemble_task(obj, grasp, RigidTransform([0.0, -0.04, 0.008]),
                         standard_grip, model, Environment(0.0, (obj,)), seed=0)
    path = tmp_path / "t.traj"
    fileio.write_trajectory(traj, path)
    result = invoke(["score", "--sim", str(path), "--ref", str(path)])
    assert result.exit_code == 0
    assert "score     1.0" in result.output


def test_cli_config_file_overrides_default(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"out_dir": str(tmp_path / "fromcfg")}))
    result = invoke(["--config", str(cfg), "grip", "ik", "--style", "11120"])
    assert result.exit_code == 0
    assert (tmp_path / "fromcfg" / "grip_11120.pose").exists()


def test_cli_flag_beats_config_file(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(yaml.safe_dump({"out_dir": str(tmp_path / "fromcfg")}))
    result = invoke(["--config", str(cfg), "--out-dir", str(tmp_path / "flag"),
                     "grip", "ik", "--style", "11120"])
    assert result.exit_code == 0
    assert (tmp_path / "flag" / "grip_11120.pose").exists()
    assert not (tmp_path / "fromcfg").exists()


def test_cli_env_var_override(tmp_path):
    result = invoke(["grip", "ik", "--style", "11120"],
                    env={"CHOPPLAN_OUT_DIR": str(tmp_path / "fromenv")})
    assert result.exit_code == 0
    assert (tmp_path / "fromenv" / "grip_11120.pose").exists()


def test_cli_error_reporting():
    result = invoke(["grip", "ik", "--style", "1,1,1,1,1"])
    assert result.exit_code != 0
    assert "Error" in result.output
