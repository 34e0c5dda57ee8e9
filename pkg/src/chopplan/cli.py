"""Command-line client for the planning service.

By default the commands talk to an in-process service instance; pass
`--server URL` to use a remote one. All option defaults can be overridden
with `CHOPPLAN_*` environment variables (e.g. `CHOPPLAN_HAND`,
`CHOPPLAN_SEED`) or a YAML config file given via `--config`.
"""

from __future__ import annotations

import json
import os
import sys

import click
import httpx
import yaml


def _client(server: str | None) -> httpx.Client:
    if server:
        return httpx.Client(base_url=server, timeout=600.0)
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        from fastapi.testclient import TestClient

    from .service.app import app

    return TestClient(app)


def _call(ctx, method: str, path: str, payload: dict | None = None) -> dict:
    client = _client(ctx.obj.get("server"))
    with client:
        resp = client.request(method, path, json=payload)
    if resp.status_code >= 400:
        try:
            detail = resp.json().get("detail", resp.text)
        except (ValueError, json.JSONDecodeError):
            detail = resp.text
        raise click.ClickException(str(detail))
    return resp.json()


def _load_doc(path: str) -> dict:
    with open(path) as fh:
        return yaml.safe_load(fh)


def _out_path(ctx, name: str) -> str:
    out_dir = ctx.obj["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


@click.group()
@click.option("--seed", type=int, default=0, show_default=True, help="Random seed for all stochastic steps.")
@click.option("--hand", default="standard", show_default=True, help="Hand model preset name or morphology file.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None, help="YAML file with default option values.")
@click.option("--out-dir", default=".", show_default=True, help="Directory for emitted files.")
@click.option("--server", default=None, help="Remote service URL; in-process when omitted.")
@click.pass_context
def cli(ctx, seed, hand, config_path, out_dir, server):
    """Plan chopstick grips, grasps and relocation trajectories."""
    ctx.ensure_object(dict)
    cfg = {}
    if config_path:
        loaded = yaml.safe_load(open(config_path)) or {}
        if not isinstance(loaded, dict):
            raise click.ClickException(f"{config_path}: config must be a mapping")
        cfg = loaded
    src = ctx.get_parameter_source
    def pick(name, flag_value):
        from click.core import ParameterSource

        if src(name) == ParameterSource.DEFAULT and name.replace("_path", "") in cfg:
            return cfg[name.replace("_path", "")]
        return flag_value

    ctx.obj["seed"] = int(pick("seed", seed))
    ctx.obj["hand"] = str(pick("hand", hand))
    ctx.obj["out_dir"] = str(pick("out_dir", out_dir))
    ctx.obj["server"] = pick("server", server)


@cli.group()
def styles():
    """Gripping-style utilities."""


@styles.command("list")
@click.pass_context
def styles_list(ctx):
    """List every valid gripping style."""
    data = _call(ctx, "GET", "/styles")
    click.echo(f"{data['count']} valid styles (thumb first; 1=upper stick, 2=lower, 0=free):")
    for s in data["styles"]:
        suffix = f"  ({s['name']})" if s.get("name") else ""
        click.echo(f"  {s['code']}{suffix}")


@cli.group()
def grip():
    """Grip pose solving and optimization."""


@grip.command("ik")
@click.option("--style", required=True, help="Style code, e.g. 1,1,1,2,0 or 11120.")
@click.option("--fractions", default=None, help="Comma-separated stick-axis contact fractions (tip=0, rear=1).")
@click.option("--holding-offset", type=float, default=0.0, show_default=True)
@click.option("--out", "out_name", default=None, help="Grip pose output file name.")
@click.pass_context
def grip_ik(ctx, style, fractions, holding_offset, out_name):
    """Solve fingertip-contact IK for a gripping style."""
    payload = {
        "style": style,
        "hand": ctx.obj["hand"],
        "holding_offset": holding_offset,
    }
    if fractions:
        payload["fractions"] = [float(v) for v in fractions.split(",")]
    data = _call(ctx, "POST", "/grip/ik", payload)
    pose = _pose_from_wire(data["pose"])
    name = out_name or f"grip_{style.replace(',', '')}.pose"
    path = _out_path(ctx, name)
    from . import fileio

    fileio.write_grip_pose(pose, path)
    click.echo(f"style {data['pose']['style']}")
    click.echo(f"max residual    {data['max_residual']:.6f} m")
    click.echo(f"max penetration {data['max_penetration']:.6f} m")
    click.echo(f"wrote {path}")


@grip.command("optimize")
@click.option("--style", required=True)
@click.option("--iters", type=int, default=10, show_default=True)
@click.option("--out", "out_name", default=None, help="Grip pose output file name.")
@click.pass_context
def grip_optimize(ctx, style, iters, out_name):
    """Optimize contact placement with GP-UCB over a kinematic maneuver score."""
    data = _call(
        ctx,
        "POST",
        "/grip/optimize",
        {"style": style, "hand": ctx.obj["hand"], "max_iter": iters, "seed": ctx.obj["seed"]},
    )
    for rec in data["history"]:
        proposal = " ".join(f"{v:.4f}" for v in rec["proposal"])
        click.echo(f"iter {rec['iteration']:2d}  score {rec['score']:.6f}  proposal {proposal}")
    click.echo(f"best score      {data['score']:.6f}")
    click.echo(f"baseline score  {data['baseline_score']:.6f}")
    pose = _pose_from_wire(data["pose"])
    name = out_name or f"grip_{style.replace(',', '')}_opt.pose"
    path = _out_path(ctx, name)
    from . import fileio

    fileio.write_grip_pose(pose, path)
    click.echo(f"wrote {path}")


@cli.group()
def grasp():
    """Grasp selection."""


@grasp.command("rank")
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--object", "object_id", required=True, help="Scene object id to grasp.")
@click.option("--style", default="1,1,1,2,0", show_default=True)
@click.option("--n-keep", type=int, default=10, show_default=True)
@click.pass_context
def grasp_rank(ctx, scene_path, object_id, style, n_keep):
    """Rank grasp configurations for one scene object."""
    doc = _load_doc(scene_path)
    entry = next(
        (o for o in doc.get("objects", []) if str(o.get("id")) == object_id), None
    )
    if entry is None:
        raise click.ClickException(f"{scene_path}: no object with id {object_id!r}")
    obj = {
        "shape": entry["shape"],
        "pose": {
            "position": entry.get("position", [0, 0, 0]),
            "orientation": entry.get("orientation", [1, 0, 0, 0]),
        },
        "radius": entry.get("radius", 0.0),
        "length": entry.get("length", 0.0),
        "sides": entry.get("sides"),
    }
    data = _call(
        ctx,
        "POST",
        "/grasp/rank",
        {
            "object": obj,
            "style": style,
            "hand": ctx.obj["hand"],
            "seed": ctx.obj["seed"],
            "n_keep": n_keep,
        },
    )
    click.echo(f"{'rank':>4} {'total':>10} {'quality':>10} {'reach':>6} {'contin':>8}  position (m)")
    for i, c in enumerate(data["candidates"], start=1):
        p = c["config"]["position"]
        click.echo(
            f"{i:>4} {c['total']:>10.6f} {c['quality']:>10.6f} {c['reachable']:>6.0f}"
            f" {c['continuity']:>8.4f}  [{p[0]:+.4f} {p[1]:+.4f} {p[2]:+.4f}]"
        )


@cli.command("plan")
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--task", "task_path", required=True, type=click.Path(exists=True))
@click.option("--style", default="1,1,1,2,0", show_default=True)
@click.pass_context
def plan(ctx, scene_path, task_path, style):
    """Run the full relocation pipeline and write trajectory files."""
    data = _call(
        ctx,
        "POST",
        "/plan",
        {
            "scene": _load_doc(scene_path),
            "task": _load_doc(task_path),
            "style": style,
            "hand": ctx.obj["hand"],
            "seed": ctx.obj["seed"],
        },
    )
    for name, text in data["files"].items():
        path = _out_path(ctx, name)
        with open(path, "w") as fh:
            fh.write(text)
        click.echo(f"wrote {path}")
    report_path = _out_path(ctx, "report.txt")
    with open(report_path, "w") as fh:
        fh.write(data["report"])
    click.echo(f"wrote {report_path}")
    click.echo(data["report"].rstrip("\n"))
    if not data["ok"]:
        sys.exit(1)


@cli.command("throw-plan")
@click.option("--target", required=True, help="Landing point x,y,z in meters.")
@click.option("--flight-time", type=float, default=0.3, show_default=True)
@click.option("--release-height", type=float, default=0.3, show_default=True)
@click.option("--table-height", type=float, default=0.0, show_default=True)
@click.option("--speed-cap", type=float, default=5.0, show_default=True)
@click.pass_context
def throw_plan(ctx, target, flight_time, release_height, table_height, speed_cap):
    """Compute the throw release state for a target landing point."""
    data = _call(
        ctx,
        "POST",
        "/throw-plan",
        {
            "target": [float(v) for v in target.split(",")],
            "flight_time": flight_time,
            "release_height": release_height,
            "table_height": table_height,
            "speed_cap": speed_cap,
        },
    )
    rel = data["release"]
    click.echo(f"release position {rel['position']}")
    click.echo(f"release velocity {data['velocity']}")
    click.echo(f"landing          {data['landing']}")
    click.echo(f"landing error    {data['landing_error']:.2e} m")


@cli.command("score")
@click.option("--sim", "sim_path", required=True, type=click.Path(exists=True))
@click.option("--ref", "ref_path", required=True, type=click.Path(exists=True))
@click.pass_context
def score(ctx, sim_path, ref_path):
    """Score one trajectory file against a reference trajectory file."""
    data = _call(
        ctx,
        "POST",
        "/score",
        {"sim": open(sim_path).read(), "ref": open(ref_path).read()},
    )
    click.echo(f"frames    {data['frames']}")
    for term in ("r_hand", "r_chop", "r_obj", "r_contact"):
        click.echo(f"{term:<9} {data[term]:.6f}")
    click.echo(f"score     {data['score']!r}")


@cli.command("validate")
@click.option("--scene", "scene_path", required=True, type=click.Path(exists=True))
@click.option("--task", "task_path", default=None, type=click.Path(exists=True))
@click.pass_context
def validate(ctx, scene_path, task_path):
    """Validate a scene (and optionally task) file; exits 1 on errors."""
    payload = {"scene": _load_doc(scene_path)}
    if task_path:
        payload["task"] = _load_doc(task_path)
    data = _call(ctx, "POST", "/validate", payload)
    if not data["diagnostics"]:
        click.echo("ok: no problems found")
    for d in data["diagnostics"]:
        click.echo(f"{d['level']}: {d['message']}")
    if not data["ok"]:
        sys.exit(1)


def _pose_from_wire(doc: dict):
    from .service.schemas import GripPoseModel

    return GripPoseModel.model_validate(doc).to_core()


def main():
    cli(auto_envvar_prefix="CHOPPLAN")


if __name__ == "__main__":
    main()
