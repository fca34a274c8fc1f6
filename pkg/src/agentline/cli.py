"""Thin command-line client for the release-line service.

Every subcommand except ``serve`` talks HTTP to a running service; state
lives server-side. Exit codes: 0 ok, 2 gate-reject terminal state, 3 phase
failure, 4 config error.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import httpx

DEFAULT_SERVER = "http://127.0.0.1:9630"
SERVER_ENV = "AGENTLINE_SERVER"

EXIT_OK = 0
EXIT_GATE_REJECT = 2
EXIT_PHASE_FAILURE = 3
EXIT_CONFIG_ERROR = 4

_CONFIG_KINDS = {"config_error", "parse_error", "domain_error"}


def _client(ctx: click.Context) -> httpx.Client:
    injected = (ctx.obj or {}).get("client")
    if injected is not None:
        return injected
    server = (ctx.obj or {}).get("server") or DEFAULT_SERVER
    return httpx.Client(base_url=server, timeout=600.0)


def _fail_for(response: httpx.Response) -> None:
    try:
        body = response.json()
    except ValueError:
        body = {"detail": response.text}
    detail = body.get("detail", "")
    kind = body.get("kind", "")
    click.echo(f"error ({response.status_code}): {detail}", err=True)
    if kind in _CONFIG_KINDS or response.status_code in (400, 422):
        sys.exit(EXIT_CONFIG_ERROR)
    if kind == "phase_failure":
        sys.exit(EXIT_PHASE_FAILURE)
    sys.exit(1)


def _request(ctx: click.Context, method: str, path: str, **kwargs) -> httpx.Response:
    client = _client(ctx)
    response = client.request(method, path, **kwargs)
    if response.status_code >= 400:
        _fail_for(response)
    return response


def _echo_json(payload: object) -> None:
    click.echo(json.dumps(payload, indent=2, sort_keys=True))


@click.group()
@click.option(
    "--server",
    envvar=SERVER_ENV,
    default=DEFAULT_SERVER,
    show_default=True,
    help="Base URL of the release-line service.",
)
@click.pass_context
def main(ctx: click.Context, server: str) -> None:
    ctx.ensure_object(dict)
    ctx.obj.setdefault("server", server)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=9630, show_default=True, type=int)
@click.option("--root", default=None, help="Data root directory (one subdir per line).")
def serve(host: str, port: int, root: str | None) -> None:
    """Run the service (the one command that is not a client)."""
    import uvicorn

    from .service.app import create_app

    app = create_app(Path(root) if root else None)
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.argument("name")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Pipeline config JSON (may describe a simulated task).")
@click.option("--blueprint-dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="Directory whose files form the initial blueprint.")
@click.pass_context
def init(ctx: click.Context, name: str, config_path: str | None, blueprint_dir: str | None) -> None:
    """Create a line from a blueprint directory and/or config."""
    config = {}
    if config_path:
        config = json.loads(Path(config_path).read_text(encoding="utf-8"))
    payload: dict = {"name": name, "config": config}
    if blueprint_dir:
        root = Path(blueprint_dir)
        files = {
            str(p.relative_to(root)): p.read_text(encoding="utf-8")
            for p in sorted(root.rglob("*"))
            if p.is_file()
        }
        payload["blueprint"] = {"files": files, "metadata": {}}
    response = _request(ctx, "POST", "/lines", json=payload)
    _echo_json(response.json())


@main.command()
@click.argument("name")
@click.option("--n", "count", default=1, show_default=True, type=int, help="Iterations to run.")
@click.pass_context
def iterate(ctx: click.Context, name: str, count: int) -> None:
    """Run release iterations on a line."""
    response = _request(ctx, "POST", f"/lines/{name}/iterations", json={"count": count})
    body = response.json()
    _echo_json(body)
    if body.get("stopped") and "consecutive_rejections" in body.get("stop_conditions", []):
        sys.exit(EXIT_GATE_REJECT)


@main.command()
@click.argument("name")
@click.option("--format", "fmt", type=click.Choice(["table", "json"]), default="table",
              show_default=True)
@click.pass_context
def report(ctx: click.Context, name: str, fmt: str) -> None:
    """Render the per-iteration gate summary."""
    response = _request(ctx, "GET", f"/lines/{name}/report")
    body = response.json()
    if fmt == "table":
        click.echo(body["rendered"])
    else:
        _echo_json(body["rows"])


@main.command()
@click.option("--prev", "prev_path", type=click.Path(exists=True), required=True,
              help="Record file of the current version.")
@click.option("--cand", "cand_path", type=click.Path(exists=True), required=True,
              help="Record file of the candidate.")
@click.option("--intent", "intent_path", type=click.Path(exists=True), default=None,
              help="Intent JSON: {target_symptoms, rationale}.")
@click.option("--baseline", "baseline_path", type=click.Path(exists=True), default=None,
              help="Baseline record file for cumulative stats (defaults to --prev).")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Gate config JSON overriding the defaults.")
@click.pass_context
def gate(
    ctx: click.Context,
    prev_path: str,
    cand_path: str,
    intent_path: str | None,
    baseline_path: str | None,
    config_path: str | None,
) -> None:
    """Evaluate the release gate from two record files, without running agents."""
    payload: dict = {
        "prev_records": Path(prev_path).read_text(encoding="utf-8"),
        "cand_records": Path(cand_path).read_text(encoding="utf-8"),
    }
    if intent_path:
        payload["intent"] = json.loads(Path(intent_path).read_text(encoding="utf-8"))
    if baseline_path:
        payload["baseline_records"] = Path(baseline_path).read_text(encoding="utf-8")
    if config_path:
        payload["config"] = json.loads(Path(config_path).read_text(encoding="utf-8"))
    response = _request(ctx, "POST", "/gate/evaluate", json=payload)
    body = response.json()
    _echo_json(body)
    if not body["accept"]:
        sys.exit(EXIT_GATE_REJECT)


@main.command()
@click.argument("name")
@click.pass_context
def diagnose(ctx: click.Context, name: str) -> None:
    """Run the built-in diagnosis script against the line's current records."""
    response = _request(ctx, "POST", f"/lines/{name}/diagnose")
    _echo_json(response.json())


@main.command()
@click.argument("name")
@click.pass_context
def verify(ctx: click.Context, name: str) -> None:
    """Check the line's audit chain and artifact hashes."""
    response = _request(ctx, "GET", f"/lines/{name}/verify")
    body = response.json()
    _echo_json(body)
    if not body["ok"]:
        sys.exit(1)


@main.command(name="final-report")
@click.argument("name")
@click.pass_context
def final_report(ctx: click.Context, name: str) -> None:
    """Consume the held-out test split once and report the head's pass rate."""
    response = _request(ctx, "POST", f"/lines/{name}/final-report")
    _echo_json(response.json())


@main.group(invoke_without_command=True)
@click.option("--model", "model_path", type=click.Path(exists=True), default=None,
              help="Synthetic model config JSON.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--iterations", default=12, show_default=True, type=int)
@click.option("--line", "line_name", default=None,
              help="Also write full version-line artifacts under this name.")
@click.option("--disable-diagnosis", is_flag=True, default=False)
@click.pass_context
def simulate(
    ctx: click.Context,
    model_path: str | None,
    seed: int,
    iterations: int,
    line_name: str | None,
    disable_diagnosis: bool,
) -> None:
    """Run one synthetic trajectory (or `simulate sweep` for ensembles)."""
    if ctx.invoked_subcommand is not None:
        ctx.obj["model_path"] = model_path
        return
    payload = {
        "model": json.loads(Path(model_path).read_text(encoding="utf-8")) if model_path else {},
        "seed": seed,
        "iterations": iterations,
        "disable_diagnosis": disable_diagnosis,
    }
    if line_name:
        payload["line_name"] = line_name
    response = _request(ctx, "POST", "/simulate", json=payload)
    body = response.json()
    click.echo(body["rendered"])
    summary = {k: v for k, v in body["result"].items() if k != "rows"}
    _echo_json(summary)


@simulate.command()
@click.option("--model", "model_path", type=click.Path(exists=True), default=None)
@click.option("--seeds", default=20, show_default=True, type=int)
@click.option("--iterations", default=12, show_default=True, type=int)
@click.option("--disable-diagnosis", is_flag=True, default=False)
@click.pass_context
def sweep(
    ctx: click.Context,
    model_path: str | None,
    seeds: int,
    iterations: int,
    disable_diagnosis: bool,
) -> None:
    """Run a seed ensemble and print aggregate statistics."""
    model_path = model_path or ctx.obj.get("model_path")
    payload = {
        "model": json.loads(Path(model_path).read_text(encoding="utf-8")) if model_path else {},
        "seeds": seeds,
        "iterations": iterations,
        "disable_diagnosis": disable_diagnosis,
    }
    response = _request(ctx, "POST", "/simulate/sweep", json=payload)
    body = response.json()
    _echo_json({k: v for k, v in body.items() if k != "per_seed"})


@main.command()
@click.pass_context
def lines(ctx: click.Context) -> None:
    """List lines hosted by the service."""
    response = _request(ctx, "GET", "/lines")
    _echo_json(response.json())


if __name__ == "__main__":
    main()
