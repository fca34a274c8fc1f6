"""FastAPI service exposing version lines, gate evaluation, and the simulator.

The service owns a data root (one subdirectory per line) and is the single
writer for every line it hosts; the CLI is a thin client over these routes.
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from filelock import FileLock

from .. import __version__
from ..canonical import derive_seed
from ..diagnosis import SandboxLimits, execute_script, template_script
from ..flips import (
    FlipDomainError,
    PassVector,
    build_flip_report,
)
from ..gate import GateConfig, StopConfig, decide
from ..harness import Blueprint
from ..line import LineError, VersionLine
from ..pipeline import (
    CONFIG_FILE,
    ConfigError,
    PhaseFailure,
    PipelineConfig,
    resolve_components,
    run_pipeline,
)
from ..records import (
    RecordParseError,
    TestSetHygieneError,
    parse_records,
)
from ..rc import ChangeIntent
from ..simulator import build_model, simulate_trajectory
from . import schemas

logger = logging.getLogger(__name__)

DATA_ROOT_ENV = "AGENTLINE_HOME"


def _render_report_table(rows: list[schemas.ReportRow]) -> str:
    def fmt(value: Any, places: int = 3) -> str:
        if value is None:
            return "---"
        if isinstance(value, float):
            return f"{value:.{places}f}"
        return str(value)

    lines = [f"{'Iter':>4}  {'Gate':<5} {'|F2P|':>6} {'|P2F|':>6} {'rho_P2F':>8} {'hit':>6}  FTP / P2P"]
    for row in rows:
        ftp_p2p = (
            "---"
            if row.ftp is None
            else f"{row.ftp:.2f} / {row.p2p:.3f}"
        )
        lines.append(
            f"{row.iteration:>4}  {fmt(row.gate):<5} {fmt(row.f2p):>6} {fmt(row.p2f):>6} "
            f"{fmt(row.rho_p2f):>8} {fmt(row.hit_rate, 2):>6}  {ftp_p2p}"
        )
    return "\n".join(lines)


def build_report_rows(line: VersionLine) -> list[schemas.ReportRow]:
    rows = [
        schemas.ReportRow(
            iteration=0, gate=None, f2p=None, p2f=None, rho_p2f=None,
            hit_rate=None, ftp=None, p2p=None,
        )
    ]
    versions_root = line.root / "versions"
    iterations = sorted(
        int(p.name[1:]) for p in versions_root.glob("v*") if p.name[1:].isdigit()
    )
    for t in iterations:
        if t == 0:
            continue
        flips_path = line.iteration_dir(t) / "gate" / "flips.json"
        decision_path = line.iteration_dir(t) / "gate" / "decision.json"
        if not (flips_path.exists() and decision_path.exists()):
            continue
        flips = json.loads(flips_path.read_text(encoding="utf-8"))
        decision = json.loads(decision_path.read_text(encoding="utf-8"))
        rows.append(
            schemas.ReportRow(
                iteration=t,
                gate="Acc." if decision["accept"] else "Rej.",
                f2p=len(flips["f2p_ids"]),
                p2f=len(flips["p2f_ids"]),
                rho_p2f=flips["rho_p2f"],
                hit_rate=flips.get("hit_rate"),
                ftp=flips["ftp"],
                p2p=flips["p2p"],
            )
        )
    return rows


def create_app(root: Path | None = None) -> FastAPI:
    app = FastAPI(
        title="agentline",
        version=__version__,
        description="Regression-aware release pipeline for agents on a single version line.",
    )
    data_root = Path(root or os.environ.get(DATA_ROOT_ENV, "agentline-data"))
    app.state.data_root = data_root

    # -- error mapping -------------------------------------------------------

    @app.exception_handler(ConfigError)
    async def _config_error(_req: Request, exc: ConfigError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc), "kind": "config_error"})

    @app.exception_handler(RecordParseError)
    async def _parse_error(_req: Request, exc: RecordParseError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc), "kind": "parse_error"})

    @app.exception_handler(FlipDomainError)
    async def _domain_error(_req: Request, exc: FlipDomainError) -> JSONResponse:
        return JSONResponse(status_code=400, content={"detail": str(exc), "kind": "domain_error"})

    @app.exception_handler(LineError)
    async def _line_error(_req: Request, exc: LineError) -> JSONResponse:
        return JSONResponse(status_code=409, content={"detail": str(exc), "kind": "line_error"})

    @app.exception_handler(TestSetHygieneError)
    async def _hygiene_error(_req: Request, exc: TestSetHygieneError) -> JSONResponse:
        return JSONResponse(status_code=409, content={"detail": str(exc), "kind": "hygiene_error"})

    @app.exception_handler(PhaseFailure)
    async def _phase_failure(_req: Request, exc: PhaseFailure) -> JSONResponse:
        return JSONResponse(
            status_code=500,
            content={
                "detail": str(exc),
                "kind": "phase_failure",
                "iteration": exc.iteration,
                "phase": exc.phase,
            },
        )

    # -- helpers ---------------------------------------------------------------

    def line_dir(name: str) -> Path:
        data_root.mkdir(parents=True, exist_ok=True)
        return data_root / name

    def open_line(name: str) -> VersionLine:
        return VersionLine.open(line_dir(name))

    def load_config(name: str) -> PipelineConfig:
        path = line_dir(name) / CONFIG_FILE
        if not path.exists():
            raise ConfigError(f"line {name!r} has no stored config")
        return PipelineConfig.from_dict(json.loads(path.read_text(encoding="utf-8")))

    def summarize(name: str, line: VersionLine) -> schemas.LineSummary:
        return schemas.LineSummary(
            name=name,
            head=line.head_id_or_none,
            versions=[schemas.VersionInfo(**v) for v in line.versions],
            events=line.events(),
            stopped=line.has_event("stopped"),
            final_reported=line.has_event("final_reported"),
        )

    # -- routes ------------------------------------------------------------------

    @app.get("/health", response_model=schemas.HealthResponse)
    def health() -> schemas.HealthResponse:
        return schemas.HealthResponse(version=__version__)

    @app.get("/lines", response_model=schemas.LineListResponse)
    def list_lines() -> schemas.LineListResponse:
        if not data_root.exists():
            return schemas.LineListResponse(lines=[])
        names = sorted(
            p.name for p in data_root.iterdir() if (p / "line.json").exists()
        )
        return schemas.LineListResponse(lines=names)

    @app.post("/lines", response_model=schemas.LineSummary, status_code=201)
    def init_line(request: schemas.InitLineRequest) -> schemas.LineSummary:
        target = line_dir(request.name)
        if (target / "line.json").exists():
            raise LineError(f"line {request.name!r} already exists")
        config = PipelineConfig.from_dict(request.config)
        blueprint = None
        if request.blueprint is not None:
            blueprint = Blueprint(
                version_id="v000",
                files=request.blueprint.files,
                metadata=request.blueprint.metadata,
            )
        # Baseline establishment only: no candidates yet.
        run_pipeline(config, blueprint, max_iterations=0, line_dir=target)
        return summarize(request.name, open_line(request.name))

    @app.get("/lines/{name}", response_model=schemas.LineSummary)
    def get_line(name: str) -> schemas.LineSummary:
        return summarize(name, open_line(name))

    @app.post("/lines/{name}/iterations", response_model=schemas.IterateResponse)
    def iterate(name: str, request: schemas.IterateRequest) -> schemas.IterateResponse:
        config = load_config(name)
        state_path = line_dir(name) / "state.json"
        last_done = 0
        if state_path.exists():
            last_done = json.loads(state_path.read_text(encoding="utf-8")).get("iteration", 0)
        result = run_pipeline(
            config, max_iterations=last_done + request.count, line_dir=line_dir(name)
        )
        return schemas.IterateResponse(
            iterations_run=result.iterations_run,
            stop_conditions=list(result.stop_conditions),
            converged=result.converged,
            stopped=result.stopped,
            head=result.line.head_version_id,
        )

    @app.get("/lines/{name}/report", response_model=schemas.ReportResponse)
    def report(name: str) -> schemas.ReportResponse:
        line = open_line(name)
        rows = build_report_rows(line)
        return schemas.ReportResponse(
            name=name,
            head=line.head_version_id,
            rows=rows,
            rendered=_render_report_table(rows),
        )

    @app.get("/lines/{name}/verify", response_model=schemas.VerifyResponse)
    def verify(name: str) -> schemas.VerifyResponse:
        problems = open_line(name).verify()
        return schemas.VerifyResponse(ok=not problems, problems=problems)

    @app.post("/lines/{name}/diagnose", response_model=schemas.DiagnoseResponse)
    def diagnose(name: str) -> schemas.DiagnoseResponse:
        line = open_line(name)
        head_meta = next(
            v for v in line.versions if v["version_id"] == line.head_version_id
        )
        head_iter = head_meta["iteration"]
        records_name = "train.jsonl" if head_iter == 0 else "rc_train.jsonl"
        records_path = line.iteration_dir(head_iter) / "records" / records_name
        if not records_path.exists():
            raise LineError(f"line {name!r} has no records for its head yet")
        taxonomy_candidates = sorted(line.root.glob("versions/*/taxonomy.json"))
        if not taxonomy_candidates:
            raise LineError(f"line {name!r} has no taxonomy snapshot yet")
        script = template_script(head_iter)
        report_obj = execute_script(
            script,
            records_path,
            taxonomy_candidates[-1],
            SandboxLimits(timeout=120.0),
        )
        return schemas.DiagnoseResponse(
            report=report_obj.to_dict(), script_hash=script.content_hash
        )

    @app.post("/lines/{name}/final-report", response_model=schemas.FinalReportResponse)
    def final_report(name: str) -> schemas.FinalReportResponse:
        config = load_config(name)
        components = resolve_components(config)
        target = line_dir(name)
        with FileLock(str(target / ".lock")):
            line = open_line(name)
            taxonomy_candidates = sorted(line.root.glob("versions/*/taxonomy.json"))
            from ..records import SymptomTaxonomy

            taxonomy = SymptomTaxonomy()
            if taxonomy_candidates:
                taxonomy = SymptomTaxonomy.from_dict(
                    json.loads(taxonomy_candidates[-1].read_text(encoding="utf-8"))
                )
            report_obj = line.final_report(
                components.dataset,
                components.adapter,
                components.rubric,
                components.scorer,
                components.critic_generator,
                taxonomy,
                seed=derive_seed(config.seed, "final"),
                parallelism=config.parallelism,
            )
        return schemas.FinalReportResponse(
            head_version=report_obj.head_version,
            n_test=report_obj.n_test,
            n_passed=report_obj.n_passed,
            pass_rate=report_obj.pass_rate,
        )

    @app.post("/gate/evaluate", response_model=schemas.GateEvaluateResponse)
    def gate_evaluate(request: schemas.GateEvaluateRequest) -> schemas.GateEvaluateResponse:
        prev_records = parse_records(request.prev_records)
        cand_records = parse_records(request.cand_records)
        prev = PassVector.from_records("prev", prev_records)
        cand = PassVector.from_records("cand", cand_records)
        baseline = prev
        if request.baseline_records is not None:
            baseline = PassVector.from_records(
                "baseline", parse_records(request.baseline_records)
            )
        targets: set[str] = set()
        intent_targets: tuple[str, ...] = ()
        if request.intent is not None and request.intent.target_symptoms:
            intent = ChangeIntent(
                target_symptoms=tuple(request.intent.target_symptoms),
                rationale=request.intent.rationale,
            )
            targets = set(intent.target_symptoms)
            intent_targets = intent.target_symptoms
        flip_report = build_flip_report(
            prev,
            cand,
            baseline,
            {r.example_id: r for r in prev_records},
            targets if targets else None,
        )
        config = GateConfig.from_dict(request.config) if request.config else GateConfig()
        decision = decide(flip_report, intent_targets, config)
        return schemas.GateEvaluateResponse(
            accept=decision.accept,
            reasons=[r.to_dict() for r in decision.reasons],
            flip_report=flip_report.to_dict(),
        )

    @app.post("/simulate", response_model=schemas.SimulateResponse)
    def simulate(request: schemas.SimulateRequest) -> schemas.SimulateResponse:
        model = build_model(**request.model)
        gate_config = GateConfig.from_dict(request.gate) if request.gate else GateConfig()
        stop_config = StopConfig.from_dict(request.stop) if request.stop else StopConfig()
        sim_line_dir = None
        if request.line_name is not None:
            sim_line_dir = line_dir(request.line_name)
            if (sim_line_dir / "line.json").exists():
                raise LineError(f"line {request.line_name!r} already exists")
        result = simulate_trajectory(
            model,
            gate_config,
            stop_config,
            request.seed,
            request.iterations,
            disable_diagnosis=request.disable_diagnosis,
            bad_release_threshold=request.bad_release_threshold,
            line_dir=sim_line_dir,
        )
        rows = [
            schemas.ReportRow(
                iteration=0, gate=None, f2p=None, p2f=None, rho_p2f=None,
                hit_rate=None, ftp=None, p2p=None,
            )
        ]
        for row in result.rows:
            rows.append(
                schemas.ReportRow(
                    iteration=row.iteration,
                    gate="Acc." if row.decision.accept else "Rej.",
                    f2p=len(row.flip_report.f2p_ids),
                    p2f=len(row.flip_report.p2f_ids),
                    rho_p2f=row.flip_report.rho_p2f,
                    hit_rate=row.flip_report.hit_rate,
                    ftp=row.flip_report.ftp,
                    p2p=row.flip_report.p2p,
                )
            )
        return schemas.SimulateResponse(
            result=result.to_dict(), rendered=_render_report_table(rows)
        )

    @app.post("/simulate/sweep", response_model=schemas.SweepResponse)
    def simulate_sweep(request: schemas.SweepRequest) -> schemas.SweepResponse:
        gate_config = GateConfig.from_dict(request.gate) if request.gate else GateConfig()
        stop_config = StopConfig.from_dict(request.stop) if request.stop else StopConfig()
        per_seed = []
        for seed in range(request.seeds):
            model = build_model(**{**request.model, "seed": seed})
            result = simulate_trajectory(
                model,
                gate_config,
                stop_config,
                seed,
                request.iterations,
                disable_diagnosis=request.disable_diagnosis,
                bad_release_threshold=request.bad_release_threshold,
            )
            per_seed.append(
                {
                    "seed": seed,
                    "bad_releases": result.bad_release_count,
                    "promotions": result.promotions,
                    "rejections": result.rejections,
                    "promoted_f2p": result.promoted_total_f2p(),
                    "promoted_p2f": result.promoted_total_p2f(),
                    "promoted_p2f_rate": result.promoted_p2f_rate(),
                    "evaluated_p2f_rate": result.evaluated_p2f_rate(),
                    "final_ftp": result.final_ftp,
                    "final_p2p": result.final_p2p,
                }
            )

        def mean(key: str) -> float:
            return sum(row[key] for row in per_seed) / len(per_seed)

        return schemas.SweepResponse(
            seeds=request.seeds,
            mean_bad_releases=mean("bad_releases"),
            mean_promotions=mean("promotions"),
            mean_rejections=mean("rejections"),
            mean_promoted_f2p=mean("promoted_f2p"),
            mean_promoted_p2f=mean("promoted_p2f"),
            mean_promoted_p2f_rate=mean("promoted_p2f_rate"),
            mean_evaluated_p2f_rate=mean("evaluated_p2f_rate"),
            mean_final_ftp=mean("final_ftp"),
            mean_final_p2p=mean("final_p2p"),
            per_seed=per_seed,
        )

    return app


app = create_app()

__all__ = ["app", "create_app", "build_report_rows"]
