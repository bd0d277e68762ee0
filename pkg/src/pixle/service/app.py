"""FastAPI service wrapping the attack engine.

Attack, campaign and matrix requests run synchronously and write their
artifacts server-side into the requested output directory; paths in
requests refer to the server's filesystem. Engine errors surface as 400
(bad input or configuration) or 502 (the oracle failed).
"""
from __future__ import annotations

import json
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..core import image_from_png, image_to_png
from ..errors import (
    AttackAbortedError,
    OracleError,
    PixleError,
)
from ..harness import (
    config_echo_dict,
    load_manifest,
    run_campaign,
    run_targeted_matrix,
    select_correctly_classified,
)
from ..oracle import open_oracle
from ..plotdata import emit_plot_data
from ..search import AttackGoal, run_attack
from .schemas import (
    AttackRequest,
    AttackResponse,
    CampaignRequest,
    CampaignResponse,
    HealthResponse,
    MatrixRequest,
    MatrixResponse,
    OracleInfoResponse,
    PlotRequest,
    PlotResponse,
)

app = FastAPI(title="pixle", version=__version__)


@app.exception_handler(PixleError)
async def pixle_error_handler(_: Request, exc: PixleError) -> JSONResponse:
    status = 502 if isinstance(exc, (OracleError, AttackAbortedError)) else 400
    return JSONResponse(status_code=status, content={"detail": str(exc)})


@app.get("/api/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.get("/api/oracle", response_model=OracleInfoResponse)
def oracle_info(descriptor: str = Query(...)) -> OracleInfoResponse:
    with open_oracle(descriptor) as oracle:
        return OracleInfoResponse(
            num_classes=oracle.num_classes,
            input_shape=list(oracle.input_shape) if oracle.input_shape else None,
            concurrent_safe=oracle.concurrent_safe,
        )


@app.post("/api/attack", response_model=AttackResponse)
def attack(req: AttackRequest) -> AttackResponse:
    image_path = Path(req.image)
    if not image_path.is_file():
        raise HTTPException(status_code=400, detail=f"image file {image_path} not found")
    image = image_from_png(image_path.read_bytes())
    goal = AttackGoal(label=req.label, target=req.target)
    cfg = req.settings.to_config()
    with open_oracle(req.oracle) as oracle:
        outcome = run_attack(image, goal, oracle, cfg)

    outputs: dict[str, str] = {}
    if req.out_dir is not None:
        out = Path(req.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = image_path.stem
        adv_path = out / f"{stem}_adv.png"
        adv_path.write_bytes(image_to_png(outcome.adversarial))
        outcome_path = out / f"{stem}_outcome.json"
        with open(outcome_path, "w") as fh:
            json.dump(
                {
                    "id": stem,
                    "success": outcome.success,
                    "queries": outcome.queries,
                    "l0": outcome.l0,
                    "final_loss": outcome.final_loss,
                    "applied_moves": outcome.applied_moves,
                    "label": req.label,
                    "target": req.target,
                    "config_echo": config_echo_dict(cfg),
                },
                fh,
                indent=2,
            )
            fh.write("\n")
        traj_path = out / f"{stem}_trajectory.csv"
        with open(traj_path, "w") as fh:
            fh.write("query,loss\n")
            for q, loss in outcome.trajectory:
                fh.write(f"{q},{loss!r}\n")
        outputs = {
            "adversarial": str(adv_path),
            "outcome": str(outcome_path),
            "trajectory": str(traj_path),
        }
    return AttackResponse(
        success=outcome.success,
        queries=outcome.queries,
        l0=outcome.l0,
        final_loss=outcome.final_loss,
        applied_moves=outcome.applied_moves,
        outputs=outputs,
    )


@app.post("/api/campaign", response_model=CampaignResponse)
def campaign(req: CampaignRequest) -> CampaignResponse:
    dataset = load_manifest(req.manifest)
    cfg = req.settings.to_config()
    with open_oracle(req.oracle) as oracle:
        selection = select_correctly_classified(dataset, oracle, req.quota)
        report = run_campaign(
            selection.dataset, oracle, cfg, out_dir=req.out_dir, workers=req.workers
        )
    return CampaignResponse(
        report=report.to_json_dict(),
        selection_counts={str(c): n for c, n in selection.counts.items()},
        selection_warnings=selection.warnings,
        failed_items=report.failed_items,
    )


@app.post("/api/matrix", response_model=MatrixResponse)
def matrix(req: MatrixRequest) -> MatrixResponse:
    dataset = load_manifest(req.manifest)
    cfg = req.settings.to_config()
    with open_oracle(req.oracle) as oracle:
        result = run_targeted_matrix(
            dataset,
            oracle,
            cfg,
            per_pair_quota=req.per_pair_quota,
            out_dir=req.out_dir,
            workers=req.workers,
        )
    return MatrixResponse(matrix=result.to_json_dict())


@app.post("/api/plot", response_model=PlotResponse)
def plot(req: PlotRequest) -> PlotResponse:
    out_dir = req.out_dir if req.out_dir is not None else str(Path(req.campaign_dir) / "plots")
    return PlotResponse(outputs=emit_plot_data(req.campaign_dir, out_dir))
