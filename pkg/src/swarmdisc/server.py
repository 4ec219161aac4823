"""HTTP API for the labeling loop, serving queries, labels, images and jobs."""

from __future__ import annotations

import io
import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from PIL import Image

from .errors import ContractError
from .hil import HilSession, LabelStore, count_triplets, finetune
from .net import EmbeddingNetwork
from .render import load_pgm
from .training import TrainConfig

API_PREFIX = "/api/v1"


def _error(status: int, message: str, detail: str = "") -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message, "detail": detail})


def create_app(session: HilSession, store: LabelStore, image_dir,
               net: EmbeddingNetwork | None = None,
               images_by_id: dict | None = None,
               finetune_config: TrainConfig | None = None,
               static_dir=None) -> FastAPI:
    app = FastAPI(title="swarmdisc labeling service")
    # the UI bundle may be served by any static host; labels carry no secrets
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])
    image_dir = Path(image_dir)
    jobs: dict[int, dict] = {}
    jobs_lock = threading.Lock()
    write_lock = threading.Lock()
    state = {"net": net}

    def image_url(image_id: str) -> str:
        return f"{API_PREFIX}/images/{image_id}"

    def class_payload() -> list[dict]:
        counts = store.class_counts()
        return [{
            "class_id": cls.class_id,
            "name": cls.name,
            "exemplar_url": image_url(cls.exemplar_image_id),
            "count": counts.get(cls.class_id, 0),
        } for cls in sorted(store.classes.values(), key=lambda c: c.class_id)]

    @app.exception_handler(ContractError)
    async def contract_error_handler(request: Request, exc: ContractError):
        return _error(400, "contract violation", str(exc))

    @app.get(API_PREFIX + "/queries/next")
    def next_query():
        with write_lock:
            query = session.next_query()
        if query is None:
            return Response(status_code=204)
        return {"query_id": query.query_id,
                "image_url": image_url(query.image_id),
                "image_id": query.image_id,
                "classes": class_payload()}

    @app.post(API_PREFIX + "/labels")
    async def submit_label(request: Request):
        body = await request.json()
        query_id = body.get("query_id")
        if query_id is None:
            return _error(400, "missing query_id")
        with write_lock:
            try:
                label, cls = session.submit_label(
                    int(query_id),
                    class_id=body.get("class_id"),
                    new_class_name=body.get("new_class_name"),
                )
            except ContractError as exc:
                status = 404 if "unknown query_id" in str(exc) else 409 \
                    if "already labeled" in str(exc) else 400
                return _error(status, "label rejected", str(exc))
        return {"label_id": label.label_id, "class_id": cls.class_id}

    @app.get(API_PREFIX + "/classes")
    def classes():
        return {"classes": class_payload()}

    @app.get(API_PREFIX + "/images/{image_id}")
    def image(image_id: str):
        path = image_dir / f"{image_id}.pgm"
        if not path.exists():
            return _error(404, "image not found", image_id)
        pixels = load_pgm(path).pixels
        data = np.clip(np.rint(pixels * 255.0), 0, 255).astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(data, mode="L").save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.get(API_PREFIX + "/progress")
    def progress():
        return session.progress()

    @app.get(API_PREFIX + "/triplets/count")
    def triplet_count():
        return {"count": count_triplets(store)}

    @app.post(API_PREFIX + "/finetune")
    def start_finetune():
        if state["net"] is None or images_by_id is None:
            return _error(400, "finetune unavailable", "service started without a network")
        with jobs_lock:
            job_id = len(jobs) + 1
            jobs[job_id] = {"status": "running", "metrics": None}

        frozen = store.snapshot()   # labels arriving mid-job train the next run

        def run():
            try:
                cfg = finetune_config if finetune_config is not None else TrainConfig()
                tuned, metrics = finetune(state["net"], frozen, images_by_id, cfg)
                state["net"] = tuned
                with jobs_lock:
                    jobs[job_id] = {"status": "done", "metrics": metrics}
            except Exception as exc:   # background job: report, don't crash the server
                with jobs_lock:
                    jobs[job_id] = {"status": "failed", "metrics": {"error": str(exc)}}

        threading.Thread(target=run, daemon=True).start()
        return {"job_id": job_id}

    @app.get(API_PREFIX + "/jobs/{job_id}")
    def job_status(job_id: int):
        with jobs_lock:
            job = jobs.get(job_id)
        if job is None:
            return _error(404, "unknown job", str(job_id))
        return job

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
