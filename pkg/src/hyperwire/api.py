"""HTTP and WebSocket facade over a running broker.

Every endpoint is async so it runs on the broker's own event loop; that is
what serializes control operations without any locking.
"""

from __future__ import annotations

from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from .broker import CLOSE, Broker
from .registry import UnknownIdError
from .solver import WiringError, wiring_from_json


def _fail(status: int, code: str, path: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status,
                        content={"error": {"code": code, "path": path,
                                           "detail": detail}})


def build_app(broker: Broker, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="hyperwire", version="1", docs_url=None, redoc_url=None)

    @app.get("/v1/state")
    async def state() -> dict:
        return broker.snapshot()

    @app.post("/v1/wirings/apply")
    async def apply(body: dict):
        app_id = body.get("app_id")
        req_id = body.get("requirement_id")
        if not isinstance(app_id, str) or not isinstance(req_id, str):
            return _fail(422, "malformed", "root",
                         "app_id and requirement_id are required strings")
        try:
            w = wiring_from_json(body.get("wiring"))
            result = broker.apply_wiring(app_id, req_id, w)
        except UnknownIdError as exc:
            return _fail(404, "unknown_id", "root", str(exc))
        except WiringError as exc:
            return _fail(422, exc.code, exc.path, exc.detail)
        return {"ok": True, **result}

    @app.websocket("/v1/events/stream")
    async def stream(ws: WebSocket, sample: int = 0):
        await ws.accept()
        sub = broker.subscribe_ws(samples=bool(sample))
        try:
            await ws.send_json({"kind": "snapshot", **broker.snapshot()})
            while True:
                msg = await sub.queue.get()
                if msg is CLOSE:
                    await ws.close(code=1013, reason="backlog")
                    break
                await ws.send_json(msg)
        except (WebSocketDisconnect, RuntimeError):
            pass  # peer went away; RuntimeError is starlette's closed-send
        finally:
            broker.unsubscribe_ws(sub)

    if ui_dir is not None:
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
