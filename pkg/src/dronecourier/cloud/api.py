"""HTTP surface of the coordination service.

Notification delivery is server-push over a long-lived SSE stream with a
plain-JSON polling fallback (`?after=` cursor) on the same path.
"""

from __future__ import annotations

import asyncio
import base64
import binascii
import json
from pathlib import Path
from typing import Optional, Union

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from ..geo import Address
from .driver import SimulationDriver
from .service import CloudError, CloudService

ERROR_HTTP_STATUS = {
    "not_found": 404,
    "conflict": 409,
    "validation": 400,
    "capacity": 409,
    "unresolvable_address": 422,
}


class AddressModel(BaseModel):
    lines: list[str]
    locality: str = ""
    postal_code: Optional[str] = None


class RegisterUserBody(BaseModel):
    name: str
    building_id: str
    face_image: str  # base64


class PlaceOrderBody(BaseModel):
    user_id: str
    address: Union[str, AddressModel]


class DispatchBody(BaseModel):
    delivery_id: str
    operator_id: str


class TelemetryBody(BaseModel):
    delivery_id: str
    t: float
    lat: float
    lon: float
    alt: float
    battery: float
    state: str


class StatusBody(BaseModel):
    delivery_id: str
    outcome: str


def _color_json(code) -> dict:
    return {"index": code.index, "rgb": list(code.rgb)}


def create_app(service: CloudService,
               driver: Optional[SimulationDriver] = None,
               console_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="dronecourier cloud", docs_url=None, redoc_url=None)
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    @app.exception_handler(CloudError)
    async def cloud_error_handler(request: Request, exc: CloudError):
        return JSONResponse(
            status_code=ERROR_HTTP_STATUS.get(exc.code, 400),
            content={"error": exc.code, "message": exc.message, "detail": exc.detail})

    @app.post("/users", status_code=201)
    def register_user(body: RegisterUserBody):
        try:
            blob = base64.b64decode(body.face_image, validate=True)
        except (binascii.Error, ValueError):
            raise CloudError("face_image must be valid base64") from None
        account = service.register_user(body.name, blob, body.building_id)
        return {
            "user_id": account.user_id,
            "name": account.display_name,
            "building_id": account.building_id,
            "color_code": _color_json(account.color_code),
            "face_image_ref": account.face_image_ref,
        }

    @app.post("/orders", status_code=201)
    def place_order(body: PlaceOrderBody):
        if isinstance(body.address, AddressModel):
            address = Address(tuple(body.address.lines), body.address.locality,
                              body.address.postal_code)
        else:
            address = Address.from_text(body.address)
        order = service.place_order(body.user_id, address)
        user = service.users[order.user_id]
        return {
            "delivery_id": order.delivery_id,
            "status": order.status.value,
            "color_code": _color_json(user.color_code),
        }

    @app.post("/dispatch")
    def dispatch(body: DispatchBody):
        params = service.dispatch(body.delivery_id, body.operator_id)
        if driver is not None:
            driver.start_mission(params)
        return {
            "delivery_id": params.delivery_id,
            "destination": {"lat": params.destination.lat,
                            "lon": params.destination.lon},
            "color_code": _color_json(params.expected_color_code),
            "face_image_ref": params.face_image_ref,
            "building_id": params.building_id,
        }

    @app.post("/telemetry", status_code=204)
    def telemetry(body: TelemetryBody):
        service.ingest_telemetry(body.model_dump())
        return Response(status_code=204)

    @app.get("/track/{delivery_id}")
    def track(delivery_id: str, after: Optional[float] = None):
        status, samples = service.get_track(delivery_id, after)
        return {"delivery_id": delivery_id, "status": status.value,
                "samples": samples}

    def _notes_json(notes) -> list[dict]:
        return [{"seq": n.seq, "user_id": n.user_id, "kind": n.kind,
                 "delivery_id": n.delivery_id, "timestamp": n.timestamp}
                for n in notes]

    @app.get("/notifications/{user_id}")
    async def notifications(user_id: str, request: Request,
                            after: Optional[int] = None):
        wants_stream = "text/event-stream" in request.headers.get("accept", "")
        if not wants_stream:
            notes = service.notifications_for(user_id, -1 if after is None else after)
            return JSONResponse(_notes_json(notes))

        async def stream():
            cursor = -1 if after is None else after
            while True:
                if await request.is_disconnected():
                    return
                notes = service.notifications_for(user_id, cursor)
                for note in notes:
                    cursor = note.seq
                    payload = json.dumps(_notes_json([note])[0])
                    yield f"data: {payload}\n\n"
                await asyncio.sleep(0.2)

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/face/{delivery_id}")
    def face(delivery_id: str):
        blob = service.fetch_face_image(delivery_id)
        return Response(content=blob, media_type="application/octet-stream")

    @app.post("/status")
    def set_status(body: StatusBody):
        order = service.set_status(body.delivery_id, body.outcome)
        return {"delivery_id": order.delivery_id, "status": order.status.value,
                "updated_at": order.updated_at}

    if console_dir is not None and Path(console_dir).is_dir():
        app.mount("/console", StaticFiles(directory=str(console_dir), html=True),
                  name="console")

    return app
