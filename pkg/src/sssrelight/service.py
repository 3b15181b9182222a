"""Local relighting service: HTTP endpoints plus a WebSocket session.

All scene mutation flows through one worker task consuming a command queue,
so commands apply in receipt order and each applied command produces exactly
one frame broadcast tagged with its sequence number. Frames carry per-vertex
colors (u8 sRGB or f16 linear, negotiated per client); slow clients get
their oldest pending frames dropped, never the shared state.
"""

import asyncio
import json
import struct
from typing import List, Literal, Optional

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import HTMLResponse, PlainTextResponse, Response
from pydantic import BaseModel, Field, ValidationError

from . import container as ctn
from . import lighting as lt
from . import runtime as rt
from .dipole import OpticalMaterial
from .envmap import Cubemap, linear_to_srgb
from .presets import PRESETS
from .surface import load_mesh, sample_surface

FRAME_TAG = 1
STATS_TAG = 2

_PLACEHOLDER = """<!doctype html><html><head><title>sssrelight</title></head>
<body><h1>sssrelight service</h1>
<p>No editor bundle configured. Endpoints: GET /health, /scene, /mesh,
/frame.png; WebSocket /session.</p></body></html>"""


class MaterialCommand(BaseModel):
    type: Literal["set_material"]
    channel: Literal["rgb", "r", "g", "b"] = "rgb"
    sigma_s_prime: List[float] = Field(min_length=1, max_length=3)
    sigma_a: List[float] = Field(min_length=1, max_length=3)
    g: Optional[float] = None
    eta: Optional[float] = None


class LightSpec(BaseModel):
    kind: Literal["point", "directional", "sphere", "ambient_const"]
    position: Optional[List[float]] = None
    direction: Optional[List[float]] = None
    center: Optional[List[float]] = None
    radius: Optional[float] = None
    intensity: Optional[List[float]] = None
    irradiance: Optional[List[float]] = None
    radiance: Optional[List[float]] = None


class LightCommand(BaseModel):
    type: Literal["set_light"]
    lights: List[LightSpec]


class CameraCommand(BaseModel):
    type: Literal["set_camera"]
    position: List[float] = Field(min_length=3, max_length=3)
    look_at: List[float] = Field(min_length=3, max_length=3)
    up: List[float] = Field(default=[0.0, 1.0, 0.0], min_length=3, max_length=3)
    fov: float = 40.0


class HelloCommand(BaseModel):
    type: Literal["hello"]
    format: Literal["u8", "f16"] = "u8"


def _expand_channel(current: np.ndarray, values, channel: str) -> np.ndarray:
    out = current.copy()
    if channel == "rgb":
        vals = list(values)
        if len(vals) == 1:
            vals = vals * 3
        if len(vals) != 3:
            raise ValueError("rgb edits need 1 or 3 values")
        return np.asarray(vals, np.float64)
    idx = {"r": 0, "g": 1, "b": 2}[channel]
    if len(values) != 1:
        raise ValueError("single-channel edits take exactly one value")
    out[idx] = values[0]
    return out


def _light_from_spec(spec: LightSpec, face_side: int):
    if spec.kind == "point":
        return lt.PointLight(position=spec.position, intensity=spec.intensity or [1.0] * 3)
    if spec.kind == "directional":
        return lt.DirectionalLight(direction=spec.direction,
                                   irradiance=spec.irradiance or [1.0] * 3)
    if spec.kind == "sphere":
        return lt.SphereLight(center=spec.center, radius=spec.radius or 1.0,
                              radiance=spec.radiance or [1.0] * 3)
    return lt.AmbientLight(environment=Cubemap.constant(
        spec.radiance or [1.0] * 3, side=face_side))


class RenderSession:
    """Scene owner: serialized command application and frame broadcasting."""

    def __init__(self, scene: rt.Scene, exposure: float = 1.0):
        self.scene = scene
        self.exposure = exposure
        self.sequence = 0
        self.latest_frame: rt.FrameResult = scene.relight()
        self.commands: asyncio.Queue = asyncio.Queue()
        self.clients = {}
        self._next_client = 0
        self._worker = None

    def start(self):
        self._worker = asyncio.create_task(self._run())

    async def stop(self):
        if self._worker:
            self._worker.cancel()

    def register(self, fmt: str):
        cid = self._next_client
        self._next_client += 1
        self.clients[cid] = {"queue": asyncio.Queue(maxsize=8), "format": fmt}
        return cid

    def unregister(self, cid):
        self.clients.pop(cid, None)

    async def submit(self, cid, command):
        await self.commands.put((cid, command))

    async def _run(self):
        while True:
            cid, command = await self.commands.get()
            try:
                frame = await asyncio.to_thread(self._apply, command)
            except (ValueError, ValidationError) as exc:
                self._send_to(cid, json.dumps(
                    {"tag": "error", "detail": str(exc)}))
                continue
            self.sequence += 1
            frame.sequence = self.sequence
            self.latest_frame = frame
            self._broadcast(frame)

    def _apply(self, command) -> rt.FrameResult:
        scene = self.scene
        if isinstance(command, MaterialCommand):
            cur = scene.material
            material = OpticalMaterial(
                sigma_s_prime=_expand_channel(cur.sigma_s_prime,
                                              command.sigma_s_prime, command.channel),
                sigma_a=_expand_channel(cur.sigma_a, command.sigma_a, command.channel),
                g=command.g if command.g is not None else cur.g,
                eta=command.eta if command.eta is not None else cur.eta,
            )
            return scene.set_material(material)
        if isinstance(command, LightCommand):
            side = (scene.container.folded.face_side
                    if scene.container.folded else 16)
            rig = lt.LightRig(lights=tuple(
                _light_from_spec(s, side) for s in command.lights))
            return scene.set_light(rig)
        if isinstance(command, CameraCommand):
            return scene.set_camera(rt.Camera(
                position=command.position, look_at=command.look_at,
                up=command.up, fov_y_degrees=command.fov))
        raise ValueError(f"unhandled command {type(command).__name__}")

    def frame_payload(self, frame: rt.FrameResult, fmt: str) -> bytes:
        mesh = self.scene.mesh
        colors = np.zeros((mesh.vertices.shape[0], 3))
        colors[self.scene.samples.source_vertex] = frame.radiance
        head = struct.pack("<BII", FRAME_TAG, frame.sequence, colors.shape[0])
        if fmt == "f16":
            return head + colors.astype("<f2").tobytes()
        quant = (linear_to_srgb(colors * self.exposure) * 255.0 + 0.5).astype(np.uint8)
        return head + quant.tobytes()

    def stats_payload(self, frame: rt.FrameResult) -> str:
        return json.dumps({
            "tag": STATS_TAG,
            "seq": frame.sequence,
            "timings_ms": {k: round(v, 4) for k, v in frame.timings_ms.items()},
            "kept_energy_ratio": frame.kept_energy_ratio,
        })

    def _broadcast(self, frame: rt.FrameResult):
        stats = self.stats_payload(frame)
        for client in self.clients.values():
            payload = self.frame_payload(frame, client["format"])
            self._enqueue(client["queue"], payload)
            self._enqueue(client["queue"], stats)

    def _send_to(self, cid, message):
        client = self.clients.get(cid)
        if client:
            self._enqueue(client["queue"], message)

    @staticmethod
    def _enqueue(queue: asyncio.Queue, item):
        while True:
            try:
                queue.put_nowait(item)
                return
            except asyncio.QueueFull:
                try:
                    queue.get_nowait()  # drop the oldest pending frame
                except asyncio.QueueEmpty:
                    pass


_COMMANDS = {
    "set_material": MaterialCommand,
    "set_light": LightCommand,
    "set_camera": CameraCommand,
    "hello": HelloCommand,
}


def create_app(scene: rt.Scene, ui_dir=None, exposure: float = 1.0) -> FastAPI:
    app = FastAPI(title="sssrelight service")
    session = RenderSession(scene, exposure=exposure)
    app.state.session = session

    @app.on_event("startup")
    async def _startup():
        session.start()

    @app.on_event("shutdown")
    async def _shutdown():
        await session.stop()

    @app.get("/health", response_class=PlainTextResponse)
    async def health():
        return "ok"

    @app.get("/scene")
    async def scene_info():
        mesh = scene.mesh
        lo, hi = mesh.bbox
        comp = scene.container.compressed
        return {
            "vertex_count": int(mesh.vertices.shape[0]),
            "triangle_count": int(mesh.triangles.shape[0]),
            "sample_count": scene.samples.count,
            "bbox": {"min": lo.tolist(), "max": hi.tolist()},
            "k": comp.k_count,
            "sigma_box": list(scene.basis.sigma_box),
            "compression": {
                "step1_keep": comp.step1_keep,
                "step2_fraction": comp.step2_fraction,
                "stored_entries": comp.nnz,
                "has_ambient": scene.container.folded is not None,
            },
            "material": scene.material.to_dict(),
            "presets": {name: m.to_dict() for name, m in PRESETS.items()},
            "sequence": session.sequence,
        }

    @app.get("/mesh")
    async def mesh_binary():
        mesh = scene.mesh
        head = struct.pack("<II", mesh.vertices.shape[0], mesh.triangles.shape[0])
        payload = (head
                   + mesh.vertices.astype("<f4").tobytes()
                   + mesh.normals.astype("<f4").tobytes()
                   + mesh.triangles.astype("<u4").tobytes())
        return Response(content=payload, media_type="application/octet-stream")

    @app.get("/frame.png")
    async def frame_png(width: int = 640, height: int = 480):
        import io

        from PIL import Image

        image = rt.render_image(scene.mesh, scene.samples, session.latest_frame,
                                scene.camera, width, height, exposure=exposure)
        buf = io.BytesIO()
        Image.fromarray(image).save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.get("/", response_class=HTMLResponse)
    async def index():
        if ui_dir:
            import os

            index_path = os.path.join(ui_dir, "index.html")
            if os.path.exists(index_path):
                with open(index_path, "r", encoding="utf-8") as fh:
                    return fh.read()
        return _PLACEHOLDER

    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/assets", StaticFiles(directory=ui_dir), name="assets")

    @app.websocket("/session")
    async def ws_session(ws: WebSocket):
        await ws.accept()
        cid = session.register("u8")
        sender = asyncio.create_task(_drain(ws, session.clients[cid]["queue"]))
        try:
            while True:
                text = await ws.receive_text()
                try:
                    raw = json.loads(text)
                    model = _COMMANDS.get(raw.get("type"))
                    if model is None:
                        raise ValueError(f"unknown command type {raw.get('type')!r}")
                    command = model.model_validate(raw)
                except (json.JSONDecodeError, ValueError, ValidationError) as exc:
                    await ws.send_text(json.dumps({"tag": "error", "detail": str(exc)}))
                    continue
                if isinstance(command, HelloCommand):
                    session.clients[cid]["format"] = command.format
                    await ws.send_text(json.dumps(
                        {"tag": "hello", "seq": session.sequence,
                         "format": command.format}))
                    continue
                await session.submit(cid, command)
        except WebSocketDisconnect:
            pass
        finally:
            sender.cancel()
            session.unregister(cid)

    return app


async def _drain(ws: WebSocket, queue: asyncio.Queue):
    while True:
        item = await queue.get()
        if isinstance(item, bytes):
            await ws.send_bytes(item)
        else:
            await ws.send_text(item)


def run_service(container_path, mesh_path, host="127.0.0.1", port=7878,
                material: OpticalMaterial = None, ui_dir=None,
                exposure: float = 1.0):
    import uvicorn

    mesh = load_mesh(mesh_path)
    samples = sample_surface(mesh)
    container = ctn.load_container(container_path,
                                   expected_mesh_hash=mesh.content_hash())
    accel = lt.build_accelerator(mesh)
    material = material or PRESETS["marble"]
    lo, hi = mesh.bbox
    span = float(np.linalg.norm(hi - lo))
    center = (lo + hi) / 2.0
    camera = rt.Camera(position=center + np.array([0.0, 0.0, 1.6 * span]),
                       look_at=center)
    rig = lt.LightRig(lights=(lt.PointLight(
        position=center + np.array([0.0, 0.6 * span, 1.2 * span]),
        intensity=float(span * span) * 3.0),))
    scene = rt.Scene(mesh=mesh, samples=samples, container=container,
                     accel=accel, material=material, rig=rig, camera=camera)
    app = create_app(scene, ui_dir=ui_dir, exposure=exposure)
    uvicorn.run(app, host=host, port=port, log_level="warning")
