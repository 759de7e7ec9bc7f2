"""HTTP session service for the interactive annotation loop.

Endpoints (JSON unless noted):
  POST /sessions                      multipart volume upload -> session id
  POST /sessions/{id}/scribbles       merge labeled voxels
  POST /sessions/{id}/update          train + infer + regularize, synchronous
  GET  /sessions/{id}/slice/{axis}/{i} intensity slice + mask RLE + scribbles
  GET  /sessions/{id}/mask            NIfTI download of the current mask
  GET  /sessions/{id}/status          session state summary
Errors are returned as {"code": int, "message": str}.
"""
from __future__ import annotations

import io
import json
import os
import tempfile
import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from starlette.exceptions import HTTPException as StarletteHTTPException

from .graphcut import regularize
from .methods import METHOD_NAMES, EcoNetMethod, make_method
from .metrics import dice
from .model import EcoNetConfig, save_checkpoint, load_checkpoint
from .scribbles import ScribbleSet, merge_scribbles
from .volume import (LabelMask, Volume3D, VolumeError, load_volume,
                     normalize_intensity, save_mask, save_volume)

_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass
class SessionConfig:
    method: str = "econet"
    seed: int = 0
    lam: float = 5.0
    sigma: float = 0.1
    normalize_window: tuple[float, float] | None = None
    econet: dict = field(default_factory=dict)
    method_params: dict = field(default_factory=dict)

    @classmethod
    def from_json(cls, method: str, d: dict) -> "SessionConfig":
        return cls(method=method,
                   seed=int(d.get("seed", 0)),
                   lam=float(d.get("lambda", 5.0)),
                   sigma=float(d.get("sigma", 0.1)),
                   normalize_window=(tuple(d["normalize_window"])
                                     if d.get("normalize_window") else None),
                   econet=dict(d.get("econet", {})),
                   method_params=dict(d.get("method_params", {})))

    def to_json(self) -> dict:
        return {"method": self.method, "seed": self.seed, "lambda": self.lam,
                "sigma": self.sigma,
                "normalize_window": (list(self.normalize_window)
                                     if self.normalize_window else None),
                "econet": self.econet, "method_params": self.method_params}


class Session:
    def __init__(self, sid: str, volume: Volume3D, config: SessionConfig):
        self.id = sid
        self.volume = volume
        self.config = config
        self.normalized = (normalize_intensity(volume, config.normalize_window)
                           if config.normalize_window else volume)
        econet_cfg = EcoNetConfig.from_json({**config.econet, "seed": config.seed}) \
            if config.method in ("econet", "econet-haar") else None
        self.method = make_method(config.method, seed=config.seed,
                                  econet_config=econet_cfg,
                                  **config.method_params)
        self.scribbles = ScribbleSet()
        self.mask: LabelMask | None = None
        self.status = "idle"
        self.lock = threading.Lock()


def _error_payload(code: int, message: str) -> JSONResponse:
    return JSONResponse({"code": code, "message": message}, status_code=code)


def create_app(data_dir: str | None = None, ui_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="econet annotation service")
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()
    app.state.sessions = sessions

    @app.exception_handler(StarletteHTTPException)
    async def http_error(request, exc):
        return _error_payload(exc.status_code, str(exc.detail))

    @app.exception_handler(RequestValidationError)
    async def validation_error(request, exc):
        return _error_payload(422, str(exc.errors()))

    def get_session(sid: str) -> Session:
        s = sessions.get(sid)
        if s is None:
            raise HTTPException(404, f"unknown session {sid}")
        return s

    def persist_meta(s: Session) -> None:
        if not data_dir:
            return
        d = os.path.join(data_dir, s.id)
        os.makedirs(d, exist_ok=True)
        vol_path = os.path.join(d, "volume.nii.gz")
        if not os.path.exists(vol_path):
            save_volume(s.volume, vol_path)
        with open(os.path.join(d, "session.json"), "w") as f:
            json.dump({"id": s.id, "config": s.config.to_json()}, f)

    def persist_state(s: Session) -> None:
        if not data_dir:
            return
        d = os.path.join(data_dir, s.id)
        os.makedirs(d, exist_ok=True)
        with open(os.path.join(d, "scribbles.json"), "w") as f:
            json.dump(s.scribbles.to_json(), f)
        if s.mask is not None:
            save_mask(s.mask, os.path.join(d, "mask.nii.gz"), spacing=s.volume.spacing)
        if isinstance(s.method, EcoNetMethod) and s.method.model is not None:
            save_checkpoint(s.method.model, os.path.join(d, "model.npz"))

    def restore_sessions() -> None:
        if not data_dir or not os.path.isdir(data_dir):
            return
        for sid in sorted(os.listdir(data_dir)):
            d = os.path.join(data_dir, sid)
            meta_path = os.path.join(d, "session.json")
            vol_path = os.path.join(d, "volume.nii.gz")
            if not (os.path.exists(meta_path) and os.path.exists(vol_path)):
                continue
            with open(meta_path) as f:
                meta = json.load(f)
            cfg = SessionConfig.from_json(meta["config"]["method"], meta["config"])
            s = Session(sid, load_volume(vol_path), cfg)
            scrib_path = os.path.join(d, "scribbles.json")
            if os.path.exists(scrib_path):
                with open(scrib_path) as f:
                    s.scribbles = ScribbleSet.from_json(json.load(f))
            mask_path = os.path.join(d, "mask.nii.gz")
            if os.path.exists(mask_path):
                mv = load_volume(mask_path)
                s.mask = LabelMask.from_array(mv.data > 0.5)
            model_path = os.path.join(d, "model.npz")
            if os.path.exists(model_path) and isinstance(s.method, EcoNetMethod):
                s.method.model, _ = load_checkpoint(model_path)
            sessions[sid] = s

    restore_sessions()

    @app.post("/sessions")
    def create_session(volume: UploadFile = File(...),
                       sidecar: UploadFile | None = File(None),
                       method: str = Form("econet"),
                       config: str = Form("{}")):
        if method not in METHOD_NAMES:
            raise HTTPException(400, f"unknown method {method!r}; "
                                     f"known: {', '.join(METHOD_NAMES)}")
        try:
            cfg_json = json.loads(config)
        except json.JSONDecodeError as exc:
            raise HTTPException(400, f"config is not valid JSON: {exc}")
        name = volume.filename or "volume.nii"
        suffix = ".nii.gz" if name.endswith(".nii.gz") else os.path.splitext(name)[1] or ".nii"
        with tempfile.TemporaryDirectory() as td:
            path = os.path.join(td, "upload" + suffix)
            with open(path, "wb") as f:
                f.write(volume.file.read())
            if sidecar is not None:
                with open(path + ".json", "wb") as f:
                    f.write(sidecar.file.read())
            try:
                vol = load_volume(path)
            except VolumeError as exc:
                raise HTTPException(400, f"could not read volume: {exc}")
        try:
            scfg = SessionConfig.from_json(method, cfg_json)
            sess = Session(uuid.uuid4().hex[:12], vol, scfg)
        except (ValueError, TypeError) as exc:
            raise HTTPException(400, f"bad config: {exc}")
        with registry_lock:
            sessions[sess.id] = sess
        persist_meta(sess)
        return {"id": sess.id, "dims": list(vol.dims), "spacing": list(vol.spacing),
                "method": method}

    @app.post("/sessions/{sid}/scribbles")
    def add_scribbles(sid: str, payload: dict):
        s = get_session(sid)
        try:
            new = ScribbleSet.from_json(payload)
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(422, f"bad scribble payload: {exc}")
        bad = new.check_bounds(s.volume.dims)
        if bad:
            raise HTTPException(
                422, f"coordinates out of bounds for dims {list(s.volume.dims)}: "
                     f"{[list(c) for c in bad[:16]]}")
        with s.lock:
            s.scribbles = merge_scribbles(s.scribbles, new)
            totals = {"foreground": s.scribbles.num_foreground(),
                      "background": s.scribbles.num_background()}
        persist_state(s)
        return {"accepted": {"foreground": new.num_foreground(),
                             "background": new.num_background()},
                "total": totals}

    @app.post("/sessions/{sid}/update")
    def update_segmentation(sid: str):
        s = get_session(sid)
        if not s.lock.acquire(blocking=False):
            raise HTTPException(409, "session is busy with another update")
        try:
            s.status = "updating"
            if s.scribbles.num_foreground() < 1 or s.scribbles.num_background() < 1:
                raise HTTPException(
                    409, "need at least one scribble of each class before updating")
            likelihood, t_train, t_infer = s.method.update(s.normalized, s.scribbles)
            new_mask = regularize(likelihood, s.normalized,
                                  lam=s.config.lam, sigma=s.config.sigma)
            stability = dice(new_mask, s.mask) if s.mask is not None else None
            s.mask = new_mask
        finally:
            s.status = "idle"
            s.lock.release()
        persist_state(s)
        return {"train_time": t_train, "infer_time": t_infer,
                "mask_voxels": int(s.mask.values.sum()),
                "stability_dice": stability}

    @app.get("/sessions/{sid}/slice/{axis}/{index}")
    def get_slice(sid: str, axis: str, index: int):
        s = get_session(sid)
        ax = _AXES.get(axis)
        if ax is None:
            raise HTTPException(422, f"axis must be one of x, y, z, got {axis!r}")
        if not 0 <= index < s.volume.dims[ax]:
            raise HTTPException(
                416, f"slice index {index} out of range [0, {s.volume.dims[ax]})")
        sl = [slice(None)] * 3
        sl[ax] = index
        plane = s.normalized.data[tuple(sl)]
        gray = np.clip(np.round(plane * 255.0), 0, 255).astype(np.uint8)
        width, height = gray.shape
        payload = gray.ravel(order="F")  # first remaining axis fastest
        import base64
        mask_rle = None
        if s.mask is not None:
            mask_plane = s.mask.values[tuple(sl)]
            mask_rle = [_rle_row(mask_plane[:, vrow]) for vrow in range(height)]
        rem = [a for a in range(3) if a != ax]
        overlay = {"foreground": [], "background": []}
        for key, coords in (("foreground", s.scribbles.foreground),
                            ("background", s.scribbles.background)):
            for c in coords:
                if c[ax] == index:
                    overlay[key].append([int(c[rem[0]]), int(c[rem[1]])])
        return {"axis": axis, "index": index, "width": int(width),
                "height": int(height),
                "intensity_b64": base64.b64encode(payload.tobytes()).decode(),
                "mask_rle": mask_rle, "scribbles": overlay}

    @app.get("/sessions/{sid}/mask")
    def export_mask(sid: str):
        s = get_session(sid)
        if s.mask is None:
            raise HTTPException(409, "no mask yet: run an update first")
        with tempfile.TemporaryDirectory() as td:
            path = os.path.join(td, "mask.nii.gz")
            save_mask(s.mask, path, spacing=s.volume.spacing)
            with open(path, "rb") as f:
                blob = f.read()
        return Response(content=blob, media_type="application/gzip",
                        headers={"Content-Disposition":
                                 f'attachment; filename="mask-{s.id}.nii.gz"'})

    @app.get("/sessions/{sid}/status")
    def status(sid: str):
        s = get_session(sid)
        return {"id": s.id, "status": s.status, "method": s.config.method,
                "dims": list(s.volume.dims), "spacing": list(s.volume.spacing),
                "scribbles": {"foreground": s.scribbles.num_foreground(),
                              "background": s.scribbles.num_background()},
                "has_mask": s.mask is not None,
                "mask_voxels": int(s.mask.values.sum()) if s.mask is not None else 0}

    if ui_dir and os.path.isdir(ui_dir):
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def _rle_row(row: np.ndarray) -> list[list[int]]:
    """[start, length] runs of foreground along one row."""
    runs = []
    start = None
    for i, val in enumerate(row):
        if val and start is None:
            start = i
        elif not val and start is not None:
            runs.append([start, i - start])
            start = None
    if start is not None:
        runs.append([start, len(row) - start])
    return runs
