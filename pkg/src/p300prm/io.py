"""File formats: recording/schedule CSV, window NDJSON, model JSON, reports.

Every writer goes through :func:`write_atomic` (temp file + rename) and every
reader raises :class:`DataError` carrying the offending path.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import DataError, RejectedInput
from .model import ModelParams
from .signal import CHANNEL_NAMES, EEGWindow, Recording, StimulusEvent, StimulusSchedule

MODEL_SCHEMA = "p300-prm-model/1"


def write_atomic(path, content) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = content.encode("utf-8") if isinstance(content, str) else content
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=1, allow_nan=True) + "\n"


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: cannot read JSON ({exc})") from exc


# -- recordings and schedules --------------------------------------------


def recording_to_csv(rec: Recording) -> str:
    buf = _io.StringIO()
    buf.write("time_s," + ",".join(rec.channel_names) + "\n")
    t = np.arange(rec.n_samples) / rec.sample_rate_hz
    np.savetxt(buf, np.column_stack([t, rec.samples]), delimiter=",", fmt="%.10g", newline="\n")
    return buf.getvalue()


def write_recording(path, rec: Recording) -> Path:
    return write_atomic(path, recording_to_csv(rec))


def read_recording(path, sample_rate_hz: float | None = None) -> Recording:
    """Load a recording CSV; the rate is inferred from the time column unless given."""
    try:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            body = np.loadtxt(fh, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: cannot parse recording CSV ({exc})") from exc
    if len(header) != 33 or header[0] != "time_s":
        raise DataError(f"{path}: header must be time_s followed by 32 channel names")
    if body.shape[1] != 33 or body.shape[0] < 1:
        raise DataError(f"{path}: expected rows of 33 values, got shape {body.shape}")
    if sample_rate_hz is None:
        if body.shape[0] < 2:
            raise DataError(f"{path}: cannot infer sample rate from a single row")
        step = float(np.median(np.diff(body[:, 0])))
        if step <= 0:
            raise DataError(f"{path}: time column is not increasing")
        sample_rate_hz = round(1.0 / step, 6)
    try:
        return Recording(sample_rate_hz, body[:, 1:], tuple(header[1:]))
    except RejectedInput as exc:
        raise DataError(f"{path}: {exc}") from exc


def schedule_to_csv(schedule: StimulusSchedule) -> str:
    lines = ["onset_s,image_id,is_target,run,trial"]
    for e in schedule.events:
        lines.append(f"{e.onset_s!r},{e.image_id},{int(e.is_target)},{e.run},{e.trial}")
    return "\n".join(lines) + "\n"


def write_schedule(path, schedule: StimulusSchedule) -> Path:
    return write_atomic(path, schedule_to_csv(schedule))


def read_schedule(path) -> StimulusSchedule:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["onset_s", "image_id", "is_target", "run", "trial"]:
                raise DataError(f"{path}: header must be onset_s,image_id,is_target,run,trial")
            events = []
            for row in reader:
                if row["is_target"] not in ("0", "1"):
                    raise DataError(f"{path}: is_target must be 0 or 1, got {row['is_target']!r}")
                events.append(
                    StimulusEvent(
                        float(row["onset_s"]),
                        int(row["image_id"]),
                        row["is_target"] == "1",
                        int(row["run"]),
                        int(row["trial"]),
                    )
                )
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"{path}: cannot parse schedule CSV ({exc})") from exc
    return StimulusSchedule(events)


# -- windows --------------------------------------------------------------


def window_to_json(w: EEGWindow) -> str:
    obj = dict(w.meta)
    obj["label"] = int(w.label)
    obj["data"] = w.data.tolist()
    return json.dumps(obj, separators=(",", ":"))


def write_windows(path, windows) -> Path:
    return write_atomic(path, "".join(window_to_json(w) + "\n" for w in windows))


def read_windows(path) -> list[EEGWindow]:
    out = []
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    out.append(
                        EEGWindow(
                            data=np.array(obj["data"], dtype=np.float64),
                            label=int(obj["label"]),
                            subject=int(obj["subject"]),
                            session=int(obj["session"]),
                            run=int(obj["run"]),
                            trial=int(obj["trial"]),
                            image_id=int(obj["image_id"]),
                        )
                    )
                except (ValueError, KeyError, TypeError, RejectedInput) as exc:
                    raise DataError(f"{path}:{lineno}: bad window record ({exc})") from exc
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc})") from exc
    return out


# -- models ---------------------------------------------------------------


def model_to_dict(params: ModelParams, train_meta: dict | None = None) -> dict:
    d = {
        "schema": MODEL_SCHEMA,
        "H": params.H,
        "T": params.T,
        "head": params.head,
        "W_xh": params.W_xh.tolist(),
        "W_hh": params.W_hh.tolist(),
        "b_h": params.b_h.tolist(),
        "w_hy": params.w_hy.tolist(),
        "b_y": float(params.b_y),
    }
    if params.head == "prm":
        d["w_p"] = params.w_p.tolist()
        d["b_p"] = float(params.b_p)
    d["train_meta"] = train_meta or {}
    return d


def model_from_dict(d: dict, source="<dict>") -> ModelParams:
    if d.get("schema") != MODEL_SCHEMA:
        raise DataError(f"{source}: unsupported model schema {d.get('schema')!r}")
    try:
        params = ModelParams(
            W_xh=np.array(d["W_xh"], dtype=np.float64),
            W_hh=np.array(d["W_hh"], dtype=np.float64),
            b_h=np.array(d["b_h"], dtype=np.float64),
            w_hy=np.array(d["w_hy"], dtype=np.float64),
            b_y=float(d["b_y"]),
            head=d["head"],
            w_p=np.array(d["w_p"], dtype=np.float64) if d["head"] == "prm" else None,
            b_p=float(d["b_p"]) if d["head"] == "prm" else None,
            T=int(d["T"]),
        )
    except (KeyError, ValueError, TypeError, RejectedInput) as exc:
        raise DataError(f"{source}: malformed model ({exc})") from exc
    if params.H != d["H"]:
        raise DataError(f"{source}: H={d['H']} does not match W_hh shape")
    if not all(np.all(np.isfinite(v)) for v in params.tensors().values()):
        raise DataError(f"{source}: model contains non-finite values")
    return params


def write_model(path, params: ModelParams, train_meta: dict | None = None) -> Path:
    # json emits repr() floats: shortest string that round-trips exactly
    return write_atomic(path, dumps_json(model_to_dict(params, train_meta)))


def read_model(path) -> ModelParams:
    return model_from_dict(read_json(path), source=path)


# -- reports --------------------------------------------------------------


def history_to_csv(history) -> str:
    lines = ["epoch,train_loss,val_bac"]
    for h in history:
        lines.append(f"{h['epoch']},{h['train_loss']!r},{h['val_bac']!r}")
    return "\n".join(lines) + "\n"


def fold_reports_json(reports, summary: dict) -> str:
    return dumps_json({"folds": [r.to_dict() for r in reports], **summary})


def _fmt(v: float) -> str:
    return "nan" if not math.isfinite(v) else repr(float(v))


def matrix_to_csv(matrix, row_labels, col_labels, corner: str = "electrode") -> str:
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape != (len(row_labels), len(col_labels)):
        raise RejectedInput(f"labels {len(row_labels)}x{len(col_labels)} do not match matrix {matrix.shape}")
    lines = [",".join([corner] + [str(c) for c in col_labels])]
    for label, row in zip(row_labels, matrix):
        lines.append(",".join([str(label)] + [_fmt(v) for v in row]))
    return "\n".join(lines) + "\n"


def electrode_names(n: int) -> list[str]:
    return list(CHANNEL_NAMES) if n == 32 else [f"ch{i + 1}" for i in range(n)]
