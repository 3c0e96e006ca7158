import json

import numpy as np
import pytest

from p300prm import io
from p300prm.errors import DataError
from p300prm.model import init_params
from p300prm.signal import EEGWindow, Recording, StimulusEvent, StimulusSchedule
from p300prm.train import ConfusionCounts, FoldReport


def test_recording_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    rec = Recording(512.0, rng.normal(0, 20, size=(300, 32)))
    path = io.write_recording(tmp_path / "r.csv", rec)
    assert path.read_text().splitlines()[0].startswith("time_s,Fp1,AF3,")
    back = io.read_recording(path)
    assert back.sample_rate_hz == 512.0
    np.testing.assert_allclose(back.samples, rec.samples, rtol=1e-9)


def test_schedule_round_trip(tmp_path):
    sch = StimulusSchedule([StimulusEvent(0.5, 3, True, 1, 1), StimulusEvent(0.9, 1, False, 1, 1)])
    path = io.write_schedule(tmp_path / "s.csv", sch)
    assert path.read_text().splitlines()[0] == "onset_s,image_id,is_target,run,trial"
    assert io.read_schedule(path).events == sch.events


def test_windows_round_trip_exact(tmp_path):
    rng = np.random.default_rng(1)
    wins = [EEGWindow(rng.normal(size=(32, 32)), k % 2, subject=2, session=3, run=1, trial=k, image_id=k + 1) for k in range(3)]
    path = io.write_windows(tmp_path / "w.ndjson", wins)
    first = json.loads(path.read_text().splitlines()[0])
    assert set(first) == {"subject", "session", "run", "trial", "image_id", "label", "data"}
    back = io.read_windows(path)
    for a, b in zip(wins, back):
        assert a.data.tobytes() == b.data.tobytes()
        assert a.meta == b.meta and a.label == b.label


@pytest.mark.parametrize("head", ["last", "prm"])
def test_model_round_trip_exact(tmp_path, head):
    p = init_params(3, H=5, head=head)
    q = io.read_model(io.write_model(tmp_path / "m.json", p, {"seed": 3}))
    for k in p.tensor_names():
        np.testing.assert_array_equal(p.tensors()[k], q.tensors()[k])
    assert q.head == head


def test_readers_name_the_path(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(DataError, match="bad.json"):
        io.read_model(bad)
    with pytest.raises(DataError, match="missing.csv"):
        io.read_recording(tmp_path / "missing.csv")
    lines = tmp_path / "w.ndjson"
    lines.write_text('{"label": 1}\n')
    with pytest.raises(DataError, match="w.ndjson:1"):
        io.read_windows(lines)
    bad.write_text(json.dumps({"schema": "other"}))
    with pytest.raises(DataError, match="schema"):
        io.read_model(bad)


def test_report_formats():
    hist = [{"epoch": 1, "train_loss": 0.5, "val_bac": 0.75}]
    assert io.history_to_csv(hist) == "epoch,train_loss,val_bac\n1,0.5,0.75\n"
    r = FoldReport(0, 1, 0.6, 0.7, 0.5, counts=vars(ConfusionCounts(7, 50, 50, 3)))
    obj = json.loads(io.fold_reports_json([r], {"mean_bac": 0.6, "std_bac": 0.0}))
    assert obj["mean_bac"] == 0.6 and obj["folds"][0]["bac"] == 0.6
    csv = io.matrix_to_csv([[1.0, -0.5]], ["Pz"], [1, 2])
    assert csv == "electrode,1,2\nPz,1.0,-0.5\n"


def test_write_atomic_leaves_no_temp(tmp_path):
    io.write_atomic(tmp_path / "x" / "a.txt", "hi")
    assert [p.name for p in (tmp_path / "x").iterdir()] == ["a.txt"]
