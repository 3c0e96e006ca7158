"""Command-line pipeline: ``p300prm <subcommand> [flags]``.

Exit status: 0 success, 1 usage error, 2 data or model error. Every
subcommand stages its outputs and moves them into ``--out`` only after all
of them were produced.
"""

from __future__ import annotations

import argparse
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import explain
from . import io as fio
from .errors import DataError, RejectedInput
from .signal import design_bandpass, preprocess_recording
from .svg import bar_svg, heatmap_svg
from .synth import SynthConfig, generate_session, subject_profile
from .train import TrainConfig, balanced_accuracy, evaluate, kfold_cv, stack_windows

log = logging.getLogger("p300prm")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


class Outputs:
    """Collects output files in a staging directory, then moves them into place together."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.created = not self.out_dir.exists()
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.stage = Path(tempfile.mkdtemp(dir=self.out_dir, prefix=".staging-"))
        self.names: list[str] = []

    def write(self, name: str, content) -> None:
        path = self.stage / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(content.encode("utf-8") if isinstance(content, str) else content)
        self.names.append(name)

    def commit(self) -> None:
        for name in self.names:
            target = self.out_dir / name
            target.parent.mkdir(parents=True, exist_ok=True)
            os.replace(self.stage / name, target)
        shutil.rmtree(self.stage, ignore_errors=True)

    def abort(self) -> None:
        shutil.rmtree(self.stage, ignore_errors=True)
        if self.created and not any(self.out_dir.iterdir()):
            self.out_dir.rmdir()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.commit()
        else:
            self.abort()
        return False


# -- data loading ---------------------------------------------------------


def load_sessions(data_dir) -> dict[tuple[int, int], list]:
    """Windows grouped by (subject, session), from NDJSON files or raw recordings + manifest."""
    data_dir = Path(data_dir)
    if not data_dir.is_dir():
        raise DataError(f"{data_dir}: not a directory")
    groups: dict[tuple[int, int], list] = {}
    ndjson = sorted(data_dir.glob("*.ndjson"))
    if ndjson:
        for path in ndjson:
            for w in fio.read_windows(path):
                groups.setdefault((w.subject, w.session), []).append(w)
        return dict(sorted(groups.items()))
    manifest_path = data_dir / "manifest.json"
    if not manifest_path.exists():
        raise DataError(f"{data_dir}: no *.ndjson window files and no manifest.json")
    manifest = fio.read_json(manifest_path)
    try:
        entries = manifest["files"]
        for e in entries:
            rec = fio.read_recording(data_dir / e["recording"], e.get("sample_rate_hz"))
            sch = fio.read_schedule(data_dir / e["schedule"])
            cascade = design_bandpass(1.0, 12.0, rec.sample_rate_hz, 3)
            key = (int(e["subject"]), int(e["session"]))
            try:
                groups[key] = preprocess_recording(rec, sch, cascade, *key)
            except RejectedInput as exc:
                raise DataError(f"{data_dir / e['recording']}: {exc}") from exc
    except (KeyError, TypeError) as exc:
        raise DataError(f"{manifest_path}: malformed manifest ({exc})") from exc
    return dict(sorted(groups.items()))


def _all_windows(groups, subject=None, session=None):
    out = []
    for (sub, ses), ws in groups.items():
        if (subject is None or sub == subject) and (session is None or ses == session):
            out.extend(ws)
    if not out:
        raise DataError(f"no windows match subject={subject} session={session}")
    return out


def _load_config(path) -> dict:
    if path is None:
        return {}
    cfg = fio.read_json(path)
    if not isinstance(cfg, dict):
        raise DataError(f"{path}: config must be a JSON object")
    return cfg


# -- subcommands ----------------------------------------------------------


def cmd_synth(args) -> None:
    conf = _load_config(args.config)
    conf = dict(conf.get("synth", conf))
    for key, flag in (
        ("subjects", args.subjects),
        ("sessions_per_subject", args.sessions),
        ("runs_per_session", args.runs),
        ("trials_per_run", args.trials),
        ("sample_rate_hz", args.sample_rate),
        ("seed", args.seed),
    ):
        if flag is not None:
            conf[key] = flag
    if args.distractor:
        conf["distractor"] = True
    overrides = dict(conf.get("profile_overrides", {}))
    if args.noise_std is not None:
        overrides["noise_std_uv"] = args.noise_std
    conf["profile_overrides"] = overrides
    try:
        cfg = SynthConfig.from_dict(conf)
    except (RejectedInput, TypeError) as exc:
        raise DataError(f"invalid synth configuration: {exc}") from exc

    manifest = {"synth_config": cfg.to_dict(), "subjects": [], "files": []}
    with Outputs(args.out) as out:
        for s in range(cfg.subjects):
            profile = subject_profile(cfg, s)
            manifest["subjects"].append({"subject": s, "profile": profile.to_dict()})
            for k in range(1, cfg.sessions_per_subject + 1):
                rec, sch = generate_session(profile, cfg, s, k)
                stem = f"sub{s:02d}_ses{k:02d}"
                out.write(f"{stem}_recording.csv", fio.recording_to_csv(rec))
                out.write(f"{stem}_schedule.csv", fio.schedule_to_csv(sch))
                manifest["files"].append(
                    {
                        "subject": s,
                        "session": k,
                        "recording": f"{stem}_recording.csv",
                        "schedule": f"{stem}_schedule.csv",
                        "sample_rate_hz": cfg.sample_rate_hz,
                    }
                )
                log.info("wrote %s (%d samples, %d events)", stem, rec.n_samples, len(sch))
        out.write("manifest.json", fio.dumps_json(manifest))


def cmd_preprocess(args) -> None:
    groups = load_sessions(args.data)
    with Outputs(args.out) as out:
        for (sub, ses), ws in groups.items():
            out.write(f"windows_sub{sub:02d}_ses{ses:02d}.ndjson", "".join(fio.window_to_json(w) + "\n" for w in ws))
            log.info("subject %d session %d: %d windows", sub, ses, len(ws))


def _train_config(args) -> TrainConfig:
    conf = _load_config(args.config)
    conf = dict(conf.get("train", conf))
    for key, flag in (
        ("head", args.head),
        ("lambda_input", args.lambda_input),
        ("lambda_prm", args.lambda_prm),
        ("epochs", args.epochs),
        ("seed", args.seed),
        ("H", args.hidden),
        ("batch_size", args.batch_size),
        ("learning_rate", args.learning_rate),
        ("patience", args.patience),
    ):
        if flag is not None:
            conf[key] = flag
    try:
        return TrainConfig.from_dict(conf)
    except (RejectedInput, TypeError) as exc:
        raise DataError(f"invalid training configuration: {exc}") from exc


def cmd_train(args) -> None:
    cfg = _train_config(args)
    groups = load_sessions(args.data)
    subjects = sorted({sub for sub, _ in groups})
    if args.subject is not None:
        if args.subject not in subjects:
            raise DataError(f"subject {args.subject} not found in {args.data}")
        subjects = [args.subject]
    all_reports = []
    with Outputs(args.out) as out:
        for sub in subjects:
            keys = sorted(k for k in groups if k[0] == sub)
            if len(keys) != args.folds:
                raise DataError(
                    f"subject {sub} has {len(keys)} sessions in {args.data}, but --folds {args.folds} needs {args.folds}"
                )
            reports, models, summary = kfold_cv(
                [groups[k] for k in keys], cfg, K=args.folds, jobs=args.jobs, session_ids=[k[1] for k in keys]
            )
            for rep, params in zip(reports, models):
                stem = f"sub{sub:02d}_fold{rep.fold_index + 1}"
                rep.model_path = f"model_{stem}.json"
                meta = {"subject": sub, "test_session": rep.test_session, "config": cfg.to_dict(), "seed": rep.seed}
                out.write(rep.model_path, fio.dumps_json(fio.model_to_dict(params, meta)))
                out.write(f"history_{stem}.csv", fio.history_to_csv(rep.history))
                d = rep.to_dict()
                d["subject"] = sub
                all_reports.append(d)
                log.info("subject %d fold %d (test session %d): BAC %.4f", sub, rep.fold_index + 1, rep.test_session, rep.bac)
        bacs = np.array([r["bac"] for r in all_reports])
        doc = {"folds": all_reports, "mean_bac": float(bacs.mean()), "std_bac": float(bacs.std()), "config": cfg.to_dict()}
        out.write("fold_reports.json", fio.dumps_json(doc))


def cmd_eval(args) -> None:
    params = fio.read_model(args.model)
    windows = _all_windows(load_sessions(args.data), args.subject, args.session)
    x, y = stack_windows(windows)
    counts = evaluate(params, x, y, threshold=args.threshold)
    try:
        m = balanced_accuracy(counts)
    except RejectedInput as exc:
        raise DataError(f"{args.data}: {exc}") from exc
    doc = {
        "model": str(args.model),
        "n_windows": len(windows),
        "threshold": args.threshold,
        "counts": {"tp": counts.tp, "fp": counts.fp, "tn": counts.tn, "fn": counts.fn},
        "bac": m.bac,
        "recall": m.recall,
        "specificity": m.specificity,
    }
    with Outputs(args.out) as out:
        out.write("eval.json", fio.dumps_json(doc))


def _emit(out: Outputs, stem: str, fmt: str, csv_text: str, svg_text) -> None:
    if fmt in ("csv", "both"):
        out.write(f"{stem}.csv", csv_text)
    if fmt in ("svg", "both"):
        out.write(f"{stem}.svg", svg_text())


def cmd_explain(args) -> None:
    params = fio.read_model(args.model)
    names = fio.electrode_names(params.n_channels)
    steps = list(range(1, params.T + 1))
    with Outputs(args.out) as out:
        rel = explain.global_relevance(params, normalize=True).per_electrode
        _emit(out, "global_relevance", args.format,
              fio.matrix_to_csv(rel[:, None], names, ["relevance"]),
              lambda: bar_svg(rel, names, "normalized electrode relevance"))
        if params.head == "prm":
            prof = explain.prm_profile(params)
            _emit(out, "prm_profile", args.format,
                  fio.matrix_to_csv(prof[None, :], ["abs_w_p"], steps, corner="weight"),
                  lambda: bar_svg(prof, steps, "|PRM weights| per timestep"))
        if args.data is not None:
            windows = _all_windows(load_sessions(args.data), args.subject, args.session)
            try:
                amap = explain.average_relevance(params, windows, args.class_filter)
            except RejectedInput as exc:
                raise DataError(f"{args.data}: {exc}") from exc
            vals = amap.normalized().values if args.normalize else amap.values
            _emit(out, f"relevance_{args.class_filter}", args.format,
                  fio.matrix_to_csv(vals, names, steps),
                  lambda: heatmap_svg(vals, names, steps, signed=True, title=f"mean gradient x input ({args.class_filter})"))


def cmd_lda(args) -> None:
    params = fio.read_model(args.model)
    windows = _all_windows(load_sessions(args.data), args.subject, args.session)
    doc = {}
    with Outputs(args.out) as out:
        for mode in explain.LDA_MODES:
            try:
                rep = explain.lda_separability(params, windows, mode, args.gamma)
            except RejectedInput as exc:
                raise DataError(f"{args.data}: {exc}") from exc
            doc[mode] = rep.to_dict()
            lines = ["window,label,projection"]
            lines += [f"{i},{int(l)},{p!r}" for i, (l, p) in enumerate(zip(rep.labels, rep.projections.tolist()))]
            out.write(f"lda_{mode}_projections.csv", "\n".join(lines) + "\n")
        out.write("lda.json", fio.dumps_json(doc))


def cmd_hidden_diff(args) -> None:
    params = fio.read_model(args.model)
    windows = _all_windows(load_sessions(args.data), args.subject, args.session)
    try:
        diff = explain.hidden_activation_diff(params, windows)
    except RejectedInput as exc:
        raise DataError(f"{args.data}: {exc}") from exc
    steps = list(range(1, params.T + 1))
    rows = [f"h{j + 1}" for j in range(params.H)] + ["mean"]
    mat = np.vstack([diff.per_neuron, diff.mean_curve[None, :]])
    with Outputs(args.out) as out:
        _emit(out, "hidden_diff", args.format,
              fio.matrix_to_csv(mat, rows, steps, corner="neuron"),
              lambda: heatmap_svg(mat, rows, steps, signed=False, title="|mean target - mean non-target| activation"))


# -- argument parsing -----------------------------------------------------


def _common(p, data=True, model=False):
    p.add_argument("--out", required=True, type=Path, help="output directory")
    if data:
        p.add_argument("--data", required=True, type=Path, help="directory with *.ndjson windows or synth output")
    if model:
        p.add_argument("--model", required=True, type=Path, help="model JSON file")
        p.add_argument("--subject", type=int, help="restrict to one subject")
        p.add_argument("--session", type=int, help="restrict to one session")


def build_parser() -> Parser:
    parser = Parser(prog="p300prm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("synth", help="generate synthetic recordings and schedules")
    _common(p, data=False)
    p.add_argument("--subjects", type=int)
    p.add_argument("--sessions", type=int, help="sessions per subject")
    p.add_argument("--runs", type=int, help="runs per session")
    p.add_argument("--trials", type=int, help="trials per run")
    p.add_argument("--sample-rate", type=float, help="source sample rate in Hz (multiple of 32)")
    p.add_argument("--noise-std", type=float, help="white-noise std in microvolts")
    p.add_argument("--distractor", action="store_true", help="add a late bump to non-target windows")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", type=Path, help="SynthConfig JSON")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="filter, decimate and window recordings into NDJSON")
    _common(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="session-level K-fold training")
    _common(p)
    p.add_argument("--head", choices=["last", "prm"])
    p.add_argument("--lambda-input", type=float, help="L1 strength on input weights")
    p.add_argument("--lambda-prm", type=float, help="L1 strength on PRM weights")
    p.add_argument("--folds", type=int, default=4)
    p.add_argument("--jobs", type=int, default=1, help="folds trained in parallel")
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--hidden", type=int, help="recurrent units")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--subject", type=int, help="train only this subject")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", type=Path, help="TrainConfig JSON")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="confusion counts and BAC of a model")
    _common(p, model=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="electrode relevance, PRM profile, gradient x input maps")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--model", required=True, type=Path)
    p.add_argument("--data", type=Path, help="windows for the averaged relevance map")
    p.add_argument("--subject", type=int)
    p.add_argument("--session", type=int)
    p.add_argument("--class", dest="class_filter", choices=explain.CLASS_FILTERS, default="target")
    p.add_argument("--normalize", action="store_true", help="scale the relevance map to max |value| = 1")
    p.add_argument("--format", choices=["csv", "svg", "both"], default="both")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("lda", help="shrinkage-LDA separability of hidden states")
    _common(p, model=True)
    p.add_argument("--gamma", type=float, default=0.1)
    p.set_defaults(func=cmd_lda)

    p = sub.add_parser("hidden-diff", help="class difference of mean hidden activations")
    _common(p, model=True)
    p.add_argument("--format", choices=["csv", "svg", "both"], default="both")
    p.set_defaults(func=cmd_hidden_diff)
    return parser


def _validate(args) -> None:
    if getattr(args, "seed", None) is not None and args.seed < 0:
        raise UsageError("--seed must be a non-negative integer")
    if getattr(args, "folds", 2) < 2:
        raise UsageError("--folds must be at least 2")
    if getattr(args, "jobs", 1) < 1:
        raise UsageError("--jobs must be at least 1")
    for flag in ("lambda_input", "lambda_prm"):
        v = getattr(args, flag, None)
        if v is not None and v < 0:
            raise UsageError(f"--{flag.replace('_', '-')} must be non-negative")
    if getattr(args, "epochs", None) is not None and args.epochs < 0:
        raise UsageError("--epochs must be non-negative")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _validate(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (DataError, RejectedInput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
