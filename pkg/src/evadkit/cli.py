"""Command-line pipeline: one subcommand per stage, file-based handoff.

Every stage writes only into its ``--out`` directory and drops the resolved
configuration there as ``config.json``. Failures print one JSON line on
standard error and exit with the stage's code.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .benchmark import (ABLATION_ROWS, benchmark_scenes, make_sample, noise_seed,
                        planted_rectangle_scene)
from .boxes import read_boxes, write_boxes
from .config import PipelineConfig, load_config, standard_benchmark_config
from .events import read_evs, validate_stream, write_evs
from .evaluation import auc, read_labels, read_scores, tiou, write_labels, write_scores
from .features import FeatureEncoder, frame_descriptors
from .framing import (FrameSequence, Window, accumulate, export_frames, frame_boxes, frame_labels,
                      make_windows, rasterize, read_frame_table, read_frame_tensor, read_real_tensor,
                      write_frame_tensor, write_real_tensor)
from .localization import localize_video
from .pipeline import (MissingArtifactError, read_dataset, read_split, require, train_config,
                       write_split, write_teacher_outputs, write_video)
from .sampling import density_from_counts, eds_sample, write_samples
from .simulator import dump_scene, load_scene, simulate
from .trainer import MissingTeacherError, ToyModel, infer, teacher_outputs, tie_class_head, train, write_metrics

EXIT_CODES = {"usage": 2, "simulate": 10, "frame": 11, "sample": 12, "dataset": 13, "train": 14,
              "score": 15, "localize": 16, "eval": 17, "demo": 18}


class StageError(Exception):
    def __init__(self, stage: str, message: str, path: str | Path | None = None):
        super().__init__(message)
        self.stage = stage
        self.path = None if path is None else str(path)

    @property
    def code(self) -> int:
        return EXIT_CODES[self.stage]

    def line(self) -> str:
        payload = {"error": str(self), "stage": self.stage, "code": self.code}
        if self.path is not None:
            payload["path"] = self.path
        return json.dumps(payload, sort_keys=True)


def thread_count() -> int:
    """Worker cap from ``EVADKIT_THREADS``; 0 or unset means one per CPU."""
    raw = os.environ.get("EVADKIT_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        n = 0
    return n if n > 0 else (os.cpu_count() or 1)


def _map(fn, items):
    items = list(items)
    n = min(thread_count(), len(items)) or 1
    if n == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(n) as pool:
        return list(pool.map(fn, items))


def _out(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _config(args) -> PipelineConfig:
    base = standard_benchmark_config(args.seed if args.seed is not None else 7) if getattr(args, "standard", False) \
        else PipelineConfig()
    cfg = load_config(args.config, base)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


# --- stages -----------------------------------------------------------------

def cmd_simulate(spec_path, out, cfg: PipelineConfig, seed: int | None = None) -> dict:
    stage = "simulate"
    spec_path = Path(spec_path)
    if not spec_path.is_file():
        raise StageError(stage, f"scene spec not found: {spec_path}", spec_path)
    try:
        spec = load_scene(spec_path)
    except (ValueError, TypeError, KeyError) as exc:
        raise StageError(stage, f"bad scene spec: {exc}", spec_path) from exc
    if seed is not None:
        spec = replace(spec, seed=seed)
    out = _out(out)
    stream, scene = simulate(spec, cfg.sim)
    problems = validate_stream(stream)
    if problems:
        raise StageError(stage, f"simulated stream invalid: {problems[0]}")
    write_evs(stream, out / "events.evs")
    write_labels(scene.labels, out / "labels.txt")
    write_boxes(scene.boxes, out / "boxes.csv")
    (out / "scene.toml").write_text(dump_scene(spec))
    cfg.write(out)
    return {"events": len(stream), "frames": spec.n_frames}


def cmd_frame(events_path, out, cfg: PipelineConfig, labels_path=None, boxes_path=None, images: bool = True) -> dict:
    stage = "frame"
    try:
        stream = read_evs(require(Path(events_path), "event stream"))
        windows = make_windows(stream, cfg.binning)
    except MissingArtifactError as exc:
        raise StageError(stage, str(exc), exc.path) from exc
    except ValueError as exc:
        raise StageError(stage, f"unreadable event stream: {exc}", events_path) from exc
    out = _out(out)
    frames = rasterize(stream, windows, cfg.binning)
    export_frames(frames, out, images=images)
    maps = accumulate(stream, windows)
    write_frame_tensor(maps, out / "maps.bin")
    write_real_tensor(frame_descriptors(frames), out / "descriptors.bin")
    _write_windows(windows, out / "windows.csv")
    (out / "stats.json").write_text(json.dumps({"mean_count": frames.mean_count,
                                                "median_count": frames.median_count,
                                                "degenerate": frames.degenerate}, sort_keys=True) + "\n")
    if labels_path is not None:
        try:
            src_labels = read_labels(require(Path(labels_path), "labels"))
        except (MissingArtifactError, ValueError) as exc:
            raise StageError(stage, str(exc), labels_path) from exc
        labels = frame_labels(src_labels, windows)
        write_labels(labels, out / "frame_labels.txt")
        if boxes_path is not None:
            try:
                src_boxes = read_boxes(require(Path(boxes_path), "boxes"))
            except (MissingArtifactError, ValueError) as exc:
                raise StageError(stage, str(exc), boxes_path) from exc
            write_boxes(frame_boxes(src_boxes, windows, labels), out / "frame_boxes.csv")
    cfg.write(out)
    return {"frames": len(frames)}


def _write_windows(windows: list[Window], path: Path) -> None:
    lines = ["start_us,end_us,center_us,start_frame,end_frame,center_frame"]
    lines += [",".join(str(v) for v in w) for w in windows]
    path.write_text("\n".join(lines) + "\n")


def _read_windows(path: Path) -> list[Window]:
    rows = path.read_text().splitlines()[1:]
    return [Window(*(int(v) for v in r.split(","))) for r in rows if r.strip()]


def load_frames(frames_dir, use_maps: bool = False) -> FrameSequence:
    d = Path(frames_dir)
    counts, pol = read_frame_tensor(require(d / ("maps.bin" if use_maps else "frames.bin"), "frame tensor"))
    table = read_frame_table(require(d / "frames.csv", "frame table"))
    windows = _read_windows(require(d / "windows.csv", "window table"))
    stats = json.loads(require(d / "stats.json", "frame stats").read_text())
    rendered = table["raw_count"] if use_maps else table["rendered_count"]
    return FrameSequence(counts, pol, windows, table["raw_count"], rendered, table["budget"],
                         stats["mean_count"], stats["median_count"], stats["degenerate"])


def cmd_sample(frames_dir, out, cfg: PipelineConfig, warn=None) -> dict:
    stage = "sample"
    try:
        table = read_frame_table(require(Path(frames_dir) / "frames.csv", "frame table"))
    except MissingArtifactError as exc:
        raise StageError(stage, str(exc), exc.path) from exc
    try:
        profile = density_from_counts(table["raw_count"])
    except ValueError as exc:
        raise StageError(stage, str(exc), frames_dir) from exc
    samples = eds_sample(profile, cfg.eds)
    if samples.truncated:
        msg = f"warning: sample_count {cfg.eds.sample_count} exceeds {len(profile)} frames; kept all frames"
        (warn or (lambda m: print(m, file=sys.stderr)))(msg)
    out = _out(out)
    write_samples(samples, out / "samples.txt")
    cfg.write(out)
    return {"selected": int(samples.indices.size), "truncated": samples.truncated}


def cmd_dataset(frames_dirs, split_path, out, cfg: PipelineConfig) -> dict:
    """Fit the feature encoder on training videos and write one dataset entry per video."""
    stage = "dataset"
    try:
        split = read_split(Path(split_path))
        dirs = {Path(d).name: Path(d) for d in frames_dirs}
        missing = [v for v in split if v not in dirs]
        if missing:
            raise StageError(stage, f"no frame directory for video {missing[0]}", missing[0])
        desc, tables, labels = {}, {}, {}
        for v in split:
            desc[v] = read_real_tensor(require(dirs[v] / "descriptors.bin", "descriptors"))[0]
            tables[v] = read_frame_table(require(dirs[v] / "frames.csv", "frame table"))
            lp = dirs[v] / "frame_labels.txt"
            labels[v] = read_labels(lp) if lp.exists() else None
    except MissingArtifactError as exc:
        raise StageError(stage, str(exc), exc.path) from exc
    bench = cfg.benchmark
    train_names = [v for v, s in split.items() if s == "train"]
    if not train_names:
        raise StageError(stage, "split has no training videos", split_path)
    encoder = FeatureEncoder.fit([desc[v] for v in train_names], bench.feature_dim, bench.seed)
    out = _out(out)
    counters = {"train": 0, "test": 0}
    for v, s in split.items():
        sample = make_sample(v, desc[v], tables[v]["raw_count"], tables[v]["center_time_us"], labels[v],
                             encoder, bench, noise_seed(bench, s, counters[s]))
        counters[s] += 1
        write_video(sample, out / v, tables[v]["raw_count"])
    write_split(split, out / "split.csv")
    (out / "encoder.json").write_text(json.dumps(encoder.to_dict()) + "\n")
    cfg.write(out)
    return {"videos": len(split)}


def cmd_train(data_dir, out, cfg: PipelineConfig, role: str = "student", teacher_dir=None) -> dict:
    stage = "train"
    data_dir = Path(data_dir)
    tc = train_config(cfg)
    eda = cfg.eda if cfg.train.eda_enabled else None
    try:
        if role == "teacher":
            videos = read_dataset(data_dir, "train")
            if any(v.clean_features is None for v in videos):
                raise StageError(stage, "teacher training needs rgb_features.bin for every video", data_dir)
            videos = [replace(v, features=v.clean_features) for v in videos]
            tc = replace(tc, sampler="all", kd_enabled=False)
        else:
            if tc.uses_teacher and teacher_dir is None:
                raise StageError(stage, "distillation enabled but no --teacher directory given "
                                        "(missing artifact: teacher outputs)")
            videos = read_dataset(data_dir, "train", teacher_dir if tc.uses_teacher else None)
        test = read_dataset(data_dir, "test")
        if role == "teacher":
            test = [replace(v, features=v.clean_features) for v in test if v.clean_features is not None]
    except MissingArtifactError as exc:
        raise StageError(stage, str(exc), exc.path) from exc
    if not videos:
        raise StageError(stage, "no training videos in dataset", data_dir)
    eval_set = [v for v in test if v.frame_labels is not None] or None
    if eval_set is not None:
        pooled = np.concatenate([v.frame_labels for v in eval_set])
        if pooled.min() == pooled.max():
            eval_set = None
    try:
        model, log = train(videos, tc, eval_set=eval_set, eda=eda)
    except MissingTeacherError as exc:
        raise StageError(stage, str(exc)) from exc
    out = _out(out)
    if role == "teacher":
        model = tie_class_head(model)
        for v in read_dataset(data_dir):
            scores, logits = teacher_outputs(model, v)
            write_teacher_outputs(out, v.name, scores, logits)
    (out / "model.json").write_text(json.dumps(model.to_dict()) + "\n")
    write_metrics(log, out / "metrics.csv")
    cfg.write(out)
    return {"final_auc": log[-1].auc}


def cmd_score(model_path, data_dir, out, cfg: PipelineConfig, split: str | None = "test") -> dict:
    stage = "score"
    try:
        model = ToyModel.from_dict(json.loads(require(Path(model_path), "model").read_text()))
        videos = read_dataset(Path(data_dir), split)
    except MissingArtifactError as exc:
        raise StageError(stage, str(exc), exc.path) from exc
    out = _out(out)
    for v in videos:
        d = _out(out / v.name)
        write_scores(infer(model, v.inference_input()), d / "scores.csv")
    cfg.write(out)
    return {"videos": len(videos)}


def cmd_localize(frames_dir, scores_path, out, cfg: PipelineConfig) -> dict:
    stage = "localize"
    try:
        frames = load_frames(frames_dir, use_maps=cfg.localize_map == "raw")
        scores = read_scores(require(Path(scores_path), "scores"))
    except MissingArtifactError as exc:
        raise StageError(stage, str(exc), exc.path) from exc
    try:
        boxes = localize_video(frames, scores, cfg.localize)
    except ValueError as exc:
        raise StageError(stage, str(exc), scores_path) from exc
    out = _out(out)
    write_boxes(boxes, out / "boxes.csv")
    cfg.write(out)
    return {"frames_with_boxes": len(boxes)}


def cmd_eval(scores_paths, labels_paths, out, cfg: PipelineConfig, pred_boxes=(), gt_boxes=(),
             echo=print) -> dict:
    stage = "eval"
    if len(scores_paths) != len(labels_paths):
        raise StageError(stage, "--scores and --labels must be given the same number of times")
    if len(pred_boxes) != len(gt_boxes):
        raise StageError(stage, "--pred-boxes and --gt-boxes must be given the same number of times")
    try:
        scores = [read_scores(require(Path(p), "scores")) for p in scores_paths]
        labels = [read_labels(require(Path(p), "labels")) for p in labels_paths]
    except MissingArtifactError as exc:
        raise StageError(stage, str(exc), exc.path) from exc
    for s, lab, p in zip(scores, labels, scores_paths):
        if s.size != lab.size:
            raise StageError(stage, f"{s.size} scores but {lab.size} labels", p)
    metrics = {}
    if scores:
        try:
            metrics["auc"] = auc(np.concatenate(scores), np.concatenate(labels))
        except ValueError as exc:
            raise StageError(stage, str(exc)) from exc
    if pred_boxes:
        total, n = 0.0, 0
        for pp, gp, lab in zip(pred_boxes, gt_boxes, labels or [None] * len(pred_boxes)):
            pred = read_boxes(require(Path(pp), "predicted boxes"))
            gt = read_boxes(require(Path(gp), "ground-truth boxes"))
            frames = sorted(gt) if lab is None else np.flatnonzero(lab).tolist()
            if frames:
                total += tiou(pred, gt, frames) * len(frames)
                n += len(frames)
        metrics["tiou"] = total / n if n else 0.0
    for key in ("auc", "tiou"):
        if key in metrics:
            echo(f"{key}={metrics[key]!r}")
    if out is not None:
        out = _out(out)
        (out / "metrics.json").write_text(json.dumps(metrics, sort_keys=True, indent=2) + "\n")
        cfg.write(out)
    return metrics


def cmd_demo(out, seed: int = 7, cfg: PipelineConfig | None = None, quiet: bool = True) -> dict:
    """Standard benchmark end to end: scenes, all stages, four-row ablation, report."""
    cfg = cfg or standard_benchmark_config(seed)
    out = _out(out)
    cfg.write(out)
    scenes_dir = _out(out / "scenes")
    split = {}
    scenes = benchmark_scenes(cfg.benchmark)
    jobs = []
    for s, items in scenes.items():
        for name, spec in items:
            (scenes_dir / f"{name}.toml").write_text(dump_scene(spec))
            split[name] = s
            jobs.append(name)
    write_split(split, scenes_dir / "split.csv")

    def video_chain(name):
        sim = out / "simulate" / name
        cmd_simulate(scenes_dir / f"{name}.toml", sim, cfg)
        fr = out / "frame" / name
        cmd_frame(sim / "events.evs", fr, cfg, sim / "labels.txt", sim / "boxes.csv", images=False)
        cmd_sample(fr, out / "sample" / name, cfg, warn=lambda m: None)

    _map(video_chain, jobs)
    cmd_dataset([out / "frame" / n for n in jobs], scenes_dir / "split.csv", out / "dataset", cfg)
    teacher_dir = out / "train" / "teacher"
    cmd_train(out / "dataset", teacher_dir, cfg, role="teacher")

    test_names = [n for n in jobs if split[n] == "test"]
    ablation = {}
    for row, spec in ABLATION_ROWS.items():
        row_cfg = replace(cfg, train=replace(cfg.train, sampler=spec["sampler"], eda_enabled=spec["eda"],
                                             kd_enabled=spec["kd"]))
        tag = row.replace("+", "plus_") if row != "baseline" else row
        run = out / "train" / tag
        cmd_train(out / "dataset", run, row_cfg, teacher_dir=teacher_dir if spec["kd"] else None)
        cmd_score(run / "model.json", out / "dataset", out / "score" / tag, row_cfg)
        m = cmd_eval([out / "score" / tag / n / "scores.csv" for n in test_names],
                     [out / "dataset" / n / "frame_labels.txt" for n in test_names],
                     out / "eval" / tag, row_cfg, echo=lambda s: None)
        ablation[row] = m["auc"]

    full = "plus_EDSplus_EDAplus_KD"
    for n in test_names:
        cmd_localize(out / "frame" / n, out / "score" / full / n / "scores.csv", out / "localize" / n, cfg)
    anomalous = [n for n in test_names if read_labels(out / "dataset" / n / "frame_labels.txt").any()]
    final = cmd_eval([out / "score" / full / n / "scores.csv" for n in anomalous],
                     [out / "dataset" / n / "frame_labels.txt" for n in anomalous], None, cfg,
                     pred_boxes=[out / "localize" / n / "boxes.csv" for n in anomalous],
                     gt_boxes=[out / "frame" / n / "frame_boxes.csv" for n in anomalous], echo=lambda s: None)
    teacher_metrics = [float(r.split(",")[-1]) for r in (teacher_dir / "metrics.csv").read_text().splitlines()[1:]]

    report = {
        "seed": cfg.seed,
        "auc": ablation["+EDS+EDA+KD"],
        "tiou": final["tiou"],
        "ablation_auc": ablation,
        "teacher_auc": teacher_metrics[-1],
        "videos": {"train": sum(1 for s in split.values() if s == "train"), "test": len(test_names)},
        "config": cfg.to_dict(),
        "version": __version__,
    }
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    if not quiet:
        print(f"auc={report['auc']!r}")
        print(f"tiou={report['tiou']!r}")
    return report


# --- argument parsing -------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file overriding module defaults")
    common.add_argument("--seed", type=int, help="run seed")
    common.add_argument("--out", required=True, help="output directory for this stage")
    common.add_argument("--standard", action="store_true",
                        help="start from the standard synthetic benchmark settings instead of module defaults")

    p = argparse.ArgumentParser(prog="evadkit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="scene spec -> EVS stream, labels, boxes")
    s.add_argument("--spec", required=True)

    s = sub.add_parser("frame", parents=[common], help="EVS stream -> adaptive event frames")
    s.add_argument("--events", required=True)
    s.add_argument("--labels")
    s.add_argument("--boxes")
    s.add_argument("--no-images", action="store_true")

    s = sub.add_parser("sample", parents=[common], help="frames -> density-aware sample set")
    s.add_argument("--frames", required=True)

    s = sub.add_parser("dataset", parents=[common], help="frame directories -> training dataset")
    s.add_argument("--frames", nargs="+", required=True)
    s.add_argument("--split", required=True)

    s = sub.add_parser("train", parents=[common], help="train the teacher or the student")
    s.add_argument("--data", required=True)
    s.add_argument("--role", choices=["student", "teacher"], default="student")
    s.add_argument("--teacher", help="teacher run directory holding outputs/")
    s.add_argument("--sampler", choices=["eds", "uniform", "all"])
    s.add_argument("--no-eda", action="store_true")
    s.add_argument("--no-kd", action="store_true")

    s = sub.add_parser("score", parents=[common], help="model + dataset -> per-frame scores")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--split", choices=["train", "test", "all"], default="test")

    s = sub.add_parser("localize", parents=[common], help="frames + scores -> boxes")
    s.add_argument("--frames", required=True)
    s.add_argument("--scores", required=True)

    s = sub.add_parser("eval", parents=[common], help="print auc= / tiou=")
    s.add_argument("--scores", action="append", default=[])
    s.add_argument("--labels", action="append", default=[])
    s.add_argument("--pred-boxes", action="append", default=[])
    s.add_argument("--gt-boxes", action="append", default=[])

    s = sub.add_parser("demo", parents=[common], help="run the whole chain on the standard benchmark")
    s.add_argument("--scene-demo", action="store_true", help="also write the planted-rectangle scene spec")
    return p


def main(argv=None) -> int:
    parser = _parser()
    args = parser.parse_args(argv)
    stage = args.command
    try:
        cfg = _config(args)
        if stage == "simulate":
            cmd_simulate(args.spec, args.out, cfg, args.seed)
        elif stage == "frame":
            cmd_frame(args.events, args.out, cfg, args.labels, args.boxes, images=not args.no_images)
        elif stage == "sample":
            cmd_sample(args.frames, args.out, cfg)
        elif stage == "dataset":
            cmd_dataset(args.frames, args.split, args.out, cfg)
        elif stage == "train":
            t = cfg.train
            if args.sampler:
                t = replace(t, sampler=args.sampler)
            if args.no_eda:
                t = replace(t, eda_enabled=False)
            if args.no_kd:
                t = replace(t, kd_enabled=False)
            cmd_train(args.data, args.out, replace(cfg, train=t), args.role, args.teacher)
        elif stage == "score":
            cmd_score(args.model, args.data, args.out, cfg, None if args.split == "all" else args.split)
        elif stage == "localize":
            cmd_localize(args.frames, args.scores, args.out, cfg)
        elif stage == "eval":
            cmd_eval(args.scores, args.labels, args.out, cfg, args.pred_boxes, args.gt_boxes)
        elif stage == "demo":
            base = load_config(args.config, standard_benchmark_config(args.seed if args.seed is not None else 7))
            if args.scene_demo:
                _out(args.out)
                Path(args.out, "planted_rectangle.toml").write_text(dump_scene(planted_rectangle_scene()))
            cmd_demo(args.out, base.seed, base, quiet=False)
    except StageError as exc:
        print(exc.line(), file=sys.stderr)
        return exc.code
    except (FileNotFoundError, ValueError) as exc:
        err = StageError(stage, str(exc), getattr(exc, "filename", None))
        print(err.line(), file=sys.stderr)
        return err.code
    return 0


if __name__ == "__main__":
    sys.exit(main())
