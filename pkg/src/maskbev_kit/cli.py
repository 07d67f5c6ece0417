"""Command-line entry points (``maskbev-kit <command>``).

Commands: gen-masks, encode, eval, analyze-completion, augment.
Exit status: 0 success, 1 some scans failed, 2 invalid input or config.
Set ``MASKBEV_KIT_LOG`` to error/warn/info/debug to control logging.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import glob
import hashlib
import json
import logging
import os
import shutil
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .augmentation import InstanceBank, augment
from .config import ConfigError, ToolkitConfig, load_config
from .dataset_io import (FormatError, SemanticScan, crop_point_cloud, read_kitti_objects,
                         read_point_cloud, read_poses, read_semantic_labels, write_kitti_objects,
                         write_point_cloud, write_semantic_labels)
from .evaluation import (completion_analysis, difficulty_bucket, evaluate_dataset,
                         prediction_area_analysis, render_overlay, save_png)
from .masks import (AggregatedInstanceMap, InstanceMaskSet, generate_masks_from_boxes,
                    generate_masks_from_instances, read_mask_set, scan_instances, single_scan_mask,
                    write_mask_set)
from .pillars import encode_cloud, write_bev

log = logging.getLogger("maskbev_kit")

EXIT_OK, EXIT_PARTIAL, EXIT_INVALID = 0, 1, 2
MANIFEST = "manifest.json"


class InputError(Exception):
    """Invalid command input; maps to exit status 2."""


def _setup_logging():
    level = os.environ.get("MASKBEV_KIT_LOG", "warn").lower()
    levels = {"error": logging.ERROR, "warn": logging.WARNING, "warning": logging.WARNING,
              "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    log.setLevel(levels.get(level, logging.WARNING))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------------------
# parallel map with ordered results

_SHARED: dict = {}


def _init_shared(payload):
    _SHARED.clear()
    _SHARED.update(payload)


def parallel_map(fn, items, workers: int, shared: dict | None = None) -> list:
    """``[fn(x) for x in items]``, optionally across processes; order is preserved."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        _init_shared(shared or {})
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items)), initializer=_init_shared,
                             initargs=(shared or {},)) as ex:
        return list(ex.map(fn, items))


def write_manifest(path, command: str, cfg: ToolkitConfig, results: list[dict], wall: float) -> None:
    inputs = {}
    for r in results:
        inputs.update(r.get("inputs", {}))
    scans = [{k: v for k, v in r.items() if k != "inputs"} for r in results]
    doc = {
        "toolkit_version": __version__,
        "command": command,
        "config_hash": cfg.hash(),
        "inputs": dict(sorted(inputs.items())),
        "scans": scans,
        "wall_time_s": round(wall, 3),
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def _guard(scan_id, fn, *args) -> dict:
    try:
        out = fn(*args)
        return {"scan_id": scan_id, "status": "ok", **out}
    except (OSError, ValueError) as exc:
        log.warning("scan %s failed: %s", scan_id, exc)
        return {"scan_id": scan_id, "status": "failed", "error": str(exc)}


def _rel(path, root) -> str:
    return os.path.relpath(path, root)


# ---------------------------------------------------------------------------
# dataset layouts

def kitti_paths(root, split, scan_id) -> dict:
    base = os.path.join(root, split)
    return {"velodyne": os.path.join(base, "velodyne", f"{scan_id}.bin"),
            "label": os.path.join(base, "label_2", f"{scan_id}.txt"),
            "calib": os.path.join(base, "calib", f"{scan_id}.txt")}


def kitti_scan_ids(root, split) -> list[str]:
    ids = sorted(os.path.splitext(os.path.basename(p))[0]
                 for p in glob.glob(os.path.join(root, split, "label_2", "*.txt")))
    if not ids:
        raise InputError(f"no KITTI labels under {os.path.join(root, split, 'label_2')}")
    return ids


@dataclasses.dataclass(frozen=True)
class SequenceLayout:
    root: str
    seq_dir: str
    scan_ids: tuple
    poses_path: str
    calib_path: str

    def velodyne(self, scan_id):
        return os.path.join(self.seq_dir, "velodyne", f"{scan_id}.bin")

    def labels(self, scan_id):
        return os.path.join(self.seq_dir, "labels", f"{scan_id}.label")


def semantickitti_sequence(root, sequence) -> SequenceLayout:
    seq_dir = os.path.join(root, "sequences", sequence)
    ids = tuple(sorted(os.path.splitext(os.path.basename(p))[0]
                       for p in glob.glob(os.path.join(seq_dir, "velodyne", "*.bin"))))
    if not ids:
        raise InputError(f"no scans under {os.path.join(seq_dir, 'velodyne')}")
    poses, calib = os.path.join(seq_dir, "poses.txt"), os.path.join(seq_dir, "calib.txt")
    for p in (poses, calib):
        if not os.path.exists(p):
            raise InputError(f"missing {p}")
    return SequenceLayout(root, seq_dir, ids, poses, calib)


def _load_semantic(seq: SequenceLayout, scan_id, cfg: ToolkitConfig) -> tuple[SemanticScan, dict]:
    vel, lab = seq.velodyne(scan_id), seq.labels(scan_id)
    scan = read_semantic_labels(lab, read_point_cloud(vel))
    inputs = {_rel(vel, seq.root): sha256_file(vel), _rel(lab, seq.root): sha256_file(lab)}
    return crop_point_cloud(scan, cfg.crop), inputs


def _sequence_poses(seq: SequenceLayout):
    poses = read_poses(seq.poses_path, seq.calib_path)
    index = {}
    for i, sid in enumerate(seq.scan_ids):
        k = int(sid) if sid.isdigit() else i
        if k >= len(poses):
            raise InputError(f"no pose for scan {sid} in {seq.poses_path}")
        index[sid] = poses[k]
    return index


def _aggregate_task(scan_id) -> dict:
    seq, cfg, poses = _SHARED["seq"], _SHARED["cfg"], _SHARED["poses"]

    def run():
        scan, inputs = _load_semantic(seq, scan_id, cfg)
        return {"map": scan_instances(scan, poses[scan_id], cfg.vehicle_classes), "inputs": inputs}
    return _guard(scan_id, run)


def _aggregate(seq: SequenceLayout, cfg: ToolkitConfig, poses, workers) -> tuple[AggregatedInstanceMap, dict]:
    results = parallel_map(_aggregate_task, seq.scan_ids, workers,
                           {"seq": seq, "cfg": cfg, "poses": poses})
    agg = AggregatedInstanceMap()
    failed = {}
    for r in results:  # ordered by scan id
        if r["status"] == "ok":
            agg = agg.merge(r.pop("map"))
        else:
            failed[r["scan_id"]] = r
    return agg, failed


# ---------------------------------------------------------------------------
# gen-masks

def _kitti_mask_task(scan_id) -> dict:
    root, split, out_dir, cfg, overlay_dir = (_SHARED[k] for k in ("root", "split", "out", "cfg", "overlay"))

    def run():
        p = kitti_paths(root, split, scan_id)
        boxes = read_kitti_objects(p["label"], p["calib"], cfg.object_classes)
        masks = generate_masks_from_boxes(boxes, cfg.grid, cfg.maskgen, scan_id)
        write_mask_set(masks, os.path.join(out_dir, f"{scan_id}.json"))
        inputs = {_rel(p[k], root): sha256_file(p[k]) for k in ("label", "calib")}
        if overlay_dir and os.path.exists(p["velodyne"]):
            cloud = crop_point_cloud(read_point_cloud(p["velodyne"]), cfg.crop)
            save_png(render_overlay(cloud, masks, cfg.grid), os.path.join(overlay_dir, f"{scan_id}.png"))
            inputs[_rel(p["velodyne"], root)] = sha256_file(p["velodyne"])
        return {"instances": len(masks), "inputs": inputs}
    return _guard(scan_id, run)


def _semantic_mask_task(scan_id) -> dict:
    seq, cfg, poses, agg, out_dir, overlay_dir = (
        _SHARED[k] for k in ("seq", "cfg", "poses", "agg", "out", "overlay"))

    def run():
        scan, inputs = _load_semantic(seq, scan_id, cfg)
        masks = generate_masks_from_instances(agg, scan, poses[scan_id], cfg.grid, cfg.maskgen, scan_id)
        write_mask_set(masks, os.path.join(out_dir, f"{scan_id}.json"))
        if overlay_dir:
            save_png(render_overlay(scan.cloud, masks, cfg.grid), os.path.join(overlay_dir, f"{scan_id}.png"))
        return {"instances": len(masks), "inputs": inputs}
    return _guard(scan_id, run)


def cmd_gen_masks(dataset: str, root: str, split: str, out_dir: str, cfg: ToolkitConfig,
                  workers: int = 1, overlay_dir: str | None = None) -> int:
    t0 = time.perf_counter()
    if dataset == "kitti":
        ids = kitti_scan_ids(root, split)
        os.makedirs(out_dir, exist_ok=True)
        if overlay_dir:
            os.makedirs(overlay_dir, exist_ok=True)
        results = parallel_map(_kitti_mask_task, ids, workers,
                               {"root": root, "split": split, "out": out_dir, "cfg": cfg, "overlay": overlay_dir})
    elif dataset == "semantickitti":
        seq = semantickitti_sequence(root, split)
        poses = _sequence_poses(seq)
        os.makedirs(out_dir, exist_ok=True)
        if overlay_dir:
            os.makedirs(overlay_dir, exist_ok=True)
        agg, failed = _aggregate(seq, cfg, poses, workers)
        todo = [s for s in seq.scan_ids if s not in failed]
        done = parallel_map(_semantic_mask_task, todo, workers,
                            {"seq": seq, "cfg": cfg, "poses": poses, "agg": agg, "out": out_dir,
                             "overlay": overlay_dir})
        by_id = {r["scan_id"]: r for r in done}
        by_id.update(failed)
        results = [by_id[s] for s in seq.scan_ids]
    else:
        raise InputError(f"unknown dataset {dataset!r}")
    write_manifest(os.path.join(out_dir, MANIFEST), f"gen-masks {dataset}", cfg, results,
                   time.perf_counter() - t0)
    n_fail = sum(r["status"] != "ok" for r in results)
    if n_fail:
        log.error("%d of %d scans failed; see %s", n_fail, len(results), os.path.join(out_dir, MANIFEST))
    return EXIT_PARTIAL if n_fail else EXIT_OK


# ---------------------------------------------------------------------------
# encode

def _encode_task(job) -> dict:
    src, dst = job
    cfg, seed = _SHARED["cfg"], _SHARED["seed"]

    def run():
        cloud = crop_point_cloud(read_point_cloud(src), cfg.crop)
        write_bev(encode_cloud(cloud, cfg.grid, cfg.sampling, seed, cfg.distance), dst)
        return {}
    return _guard(os.path.basename(src), run)


def cmd_encode(scans: list[str], out: str, cfg: ToolkitConfig, workers: int = 1, seed: int = 0) -> int:
    if not scans:
        raise InputError("no scans given")
    if len(scans) == 1 and not os.path.isdir(out):
        jobs = [(scans[0], out)]
    else:
        os.makedirs(out, exist_ok=True)
        jobs = [(s, os.path.join(out, os.path.splitext(os.path.basename(s))[0] + ".bevt")) for s in scans]
    results = parallel_map(_encode_task, jobs, workers, {"cfg": cfg, "seed": seed})
    failed = [r for r in results if r["status"] != "ok"]
    for r in failed:
        print(f"{r['scan_id']}: {r['error']}", file=sys.stderr)
    if failed and len(failed) == len(results):
        return EXIT_INVALID if len(results) == 1 else EXIT_PARTIAL
    return EXIT_PARTIAL if failed else EXIT_OK


# ---------------------------------------------------------------------------
# eval

def _mask_files(directory) -> dict[str, str]:
    if not os.path.isdir(directory):
        raise InputError(f"not a directory: {directory}")
    files = {}
    for p in sorted(glob.glob(os.path.join(directory, "*.json"))):
        name = os.path.basename(p)
        if name == MANIFEST:
            continue
        files[os.path.splitext(name)[0]] = p
    return files


def _read_sets(files: dict, cfg, default_score=None) -> dict[str, InstanceMaskSet]:
    out = {}
    for key, path in files.items():
        ms = read_mask_set(path, default_score, cfg.grid)
        out[ms.scan_id or key] = ms
    return out


def _difficulties(kitti_root, split, scan_ids, cfg) -> dict:
    out = {}
    for s in scan_ids:
        p = kitti_paths(kitti_root, split, s)
        boxes = read_kitti_objects(p["label"], p["calib"], cfg.object_classes)
        out[s] = {i: difficulty_bucket(b) for i, b in enumerate(boxes)}
    return out


def _empty_like(gt: InstanceMaskSet) -> InstanceMaskSet:
    return InstanceMaskSet(gt.scan_id, (), gt.grid)


def cmd_eval(pred_dir: str, gt_dir: str, report_path: str, cfg: ToolkitConfig,
             kitti_root: str | None = None, split: str = "training") -> int:
    gts = _read_sets(_mask_files(gt_dir), cfg)
    pred_files = _mask_files(pred_dir)
    if pred_files:
        preds = _read_sets(pred_files, cfg, default_score=1.0)
        unmatched = sorted(set(gts) ^ set(preds))
        if unmatched:
            raise InputError(f"scan ids present on one side only: {', '.join(unmatched)}")
    else:
        log.warning("%s holds no predictions; every scan is evaluated as empty", pred_dir)
        preds = {s: _empty_like(g) for s, g in gts.items()}
    diffs = _difficulties(kitti_root, split, sorted(gts), cfg) if kitti_root else None
    e = cfg.eval
    report = evaluate_dataset(preds, gts, e.thresholds, e.map_ladder, e.ap_mode, e.miou_mode,
                              diffs, e.difficulty_threshold)
    doc = report.to_json()
    doc["config_hash"] = cfg.hash()
    parent = os.path.dirname(os.path.abspath(report_path))
    os.makedirs(parent, exist_ok=True)
    with open(report_path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    print(format_table(report.to_json()))
    return EXIT_OK


def format_table(doc: dict) -> str:
    cols = ["AP50", "AP70", "mAP", "mIoU"]
    head = " | ".join(f"{c:>7}" for c in cols)
    row = " | ".join(f"{100 * doc[c]:7.2f}" if doc[c] is not None else f"{'-':>7}" for c in cols)
    lines = [head, "-" * len(head), row]
    if "per_difficulty" in doc:
        lines.append("")
        lines.append(" | ".join(f"{k:>8}" for k in doc["per_difficulty"]))
        lines.append(" | ".join(f"{100 * v:8.2f}" for v in doc["per_difficulty"].values()))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# analyze-completion

def _completion_task(scan_id) -> dict:
    seq, cfg, poses, agg = (_SHARED[k] for k in ("seq", "cfg", "poses", "agg"))

    def run():
        scan, inputs = _load_semantic(seq, scan_id, cfg)
        complete = generate_masks_from_instances(agg, scan, poses[scan_id], cfg.grid, cfg.maskgen, scan_id)
        singles = {e.instance_id: single_scan_mask(scan, e.instance_id, cfg.grid, cfg.maskgen)
                   for e in complete.entries}
        return {"complete": complete, "singles": singles, "inputs": inputs}
    return _guard(scan_id, run)


def write_histogram_csv(path, edges, counts) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "count"])
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([f"{lo:.6g}", f"{hi:.6g}", int(c)])


def cmd_analyze_completion(root: str, sequence: str, out_prefix: str, cfg: ToolkitConfig,
                           workers: int = 1, pred_dir: str | None = None) -> int:
    t0 = time.perf_counter()
    seq = semantickitti_sequence(root, sequence)
    poses = _sequence_poses(seq)
    agg, failed = _aggregate(seq, cfg, poses, workers)
    todo = [s for s in seq.scan_ids if s not in failed]
    done = parallel_map(_completion_task, todo, workers,
                        {"seq": seq, "cfg": cfg, "poses": poses, "agg": agg})
    complete, singles = {}, {}
    for r in done:
        if r["status"] != "ok":
            continue
        sid = r["scan_id"]
        complete[sid] = r.pop("complete")
        for inst, m in r.pop("singles").items():
            singles[(sid, inst)] = m
    e = cfg.eval
    stats = completion_analysis(complete, singles, e.low_area_cutoff,
                                np.linspace(0.0, e.hist_max, e.hist_bins + 1))
    if pred_dir:
        preds = _read_sets(_mask_files(pred_dir), cfg, default_score=1.0)
        prediction_area_analysis(preds, complete, 0.5, stats)

    parent = os.path.dirname(os.path.abspath(out_prefix))
    os.makedirs(parent, exist_ok=True)
    for series in ("best_case", "best_case_inclusive", "all_scans"):
        edges, counts = stats.histogram(series)
        write_histogram_csv(f"{out_prefix}_{series}.csv", edges, counts)
    if stats.pred_ratios:
        edges, counts = stats.histogram("predictions", np.linspace(0.0, e.pred_hist_max, e.hist_bins + 1))
        write_histogram_csv(f"{out_prefix}_predictions.csv", edges, counts)
    summary = stats.summary()
    summary["num_scans"] = len(complete)
    with open(f"{out_prefix}_summary.json", "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    by_id = {r["scan_id"]: r for r in done}
    by_id.update(failed)
    results = [by_id[s] for s in seq.scan_ids]
    write_manifest(f"{out_prefix}_manifest.json", "analyze-completion", cfg, results, time.perf_counter() - t0)
    n_fail = sum(r["status"] != "ok" for r in results)
    return EXIT_PARTIAL if n_fail else EXIT_OK


# ---------------------------------------------------------------------------
# augment

def _read_labels(path, calib, cfg):
    if path.endswith(".json"):
        return read_mask_set(path, None, cfg.grid)
    if calib is None:
        raise InputError("KITTI box labels need --calib")
    return read_kitti_objects(path, calib, cfg.object_classes)


def _read_scan(path, point_labels):
    cloud = read_point_cloud(path)
    return read_semantic_labels(point_labels, cloud) if point_labels else cloud


def cmd_augment(scan_path: str, labels_path: str, out_dir: str, cfg: ToolkitConfig, seed: int | None = None,
                point_labels: str | None = None, calib: str | None = None,
                bank_scan: str | None = None, bank_labels: str | None = None,
                bank_point_labels: str | None = None) -> int:
    aug = cfg.augment if seed is None else dataclasses.replace(cfg.augment, seed=seed)
    os.makedirs(out_dir, exist_ok=True)
    targets = {p: os.path.join(out_dir, os.path.basename(p)) for p in (scan_path, labels_path, point_labels) if p}
    if len(set(targets.values())) != len(targets):
        raise InputError("input files must have distinct names")
    scan = _read_scan(scan_path, point_labels)
    labels = _read_labels(labels_path, calib, cfg)
    if aug.is_noop():
        for src, dst in targets.items():
            shutil.copyfile(src, dst)
        return EXIT_OK
    bank = None
    if bank_scan and bank_labels:
        bank = InstanceBank.from_scan(_read_scan(bank_scan, bank_point_labels),
                                      _read_labels(bank_labels, calib, cfg))
    scan, labels = augment(scan, labels, aug, bank, cfg.grid)
    write_point_cloud(scan.cloud if isinstance(scan, SemanticScan) else scan, targets[scan_path])
    if point_labels:
        write_semantic_labels(scan, targets[point_labels])
    if isinstance(labels, InstanceMaskSet):
        write_mask_set(labels, targets[labels_path])
    else:
        write_kitti_objects(labels, targets[labels_path], calib)
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="INI configuration file")
    common.add_argument("--workers", type=int, default=argparse.SUPPRESS, help="worker processes (0 = auto)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output path")

    parser = argparse.ArgumentParser(prog="maskbev-kit", parents=[common],
                                     description="BEV instance-mask toolkit for LiDAR detection.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-masks", parents=[common], help="generate mask labels for a split or sequence")
    p.add_argument("--dataset", choices=("kitti", "semantickitti"), required=True)
    p.add_argument("--root", required=True)
    p.add_argument("--split", default=None, help="KITTI split (default training) or SemanticKITTI sequence")
    p.add_argument("--sequence", default=None, help="alias of --split for SemanticKITTI")
    p.add_argument("--overlay-dir", default=None, help="also write PNG overlays here")
    p.set_defaults(func=_run_gen_masks)

    p = sub.add_parser("encode", parents=[common], help="encode scans into BEVT pillar-feature tensors")
    p.add_argument("scans", nargs="+")
    p.add_argument("--dataset", choices=("kitti", "semantickitti"), default=None)
    p.set_defaults(func=_run_encode)

    p = sub.add_parser("eval", parents=[common], help="mask AP / mIoU of predictions against labels")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--kitti-root", default=None, help="KITTI root for per-difficulty AP")
    p.add_argument("--split", default="training")
    p.add_argument("--dataset", choices=("kitti", "semantickitti"), default=None)
    p.set_defaults(func=_run_eval)

    p = sub.add_parser("analyze-completion", parents=[common], help="single-scan vs complete mask areas")
    p.add_argument("--root", required=True)
    p.add_argument("--sequence", required=True)
    p.add_argument("--pred-dir", default=None)
    p.set_defaults(func=_run_analyze)

    p = sub.add_parser("augment", parents=[common], help="apply the augmentation pipeline to one scan")
    p.add_argument("scan")
    p.add_argument("labels", help="mask JSON or KITTI label .txt")
    p.add_argument("--point-labels", default=None, help="SemanticKITTI .label file of the scan")
    p.add_argument("--calib", default=None, help="KITTI calib file (box labels)")
    p.add_argument("--bank-scan", default=None)
    p.add_argument("--bank-labels", default=None)
    p.add_argument("--bank-point-labels", default=None)
    p.add_argument("--dataset", choices=("kitti", "semantickitti"), default=None)
    p.set_defaults(func=_run_augment)
    return parser


def _cfg(args, dataset=None) -> ToolkitConfig:
    return load_config(getattr(args, "config", None), dataset or getattr(args, "dataset", None))


def _workers(args, cfg) -> int:
    return cfg.resolved_workers(getattr(args, "workers", None))


def _out(args) -> str:
    if not getattr(args, "out", None):
        raise InputError("--out is required")
    return args.out


def _run_gen_masks(args) -> int:
    cfg = _cfg(args)
    split = args.split or args.sequence or ("training" if args.dataset == "kitti" else None)
    if split is None:
        raise InputError("--sequence is required for semantickitti")
    return cmd_gen_masks(args.dataset, args.root, split, _out(args), cfg, _workers(args, cfg), args.overlay_dir)


def _run_encode(args) -> int:
    cfg = _cfg(args)
    return cmd_encode(args.scans, _out(args), cfg, _workers(args, cfg), getattr(args, "seed", 0))


def _run_eval(args) -> int:
    cfg = _cfg(args)
    return cmd_eval(args.pred_dir, args.gt_dir, _out(args), cfg, args.kitti_root, args.split)


def _run_analyze(args) -> int:
    cfg = _cfg(args, getattr(args, "dataset", None) or "semantickitti")
    return cmd_analyze_completion(args.root, args.sequence, _out(args), cfg, _workers(args, cfg), args.pred_dir)


def _run_augment(args) -> int:
    cfg = _cfg(args)
    return cmd_augment(args.scan, args.labels, _out(args), cfg, getattr(args, "seed", None),
                       args.point_labels, args.calib, args.bank_scan, args.bank_labels, args.bank_point_labels)


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, ConfigError, FormatError, FileNotFoundError, ValueError, KeyError) as exc:
        print(f"maskbev-kit: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
