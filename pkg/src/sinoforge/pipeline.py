"""Paired dataset generation and batch evaluation.

Per-item seeds are ``derive_seed(master_seed, index)``: the first eight bytes
(little-endian) of SHA-256 over the ASCII string
``"sinoforge:<master_seed>:<index>"``. Stage seeds inside an item are derived
the same way from the item seed with the labels ``phantom``, ``noise`` and
``motion``. Nothing depends on generation order, so items can be produced by
any number of workers.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DatasetError, SinoforgeError, ValidationError
from .grid import (BinaryMask, ImageGrid, ProjectionGeometry, Sinogram, read_image,
                   rawf_paths, verify_checksum, write_image, write_mask)
from .metrics import compare, format_float
from .motion import MotionEvent, MotionSamplerConfig, inject_single_step_rotation, sample_motion_event
from .phantom import PhantomSpec, make_mask_from_phantom, make_phantom
from .projector import NoiseSpec, add_noise, default_geometry, radon_forward
from .recon import SirtConfig, sirt_reconstruct

log = logging.getLogger(__name__)

WORKERS_ENV = "SINOFORGE_WORKERS"
MANIFEST_NAME = "manifest.json"
PROFILES_DIR = Path(__file__).with_name("profiles")


def derive_seed(parent: int, label) -> int:
    digest = hashlib.sha256(f"sinoforge:{int(parent)}:{label}".encode("ascii")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class PipelineConfig:
    phantom: PhantomSpec = field(default_factory=PhantomSpec)
    n_angles: int = 360
    n_detectors: int | None = None
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    motion: MotionSamplerConfig = field(default_factory=MotionSamplerConfig)
    sirt_reduced: SirtConfig = field(default_factory=lambda: SirtConfig(n_iterations=30))
    sirt_converged: SirtConfig | None = None
    n_pairs: int = 1
    emit_blur_matched: bool = True
    emit_masks: bool = True
    master_seed: int = 0
    profile: str = "custom"

    def __post_init__(self):
        if int(self.n_pairs) != self.n_pairs or self.n_pairs < 1:
            raise ValidationError("n_pairs must be an integer >= 1")

    def geometry(self) -> ProjectionGeometry:
        n = self.phantom.size_px
        probe = ImageGrid(np.zeros((n, n), dtype=np.float32), self.phantom.spacing_mm)
        return default_geometry(probe, self.n_angles, self.n_detectors)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["sirt_converged"] = None if self.sirt_converged is None else asdict(self.sirt_converged)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        data = dict(data)
        unknown = set(data) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "phantom" in data:
                ph = dict(data["phantom"])
                data["phantom"] = PhantomSpec.for_kind(ph.pop("kind", "distal"), **ph)
            if "noise" in data:
                data["noise"] = NoiseSpec(**data["noise"])
            if "motion" in data:
                motion = dict(data["motion"])
                for key in ("angle_min", "angle_max"):
                    if key + "_deg" in motion:
                        motion[key + "_rad"] = math.radians(motion.pop(key + "_deg"))
                data["motion"] = MotionSamplerConfig(**motion)
            if "sirt_reduced" in data:
                data["sirt_reduced"] = SirtConfig(**data["sirt_reduced"])
            if data.get("sirt_converged") is not None:
                data["sirt_converged"] = SirtConfig(**data["sirt_converged"])
            return cls(**data)
        except TypeError as exc:
            raise ValidationError(f"bad config: {exc}") from exc


def load_config(path) -> PipelineConfig:
    """Read a JSON or TOML config file, or a shipped profile name (``desk``, ``paper``)."""
    p = Path(path)
    if not p.exists() and (PROFILES_DIR / f"{path}.toml").exists():
        p = PROFILES_DIR / f"{path}.toml"
    try:
        if p.suffix == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            with open(p, "rb") as fh:
                data = tomllib.load(fh)
        else:
            with open(p, encoding="utf-8") as fh:
                data = json.load(fh)
    except (ValueError, UnicodeDecodeError) as exc:
        raise ValidationError(f"{p}: cannot parse config ({exc})") from exc
    return PipelineConfig.from_dict(data)


def profile(name: str, **overrides) -> PipelineConfig:
    cfg = load_config(PROFILES_DIR / f"{name}.toml")
    return replace(cfg, **overrides) if overrides else cfg


@dataclass
class PairResult:
    ground_truth: ImageGrid
    corrupted: ImageGrid
    blur_matched: ImageGrid | None
    event: MotionEvent
    clean_sinogram: Sinogram
    corrupted_sinogram: Sinogram
    converged: ImageGrid | None = None
    cortical: BinaryMask | None = None
    trabecular: BinaryMask | None = None
    seeds: dict = field(default_factory=dict)


def generate_pair(cfg: PipelineConfig, item_seed: int, item_id: str | None = None) -> PairResult:
    """Simulate one (ground truth, motion-corrupted, blur-matched) triple.

    Noise is added after splicing, with the same noise seed on both the clean
    and the corrupted sinogram, so a zero-rotation event reproduces the
    blur-matched image exactly.
    """
    item_id = item_id or f"seed-{item_seed}"
    seeds = {name: derive_seed(item_seed, name) for name in ("phantom", "noise", "motion")}
    try:
        spec = cfg.phantom.with_seed(seeds["phantom"])
        truth = make_phantom(spec)
        geom = cfg.geometry()
        clean = radon_forward(truth, geom)
        event = sample_motion_event(replace(cfg.motion, seed=seeds["motion"]), geom)
        spliced = inject_single_step_rotation(clean, truth, geom, event)
        noise = replace(cfg.noise, seed=seeds["noise"])
        clean_noisy = add_noise(clean, noise)
        corrupted_sino = add_noise(spliced, noise)
        corrupted = sirt_reconstruct(corrupted_sino, geom, truth, cfg.sirt_reduced)
        blur = None
        if cfg.emit_blur_matched:
            blur = sirt_reconstruct(clean_noisy, geom, truth, cfg.sirt_reduced)
        converged = None
        if cfg.sirt_converged is not None:
            converged = sirt_reconstruct(clean_noisy, geom, truth, cfg.sirt_converged)
        cortical = trabecular = None
        if cfg.emit_masks and spec.kind in ("distal", "diaphyseal"):
            cortical, trabecular = make_mask_from_phantom(spec)
    except SinoforgeError as exc:
        err = DatasetError(f"item {item_id}: {exc}", item_id=item_id)
        err.exit_code = exc.exit_code
        raise err from exc
    return PairResult(truth, corrupted, blur, event, clean_noisy, corrupted_sino,
                      converged, cortical, trabecular, seeds)


def item_id_for(index: int) -> str:
    return f"item_{index:05d}"


def _write_item(args) -> dict:
    cfg, index, out_dir = args
    item_id = item_id_for(index)
    item_seed = derive_seed(cfg.master_seed, index)
    pair = generate_pair(cfg, item_seed, item_id)
    outputs = {"ground_truth": pair.ground_truth, "corrupted": pair.corrupted,
               "blur_matched": pair.blur_matched, "converged": pair.converged,
               "cortical_mask": pair.cortical, "trabecular_mask": pair.trabecular}
    files = {}
    for name, obj in outputs.items():
        if obj is None:
            continue
        rel = f"items/{item_id}/{name}"
        path = Path(out_dir) / rel
        try:
            writer = write_mask if isinstance(obj, BinaryMask) else write_image
            checksum = writer(obj, path)
        except OSError as exc:
            raise DatasetError(f"item {item_id}: cannot write {path}: {exc}", item_id=item_id) from exc
        files[name] = {"path": rel, "checksum": checksum}
    return {"id": item_id, "index": index, "item_seed": item_seed, "seeds": pair.seeds,
            "motion": pair.event.to_dict(), "files": files}


def resolve_workers(workers: int | None = None) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            workers = int(env)
        except ValueError:
            raise ValidationError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    workers = 1 if workers is None else int(workers)
    if workers < 1:
        raise ValidationError("worker count must be >= 1")
    return workers


def manifest_dict(cfg: PipelineConfig, items: list[dict]) -> dict:
    return {"toolkit": "sinoforge", "version": __version__, "format": 1,
            "config": cfg.to_dict(), "geometry": cfg.geometry().to_dict(), "items": items}


def run_dataset(cfg: PipelineConfig, out_dir, workers: int | None = None) -> dict:
    """Generate ``cfg.n_pairs`` items under ``out_dir`` and write the manifest last.

    A directory without ``manifest.json`` is an incomplete run.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / MANIFEST_NAME
    if manifest_path.exists():
        manifest_path.unlink()
    workers = resolve_workers(workers)
    jobs = [(cfg, i, str(out)) for i in range(cfg.n_pairs)]
    if workers == 1:
        items = [_write_item(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            items = list(pool.map(_write_item, jobs))
    manifest = manifest_dict(cfg, items)
    tmp = manifest_path.with_suffix(".json.tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, manifest_path)
    log.info("wrote %d items to %s", len(items), out)
    return manifest


def load_manifest(path) -> tuple[dict, Path]:
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST_NAME
    try:
        with open(p, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{p}: manifest is not valid JSON ({exc})") from exc
    if not isinstance(manifest, dict) or "items" not in manifest:
        raise ValidationError(f"{p}: not a dataset manifest")
    return manifest, p.parent


def verify_manifest(path) -> list[str]:
    """Return a list of problems (missing files, checksum mismatches)."""
    manifest, root = load_manifest(path)
    problems = []
    for item in manifest["items"]:
        for name, entry in item["files"].items():
            raw, side = rawf_paths(root / entry["path"])
            if not raw.exists() or not side.exists():
                problems.append(f"{item['id']}: {name} missing")
            elif not verify_checksum(root / entry["path"], entry["checksum"]):
                problems.append(f"{item['id']}: {name} checksum mismatch")
    return problems


CSV_COLUMNS = ("item_id", "rotation_deg", "psnr_db", "ssim", "vif")
WHICH = ("corrupted", "blur_matched", "external")


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    v = format_float(float(x))
    return v if isinstance(v, str) else repr(v)


def evaluate_dataset(manifest_path, which: str = "corrupted", external_dir=None) -> list[dict]:
    """Score every item against its ground truth.

    ``which="external"`` reads ``<external_dir>/<item_id>.raw/.json``, e.g. a
    correction network's outputs. Returns one dict per item followed by
    ``mean`` and ``std`` (sample, ddof=1) rows.
    """
    if which not in WHICH:
        raise ValidationError(f"which must be one of {WHICH}, got {which!r}")
    if which == "external" and external_dir is None:
        raise ValidationError("external evaluation needs a directory")
    manifest, root = load_manifest(manifest_path)
    rows, problems = [], []
    for item in manifest["items"]:
        files = item["files"]
        if "ground_truth" not in files:
            problems.append(f"{item['id']}: manifest lists no ground_truth")
            continue
        truth_path = root / files["ground_truth"]["path"]
        if which == "external":
            test_path = Path(external_dir) / item["id"]
        elif which in files:
            test_path = root / files[which]["path"]
        else:
            problems.append(f"{item['id']}: manifest lists no {which} image")
            continue
        missing = [str(p) for p in (truth_path, test_path) if not rawf_paths(p)[0].exists()]
        if missing:
            problems.extend(f"{item['id']}: missing {m}.raw" for m in missing)
            continue
        truth, test = read_image(truth_path), read_image(test_path)
        if truth.shape != test.shape:
            problems.append(f"{item['id']}: shape {test.shape} differs from ground truth {truth.shape}")
            continue
        report = compare(truth, test)
        rows.append({"item_id": item["id"], "rotation_deg": item["motion"]["rotation_deg"],
                     "psnr_db": report.psnr_db, "ssim": report.ssim, "vif": report.vif})
    if problems:
        raise DatasetError(f"{len(problems)} item(s) could not be evaluated", problems=problems)
    summary = []
    for label in ("mean", "std"):
        row = {"item_id": label}
        for col in CSV_COLUMNS[1:]:
            vals = np.array([r[col] for r in rows], dtype=np.float64)
            if label == "mean":
                row[col] = float(np.mean(vals)) if vals.size else math.nan
            else:
                finite = np.all(np.isfinite(vals))
                if vals.size < 2:
                    row[col] = 0.0 if vals.size and finite else math.nan
                else:
                    row[col] = float(np.std(vals, ddof=1)) if finite else math.nan
        summary.append(row)
    return rows + summary


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()
