"""Scene processing, end-to-end unwrapping modes, dataset generation and verification."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Rig, load_rig, save_rig, default_rig
from .pattern import PatternSpec
from .phase import WrappedPhaseBundle, modulation_mask, normalize01, retrieve
from .raster import Raster, read_png8, read_raster, write_png8, write_raster
from .reconstruct import PointCloud, evaluate, fit_sphere, reconstruct
from .refine import HIGH_PITCH, MID_PITCH, REF_PITCH, UNIT_PITCH, RefinedReference, \
    refined_from_bundles, two_phase_unwrap
from .simulator import NoiseSpec, SceneTrace, render_groundtruth_phase, render_stack, trace_scene
from .surfaces import Plane, Posed, Sphere, Surface, random_heightfield, surface_from_dict
from .training import Patch
from .unwrap import UnwrapResult, ZminConfig, apply_order, ladder_unwrap, phi_min, \
    two_freq_order, unit_frequency_phase, zmin_unwrap

log = logging.getLogger(__name__)

DEFAULT_STEPS = {15: 15, 114: 5, 304: 5, 912: 5}
MODES = ("three-freq", "two-phase-refined", "zmin-raw", "unit-two-freq")
DEFAULT_Z_MIN = 0.6
SPLIT_RATIO = (9, 1)
POSE_INCREMENT_DEG = 60.0


class MissingInputError(FileNotFoundError):
    pass


# ---------------------------------------------------------------------------
# one scene in memory

@dataclass
class SceneCapture:
    """Rendered stacks and everything derived from them for one scene."""
    rig: Rig
    trace: SceneTrace
    images: dict                  # pitch -> list of arrays
    bundles: dict                 # pitch -> WrappedPhaseBundle
    mask: np.ndarray              # modulation masks of all pitches, geometry, Phi_min validity
    z_min: float
    Phi_min: np.ndarray           # at the reference pitch
    truth: np.ndarray = field(repr=False, default=None)   # simulator phase at the high pitch


def capture_scene(rig: Rig, surface: Surface, noise: NoiseSpec = NoiseSpec(),
                  steps: dict | None = None, z_min: float = DEFAULT_Z_MIN,
                  threshold: float = 8.0) -> SceneCapture:
    steps = dict(DEFAULT_STEPS if steps is None else steps)
    trace = trace_scene(rig, surface)
    images, bundles = {}, {}
    for pitch, n in sorted(steps.items()):
        images[pitch] = render_stack(rig, PatternSpec(pitch, n), trace, noise)
        bundles[pitch] = retrieve(images[pitch])
    Phi_min, ok = phi_min(ZminConfig(z_min, rig, REF_PITCH))
    mask = trace.in_bounds & ok
    for b in bundles.values():
        mask &= modulation_mask(b, threshold)
    truth = render_groundtruth_phase(rig, None, HIGH_PITCH, trace)[0].data
    return SceneCapture(rig, trace, images, bundles, mask, z_min, Phi_min, truth)


@dataclass
class PipelineResult:
    mode: str
    unwrap: UnwrapResult
    cloud: PointCloud
    metrics: dict


def unwrap_mode(cap: SceneCapture, mode: str, bundles: dict | None = None,
                refined: RefinedReference | None = None) -> UnwrapResult:
    """High-pitch absolute phase by one of the unwrapping strategies in ``MODES``."""
    b = cap.bundles if bundles is None else bundles
    m = cap.mask
    phi_h = b[HIGH_PITCH].phi
    if mode == "three-freq":
        return ladder_unwrap([(UNIT_PITCH, b[UNIT_PITCH]), (MID_PITCH, b[MID_PITCH]),
                              (HIGH_PITCH, b[HIGH_PITCH])], mask=m)
    cfg = ZminConfig(cap.z_min, cap.rig, REF_PITCH)
    if mode == "two-phase-refined":
        if refined is None:
            refined = refined_from_bundles(b[UNIT_PITCH].phi, b[MID_PITCH].phi,
                                           b[REF_PITCH].phi, cfg, m)
        return two_phase_unwrap(phi_h, refined, cfg, m)
    if mode == "zmin-raw":
        ref = zmin_unwrap(b[REF_PITCH].phi, cfg, m, Phi_min=cap.Phi_min)
        K = two_freq_order(phi_h, ref.phase, HIGH_PITCH, REF_PITCH, m)
        return UnwrapResult(apply_order(phi_h, K, m), K, m)
    if mode == "unit-two-freq":
        Phi_1 = np.where(m, unit_frequency_phase(b[UNIT_PITCH].phi), 0.0)
        K = two_freq_order(phi_h, Phi_1, HIGH_PITCH, UNIT_PITCH, m)
        return UnwrapResult(apply_order(phi_h, K, m), K, m)
    raise ValueError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")


def run_pipeline(cap: SceneCapture, mode: str = "three-freq") -> PipelineResult:
    """Unwrap, triangulate, and score against the simulator's phase and depth."""
    res = unwrap_mode(cap, mode)
    cloud = reconstruct(cap.rig, res.phase, HIGH_PITCH, res.mask)
    out = evaluate(cap.rig, res.phase, cap.truth, res.mask, HIGH_PITCH)
    return PipelineResult(mode, res, cloud, out)


def sphere_radius(cap: SceneCapture, mode: str = "three-freq") -> float:
    return fit_sphere(run_pipeline(cap, mode).cloud).radius


def order_errors(cap: SceneCapture, mode: str) -> int:
    """Pixels whose high-pitch fringe order differs from the simulator's."""
    res = unwrap_mode(cap, mode)
    K_true = np.round((cap.truth - cap.bundles[HIGH_PITCH].phi) / (2 * np.pi))
    return int(np.count_nonzero((res.order != K_true) & res.mask))


# ---------------------------------------------------------------------------
# scenes and manifests

def sphere_scene() -> Surface:
    """100 mm radius sphere centred 0.75 m in front of the camera."""
    return Sphere((0.0, 0.0, 0.75), 0.1)


def default_scenes(n_heightfields: int = 3, seed: int = 0) -> list[dict]:
    """Plane, sphere and procedural height fields as surface dicts."""
    plane = Posed(Plane(0.75), (8.0, -6.0, 0.0), (0.0, 0.0, 0.75))
    scenes = [{"id": "plane", "surface": plane.to_dict()},
              {"id": "sphere", "surface": sphere_scene().to_dict()}]
    for i in range(n_heightfields):
        hf = random_heightfield(seed * 1000 + i)
        scenes.append({"id": f"heightfield{i}", "surface": hf.to_dict()})
    return scenes


def split_counts(n: int, ratio=SPLIT_RATIO) -> tuple[int, int]:
    """(train, validation) sizes; validation is rounded up and at least 1."""
    if n < 2:
        raise ValueError("need at least 2 records to split")
    n_val = max(1, math.ceil(n * ratio[1] / (ratio[0] + ratio[1])))
    n_val = min(n_val, n - 1)
    return n - n_val, n_val


def assign_split(ids, seed: int, ratio=SPLIT_RATIO) -> dict:
    ids = list(ids)
    _, n_val = split_counts(len(ids), ratio)
    perm = np.random.default_rng([seed, 9001]).permutation(len(ids))
    val = {ids[i] for i in perm[:n_val]}
    return {i: ("validation" if i in val else "train") for i in ids}


@dataclass(frozen=True)
class DatasetManifest:
    scenes: list                 # [{"id", "surface"}]
    poses: int = 1
    steps: dict = field(default_factory=lambda: dict(DEFAULT_STEPS))
    noise: NoiseSpec = NoiseSpec(quantize=True)
    seed: int = 0
    z_min: float = DEFAULT_Z_MIN
    camera_scale: float = 1.0
    ratio: tuple = SPLIT_RATIO

    def __post_init__(self):
        if not 1 <= self.poses <= 6:
            raise ValueError("poses must be 1..6 (60 degree increments)")
        if any(n < 3 for n in self.steps.values()):
            raise ValueError("every pitch needs at least 3 steps")


@dataclass(frozen=True)
class SceneRecord:
    id: str
    split: str
    fringes: dict        # "pitch/step" -> relative path
    targets: dict        # name -> relative path
    complete: bool = True
    reason: str = ""

    def paths(self):
        return list(self.fringes.values()) + list(self.targets.values())


def _posed(surface: dict, k: int) -> Surface:
    base = surface_from_dict(surface)
    if k == 0:
        return base
    # spin about the optical axis through the scene centre
    pivot = tuple(surface.get("center", (0.0, 0.0, surface.get("z0", 0.75))))
    if surface["type"] == "posed":
        pivot = tuple(surface["pivot"])
    return Posed(base, (0.0, 0.0, POSE_INCREMENT_DEG * k), pivot)


def scene_patch(cap: SceneCapture, refined: RefinedReference, Phi_gt) -> Patch:
    """Full-frame training tuple (single-shot inputs, first phase step)."""
    phi_h = cap.bundles[HIGH_PITCH].phi
    m = cap.mask
    return Patch(normalize01(cap.images[HIGH_PITCH][0], 0, 255),
                 normalize01(cap.images[REF_PITCH][0], 0, 255),
                 np.where(m, -np.sin(phi_h), 0.0), np.where(m, np.cos(phi_h), 0.0),
                 refined.M_r, refined.D_r, Phi_gt, cap.Phi_min, m)


def _targets(cap: SceneCapture):
    cfg = ZminConfig(cap.z_min, cap.rig, REF_PITCH)
    b = cap.bundles
    refined = refined_from_bundles(b[UNIT_PITCH].phi, b[MID_PITCH].phi, b[REF_PITCH].phi,
                                   cfg, cap.mask)
    Phi_gt = unwrap_mode(cap, "three-freq").phase
    return refined, Phi_gt


def generate_dataset(manifest: DatasetManifest, out) -> dict:
    """Render and write every scene/pose; returns the manifest dict written as JSON."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rig = default_rig(manifest.camera_scale)
    save_rig(rig, out / "rig.json")
    entries = [(s, k) for s in manifest.scenes for k in range(manifest.poses)]
    ids = [f"{s['id']}_p{k}" for s, k in entries]
    split = assign_split(ids, manifest.seed, manifest.ratio)
    records = []
    for (scene, k), sid in zip(entries, ids):
        d = out / sid
        d.mkdir(exist_ok=True)
        try:
            noise = NoiseSpec(manifest.noise.sigma, manifest.noise.quantize, manifest.noise.clamp,
                              manifest.noise.seed + len(records))
            cap = capture_scene(rig, _posed(scene["surface"], k), noise,
                                manifest.steps, manifest.z_min)
            if not cap.mask.any():
                raise ValueError("no valid pixels")
            refined, Phi_gt = _targets(cap)
            fringes = {}
            for pitch in sorted(cap.images):
                for n, img in enumerate(cap.images[pitch], 1):
                    name = f"fringe_{pitch}_{n:02d}.png"
                    write_png8(Raster(img, "intensity"), d / name)
                    fringes[f"{pitch}/{n}"] = f"{sid}/{name}"
            patch = scene_patch(cap, refined, Phi_gt)
            tgt = {"Phi": (Phi_gt, "unwrapped-phase"), "truth": (cap.truth, "unwrapped-phase"),
                   "M_h": (patch.M_h, "numerator"), "D_h": (patch.D_h, "denominator"),
                   "M_r": (refined.M_r, "numerator"), "D_r": (refined.D_r, "denominator"),
                   "Phi_min": (cap.Phi_min, "unwrapped-phase"),
                   "mask": (cap.mask.astype(np.float64), "mask")}
            targets = {}
            for name, (arr, kind) in tgt.items():
                write_raster(Raster(arr, kind), d / f"{name}.fpr")
                targets[name] = f"{sid}/{name}.fpr"
            records.append(SceneRecord(sid, split[sid], fringes, targets))
        except (ValueError, ArithmeticError) as exc:
            log.warning("scene %s failed: %s", sid, exc)
            records.append(SceneRecord(sid, split[sid], {}, {}, False, str(exc)))
    doc = {
        "format": "fringephase-dataset/1",
        "seed": manifest.seed,
        "rig": "rig.json",
        "camera_scale": manifest.camera_scale,
        "z_min": manifest.z_min,
        "steps": {str(p): n for p, n in sorted(manifest.steps.items())},
        "noise": {"sigma": manifest.noise.sigma, "quantize": manifest.noise.quantize,
                  "clamp": manifest.noise.clamp, "seed": manifest.noise.seed},
        "split_ratio": list(manifest.ratio),
        "pose_increment_deg": POSE_INCREMENT_DEG,
        "scenes": [{"id": s["id"], "surface": s["surface"],
                    "poses": [POSE_INCREMENT_DEG * k for k in range(manifest.poses)]}
                   for s in manifest.scenes],
        "records": [{"id": r.id, "split": r.split, "complete": r.complete, "reason": r.reason,
                     "fringes": r.fringes, "targets": r.targets} for r in records],
    }
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return doc


def load_manifest(root) -> dict:
    path = Path(root) / "manifest.json"
    if not path.exists():
        raise MissingInputError(f"missing file: {path}")
    return json.loads(path.read_text())


def verify(root) -> list[str]:
    """Problems found in a dataset tree; empty when every referenced file exists and parses."""
    root = Path(root)
    doc = load_manifest(root)
    problems = []
    try:
        load_rig(root / doc["rig"])
    except (OSError, ValueError, KeyError) as exc:
        problems.append(f"rig: {exc}")
    for rec in doc["records"]:
        if not rec["complete"]:
            problems.append(f"{rec['id']}: incomplete ({rec['reason']})")
            continue
        for rel in list(rec["fringes"].values()) + list(rec["targets"].values()):
            p = root / rel
            if not p.exists():
                problems.append(f"{rec['id']}: missing {rel}")
                continue
            try:
                read_png8(p) if p.suffix == ".png" else read_raster(p)
            except (OSError, ValueError) as exc:
                problems.append(f"{rec['id']}: cannot parse {rel}: {exc}")
    return problems


def load_record(root, rec: dict):
    """``(images by pitch, targets by name)`` for one manifest record."""
    root = Path(root)
    images = {}
    for key, rel in rec["fringes"].items():
        p = root / rel
        if not p.exists():
            raise MissingInputError(f"missing file: {p}")
        pitch, n = key.split("/")
        images.setdefault(float(pitch), {})[int(n)] = read_png8(p).data
    images = {p: [v[n] for n in sorted(v)] for p, v in images.items()}
    targets = {}
    for name, rel in rec["targets"].items():
        p = root / rel
        if not p.exists():
            raise MissingInputError(f"missing file: {p}")
        targets[name] = read_raster(p).data
    return images, targets


def record_patch(root, rec: dict) -> Patch:
    images, t = load_record(root, rec)
    return Patch(normalize01(images[HIGH_PITCH][0], 0, 255), normalize01(images[REF_PITCH][0], 0, 255),
                 t["M_h"], t["D_h"], t["M_r"], t["D_r"], t["Phi"], t["Phi_min"], t["mask"] > 0.5)


def bundles_from_images(images: dict) -> dict[float, WrappedPhaseBundle]:
    return {p: retrieve(stack) for p, stack in images.items()}

