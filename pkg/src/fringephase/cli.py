"""Command-line entry point: ``fringephase <subcommand> ...``.

Errors end the process with status 1 (2 for usage errors) and a single
line ``error: <kind>: <message>`` on stderr.
"""
from __future__ import annotations

import argparse
import glob
import json
import os
import sys
from pathlib import Path


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"error: usage: {' '.join(message.split())}\n")


def _common(defaults: bool) -> argparse.ArgumentParser:
    # the global flags are accepted before or after the subcommand
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p = _Parser(add_help=False)
    p.add_argument("--seed", type=int, default=d(0))
    p.add_argument("--threads", type=int, default=d(1))
    p.add_argument("--out", default=d("."))
    return p


def _pitch_path(text: str):
    pitch, sep, path = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected PITCH=PATH, got {text!r}")
    return float(pitch), path


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fringephase", parents=[_common(True)],
                 description="Fringe projection simulation, phase unwrapping and 3-D reconstruction.")
    sub = ap.add_subparsers(dest="command", required=True)
    common = _common(False)

    def cmd(name, help_):
        return sub.add_parser(name, help=help_, parents=[common], prog=f"fringephase {name}")

    p = cmd("patterns", "write projector fringe patterns")
    p.add_argument("--pitch", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--width", type=int, default=912)
    p.add_argument("--height", type=int, default=1140)

    p = cmd("render", "render camera fringe images of a scene")
    p.add_argument("--rig", help="rig JSON (default: the built-in virtual rig)")
    p.add_argument("--scene", required=True, help="surface JSON file, or 'sphere' / 'plane'")
    p.add_argument("--pitch", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--quantize", action="store_true", help="8-bit quantization (also writes PNGs)")
    p.add_argument("--camera-scale", type=float, default=1.0)

    p = cmd("retrieve", "N-step phase retrieval")
    p.add_argument("--images", required=True, help="glob of FPR1 or PNG images, sorted by name")
    p.add_argument("--steps", type=int)
    p.add_argument("--threshold", type=float, default=8.0)

    p = cmd("unwrap", "temporal phase unwrapping")
    p.add_argument("--mode", choices=("ladder", "zmin"), required=True)
    p.add_argument("--phase", type=_pitch_path, action="append", required=True,
                   metavar="PITCH=PATH", help="wrapped phase raster per pitch")
    p.add_argument("--mask", help="mask raster")
    p.add_argument("--rig")
    p.add_argument("--z-min", type=float, default=0.6)

    p = cmd("refine", "refined reference phase from the 912/114/304 phases")
    p.add_argument("--phase", type=_pitch_path, action="append", required=True, metavar="PITCH=PATH")
    p.add_argument("--mask")
    p.add_argument("--rig")
    p.add_argument("--z-min", type=float, default=0.6)

    p = cmd("reconstruct", "triangulate an absolute phase map into a PLY point cloud")
    p.add_argument("--rig")
    p.add_argument("--phase", required=True)
    p.add_argument("--pitch", type=float, required=True)
    p.add_argument("--mask")
    p.add_argument("--fit-sphere", action="store_true")

    p = cmd("dataset", "generate a synthetic dataset tree")
    p.add_argument("--heightfields", type=int, default=3)
    p.add_argument("--poses", type=int, default=1)
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--no-quantize", action="store_true")
    p.add_argument("--camera-scale", type=float, default=1.0)
    p.add_argument("--z-min", type=float, default=0.6)

    p = cmd("eval", "phase and depth error metrics as one CSV line")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--rig")
    p.add_argument("--pitch", type=float, default=15.0)
    p.add_argument("--header", action="store_true")

    p = cmd("gradcheck", "finite-difference gradient check")
    p.add_argument("--loss", choices=("phase", "consist", "geo", "total", "model"), required=True)
    p.add_argument("--size", type=int, default=8)
    p.add_argument("--trials", type=int, default=10)

    p = cmd("train-micro", "train the micro fusion network on dataset patches")
    p.add_argument("--data", required=True)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--patch", type=int, default=32)
    p.add_argument("--max-patches", type=int, default=64)
    p.add_argument("--no-fusion", action="store_true")

    p = cmd("infer-micro", "run a trained network over a dataset")
    p.add_argument("--params", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--no-fusion", action="store_true")

    p = cmd("verify", "check that every file a dataset manifest references exists and parses")
    p.add_argument("--data", required=True)
    return ap


# ---------------------------------------------------------------------------

def _rig(path, camera_scale: float = 1.0):
    from .geometry import load_rig, default_rig
    if path:
        return load_rig(path)
    return default_rig(camera_scale)


def _need(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"missing file: {p}")
    return p


def _read(path):
    from .raster import read_png8, read_raster
    p = _need(path)
    return (read_png8(p) if p.suffix.lower() == ".png" else read_raster(p)).data


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scene(text: str):
    from .pipeline import default_scenes, sphere_scene
    from .surfaces import surface_from_dict
    if text == "sphere":
        return sphere_scene()
    if text == "plane":
        return surface_from_dict(default_scenes(0)[0]["surface"])
    return surface_from_dict(json.loads(_need(text).read_text()))


def _mask(path, shape):
    import numpy as np
    return np.ones(shape, bool) if path is None else _read(path) > 0.5


def cmd_patterns(args):
    import numpy as np
    from .pattern import PatternSpec, generate_pattern
    from .raster import Raster, write_png8, write_raster
    spec = PatternSpec(args.pitch, args.steps, args.width, args.height)
    out = _outdir(args)
    for n in range(1, spec.steps + 1):
        write_png8(generate_pattern(spec, n), out / f"pattern_{spec.pitch:g}_{n:02d}.png")
    u = np.broadcast_to(np.arange(spec.width, dtype=np.float64), (spec.height, spec.width))
    write_raster(Raster(2 * np.pi * u / spec.pitch, "unwrapped-phase"), out / f"phase_{spec.pitch:g}.fpr")


def cmd_render(args):
    from .geometry import save_rig
    from .pattern import PatternSpec
    from .raster import Raster, write_png8, write_raster
    from .simulator import NoiseSpec, render_fringe, render_groundtruth_phase, trace_scene
    rig = _rig(args.rig, args.camera_scale)
    surface = _scene(args.scene)
    spec = PatternSpec(args.pitch, args.steps)
    noise = NoiseSpec(args.sigma, args.quantize, True, args.seed)
    trace = trace_scene(rig, surface)
    out = _outdir(args)
    tag = f"{spec.pitch:g}"
    for n in range(1, spec.steps + 1):
        img, mask = render_fringe(rig, None, spec, n, noise, trace=trace)
        write_raster(img, out / f"fringe_{tag}_{n:02d}.fpr")
        if args.quantize:
            write_png8(img, out / f"fringe_{tag}_{n:02d}.png")
    write_raster(mask, out / "mask.fpr")
    write_raster(render_groundtruth_phase(rig, None, spec.pitch, trace)[0], out / f"truth_{tag}.fpr")
    write_raster(Raster(trace.depth * 1000.0, "depth"), out / "depth_mm.fpr")
    save_rig(rig, out / "rig.json")


def cmd_retrieve(args):
    from .phase import modulation_mask, retrieve
    from .raster import Raster, as_mask_raster, write_raster
    paths = sorted(glob.glob(args.images))
    if not paths:
        raise FileNotFoundError(f"no images match {args.images}")
    b = retrieve([_read(p) for p in paths], args.steps)
    out = _outdir(args)
    write_raster(Raster(b.phi, "wrapped-phase"), out / "phi.fpr")
    write_raster(Raster(b.numerator, "numerator"), out / "M.fpr")
    write_raster(Raster(b.denominator, "denominator"), out / "D.fpr")
    write_raster(Raster(b.modulation, "modulation"), out / "modulation.fpr")
    write_raster(as_mask_raster(modulation_mask(b, args.threshold)), out / "mask.fpr")


def _phases(args):
    phases = {p: _read(path) for p, path in args.phase}
    shape = next(iter(phases.values())).shape
    return phases, _mask(args.mask, shape)


def cmd_unwrap(args):
    import numpy as np
    from .phase import WrappedPhaseBundle
    from .raster import Raster, as_mask_raster, write_raster
    from .unwrap import ZminConfig, ladder_unwrap, zmin_unwrap
    phases, mask = _phases(args)
    if args.mode == "ladder":
        if len(phases) < 2:
            raise ValueError("ladder mode needs at least two --phase entries")
        ladder = []
        for p in sorted(phases, reverse=True):
            z = np.zeros_like(phases[p])
            ladder.append((p, WrappedPhaseBundle(phases[p], z, z, z, mask, 3)))
        res = ladder_unwrap(ladder)
    else:
        if len(phases) != 1:
            raise ValueError("zmin mode takes exactly one --phase entry")
        (pitch, phi), = phases.items()
        res = zmin_unwrap(phi, ZminConfig(args.z_min, _rig(args.rig), pitch), mask)
    out = _outdir(args)
    write_raster(Raster(res.phase, "unwrapped-phase"), out / "Phi.fpr")
    write_raster(Raster(res.order, "fringe-order"), out / "K.fpr")
    write_raster(as_mask_raster(res.mask), out / "mask.fpr")


def cmd_refine(args):
    from .raster import Raster, as_mask_raster, write_raster
    from .refine import MID_PITCH, REF_PITCH, UNIT_PITCH, refined_from_bundles
    from .unwrap import ZminConfig
    phases, mask = _phases(args)
    missing = [p for p in (UNIT_PITCH, MID_PITCH, REF_PITCH) if p not in phases]
    if missing:
        raise ValueError("refine needs phases for pitches 912, 114 and 304; missing "
                         + ", ".join(f"{p:g}" for p in missing))
    cfg = ZminConfig(args.z_min, _rig(args.rig), REF_PITCH)
    ref = refined_from_bundles(phases[UNIT_PITCH], phases[MID_PITCH], phases[REF_PITCH], cfg, mask)
    out = _outdir(args)
    write_raster(Raster(ref.M_r, "numerator"), out / "M_r.fpr")
    write_raster(Raster(ref.D_r, "denominator"), out / "D_r.fpr")
    write_raster(Raster(ref.phi_r, "wrapped-phase"), out / "phi_r.fpr")
    write_raster(Raster(ref.Phi_r, "unwrapped-phase"), out / "Phi_r.fpr")
    write_raster(Raster(ref.K_z, "fringe-order"), out / "K_z.fpr")
    write_raster(as_mask_raster(ref.mask), out / "mask.fpr")


def cmd_reconstruct(args):
    from .reconstruct import fit_sphere, reconstruct, write_ply
    Phi = _read(args.phase)
    mask = _mask(args.mask, Phi.shape) if args.mask else Phi != 0
    cloud = reconstruct(_rig(args.rig), Phi, args.pitch, mask)
    out = Path(args.out)
    if out.is_dir() or not out.suffix:
        out.mkdir(parents=True, exist_ok=True)
        out = out / "cloud.ply"
    write_ply(cloud, out)
    print(f"{len(cloud)} points -> {out}")
    if args.fit_sphere:
        fit = fit_sphere(cloud)
        c = fit.center
        print(f"sphere radius_mm={fit.radius:.6f} center_mm={c[0]:.4f},{c[1]:.4f},{c[2]:.4f} rms_mm={fit.rms:.6f}")


def cmd_dataset(args):
    from .pipeline import DatasetManifest, default_scenes, generate_dataset
    from .simulator import NoiseSpec
    m = DatasetManifest(default_scenes(args.heightfields, args.seed), args.poses,
                        noise=NoiseSpec(args.sigma, not args.no_quantize, True, args.seed),
                        seed=args.seed, z_min=args.z_min, camera_scale=args.camera_scale)
    doc = generate_dataset(m, args.out)
    done = sum(r["complete"] for r in doc["records"])
    print(f"{done}/{len(doc['records'])} records written to {args.out}")


def cmd_eval(args):
    from .reconstruct import evaluate
    pred, truth = _read(args.pred), _read(args.truth)
    m = evaluate(_rig(args.rig), pred, truth, _mask(args.mask, pred.shape), args.pitch)
    if args.header:
        print("mae_rad,rmse_rad,mae_mm,rmse_mm")
    print(f"{m['mae_rad']:.9g},{m['rmse_rad']:.9g},{m['mae_mm']:.9g},{m['rmse_mm']:.9g}")


def cmd_gradcheck(args):
    if args.loss == "model":
        from .training import model_gradcheck
        err = max(model_gradcheck(args.seed + t, size=max(args.size, 16) // 4 * 4)
                  for t in range(args.trials))
    else:
        from .losses import gradcheck
        err = gradcheck(args.loss, args.size, args.trials, args.seed)
    print(f"{err:.3e}")


def _patches(root, doc, split, size, limit):
    from .pipeline import record_patch
    out = []
    for rec in doc["records"]:
        if not rec["complete"] or rec["split"] != split:
            continue
        full = record_patch(root, rec)
        H, W = full.mask.shape
        for top in range(0, H - size + 1, size):
            for left in range(0, W - size + 1, size):
                q = full.crop(top, left, size)
                if q.mask.mean() >= 0.9:
                    out.append(q)
    if not out:
        raise ValueError(f"no {size}x{size} patches with >=90% valid pixels in the {split} split")
    if len(out) > limit:
        import numpy as np
        keep = np.sort(np.random.default_rng(0).choice(len(out), limit, replace=False))
        out = [out[i] for i in keep]
    return out


def cmd_train_micro(args):
    from .micronet import MicroNetConfig, save_params
    from .pipeline import load_manifest
    from .training import train, wrapped_phase_mae
    root = Path(args.data)
    doc = load_manifest(root)
    patches = _patches(root, doc, "train", args.patch, args.max_patches)
    cfg = MicroNetConfig(args.patch, args.patch, fusion=not args.no_fusion)
    res = train(cfg, patches, steps=args.steps, lr=args.lr, seed=args.seed)
    out = Path(args.out)
    if out.is_dir() or not out.suffix:
        out.mkdir(parents=True, exist_ok=True)
        out = out / "params.bin"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_params(res.net.params, out)
    trace = out.with_suffix(".trace.csv")
    trace.write_text("step,loss,lr\n" + "".join(
        f"{i},{v:.17g},{lr:.6g}\n" for i, (v, lr) in enumerate(zip(res.trace, res.lr_trace))))
    mae = sum(wrapped_phase_mae(res.net, p) for p in patches) / len(patches)
    print(f"{len(patches)} patches, final loss {res.trace[-1]:.6g}, train wrapped-phase MAE {mae:.4f} rad -> {out}")


def cmd_infer_micro(args):
    import numpy as np
    from .micronet import MicroNet, MicroNetConfig, load_params
    from .pipeline import load_manifest, record_patch
    from .raster import Raster, write_raster
    from .refine import two_phase_unwrap_arrays
    params = load_params(_need(args.params))
    root = Path(args.input)
    doc = load_manifest(root)
    levels = sum(1 for k in params if k.startswith("h.enc") and k.endswith("conv0.w")) - 1
    base = params["h.enc0.conv0.w"].shape[0]
    out = _outdir(args)
    for rec in doc["records"]:
        if not rec["complete"]:
            continue
        p = record_patch(root, rec)
        H, W = p.mask.shape
        cfg = MicroNetConfig(H, W, levels, base, fusion=not args.no_fusion)
        y = MicroNet(cfg, params).forward(p.fringe_h, p.fringe_l)[0]
        res = two_phase_unwrap_arrays(-np.arctan2(y[0], y[1]), -np.arctan2(y[2], y[3]),
                                      p.Phi_min, p.mask)
        d = out / rec["id"]
        d.mkdir(parents=True, exist_ok=True)
        for name, arr, kind in (("M_h", y[0], "numerator"), ("D_h", y[1], "denominator"),
                                ("M_l", y[2], "numerator"), ("D_l", y[3], "denominator"),
                                ("Phi", res.phase, "unwrapped-phase")):
            write_raster(Raster(arr, kind), d / f"{name}.fpr")
        print(f"{rec['id']} -> {d}")


def cmd_verify(args):
    from .pipeline import verify
    problems = verify(args.data)
    for p in problems:
        print(p)
    if problems:
        raise ValueError(f"{len(problems)} problem(s) in {args.data}")
    print("ok")


COMMANDS = {
    "patterns": cmd_patterns, "render": cmd_render, "retrieve": cmd_retrieve,
    "unwrap": cmd_unwrap, "refine": cmd_refine, "reconstruct": cmd_reconstruct,
    "dataset": cmd_dataset, "eval": cmd_eval, "gradcheck": cmd_gradcheck,
    "train-micro": cmd_train_micro, "infer-micro": cmd_infer_micro, "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: usage: --threads must be >= 1", file=sys.stderr)
        return 2
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, str(args.threads))
    try:
        COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001 - one-line report for every failure
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
