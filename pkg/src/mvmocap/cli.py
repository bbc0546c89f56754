"""``mvmocap`` command-line entry point.

Exit status is 0 on success, 1 for usage errors and 2 for data errors.
Diagnostics go to standard error as ``mvmocap: error[CODE]: message``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import formats
from .analysis import CompareConfig, StandardBody, compare, retarget
from .calibration import BAConfig, CheckerboardSpec, RigCalibration, calibrate_rig
from .errors import FrameMismatch, MocapError, NonConvergence, ParseError, UnknownCamera
from .fusion import FusionConfig, fuse_frames, reprojection_report
from .geometry import Camera, Intrinsics
from .render import RenderConfig, field_from_dict, render_image, write_ppm
from .skeleton import BODY25, BODY25_REST_POSE, SkeletonSequence
from .synth import (JointPerturbation, MotionSpec, RigSpec, animate_skeleton, build_rig, inject_flexion,
                    project_sequence, sweep_checkerboard, uniform_sweep)

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    code = "E_USAGE"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _threads(value):
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _positive(kind):
    def parse(value):
        v = kind(value)
        if not v > 0:
            raise argparse.ArgumentTypeError("must be positive")
        return v
    return parse


def _nonneg(value):
    v = float(value)
    if not v >= 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return v


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rig_spec = RigSpec()
    cams = build_rig(rig_spec)
    board = CheckerboardSpec(args.board_rows, args.board_cols, args.square_size)
    obs, _ = sweep_checkerboard(board, uniform_sweep(board, args.poses), cams, args.board_noise_px, args.seed)
    truth = RigCalibration(cams, 0.0, {c: 0.0 for c in cams}, board, {}, "cam00", 0)

    rng = np.random.default_rng(args.seed)
    perts = (
        JointPerturbation(2, (0.0, 1.0, 0.0), 20.0 + 10.0 * rng.random(), 0.4, rng.uniform(0, 2 * np.pi)),
        JointPerturbation(5, (0.0, 1.0, 0.0), 20.0 + 10.0 * rng.random(), 0.4, rng.uniform(0, 2 * np.pi)),
        JointPerturbation(3, (1.0, 0.0, 0.0), 15.0 + 10.0 * rng.random(), 0.6, rng.uniform(0, 2 * np.pi)),
        JointPerturbation(9, (1.0, 0.0, 0.0), 15.0 + 10.0 * rng.random(), 0.3, rng.uniform(0, 2 * np.pi)),
    )
    motion = MotionSpec(args.frames, args.frame_rate, perturbations=perts, root_yaw_deg_per_s=10.0, subject="coach")
    coach = animate_skeleton(motion)
    views = project_sequence(coach, cams, args.skeleton_noise_px, args.dropout, args.seed + 1)
    student_rest = motion.rest_pose * 0.92
    student = animate_skeleton(MotionSpec(args.frames, args.frame_rate, rest_pose=student_rest, perturbations=perts,
                                          root_offset=(25.0, -15.0, 0.0), root_yaw_deg_per_s=10.0, subject="student"))
    if args.inject_knee_deg:
        student = inject_flexion(student, BODY25.index("RKnee"), args.inject_knee_deg, args.inject_start)

    formats.write_calibration(out / "rig_truth.txt", truth)
    formats.write_observations(out / "observations.txt", obs, board)
    formats.write_skeleton2d(out / "skeleton2d.txt", [v for frame in views for v in frame])
    formats.write_sequence(out / "coach_truth.txt", coach)
    formats.write_sequence(out / "student.txt", student)
    formats.write_body(out / "body.txt", StandardBody.from_pose(BODY25, BODY25_REST_POSE))
    print(f"cameras={len(cams)} board_views={len(obs)} frames={args.frames} out={out}")
    return EXIT_OK


def cmd_calibrate(args):
    obs, file_spec = formats.read_observations(args.observations)
    spec = file_spec
    if args.board_rows or args.board_cols or args.square_size or spec is None:
        base = spec or CheckerboardSpec()
        spec = CheckerboardSpec(args.board_rows or base.rows, args.board_cols or base.cols,
                                args.square_size or base.square_size)
    sizes = None
    anchor = None
    if args.anchor:
        ref_cal = formats.read_calibration(args.anchor)
        ref = args.reference or ref_cal.reference_camera or ref_cal.camera_ids[0]
        if ref not in ref_cal.cameras:
            raise UnknownCamera(ref)
        anchor = ref_cal.cameras[ref].pose
        sizes = {c: cam.image_size for c, cam in ref_cal.cameras.items()}
        args.reference = ref
    if args.image_size:
        w, h = args.image_size
        sizes = {ob.camera_id: (w, h) for ob in obs}
    config = BAConfig(max_iterations=args.max_iterations, trim_outliers=not args.no_trim)
    try:
        cal = calibrate_rig(obs, spec, sizes, reference_camera=args.reference, anchor=anchor, config=config)
    except NonConvergence as exc:
        if exc.result is None:
            raise
        print(f"mvmocap: warning[{exc.code}]: {exc}", file=sys.stderr)
        cal = exc.result
    formats.write_calibration(args.out, cal)
    worst = max(cal.per_camera_rms.items(), key=lambda kv: kv[1])
    print(f"cameras={len(cal.cameras)} rms_px={cal.rms_reprojection_px:.6g} iterations={cal.iterations} "
          f"worst_camera={worst[0]} worst_rms_px={worst[1]:.6g}")
    return EXIT_OK


def cmd_fuse(args):
    cal = formats.read_calibration(args.calibration)
    frames = formats.views_by_frame(formats.read_skeleton2d(args.skeleton2d))
    config = FusionConfig(args.min_confidence, args.min_views, args.mode, threads=args.threads)
    skeletons = fuse_frames(frames, cal, config)
    seq = SkeletonSequence.from_skeletons(skeletons, args.frame_rate, args.subject)
    formats.write_sequence(args.out, seq)
    if args.skeleton3d:
        formats.write_skeleton3d(args.skeleton3d, skeletons)
    residuals = []
    if args.report:
        lines = [f"mvmocap reprojection {formats.VERSION}", "columns=frame_id joint camera_id residual_px outlier"]
        for sk, views in zip(skeletons, frames):
            rep = reprojection_report(sk, views, cal, config)
            for row in rep.rows:
                lines.append(f"{rep.frame_id} {row.joint} {row.camera_id} {formats.fmt(row.residual_px)} {int(row.outlier)}")
                residuals.append(row.residual_px)
        Path(args.report).write_text("\n".join(lines) + "\n", encoding="utf-8")
    line = f"frames={seq.length} valid_joints={int(seq.valid.sum())}/{seq.valid.size}"
    if residuals:
        line += f" rms_px={np.sqrt(np.mean(np.square(residuals))):.6g}"
    if args.truth:
        truth = formats.read_sequence(args.truth)
        if truth.frames.shape != seq.frames.shape:
            raise FrameMismatch("truth sequence does not match the fused sequence shape")
        both = truth.valid & seq.valid
        err = np.linalg.norm(seq.frames - truth.frames, axis=2)[both]
        line += f" max_error_cm={err.max() if err.size else float('nan'):.6g}"
    print(line)
    return EXIT_OK


def cmd_render(args):
    try:
        doc = json.loads(Path(args.field).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno, exc.colno, args.field) from None
    field = field_from_dict(doc)
    cal = formats.read_calibration(args.calibration)
    cam_id = args.camera or cal.camera_ids[0]
    if cam_id not in cal.cameras:
        raise UnknownCamera(cam_id)
    cam = cal.cameras[cam_id]
    if args.downsample > 1:
        d = float(args.downsample)
        k = cam.intrinsics
        w, h = cam.image_size
        cam = Camera(Intrinsics(k.fx / d, k.fy / d, k.cx / d, k.cy / d, k.skew / d), cam.pose,
                     (max(1, int(w // d)), max(1, int(h // d))))
    config = RenderConfig(args.t_near, args.t_far, args.samples, args.stratified, args.seed, args.threads)
    img = render_image(field, cam, config)
    write_ppm(args.out, img)
    print(f"width={img.shape[1]} height={img.shape[0]} mean={img.mean():.6g} max={img.max():.6g}")
    return EXIT_OK


def cmd_retarget(args):
    seq = formats.read_sequence(args.sequence)
    body = formats.read_body(args.body)
    out = retarget(seq, body)
    formats.write_sequence(args.out, out)
    print(f"frames={out.length} valid={int(out.valid.sum())}/{out.valid.size}")
    return EXIT_OK


def cmd_compare(args):
    student = formats.read_sequence(args.student)
    coach = formats.read_sequence(args.coach)
    if args.body:
        body = formats.read_body(args.body)
        student, coach = retarget(student, body), retarget(coach, body)
    config = CompareConfig(args.threshold_deg, args.min_frames, not args.no_align)
    rep = compare(student, coach, config)
    formats.write_report(args.out, rep)
    flags = ",".join(f"{f.name}[{f.start},{f.end})" for f in rep.flags) or "none"
    print(f"frames={rep.frames} mean_distance_cm={rep.mean_distance_cm:.6g} "
          f"mean_angle_deg={rep.mean_angle_deg:.6g} flags={flags}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults; command-line flags take precedence")
    common.add_argument("--threads", type=_threads, default=os.cpu_count() or 1,
                        help="worker threads (default: available cores); results do not depend on it")

    p = _Parser(prog="mvmocap", description="Multi-view motion-capture geometry toolkit.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic rig, board sweep and motions")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--poses", type=_positive(int), default=100, help="checkerboard poses in the sweep")
    s.add_argument("--board-rows", type=_positive(int), default=10)
    s.add_argument("--board-cols", type=_positive(int), default=15)
    s.add_argument("--square-size", type=_positive(float), default=5.0, help="cm")
    s.add_argument("--board-noise-px", type=_nonneg, default=0.0)
    s.add_argument("--skeleton-noise-px", type=_nonneg, default=0.0)
    s.add_argument("--dropout", type=_nonneg, default=0.0, help="per-view joint dropout probability")
    s.add_argument("--frames", type=_positive(int), default=48)
    s.add_argument("--frame-rate", type=_positive(float), default=30.0)
    s.add_argument("--inject-knee-deg", type=float, default=15.0, help="extra right-knee flexion in the student (degrees)")
    s.add_argument("--inject-start", type=int, default=30, help="first frame of the knee injection")
    s.set_defaults(func=cmd_synth)

    c = sub.add_parser("calibrate", parents=[common], help="calibrate the rig from checkerboard observations")
    c.add_argument("observations")
    c.add_argument("--out", required=True)
    c.add_argument("--board-rows", type=_positive(int))
    c.add_argument("--board-cols", type=_positive(int))
    c.add_argument("--square-size", type=_positive(float))
    c.add_argument("--reference", help="camera defining the world frame")
    c.add_argument("--anchor", help="calibration file whose reference-camera pose fixes the world frame")
    c.add_argument("--image-size", type=_positive(int), nargs=2, metavar=("W", "H"))
    c.add_argument("--max-iterations", type=_positive(int), default=100)
    c.add_argument("--no-trim", action="store_true", help="skip the one-shot outlier trim")
    c.set_defaults(func=cmd_calibrate)

    f = sub.add_parser("fuse", parents=[common], help="triangulate 2D skeletons into a 3D sequence")
    f.add_argument("calibration")
    f.add_argument("skeleton2d")
    f.add_argument("--out", required=True, help="sequence file")
    f.add_argument("--skeleton3d", help="also write per-frame 3D skeletons with diagnostics")
    f.add_argument("--report", help="reprojection residual table")
    f.add_argument("--truth", help="ground-truth sequence; prints the max joint error")
    f.add_argument("--min-confidence", type=float, default=0.3)
    f.add_argument("--min-views", type=int, default=2)
    f.add_argument("--mode", choices=("all", "pairwise"), default="all")
    f.add_argument("--frame-rate", type=_positive(float), default=30.0)
    f.add_argument("--subject", default="")
    f.set_defaults(func=cmd_fuse)

    r = sub.add_parser("render", parents=[common], help="render an analytic radiance field to a PPM image")
    r.add_argument("field", help="JSON field spec")
    r.add_argument("--calibration", required=True)
    r.add_argument("--camera", help="camera id (default: first)")
    r.add_argument("--out", required=True)
    r.add_argument("--downsample", type=_positive(int), default=1, help="integer image reduction factor")
    r.add_argument("--t-near", type=float, default=0.0)
    r.add_argument("--t-far", type=float, default=1000.0)
    r.add_argument("--samples", type=int, default=128)
    r.add_argument("--stratified", action="store_true")
    r.add_argument("--seed", type=int, default=0)
    r.set_defaults(func=cmd_render)

    t = sub.add_parser("retarget", parents=[common], help="map a sequence onto standard bone lengths")
    t.add_argument("sequence")
    t.add_argument("--body", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_retarget)

    m = sub.add_parser("compare", parents=[common], help="compare a student sequence against a coach")
    m.add_argument("student")
    m.add_argument("coach")
    m.add_argument("--body", help="standard body; both sequences are retargeted to it first")
    m.add_argument("--out", required=True, help="report file")
    m.add_argument("--threshold-deg", type=float, default=10.0)
    m.add_argument("--min-frames", type=int, default=3)
    m.add_argument("--no-align", action="store_true")
    m.set_defaults(func=cmd_compare)
    return p, sub


def _apply_config(parser, subparsers, argv):
    """Re-parse with defaults taken from ``--config`` so that explicit flags still win."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config {args.config}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {args.config}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a JSON object")
    sp = subparsers.choices[args.command]
    dests = {a.dest: a for a in sp._actions if a.dest not in ("help", "config", "func")}
    defaults = {}
    for key, value in doc.items():
        dest = key.replace("-", "_")
        if dest not in dests or dests[dest].required or not dests[dest].option_strings:
            raise UsageError(f"config key {key!r} is not an option of '{args.command}'")
        action = dests[dest]
        if action.type is not None and value is not None:
            try:
                value = [action.type(v) for v in value] if isinstance(value, list) else action.type(value)
            except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None
        if action.choices is not None and value not in action.choices:
            raise UsageError(f"config key {key!r} must be one of {list(action.choices)}")
        defaults[dest] = value
    sp.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser, subparsers = build_parser()
    try:
        args = _apply_config(parser, subparsers, argv)
    except UsageError as exc:
        print(f"mvmocap: error[{UsageError.code}]: {exc}", file=sys.stderr)
        print(parser.format_usage().rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    try:
        return args.func(args)
    except MocapError as exc:
        print(f"mvmocap: error[{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"mvmocap: error[E_IO]: {exc.filename or ''}: {exc.strerror}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
