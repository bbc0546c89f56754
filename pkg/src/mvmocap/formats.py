"""Line-oriented text formats for every on-disk artifact.

Each file starts with ``mvmocap <kind> <version>``. Tabular kinds follow with
``key=value`` header lines, a ``columns=...`` line naming the fixed column
order, and one whitespace-separated row per record. The calibration file
uses ``key=value`` lines grouped into ``[camera <id>]`` / ``[board <frame>]``
sections. Floats are written with ``repr`` (shortest round-trip decimal), so
reading a written file and writing it again gives the same bytes.

See ``docs/formats.md`` for the full grammar.
"""

from __future__ import annotations

import re

import numpy as np

from .analysis import ComparisonReport, Flag, StandardBody
from .calibration.board import BoardObservation, CheckerboardSpec, RigCalibration
from .errors import InvalidInput, MocapError, ParseError, VersionMismatch
from .geometry import Camera, Intrinsics, RigidPose
from .skeleton import INSUFFICIENT_VIEWS, Skeleton2D, Skeleton3D, SkeletonSequence, get_model

VERSION = 1
_TOKEN = re.compile(r"\S+")
_ID = re.compile(r"^[A-Za-z0-9_.:-]+$")


def fmt(x) -> str:
    """Shortest decimal that reads back to the same double."""
    return repr(float(x))


def _fmts(values):
    return " ".join(fmt(v) for v in values)


def _check_id(s, what="identifier"):
    s = str(s)
    if not _ID.match(s):
        raise InvalidInput(f"{what} {s!r} must be non-empty and use only letters, digits and _.:-")
    return s


def _check_text(s, what):
    s = str(s)
    if "\n" in s or "\r" in s:
        raise InvalidInput(f"{what} must be a single line")
    return s


# ---------------------------------------------------------------------------
# reading helpers
# ---------------------------------------------------------------------------

class _Lines:
    """Cursor over the lines of one document, producing located errors."""

    def __init__(self, text, kind, path=None):
        if isinstance(text, bytes):
            try:
                text = text.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise ParseError(f"file is not valid UTF-8: {exc.reason}", path=path) from None
        self.path = path
        self.lines = text.split("\n")
        if self.lines and self.lines[-1] == "":
            self.lines.pop()
        self.pos = 0
        self._header(kind)

    def error(self, message, line=None, column=None):
        return ParseError(message, self.pos if line is None else line, column, self.path)

    def _header(self, kind):
        if not self.lines:
            raise ParseError("empty file", 1, 1, self.path)
        toks = self.lines[0].split()
        self.pos = 1
        if len(toks) != 3 or toks[0] != "mvmocap":
            raise self.error(f"expected header 'mvmocap {kind} {VERSION}'", column=1)
        if toks[1] != kind:
            raise self.error(f"expected a {kind} file, found {toks[1]!r}", column=9)
        if toks[2] != str(VERSION):
            raise VersionMismatch(f"unsupported {kind} version {toks[2]!r} (expected {VERSION})", 1,
                                  len("mvmocap ") + len(toks[1]) + 2, self.path)

    def peek(self):
        return self.lines[self.pos] if self.pos < len(self.lines) else None

    def next(self):
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def key_value(self, line):
        if "=" not in line:
            raise self.error("expected key=value", column=1)
        key, value = line.split("=", 1)
        if not key or key != key.strip():
            raise self.error("malformed key", column=1)
        return key, value

    def tokens(self, line):
        return [(m.group(), m.start() + 1) for m in _TOKEN.finditer(line)]


def _num(reader, tok, col, kind=float):
    try:
        v = kind(tok)
    except (ValueError, OverflowError):
        raise reader.error(f"expected {'an integer' if kind is int else 'a number'}, got {tok!r}", column=col) from None
    return v


def _floats(reader, value, n, col):
    toks = value.split()
    if len(toks) != n:
        raise reader.error(f"expected {n} numbers", column=col)
    return [_num(reader, t, col) for t in toks]


def _read_table(text, kind, columns, header_keys, path=None, repeat_keys=()):
    """Header dict, repeated-key lists and ``(line_no, [(token, col), ...])`` rows."""
    r = _Lines(text, kind, path)
    header, repeated = {}, {k: [] for k in repeat_keys}
    while True:
        line = r.peek()
        if line is None:
            raise r.error("missing columns= line", line=r.pos + 1, column=1)
        r.next()
        key, value = r.key_value(line)
        if key == "columns":
            if value.split() != list(columns):
                raise r.error(f"columns must be: {' '.join(columns)}", column=9)
            break
        if key in repeat_keys:
            repeated[key].append((r.pos, value))
            continue
        if key not in header_keys:
            raise r.error(f"unknown key {key!r}", column=1)
        if key in header:
            raise r.error(f"duplicate key {key!r}", column=1)
        header[key] = (r.pos, value)
    missing = [k for k, required in header_keys.items() if required and k not in header]
    if missing:
        raise r.error(f"missing header keys: {', '.join(missing)}", column=1)
    rows = []
    while r.peek() is not None:
        line = r.next()
        toks = r.tokens(line)
        if len(toks) != len(columns):
            raise r.error(f"expected {len(columns)} fields, found {len(toks)}", column=1)
        rows.append((r.pos, toks))
    return r, header, repeated, rows


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _read(path):
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path=str(path)) from None


def _model(reader, header):
    line, name = header["model"]
    try:
        return get_model(name)
    except MocapError as exc:
        raise ParseError(str(exc), line, 7, reader.path) from None


def _joint(reader, tok, col, model):
    j = _num(reader, tok, col, int)
    if not 0 <= j < model.joint_count:
        raise reader.error(f"joint index {j} out of range for {model.name}", column=col)
    return j


def _flag(reader, tok, col):
    if tok not in ("0", "1"):
        raise reader.error("flag must be 0 or 1", column=col)
    return tok == "1"


# ---------------------------------------------------------------------------
# observations
# ---------------------------------------------------------------------------

OBS_COLUMNS = ("camera_id", "frame_id", "board_index", "u", "v")


def format_observations(observations, spec: CheckerboardSpec | None = None) -> str:
    out = [f"mvmocap observations {VERSION}"]
    if spec is not None:
        out += [f"board_rows={spec.rows}", f"board_cols={spec.cols}", f"square_size={fmt(spec.square_size)}"]
    out.append("columns=" + " ".join(OBS_COLUMNS))
    for ob in observations:
        cid = _check_id(ob.camera_id, "camera id")
        for i, (u, v) in zip(ob.indices, ob.pixels):
            out.append(f"{cid} {int(ob.frame_id)} {int(i)} {fmt(u)} {fmt(v)}")
    return "\n".join(out) + "\n"


def parse_observations(text, path=None):
    """``(observations, board_spec_or_None)``; rows sharing a camera and frame form one observation."""
    keys = {"board_rows": False, "board_cols": False, "square_size": False}
    r, header, _, rows = _read_table(text, "observations", OBS_COLUMNS, keys, path)
    spec = None
    if header:
        if len(header) != 3:
            raise r.error("board_rows, board_cols and square_size must be given together", line=2, column=1)
        try:
            spec = CheckerboardSpec(
                _num(r, header["board_rows"][1], 12, int),
                _num(r, header["board_cols"][1], 12, int),
                _num(r, header["square_size"][1], 13),
            )
        except InvalidInput as exc:
            raise r.error(str(exc), line=header["board_rows"][0], column=1) from None
    groups, order = {}, []
    for line_no, toks in rows:
        r.pos = line_no
        (cid, c0), (f, c1), (i, c2), (u, c3), (v, c4) = toks
        if not _ID.match(cid):
            raise r.error(f"bad camera id {cid!r}", column=c0)
        key = (cid, _num(r, f, c1, int))
        idx = _num(r, i, c2, int)
        if idx < 0:
            raise r.error("board index must be non-negative", column=c2)
        if key not in groups:
            groups[key] = ([], [], line_no)
            order.append(key)
        groups[key][0].append(idx)
        groups[key][1].append((_num(r, u, c3), _num(r, v, c4)))
    out = []
    for key in order:
        idx, px, line_no = groups[key]
        try:
            ob = BoardObservation(key[0], key[1], np.array(idx, dtype=int), np.array(px, dtype=float))
            if spec is not None:
                ob.validate(spec)
        except InvalidInput as exc:
            raise ParseError(str(exc), line_no, 1, path) from None
        out.append(ob)
    return out, spec


def write_observations(path, observations, spec=None):
    _write(path, format_observations(observations, spec))


def read_observations(path):
    return parse_observations(_read(path), str(path))


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------

_CAL_TOP = ("rms_px", "reference_camera", "iterations", "board_rows", "board_cols", "square_size")
_CAL_CAMERA = ("image_size", "fx", "fy", "cx", "cy", "skew", "rotation_wxyz", "translation_cm", "rms_px")
_CAL_BOARD = ("rotation_wxyz", "translation_cm")


def format_calibration(cal: RigCalibration) -> str:
    out = [f"mvmocap calibration {VERSION}", f"rms_px={fmt(cal.rms_reprojection_px)}"]
    if cal.reference_camera is not None:
        out.append(f"reference_camera={_check_id(cal.reference_camera, 'camera id')}")
    out.append(f"iterations={int(cal.iterations)}")
    if cal.board is not None:
        b = cal.board
        out += [f"board_rows={b.rows}", f"board_cols={b.cols}", f"square_size={fmt(b.square_size)}"]
    for cid in sorted(cal.cameras):
        cam = cal.cameras[cid]
        k = cam.intrinsics
        out += [
            "",
            f"[camera {_check_id(cid, 'camera id')}]",
            f"image_size={cam.image_size[0]} {cam.image_size[1]}",
            f"fx={fmt(k.fx)}",
            f"fy={fmt(k.fy)}",
            f"cx={fmt(k.cx)}",
            f"cy={fmt(k.cy)}",
            f"skew={fmt(k.skew)}",
            f"rotation_wxyz={_fmts(cam.pose.quaternion)}",
            f"translation_cm={_fmts(cam.pose.translation)}",
            f"rms_px={fmt(cal.per_camera_rms.get(cid, float('nan')))}",
        ]
    for f in sorted(cal.board_poses):
        p = cal.board_poses[f]
        out += ["", f"[board {int(f)}]", f"rotation_wxyz={_fmts(p.quaternion)}", f"translation_cm={_fmts(p.translation)}"]
    return "\n".join(out) + "\n"


def _pose(r, fields, lines):
    q = _floats(r, fields["rotation_wxyz"], 4, 15)
    t = _floats(r, fields["translation_cm"], 3, 16)
    if not np.all(np.isfinite(q)) or np.linalg.norm(q) == 0:
        raise ParseError("rotation quaternion must be finite and non-zero", lines["rotation_wxyz"], 15, r.path)
    try:
        return RigidPose.from_quaternion(q, t)
    except InvalidInput as exc:
        raise ParseError(str(exc), lines["translation_cm"], 16, r.path) from None


def parse_calibration(text, path=None) -> RigCalibration:
    r = _Lines(text, "calibration", path)
    sections = [("top", None, {}, {}, 1)]
    while r.peek() is not None:
        line = r.next()
        if line == "":
            continue
        if line.startswith("["):
            m = re.fullmatch(r"\[(camera|board) (\S+)\]", line)
            if not m:
                raise r.error("malformed section header", column=1)
            sections.append((m.group(1), m.group(2), {}, {}, r.pos))
            continue
        key, value = r.key_value(line)
        kind, _, fields, lines, _ = sections[-1]
        allowed = {"top": _CAL_TOP, "camera": _CAL_CAMERA, "board": _CAL_BOARD}[kind]
        if key not in allowed:
            raise r.error(f"unknown key {key!r} in {kind} section", column=1)
        if key in fields:
            raise r.error(f"duplicate key {key!r}", column=1)
        fields[key] = value
        lines[key] = r.pos

    def num(fields, lines, key, kind=float):
        r.pos = lines[key]
        return _num(r, fields[key].strip(), len(key) + 2, kind)

    _, _, top, top_lines, _ = sections[0]
    for key in ("rms_px", "iterations"):
        if key not in top:
            raise ParseError(f"missing key {key!r}", 2, 1, path)
    board = None
    board_keys = [k for k in ("board_rows", "board_cols", "square_size") if k in top]
    if board_keys:
        if len(board_keys) != 3:
            raise ParseError("board_rows, board_cols and square_size must be given together", top_lines[board_keys[0]], 1, path)
        try:
            board = CheckerboardSpec(num(top, top_lines, "board_rows", int), num(top, top_lines, "board_cols", int),
                                     num(top, top_lines, "square_size"))
        except InvalidInput as exc:
            raise ParseError(str(exc), top_lines["board_rows"], 1, path) from None

    cameras, per_rms, boards = {}, {}, {}
    for kind, name, fields, lines, start in sections[1:]:
        missing = [k for k in (_CAL_CAMERA if kind == "camera" else _CAL_BOARD) if k not in fields]
        if missing:
            raise ParseError(f"{kind} {name}: missing keys {', '.join(missing)}", start, 1, path)
        if kind == "camera":
            if not _ID.match(name) or name in cameras:
                raise ParseError(f"bad or duplicate camera id {name!r}", start, 9, path)
            r.pos = lines["image_size"]
            size = fields["image_size"].split()
            if len(size) != 2:
                raise r.error("image_size needs two integers", column=12)
            size = tuple(_num(r, s, 12, int) for s in size)
            try:
                k = Intrinsics(*(num(fields, lines, key) for key in ("fx", "fy", "cx", "cy", "skew")))
                r.pos = lines["rotation_wxyz"]
                cameras[name] = Camera(k, _pose(r, fields, lines), size)
            except InvalidInput as exc:
                raise ParseError(f"camera {name}: {exc}", start, 1, path) from None
            per_rms[name] = num(fields, lines, "rms_px")
        else:
            r.pos = start
            f = _num(r, name, 8, int)
            if f in boards:
                raise ParseError(f"duplicate board {f}", start, 8, path)
            r.pos = lines["rotation_wxyz"]
            boards[f] = _pose(r, fields, lines)
    ref = top.get("reference_camera")
    if ref is not None and ref not in cameras:
        raise ParseError(f"reference camera {ref!r} is not defined", top_lines["reference_camera"], 18, path)
    return RigCalibration(cameras, num(top, top_lines, "rms_px"), per_rms, board, boards, ref,
                          num(top, top_lines, "iterations", int))


def write_calibration(path, cal):
    _write(path, format_calibration(cal))


def read_calibration(path) -> RigCalibration:
    return parse_calibration(_read(path), str(path))


# ---------------------------------------------------------------------------
# 2D skeletons
# ---------------------------------------------------------------------------

SK2_COLUMNS = ("frame_id", "camera_id", "joint", "u", "v", "confidence")


def format_skeleton2d(views) -> str:
    views = list(views)
    if not views:
        raise InvalidInput("no 2D skeletons to write")
    model = views[0].model
    out = [f"mvmocap skeleton2d {VERSION}", f"model={model.name}", "columns=" + " ".join(SK2_COLUMNS)]
    for sk in views:
        if sk.model.name != model.name:
            raise InvalidInput("all skeletons in one file must use the same model")
        cid = _check_id(sk.camera_id, "camera id")
        for j in range(model.joint_count):
            u, v = sk.joints[j]
            out.append(f"{sk.frame_id} {cid} {j} {fmt(u)} {fmt(v)} {fmt(sk.confidence[j])}")
    return "\n".join(out) + "\n"


def _grouped(r, rows, key_of, model, joint_col):
    """Rows grouped by record key (first-seen order), each ``{joint: (line, tokens)}``."""
    groups, first = {}, {}
    for line_no, toks in rows:
        r.pos = line_no
        key = key_of(toks)
        j = _joint(r, *toks[joint_col], model)
        g = groups.setdefault(key, {})
        first.setdefault(key, line_no)
        if j in g:
            raise r.error(f"joint {j} repeated", column=toks[joint_col][1])
        g[j] = (line_no, toks)
    for key, g in groups.items():
        if len(g) != model.joint_count:
            raise ParseError(f"record {key} does not list all {model.joint_count} joints", first[key], 1, r.path)
    return [(key, groups[key], first[key]) for key in groups]


def parse_skeleton2d(text, path=None):
    """List of :class:`Skeleton2D` in file order."""
    r, header, _, rows = _read_table(text, "skeleton2d", SK2_COLUMNS, {"model": True}, path)
    model = _model(r, header)

    def key_of(toks):
        if not _ID.match(toks[1][0]):
            raise r.error(f"bad camera id {toks[1][0]!r}", column=toks[1][1])
        return (_num(r, toks[0][0], toks[0][1], int), toks[1][0])

    out = []
    for (frame, cid), g, first in _grouped(r, rows, key_of, model, 2):
        px = np.zeros((model.joint_count, 2))
        conf = np.zeros(model.joint_count)
        for j in range(model.joint_count):
            r.pos, toks = g[j]
            px[j] = [_num(r, *toks[3]), _num(r, *toks[4])]
            conf[j] = _num(r, *toks[5])
        try:
            out.append(Skeleton2D(model, px, conf, cid, frame))
        except InvalidInput as exc:
            raise ParseError(str(exc), first, 1, path) from None
    return out


def write_skeleton2d(path, views):
    _write(path, format_skeleton2d(views))


def read_skeleton2d(path):
    return parse_skeleton2d(_read(path), str(path))


def views_by_frame(views):
    """Group 2D skeletons into per-frame lists, frames ascending, cameras sorted."""
    frames = {}
    for v in views:
        frames.setdefault(v.frame_id, []).append(v)
    return [sorted(frames[f], key=lambda v: v.camera_id) for f in sorted(frames)]


# ---------------------------------------------------------------------------
# 3D skeletons and sequences
# ---------------------------------------------------------------------------

SK3_COLUMNS = ("frame_id", "joint", "x", "y", "z", "valid", "rms_px", "views", "reason")


def _sk3_rows(frame_id, joints, valid, rms, views, reasons):
    out = []
    for j in range(len(joints)):
        x, y, z = joints[j]
        reason = reasons[j] or "-"
        out.append(f"{int(frame_id)} {j} {fmt(x)} {fmt(y)} {fmt(z)} {int(bool(valid[j]))} "
                   f"{fmt(rms[j])} {int(views[j])} {reason}")
    return out


def format_skeleton3d(skeletons) -> str:
    skeletons = list(skeletons)
    if not skeletons:
        raise InvalidInput("no 3D skeletons to write")
    model = skeletons[0].model
    out = [f"mvmocap skeleton3d {VERSION}", f"model={model.name}", "columns=" + " ".join(SK3_COLUMNS)]
    for s in skeletons:
        if s.model.name != model.name:
            raise InvalidInput("all skeletons in one file must use the same model")
        out += _sk3_rows(s.frame_id, s.joints, s.valid, s.rms_px, s.view_count, s.reasons)
    return "\n".join(out) + "\n"


def _parse_sk3_records(r, rows, model):
    def key_of(toks):
        return _num(r, *toks[0], int)

    records = []
    for frame, g, first in _grouped(r, rows, key_of, model, 1):
        n = model.joint_count
        X, valid, rms, views, reasons = np.zeros((n, 3)), np.zeros(n, bool), np.zeros(n), np.zeros(n, int), []
        for j in range(n):
            r.pos, toks = g[j]
            X[j] = [_num(r, t, c) for t, c in toks[2:5]]
            valid[j] = _flag(r, *toks[5])
            rms[j] = _num(r, *toks[6])
            views[j] = _num(r, *toks[7], int)
            reason = toks[8][0]
            if valid[j] != (reason == "-"):
                raise r.error("valid joints take reason '-', invalid joints need a reason", column=toks[8][1])
            reasons.append(None if reason == "-" else reason)
        records.append((frame, X, valid, rms, views, tuple(reasons), first))
    return records


def parse_skeleton3d(text, path=None):
    r, header, _, rows = _read_table(text, "skeleton3d", SK3_COLUMNS, {"model": True}, path)
    model = _model(r, header)
    out = []
    for frame, X, valid, rms, views, reasons, line in _parse_sk3_records(r, rows, model):
        try:
            out.append(Skeleton3D(model, X, valid, frame, rms, views, reasons))
        except InvalidInput as exc:
            raise ParseError(str(exc), line, 1, path) from None
    return out


def write_skeleton3d(path, skeletons):
    _write(path, format_skeleton3d(skeletons))


def read_skeleton3d(path):
    return parse_skeleton3d(_read(path), str(path))


def format_sequence(seq: SkeletonSequence) -> str:
    out = [
        f"mvmocap sequence {VERSION}",
        f"model={seq.model.name}",
        f"frame_rate={fmt(seq.frame_rate)}",
        f"subject={_check_text(seq.subject, 'subject')}",
        "columns=" + " ".join(SK3_COLUMNS),
    ]
    n = seq.model.joint_count
    for t in range(seq.length):
        valid = seq.valid[t]
        reasons = [None if v else INSUFFICIENT_VIEWS for v in valid]
        out += _sk3_rows(seq.frame_ids[t], seq.frames[t], valid, np.full(n, np.nan), np.zeros(n, int), reasons)
    return "\n".join(out) + "\n"


def parse_sequence(text, path=None) -> SkeletonSequence:
    keys = {"model": True, "frame_rate": True, "subject": True}
    r, header, _, rows = _read_table(text, "sequence", SK3_COLUMNS, keys, path)
    model = _model(r, header)
    r.pos = header["frame_rate"][0]
    rate = _num(r, header["frame_rate"][1], 12)
    if not rate > 0 or not np.isfinite(rate):
        raise r.error("frame_rate must be positive", column=12)
    if not rows:
        raise ParseError("a sequence needs at least one frame", len(r.lines) + 1, 1, path)
    records = _parse_sk3_records(r, rows, model)
    ids = [rec[0] for rec in records]
    if len(set(ids)) != len(ids) or ids != sorted(ids):
        raise ParseError("frame ids must be strictly increasing", records[0][-1], 1, path)
    try:
        return SkeletonSequence(model, np.array([rec[1] for rec in records]), np.array([rec[2] for rec in records]),
                                rate, header["subject"][1], np.array(ids))
    except InvalidInput as exc:
        raise ParseError(str(exc), records[0][-1], 1, path) from None


def write_sequence(path, seq):
    _write(path, format_sequence(seq))


def read_sequence(path) -> SkeletonSequence:
    return parse_sequence(_read(path), str(path))


# ---------------------------------------------------------------------------
# standard body
# ---------------------------------------------------------------------------

BODY_COLUMNS = ("joint", "parent", "length_cm")


def format_body(body: StandardBody) -> str:
    m = body.model
    out = [f"mvmocap body {VERSION}", f"model={m.name}", "columns=" + " ".join(BODY_COLUMNS)]
    out += [f"{c} {p} {fmt(body.lengths[c])}" for p, c in m.edges]
    return "\n".join(out) + "\n"


def parse_body(text, path=None) -> StandardBody:
    r, header, _, rows = _read_table(text, "body", BODY_COLUMNS, {"model": True}, path)
    model = _model(r, header)
    L = np.zeros(model.joint_count)
    seen = set()
    for line_no, ((c, cc), (p, pc), (v, vc)) in rows:
        r.pos = line_no
        j = _joint(r, c, cc, model)
        if _num(r, p, pc, int) != model.parents[j] or j == model.root:
            raise r.error(f"joint {j} does not have parent {p} in {model.name}", column=pc)
        if j in seen:
            raise r.error(f"joint {j} repeated", column=cc)
        seen.add(j)
        L[j] = _num(r, v, vc)
    if len(seen) != model.joint_count - 1:
        raise ParseError(f"body must list all {model.joint_count - 1} bones", len(r.lines), 1, path)
    try:
        return StandardBody(model, L)
    except InvalidInput as exc:
        raise ParseError(str(exc), 2, 1, path) from None


def write_body(path, body):
    _write(path, format_body(body))


def read_body(path) -> StandardBody:
    return parse_body(_read(path), str(path))


# ---------------------------------------------------------------------------
# comparison report
# ---------------------------------------------------------------------------

REPORT_COLUMNS = ("frame", "kind", "index", "name", "deviation")


def format_report(rep: ComparisonReport) -> str:
    m = rep.model
    out = [
        f"mvmocap report {VERSION}",
        f"model={m.name}",
        f"student={_check_text(rep.student, 'student')}",
        f"coach={_check_text(rep.coach, 'coach')}",
        f"frames={rep.frames}",
        f"mean_distance_cm={fmt(rep.mean_distance_cm)}",
        f"mean_angle_deg={fmt(rep.mean_angle_deg)}",
        f"alignment_wxyz={_fmts(rep.alignment.quaternion)}",
        f"alignment_translation_cm={_fmts(rep.alignment.translation)}",
    ]
    for f in rep.flags:
        out.append(f"flag={f.triple} {f.name} {f.joint} {f.start} {f.end} {fmt(f.peak_deg)}")
    out.append("columns=" + " ".join(REPORT_COLUMNS))
    for t in range(rep.frames):
        for j in range(m.joint_count):
            out.append(f"{t} joint {j} {m.joint_names[j]} {fmt(rep.distance_cm[t, j])}")
        for k, name in enumerate(m.triple_names):
            out.append(f"{t} angle {k} {name} {fmt(rep.angle_deg[t, k])}")
    return "\n".join(out) + "\n"


def parse_report(text, path=None) -> ComparisonReport:
    keys = {k: True for k in ("model", "student", "coach", "frames", "mean_distance_cm", "mean_angle_deg",
                              "alignment_wxyz", "alignment_translation_cm")}
    r, header, rep, rows = _read_table(text, "report", REPORT_COLUMNS, keys, path, repeat_keys=("flag",))
    model = _model(r, header)

    def h(key, kind=float):
        r.pos = header[key][0]
        return _num(r, header[key][1], len(key) + 2, kind)

    T = h("frames", int)
    if T < 1:
        raise r.error("frames must be positive", column=8)
    r.pos = header["alignment_wxyz"][0]
    pose = _pose(r, {"rotation_wxyz": header["alignment_wxyz"][1], "translation_cm": header["alignment_translation_cm"][1]},
                 {"rotation_wxyz": header["alignment_wxyz"][0], "translation_cm": header["alignment_translation_cm"][0]})
    flags = []
    for line_no, value in rep["flag"]:
        r.pos = line_no
        toks = value.split()
        if len(toks) != 6:
            raise r.error("flag needs: triple name joint start end peak_deg", column=6)
        k, j, a, b = (_num(r, toks[i], 6, int) for i in (0, 2, 3, 4))
        if not 0 <= k < len(model.angle_triples) or not 0 <= a < b <= T:
            raise r.error("flag out of range", column=6)
        flags.append(Flag(k, toks[1], j, a, b, _num(r, toks[5], 6)))
    dist = np.full((T, model.joint_count), np.nan)
    ang = np.full((T, len(model.angle_triples)), np.nan)
    seen = np.zeros((T, model.joint_count + len(model.angle_triples)), bool)
    for line_no, ((t, tc), (kind, kc), (i, ic), (name, _), (v, vc)) in rows:
        r.pos = line_no
        t, i = _num(r, t, tc, int), _num(r, i, ic, int)
        if not 0 <= t < T:
            raise r.error("frame out of range", column=tc)
        if kind == "joint" and 0 <= i < model.joint_count:
            dist[t, i] = _num(r, v, vc)
            slot = i
        elif kind == "angle" and 0 <= i < len(model.angle_triples):
            ang[t, i] = _num(r, v, vc)
            slot = model.joint_count + i
        else:
            raise r.error(f"bad row kind/index {kind} {i}", column=kc)
        if seen[t, slot]:
            raise r.error("duplicate row", column=1)
        seen[t, slot] = True
    if not seen.all():
        raise ParseError("report table is incomplete", len(r.lines), 1, path)
    return ComparisonReport(model, dist, ang, h("mean_distance_cm"), h("mean_angle_deg"), tuple(flags), pose,
                            header["student"][1], header["coach"][1])


def write_report(path, rep):
    _write(path, format_report(rep))


def read_report(path) -> ComparisonReport:
    return parse_report(_read(path), str(path))
