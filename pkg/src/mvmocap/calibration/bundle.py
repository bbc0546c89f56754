"""Joint refinement of intrinsics, camera poses and board poses.

The objective is the summed squared pixel distance between detected corners
and the projections of the corresponding board points. It is minimised by
Levenberg-Marquardt with Marquardt (diagonal) damping. Rotations are updated
multiplicatively, ``R <- exp([w]x) R``, so the Jacobian columns for rotations
are derivatives with respect to a small left perturbation ``w``.

Gauge: the reference camera's pose is held fixed and the board geometry
(square size) fixes the metric scale.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse

from ..errors import DegenerateConfiguration, InvalidInput, NonConvergence, NumericalFailure
from ..geometry import Camera, Intrinsics, RigidPose, nearest_rotation, rotvec_to_matrix
from .board import CheckerboardSpec, RigCalibration, rms
from .homography import estimate_homography
from .rig import _average
from .zhang import estimate_board_pose

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BAConfig:
    max_iterations: int = 100
    initial_damping: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 0.1
    ftol: float = 1e-12          # relative cost decrease
    gtol: float = 1e-10          # gradient infinity norm
    rms_floor: float = 1e-10     # px; below this the fit is exact to rounding
    max_damping: float = 1e16
    refine_intrinsics: bool = True
    refine_skew: bool = False
    refine_boards: bool = True
    reference_camera: str | None = None
    trim_outliers: bool = True
    outlier_mad_factor: float = 5.0
    raise_on_nonconvergence: bool = True


@dataclass
class BAState:
    intrinsics: np.ndarray   # (C, 5): fx, fy, cx, cy, skew
    cam_R: np.ndarray        # (C, 3, 3) world -> camera
    cam_t: np.ndarray        # (C, 3)
    board_R: np.ndarray      # (F, 3, 3) board -> world
    board_t: np.ndarray      # (F, 3)

    def copy(self):
        return BAState(*(a.copy() for a in (self.intrinsics, self.cam_R, self.cam_t, self.board_R, self.board_t)))


@dataclass
class LMInfo:
    converged: bool = False
    reason: str = ""
    iterations: int = 0
    cost: float = float("nan")
    gradient_norm: float = float("nan")
    damping: float = float("nan")
    log: list = field(default_factory=list)


class ReprojectionProblem:
    """Flattened correspondences plus the parameter layout for one BA run."""

    def __init__(self, spec: CheckerboardSpec, observations, camera_ids, frame_ids, reference_camera,
                 refine_intrinsics=True, refine_skew=False, refine_boards=True):
        self.spec = spec
        self.camera_ids = list(camera_ids)
        self.frame_ids = list(frame_ids)
        self.reference_camera = reference_camera
        cam_index = {c: i for i, c in enumerate(self.camera_ids)}
        frame_index = {f: j for j, f in enumerate(self.frame_ids)}
        self.observations = list(observations)
        oc, of, pts, px, oid = [], [], [], [], []
        for k, ob in enumerate(self.observations):
            n = len(ob.indices)
            oc.append(np.full(n, cam_index[ob.camera_id]))
            of.append(np.full(n, frame_index[ob.frame_id]))
            pts.append(spec.points(ob.indices))
            px.append(ob.pixels)
            oid.append(np.full(n, k))
        self.obs_cam = np.concatenate(oc).astype(int)
        self.obs_frame = np.concatenate(of).astype(int)
        self.obs_points = np.concatenate(pts)
        self.obs_pixels = np.concatenate(px)
        self.obs_id = np.concatenate(oid).astype(int)

        C, F = len(self.camera_ids), len(self.frame_ids)
        n_intr = (5 if refine_skew else 4) if refine_intrinsics else 0
        col = 0
        self.intr_cols = np.full((C, 5), -1)
        self.pose_cols = np.full((C, 6), -1)
        for i, c in enumerate(self.camera_ids):
            self.intr_cols[i, :n_intr] = np.arange(col, col + n_intr)
            col += n_intr
            if c != reference_camera:
                self.pose_cols[i] = np.arange(col, col + 6)
                col += 6
        self.board_cols = np.full((F, 6), -1)
        if refine_boards:
            self.board_cols = np.arange(col, col + 6 * F).reshape(F, 6)
            col += 6 * F
        self.n_params = col

    @property
    def n_correspondences(self):
        return len(self.obs_cam)

    def subset(self, keep):
        """Same layout restricted to the correspondences flagged in ``keep``."""
        sub = object.__new__(ReprojectionProblem)
        sub.__dict__.update(self.__dict__)
        for name in ("obs_cam", "obs_frame", "obs_points", "obs_pixels", "obs_id"):
            setattr(sub, name, getattr(self, name)[keep])
        return sub

    # -- model --------------------------------------------------------------

    def _forward(self, s: BAState):
        bR = s.board_R[self.obs_frame]
        Pw_rel = np.einsum("mij,mj->mi", bR, self.obs_points)
        Pw = Pw_rel + s.board_t[self.obs_frame]
        cR = s.cam_R[self.obs_cam]
        Pc = np.einsum("mij,mj->mi", cR, Pw) + s.cam_t[self.obs_cam]
        return Pw_rel, cR, Pc

    def residuals(self, s: BAState):
        """``(M, 2)`` projected minus observed; ``inf`` rows for points behind a camera."""
        _, _, Pc = self._forward(s)
        k = s.intrinsics[self.obs_cam]
        Z = Pc[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            x = Pc[:, 0] / Z
            y = Pc[:, 1] / Z
        u = k[:, 0] * x + k[:, 4] * y + k[:, 2]
        v = k[:, 1] * y + k[:, 3]
        r = np.stack([u, v], axis=1) - self.obs_pixels
        r[Z <= 1e-9] = np.inf
        return r

    def cost(self, s):
        r = self.residuals(s)
        return float(np.sum(r * r))

    def _blocks(self, s: BAState):
        """Dense per-corner Jacobian blocks ``(M, 2, 17)`` and their column ids ``(M, 17)``.

        Column groups: intrinsics (5), camera rotation (3), camera translation
        (3), board rotation (3), board translation (3).
        """
        Pw_rel, cR, Pc = self._forward(s)
        k = s.intrinsics[self.obs_cam]
        fx, fy, sk = k[:, 0], k[:, 1], k[:, 4]
        iz = 1.0 / Pc[:, 2]
        x, y = Pc[:, 0] * iz, Pc[:, 1] * iz
        M = len(iz)
        dP = np.zeros((M, 2, 3))
        dP[:, 0, 0] = fx * iz
        dP[:, 0, 1] = sk * iz
        dP[:, 0, 2] = -(fx * x + sk * y) * iz
        dP[:, 1, 1] = fy * iz
        dP[:, 1, 2] = -fy * y * iz

        J = np.zeros((M, 2, 17))
        J[:, 0, 0] = x
        J[:, 0, 2] = 1.0
        J[:, 0, 4] = y
        J[:, 1, 1] = y
        J[:, 1, 3] = 1.0
        # a^T [v]x == (a x v)^T for each row a of the projection derivative
        v = (Pc - s.cam_t[self.obs_cam])[:, None, :]
        J[:, :, 5:8] = np.cross(v, dP)
        J[:, :, 8:11] = dP
        dPR = np.einsum("mij,mjk->mik", dP, cR)
        J[:, :, 11:14] = np.cross(Pw_rel[:, None, :], dPR)
        J[:, :, 14:17] = dPR
        cols = np.concatenate([self.intr_cols[self.obs_cam], self.pose_cols[self.obs_cam],
                               self.board_cols[self.obs_frame]], axis=1)
        return J, cols

    def jacobian(self, s: BAState):
        """Analytic sparse Jacobian of the flattened residual vector, ``(2M, P)``."""
        J, cols = self._blocks(s)
        M = len(J)
        rr = np.broadcast_to(np.arange(2 * M).reshape(M, 2)[:, :, None], J.shape)
        cc = np.broadcast_to(cols[:, None, :], J.shape)
        keep = cc >= 0
        return scipy.sparse.csr_matrix((J[keep], (rr[keep], cc[keep])), shape=(2 * M, self.n_params))

    def normal_equations(self, s: BAState, r):
        """``J^T J`` (dense) and ``J^T r`` for the flattened residual ``r``.

        Corners of one observation share all their columns, so the products
        are reduced per observation before being scattered into the matrix.
        """
        J, cols = self._blocks(s)
        J2 = J.reshape(-1, 17)
        r = np.asarray(r).reshape(-1)
        bounds = np.flatnonzero(np.r_[True, np.diff(self.obs_id) != 0, True])
        H = np.zeros((self.n_params, self.n_params))
        g = np.zeros(self.n_params)
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            c = cols[lo]
            v = c >= 0
            idx = c[v]
            Jo = J2[2 * lo:2 * hi][:, v]
            H[np.ix_(idx, idx)] += Jo.T @ Jo
            g[idx] += Jo.T @ r[2 * lo:2 * hi]
        return H, g

    def retract(self, s: BAState, delta):
        out = s.copy()
        m = self.intr_cols >= 0
        out.intrinsics[m] += delta[self.intr_cols[m]]
        for i in range(len(self.camera_ids)):
            cols = self.pose_cols[i]
            if cols[0] >= 0:
                out.cam_R[i] = rotvec_to_matrix(delta[cols[:3]]) @ out.cam_R[i]
                out.cam_t[i] += delta[cols[3:]]
        if self.board_cols[0, 0] >= 0:
            d = delta[self.board_cols]
            out.board_R = rotvec_to_matrix(d[:, :3]) @ out.board_R
            out.board_t += d[:, 3:]
        return out


def levenberg_marquardt(problem: ReprojectionProblem, state: BAState, config: BAConfig, stage="lm"):
    """Damped Gauss-Newton on ``problem`` starting from ``state``.

    A trial step is accepted only if it strictly lowers the cost, so the
    sequence of accepted costs in the returned log never increases.
    """
    info = LMInfo()
    n_res = max(problem.n_correspondences, 1)
    r = problem.residuals(state).ravel()
    cost = float(r @ r)
    if not np.isfinite(cost):
        raise NumericalFailure("reprojection cost is not finite at the initial parameters")
    lam = config.initial_damping
    info.log.append(dict(stage=stage, iteration=0, cost=cost, damping=lam, accepted=True, gradient_norm=float("nan")))
    g = H = None
    need_jac = True
    for it in range(1, config.max_iterations + 1):
        if np.sqrt(cost / n_res) <= config.rms_floor:
            info.converged, info.reason = True, "rms floor"
            break
        if need_jac:
            H, g = problem.normal_equations(state, r)
            need_jac = False
        gnorm = float(np.abs(g).max()) if g.size else 0.0
        info.gradient_norm = gnorm
        if gnorm < config.gtol:
            info.converged, info.reason = True, "gradient"
            break
        diag = np.diag(H).copy()
        diag = np.maximum(diag, 1e-12 * max(diag.max(), 1e-30))
        A = H + lam * np.diag(diag)
        try:
            delta = -scipy.linalg.cho_solve(scipy.linalg.cho_factor(A), g)
        except np.linalg.LinAlgError:
            delta = -np.linalg.lstsq(A, g, rcond=None)[0]
        trial = problem.retract(state, delta)
        r_new = problem.residuals(trial).ravel()
        new_cost = float(r_new @ r_new)
        info.iterations = it
        if np.isfinite(new_cost) and new_cost < cost:
            rel = (cost - new_cost) / cost
            state, r, cost = trial, r_new, new_cost
            lam = max(lam * config.damping_down, 1e-15)
            need_jac = True
            info.log.append(dict(stage=stage, iteration=it, cost=cost, damping=lam, accepted=True, gradient_norm=gnorm))
            if rel < config.ftol:
                info.converged, info.reason = True, "relative cost decrease"
                break
        else:
            info.log.append(dict(stage=stage, iteration=it, cost=new_cost, damping=lam, accepted=False, gradient_norm=gnorm))
            if np.isfinite(new_cost) and new_cost - cost <= config.ftol * cost:
                info.converged, info.reason = True, "relative cost change"
                break
            lam *= config.damping_up
            if lam > config.max_damping:
                info.reason = "damping limit"
                break
    else:
        info.reason = "max iterations"
    info.cost, info.damping = cost, lam
    return state, info


# ---------------------------------------------------------------------------
# public entry point
# ---------------------------------------------------------------------------

def initial_board_poses(cameras, observations, spec: CheckerboardSpec):
    """Board-to-world poses averaged over every camera that sees each board."""
    per_frame = {}
    for ob in observations:
        if not ob.usable or ob.camera_id not in cameras:
            continue
        cam = cameras[ob.camera_id]
        try:
            H = estimate_homography(spec.points(ob.indices)[:, :2], ob.pixels)
        except DegenerateConfiguration:
            continue
        board_to_cam = estimate_board_pose(cam.intrinsics, H)
        per_frame.setdefault(ob.frame_id, []).append(cam.pose.inverse() @ board_to_cam)
    out = {}
    for f, poses in sorted(per_frame.items()):
        R, t = _average([p.rotation for p in poses], [p.translation for p in poses])
        out[f] = RigidPose(R, t)
    return out


def _state_from(cal: RigCalibration, camera_ids, frame_ids, board_poses):
    cams = [cal.cameras[c] for c in camera_ids]
    return BAState(
        np.array([c.intrinsics.as_array() for c in cams]),
        np.array([c.pose.rotation for c in cams]),
        np.array([c.pose.translation for c in cams]),
        np.array([board_poses[f].rotation for f in frame_ids]),
        np.array([board_poses[f].translation for f in frame_ids]),
    )


def _per_camera_rms(problem, state):
    e = np.linalg.norm(problem.residuals(state), axis=1)
    return {c: rms(e[problem.obs_cam == i]) for i, c in enumerate(problem.camera_ids)}


def _calibration_from(cal, problem, state, frame_ids, iterations, log):
    cams = {}
    for i, c in enumerate(problem.camera_ids):
        fx, fy, cx, cy, sk = state.intrinsics[i]
        R = nearest_rotation(state.cam_R[i])
        cams[c] = Camera(Intrinsics(fx, fy, cx, cy, sk), RigidPose(R, state.cam_t[i]), cal.cameras[c].image_size)
    boards = {f: RigidPose(nearest_rotation(state.board_R[j]), state.board_t[j]) for j, f in enumerate(frame_ids)}
    e = np.linalg.norm(problem.residuals(state), axis=1)
    return RigCalibration(cams, rms(e), _per_camera_rms(problem, state), cal.board, boards,
                          problem.reference_camera, iterations, log)


def bundle_adjust(initial: RigCalibration, boards, config: BAConfig | None = None) -> RigCalibration:
    """Refine ``initial`` against the board observations.

    Board poses come from ``initial.board_poses`` where present and are
    otherwise initialised from the cameras. After the first convergence,
    correspondences whose residual exceeds the median by more than
    ``outlier_mad_factor`` robust standard deviations (1.4826 * MAD) are
    dropped once and LM is re-run on the rest.

    Raises:
        NonConvergence: iteration budget exhausted (``result`` holds the best
            calibration reached).
        NumericalFailure: non-finite cost at the initial parameters.
    """
    config = config or BAConfig()
    if initial.board is None:
        raise InvalidInput("initial calibration carries no checkerboard spec")
    spec = initial.board
    obs = [ob for ob in boards if ob.usable and ob.camera_id in initial.cameras]
    for ob in obs:
        ob.validate(spec)
    camera_ids = sorted(initial.cameras)
    seen = {ob.camera_id for ob in obs}
    if set(camera_ids) - seen:
        raise InvalidInput(f"cameras without observations: {sorted(set(camera_ids) - seen)}")
    ref = config.reference_camera or initial.reference_camera or camera_ids[0]

    board_poses = dict(initial.board_poses)
    missing = {ob.frame_id for ob in obs} - set(board_poses)
    if missing:
        board_poses.update(initial_board_poses(initial.cameras, [o for o in obs if o.frame_id in missing], spec))
    obs = [ob for ob in obs if ob.frame_id in board_poses]
    frame_ids = sorted({ob.frame_id for ob in obs})

    problem = ReprojectionProblem(spec, obs, camera_ids, frame_ids, ref, config.refine_intrinsics,
                                  config.refine_skew, config.refine_boards)
    state = _state_from(initial, camera_ids, frame_ids, board_poses)
    state, info = levenberg_marquardt(problem, state, config, stage="initial")
    log, iterations = list(info.log), info.iterations
    logger.debug("BA stage 1: %s after %d iterations, rms %.4g px", info.reason, info.iterations,
                 np.sqrt(info.cost / problem.n_correspondences))

    if info.converged and config.trim_outliers:
        e = np.linalg.norm(problem.residuals(state), axis=1)
        med = np.median(e)
        mad = np.median(np.abs(e - med))
        keep = e - med <= config.outlier_mad_factor * 1.4826 * mad
        if mad > 0 and not keep.all():
            logger.info("BA: dropping %d of %d correspondences as outliers", (~keep).sum(), len(keep))
            problem = problem.subset(keep)
            state, info = levenberg_marquardt(problem, state, config, stage="trimmed")
            log += info.log
            iterations += info.iterations

    result = _calibration_from(initial, problem, state, frame_ids, iterations, log)
    if not info.converged:
        msg = (f"bundle adjustment stopped ({info.reason}) after {iterations} iterations: "
               f"|g|_inf={info.gradient_norm:.3g}, damping={info.damping:.3g}")
        if config.raise_on_nonconvergence:
            raise NonConvergence(msg, result=result, gradient_norm=info.gradient_norm, damping=info.damping, log=log)
        logger.warning(msg)
    return result
