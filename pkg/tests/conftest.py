import numpy as np
import pytest

from mvmocap.calibration import CheckerboardSpec
from mvmocap.geometry import Camera, Intrinsics, RigidPose, look_at, rotvec_to_matrix
from mvmocap.synth import RigSpec, build_rig, sweep_checkerboard, uniform_sweep


def random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    return RigidPose.from_quaternion(q, np.zeros(3)).rotation


def random_pose(rng, scale=100.0):
    return RigidPose(random_rotation(rng), rng.uniform(-scale, scale, 3))


def random_camera(rng, size=(640, 480)):
    k = Intrinsics(rng.uniform(300, 2000), rng.uniform(300, 2000), rng.uniform(200, 440), rng.uniform(150, 330),
                   rng.uniform(-2, 2))
    eye = rng.uniform(-300, 300, 3)
    eye[2] = rng.uniform(50, 250)
    target = rng.uniform(-20, 20, 3) + np.array([0.0, 0.0, 120.0])
    return Camera(k, look_at(eye, target), size)


def small_scene(noise_px=0.0, seed=0, columns=4, poses=30):
    """A reduced ring (``2 * columns`` cameras) with a uniform board sweep."""
    cams = build_rig(RigSpec(column_count=columns))
    board = CheckerboardSpec()
    obs, truth = sweep_checkerboard(board, uniform_sweep(board, poses), cams, noise_px, seed)
    return cams, board, obs, truth


def random_ba_problem(rng, noise_px=None, refine_skew=True):
    """A small randomised BA problem and a perturbed starting state."""
    from mvmocap.calibration.bundle import ReprojectionProblem, _state_from
    from mvmocap.calibration import RigCalibration

    noise = rng.uniform(0.0, 1.0) if noise_px is None else noise_px
    cams, board, obs, truth = small_scene(noise, int(rng.integers(1 << 31)), columns=int(rng.integers(2, 4)),
                                          poses=int(rng.integers(8, 16)))
    cal = RigCalibration(cams, board=board, board_poses=truth, reference_camera="cam00")
    ids, frames = sorted(cams), sorted(truth)
    problem = ReprojectionProblem(board, obs, ids, frames, "cam00", refine_skew=refine_skew)
    state = _state_from(cal, ids, frames, truth)
    state.intrinsics += rng.normal(size=state.intrinsics.shape) * [20.0, 20.0, 5.0, 5.0, 0.5]
    for R in (state.cam_R, state.board_R):
        R[:] = rotvec_to_matrix(rng.normal(scale=0.01, size=(len(R), 3))) @ R
    state.cam_t += rng.normal(scale=1.0, size=state.cam_t.shape)
    state.board_t += rng.normal(scale=1.0, size=state.board_t.shape)
    return problem, state


def fd_jacobian(problem, state, step=1e-6):
    """Central differences of the flattened residuals in the retraction coordinates."""
    J = np.empty((2 * problem.n_correspondences, problem.n_params))
    for p in range(problem.n_params):
        d = np.zeros(problem.n_params)
        d[p] = step
        hi = problem.residuals(problem.retract(state, d)).ravel()
        lo = problem.residuals(problem.retract(state, -d)).ravel()
        J[:, p] = (hi - lo) / (2 * step)
    return J


def jacobian_relative_error(problem, state, step=1e-6):
    """Largest per-column ``|J - J_fd| / |J_fd|`` (Euclidean norms)."""
    Ja = problem.jacobian(state).toarray()
    Jf = fd_jacobian(problem, state, step)
    num = np.linalg.norm(Ja - Jf, axis=0)
    den = np.maximum(np.linalg.norm(Jf, axis=0), 1e-300)
    return float(np.max(num / den))


@pytest.fixture(scope="session")
def rig32():
    return build_rig(RigSpec())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ------------------------------------------------------

ACCEPTANCE_RESULTS = {}


def record_acceptance(number, ok, detail):
    """Store and print one PASS/FAIL line for an acceptance criterion."""
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_RESULTS[number] = line
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(ACCEPTANCE_RESULTS[n])


__all__ = [
    "ACCEPTANCE_RESULTS", "fd_jacobian", "jacobian_relative_error", "random_ba_problem", "random_camera",
    "random_pose", "random_rotation", "record_acceptance", "rotvec_to_matrix", "small_scene",
]
