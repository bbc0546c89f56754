import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mvmocap.errors import InvalidBounds, InvalidSpec, ParseError
from mvmocap.geometry import Camera, Intrinsics, Ray, look_at
from mvmocap.render import (Composite, Homogeneous, RenderConfig, Slab, Sphere, composite, field_from_dict, read_ppm,
                            render_image, render_ray, sample_depths, to_bytes, write_ppm)

AXIS = Ray([0.0, 0.0, 0.0], [0.0, 0.0, 1.0])


def closed_form(sigma, color, length):
    return np.asarray(color) * (1.0 - np.exp(-sigma * length))


def two_slabs():
    return Composite((Slab((0, 0, 1), 20.0, 35.0, 0.05, (0.9, 0.2, 0.1)),
                      Slab((0, 0, 1), 47.3, 71.9, 0.11, (0.1, 0.6, 0.8))))


def slab_exact(t_far=100.0):
    """Piecewise closed form along +z for the two-slab field."""
    out = np.zeros(3)
    trans = 1.0
    for lo, hi, s, c in ((20.0, 35.0, 0.05, (0.9, 0.2, 0.1)), (47.3, 71.9, 0.11, (0.1, 0.6, 0.8))):
        a = 1.0 - np.exp(-s * (min(hi, t_far) - lo))
        out += trans * a * np.asarray(c)
        trans *= 1.0 - a
    return out


def riemann_reference(field, t_near, t_far, n=1_000_000):
    """Left Riemann sum of T(t) sigma(t) c(t) dt with T from the cumulative optical depth."""
    dt = (t_far - t_near) / n
    t = t_near + dt * (np.arange(n) + 0.5)
    pts = np.zeros((n, 3))
    pts[:, 2] = t
    c, s = field.query(pts, np.tile([0.0, 0.0, 1.0], (n, 1)))
    tau = np.cumsum(s) * dt
    T = np.exp(-(tau - s * dt))
    return (T * s * dt) @ c


def test_empty_space_is_black():
    assert np.array_equal(render_ray(Homogeneous(0.0), AXIS, RenderConfig()), np.zeros(3))


@pytest.mark.parametrize("sigma", [1e-4, 0.003, 0.02, 0.5, 5.0])
def test_homogeneous_closed_form(sigma):
    color = (0.3, 0.7, 1.0)
    cfg = RenderConfig(t_near=2.0, t_far=180.0, sample_count=1024)
    got = render_ray(Homogeneous(sigma, color), AXIS, cfg)
    assert np.abs(got - closed_form(sigma, color, 178.0)).max() < 1e-4


def test_homogeneous_stratified_closed_form():
    cfg = RenderConfig(t_near=0.0, t_far=100.0, sample_count=1024, stratified=True, seed=4)
    got = render_ray(Homogeneous(0.02, (1, 1, 1)), AXIS, cfg)
    assert np.abs(got - closed_form(0.02, (1, 1, 1), 100.0)).max() < 1e-4


def test_doubling_samples_converges():
    f = Homogeneous(0.013, (0.5, 0.5, 0.5))
    a = render_ray(f, AXIS, RenderConfig(t_far=300.0, sample_count=256))
    b = render_ray(f, AXIS, RenderConfig(t_far=300.0, sample_count=512))
    assert np.abs(a - b).max() < 1e-5
    exact = closed_form(0.013, (0.5, 0.5, 0.5), 300.0)
    err = [np.abs(render_ray(f, AXIS, RenderConfig(t_far=300.0, sample_count=n)) - exact).max() for n in (8, 16, 32)]
    # bin lengths sum to the full interval, so the homogeneous case is exact up to rounding
    assert all(e < 1e-14 for e in err)


def test_riemann_oracle_agrees_with_closed_form():
    assert np.abs(riemann_reference(two_slabs(), 0.0, 100.0) - slab_exact()).max() < 1e-5


def test_two_slab_field():
    ref = riemann_reference(two_slabs(), 0.0, 100.0)
    got = render_ray(two_slabs(), AXIS, RenderConfig(t_far=100.0, sample_count=16384))
    assert np.abs(got - ref).max() < 1e-4
    coarse = render_ray(two_slabs(), AXIS, RenderConfig(t_far=100.0, sample_count=64))
    assert np.abs(coarse - ref).max() > np.abs(got - ref).max()


@given(st.lists(st.floats(0.0, 50.0), min_size=2, max_size=64), st.integers(0, 2**31))
@settings(max_examples=100, deadline=None)
def test_colors_stay_in_unit_cube(sig, seed):
    rng = np.random.default_rng(seed)
    sigma = np.array(sig)
    colors = rng.random((len(sig), 3))
    delta = rng.uniform(0.0, 10.0, len(sig))
    rgb, opacity = composite(colors, sigma, delta)
    assert np.all(rgb >= 0) and np.all(rgb <= 1) and 0 <= opacity <= 1


@given(st.lists(st.floats(0.0, 5.0), min_size=2, max_size=32), st.floats(0.0, 5.0))
@settings(max_examples=100, deadline=None)
def test_opacity_is_monotone_in_density(sig, bump):
    sigma = np.array(sig)
    delta = np.full(len(sig), 0.7)
    white = np.ones((len(sig), 3))
    _, a = composite(white, sigma, delta)
    _, b = composite(white, sigma + bump, delta)
    assert b >= a - 1e-15


def test_stratified_is_deterministic_per_seed():
    cfg = RenderConfig(t_far=100.0, sample_count=64, stratified=True, seed=9)
    a = render_ray(two_slabs(), AXIS, cfg)
    assert np.array_equal(a, render_ray(two_slabs(), AXIS, cfg))
    other = render_ray(two_slabs(), AXIS, RenderConfig(t_far=100.0, sample_count=64, stratified=True, seed=10))
    assert not np.array_equal(a, other)


def test_sample_depths_partition_interval():
    for stratified in (False, True):
        cfg = RenderConfig(t_near=5.0, t_far=25.0, sample_count=10, stratified=stratified)
        t, d = sample_depths(cfg, np.random.default_rng(0), rays=3)
        assert t.shape == d.shape == (3, 10)
        assert np.allclose(d.sum(axis=1), 20.0)
        assert np.all(np.diff(t, axis=1) > 0) and np.all((t >= 5.0) & (t <= 25.0))


@pytest.mark.parametrize("kw", [dict(t_near=-1.0), dict(t_near=5.0, t_far=5.0), dict(sample_count=1),
                                dict(t_far=np.inf)])
def test_invalid_bounds(kw):
    with pytest.raises(InvalidBounds):
        RenderConfig(**kw)


# -- images ------------------------------------------------------------------

def small_camera(distance=200.0, size=(64, 48)):
    return Camera(Intrinsics(60.0, 60.0, size[0] / 2, size[1] / 2), look_at([0.0, -distance, 0.0], [0.0, 0.0, 0.0]), size)


def test_zero_density_image_is_black():
    img = render_image(Homogeneous(0.0), small_camera(), RenderConfig(sample_count=8))
    assert img.shape == (48, 64, 3) and not img.any()


def test_sphere_silhouette_radius():
    R, D, f = 30.0, 200.0, 300.0
    cam = Camera(Intrinsics(f, f, 50.0, 50.0), look_at([0.0, -D, 0.0], [0.0, 0.0, 0.0]), (100, 100))
    img = render_image(Sphere((0, 0, 0), R, 50.0), cam, RenderConfig(t_near=100.0, t_far=300.0, sample_count=512))
    inside = img[..., 0] > 0.5
    expected = f * np.tan(np.arcsin(R / D))
    measured = np.sqrt(inside.sum() / np.pi)
    assert abs(measured - expected) < 1.0
    # pixel centres well inside / outside the analytic disc
    v, u = np.mgrid[0:100, 0:100] + 0.5
    r = np.hypot(u - 50.0, v - 50.0)
    assert inside[r < expected - 1].all() and not inside[r > expected + 1].any()


def test_image_is_thread_independent():
    cam = small_camera()
    field = Composite((Sphere((0, 0, 0), 25.0, 0.2, (1, 0, 0)), Homogeneous(0.001, (0, 0, 1))))
    cfg = dict(t_near=50.0, t_far=400.0, sample_count=32, stratified=True, seed=3)
    a = render_image(field, cam, RenderConfig(threads=1, **cfg))
    b = render_image(field, cam, RenderConfig(threads=4, **cfg))
    assert np.array_equal(a, b)


def test_ppm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.random((7, 5, 3))
    img[0, 0] = [0.5 / 255, 1.5 / 255, 1.0]  # exact halves round to even
    path = tmp_path / "x.ppm"
    write_ppm(path, img)
    back = read_ppm(path)
    assert back.shape == (7, 5, 3)
    assert np.array_equal(back, to_bytes(img))
    assert list(back[0, 0]) == [0, 2, 255]
    assert path.read_bytes().startswith(b"P6\n5 7\n255\n")


def test_ppm_raster_starting_with_whitespace_byte(tmp_path):
    img = np.full((2, 2, 3), 32 / 255)  # byte 0x20 is ASCII space
    write_ppm(tmp_path / "s.ppm", img)
    assert np.all(read_ppm(tmp_path / "s.ppm") == 32)


def test_ppm_rejects_garbage(tmp_path):
    (tmp_path / "bad.ppm").write_bytes(b"P3\n1 1\n255\n0 0 0\n")
    with pytest.raises(ParseError):
        read_ppm(tmp_path / "bad.ppm")
    (tmp_path / "short.ppm").write_bytes(b"P6\n2 2\n255\nab")
    with pytest.raises(ParseError):
        read_ppm(tmp_path / "short.ppm")


def test_field_from_dict():
    f = field_from_dict({"primitives": [{"type": "sphere", "center": [0, 0, 0], "radius": 2, "sigma": 1},
                                        {"type": "homogeneous", "sigma": 0.1, "color": [0, 1, 0]}]})
    assert isinstance(f, Composite) and len(f.parts) == 2
    for bad in ({}, {"primitives": [{"type": "cube"}]}, {"primitives": [{"type": "sphere", "radius": 1}]},
                {"primitives": [{"type": "homogeneous", "sigma": -1}]},
                {"primitives": [{"type": "homogeneous", "sigma": 1, "color": [2, 0, 0]}]}):
        with pytest.raises(InvalidSpec):
            field_from_dict(bad)
