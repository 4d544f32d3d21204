import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vicalib import photometric, synth
from vicalib.errors import AllSaturated, MissingCorrespondence, MissingFile, ParseError, UnobservedPixel

SIZE = 24


def scene(seed=0, views=10, size=SIZE, alpha=0.5):
    cfg = synth.RigConfig(vignette_size=size, vignette_views=views, vignette_alpha=alpha, seed=seed)
    texture, v, corrs = synth.vignette_scene(cfg)
    V = synth.radial_vignette(size, size, alpha)
    return texture, [t for t, _ in v], corrs, V


def test_render_unit_vignette_is_texture():
    texture, _, corrs, _ = scene()
    img = photometric.render_image(texture, 1.0, np.ones((SIZE, SIZE)), corrs[0])
    np.testing.assert_array_equal(img, texture.reshape(-1)[corrs[0]])


def test_render_linear_in_exposure():
    texture, _, corrs, V = scene()
    a = photometric.render_image(texture, 0.3, V, corrs[0])
    np.testing.assert_array_equal(photometric.render_image(texture, 0.6, V, corrs[0]), 2 * a)


def test_radial_corner_closed_form():
    V = synth.radial_vignette(9, 7, 0.5)
    # r = 1 at the corners, 0 at the centre
    np.testing.assert_allclose(V[[0, 0, -1, -1], [0, -1, 0, -1]], 0.5, atol=1e-12)
    assert V[3, 4] == 1.0
    np.testing.assert_allclose(V[3, 0], 1 - 0.5 * 16 / 25, atol=1e-12)


def test_render_missing_correspondence():
    corr = -np.ones((2, 2), dtype=int)
    with pytest.raises(MissingCorrespondence):
        photometric.render_image(np.ones(4), 1.0, np.ones((2, 2)), corr)
    with pytest.raises(MissingCorrespondence):
        photometric.shift_correspondence(4, 4, (5, 5), (2, 0))


def test_estimate_unit_vignette():
    texture, times, corrs, _ = scene(seed=1, alpha=0.0)
    images = [photometric.render_image(texture, t, np.ones((SIZE, SIZE)), c) for t, c in zip(times, corrs)]
    res = photometric.estimate_vignette(images, times, corrs)
    np.testing.assert_allclose(res.V, 1.0, atol=1e-9)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_estimate_radial_vignette(seed):
    texture, times, corrs, V = scene(seed=seed)
    images = [photometric.render_image(texture, t, V, c) for t, c in zip(times, corrs)]
    res = photometric.estimate_vignette(images, times, corrs)
    assert np.abs(res.V - V / V.max()).max() < 1e-6
    assert res.V.max() == 1.0
    assert np.all(res.V >= 0)


def test_objective_non_increasing():
    texture, times, corrs, V = scene(seed=3)
    images = [photometric.render_image(texture, t, V, c) for t, c in zip(times, corrs)]
    obj = np.array(photometric.estimate_vignette(images, times, corrs, max_iter=50).objective)
    assert len(obj) >= 4
    assert np.all(np.diff(obj) <= 1e-12 * obj[:-1])


def test_noisy_vignette_rms():
    texture, times, corrs, V = scene(seed=4)
    rng = np.random.default_rng(4)
    images = synth.render_views(texture, [(t, None) for t in times], corrs, V, 0.01, rng)
    res = photometric.estimate_vignette(images, times, corrs)
    assert np.sqrt(np.mean((res.V - V) ** 2)) < 0.01


@given(st.floats(0.1, 10.0))
def test_scale_gauge(c):
    texture, times, corrs, V = scene(seed=5, views=4, size=12)
    a = [photometric.render_image(texture, t, V, k) for t, k in zip(times, corrs)]
    b = [photometric.render_image(texture * c, t, V / c, k) for t, k in zip(times, corrs)]
    ra = photometric.estimate_vignette(a, times, corrs, max_iter=5)
    rb = photometric.estimate_vignette(b, times, corrs, max_iter=5)
    np.testing.assert_allclose(ra.V, rb.V, atol=1e-9)


def test_unobserved_pixel():
    img = np.ones((2, 2))
    corr = np.array([[0, 1], [2, -1]])
    with pytest.raises(UnobservedPixel) as e:
        photometric.estimate_vignette([img, img], [1.0, 1.0], [corr, corr])
    assert "x=1, y=1" in str(e.value)


@given(st.floats(1e-3, 10.0), st.integers(0, 2**16))
def test_correct_inverts_render(t, seed):
    rng = np.random.default_rng(seed)
    B = rng.uniform(0.1, 1.0, 16)
    V = rng.uniform(0.0, 1.0, (4, 4))
    corr = np.arange(16).reshape(4, 4)
    out, valid = photometric.correct_image(photometric.render_image(B, t, V, corr), t, V)
    np.testing.assert_allclose(out[valid], B.reshape(4, 4)[valid], rtol=1e-12)


def test_correct_flags_dark_pixels():
    V = np.array([[0.0, 1.0]])
    out, valid = photometric.correct_image(np.array([[0.5, 0.5]]), 1.0, V)
    assert valid.tolist() == [[False, True]]
    assert np.isnan(out[0, 0]) and np.isfinite(out).sum() == 1


def test_correct_exposure_invariant():
    texture, _, corrs, V = scene()
    a, _ = photometric.correct_image(photometric.render_image(texture, 0.2, V, corrs[0]), 0.2, V)
    b, _ = photometric.correct_image(photometric.render_image(texture, 0.4, V, corrs[0]), 0.4, V)
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_exposure_exact():
    L = np.linspace(10, 1000, 50)
    m = photometric.fit_exposure_control(L, 0.01 / L, 1e-6, 1.0)
    assert abs(m.k - 0.01) < 1e-12


def test_exposure_clamped_points_excluded():
    L = np.geomspace(0.005, 50, 200)
    t = np.clip(0.01 / L, 1e-4, 0.02)
    assert np.mean(t == 0.02) == pytest.approx(0.5, abs=0.05)
    m = photometric.fit_exposure_control(L, t)
    assert abs(m.k - 0.01) < 1e-9
    # bounds default to the observed extremes
    assert (m.t_min, m.t_max) == (t.min(), 0.02)
    np.testing.assert_allclose(m.predict([0.01, 1.0, 1e6]), [0.02, 0.01, t.min()])


def test_exposure_single_point():
    m = photometric.fit_exposure_control([40.0], [0.005], 1e-4, 0.02)
    # one sample: k = t L up to rounding of the normal equation
    np.testing.assert_allclose(m.k, 0.005 * 40.0, rtol=1e-15)


def test_exposure_all_saturated():
    with pytest.raises(AllSaturated):
        photometric.fit_exposure_control([1.0, 2.0, 3.0], [0.02, 0.02, 0.02])


def test_exposure_synth_stream():
    cfg = synth.RigConfig(duration_s=30.0, exposure_k=0.01)
    _, e, lux = synth.sample_exposures(cfg)
    m = photometric.fit_exposure_control(lux, e * 1e-9, cfg.exposure_t_min, cfg.exposure_t_max)
    assert abs(m.k - 0.01) < 1e-9


def test_exposure_model_validation():
    with pytest.raises(ValueError):
        photometric.ExposureModel(0.01, 0.02, 0.01)


def test_pgm_round_trip(tmp_path, rng):
    a = rng.random((5, 7))
    photometric.write_pgm(tmp_path / "v.pgm", a)
    back = photometric.read_pgm(tmp_path / "v.pgm")
    assert back.shape == (5, 7)
    assert np.abs(back - a).max() <= 0.5 / 65535 + 1e-15


def test_pgm_8bit_with_comment():
    data = b"P5\n# made by hand\n2 1\n255\n\x00\xff"
    np.testing.assert_array_equal(photometric.parse_pgm(data), [[0.0, 1.0]])


@pytest.mark.parametrize("data", [b"P2\n1 1\n255\n0", b"P5\n1 1\n255\n", b"P5\n0 1\n255\n", b"P5\nx 1\n255\n\x00", b"P5\n1"])
def test_pgm_rejects(data):
    with pytest.raises(ParseError):
        photometric.parse_pgm(data)


def test_views_round_trip(tmp_path):
    texture, times, corrs, V = scene(views=3)
    images = [photometric.render_image(texture, t, V, c) for t, c in zip(times, corrs)]
    offsets = [(1, 2), (0, 0), (3, 1)]
    photometric.write_views(tmp_path, images, times, offsets)
    imgs, ts, cs = photometric.read_views(tmp_path)
    np.testing.assert_array_equal(ts, times)
    tex_shape = (SIZE + 2, SIZE + 3)
    for c, d in zip(cs, offsets):
        np.testing.assert_array_equal(c, photometric.shift_correspondence(SIZE, SIZE, tex_shape, d))
    assert np.abs(imgs[0] - images[0]).max() <= 0.5 / 65535 + 1e-15


def test_views_missing_image(tmp_path):
    (tmp_path / "views.csv").write_text("#file,exposure_ns,dx,dy\nview_000.pgm,1000,0,0\n")
    with pytest.raises(MissingFile):
        photometric.read_views(tmp_path)


@pytest.mark.parametrize(
    "text",
    [
        "#file,t\nview.pgm,1\n",
        "#file,exposure_ns,dx,dy\nview.pgm,0,0,0\n",
        "#file,exposure_ns,dx,dy\nview.pgm,1,-1,0\n",
        "#file,exposure_ns,dx,dy\n../view.pgm,1,0,0\n",
        "#file,exposure_ns,dx,dy\nview.pgm,1.5,0,0\n",
        "#file,exposure_ns,dx,dy\n",
    ],
)
def test_views_index_rejects(text):
    with pytest.raises(ParseError):
        photometric.parse_views_index(text)
