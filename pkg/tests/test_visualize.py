import numpy as np
import pytest

from vheat.backbone import build_model, micro_config
from vheat.verify import randomize_parameters
from vheat.visualize import (conduct, model_diffusivity, one_hot_source, read_pgm, to_uint8,
                             visualize_conduction, write_pgm)


def test_t0_single_bright_pixel(tmp_path):
    (f,) = visualize_conduction((5, 9), [0], tmp_path, extent=(16, 16))
    assert f.image[9, 5] == 255 and (np.delete(f.image.ravel(), 9 * 16 + 5) == 0).all()
    np.testing.assert_array_equal(read_pgm(f.path), f.image)


def test_large_t_is_uniform():
    (f,) = visualize_conduction((3, 4), [1e4], extent=(16, 16))
    assert np.ptp(f.field) < 1e-9 * abs(f.field.mean())
    assert f.field.mean() == pytest.approx(1 / 256)
    assert (f.image == 128).all()


@pytest.mark.parametrize("t", [1.0, 5.0, 25.0])
def test_centered_source_symmetry(t):
    # a 31x31 grid has an exact centre cell
    u = conduct(one_hot_source(31, 31, (15, 15)), t, 1.0)
    for view in (u[::-1], u[:, ::-1], u.T, u[::-1, ::-1].T):
        assert np.abs(view - u).max() < 1e-6


def test_peak_decreases_with_time():
    frames = visualize_conduction((10, 20), [0, 1, 5, 25, 100], extent=(32, 32))
    peaks = [f.field.max() for f in frames]
    assert all(a >= b for a, b in zip(peaks, peaks[1:]))


def test_source_out_of_bounds():
    with pytest.raises(ValueError, match="outside"):
        visualize_conduction((64, 0), [1], extent=(64, 64))
    with pytest.raises(ValueError):
        one_hot_source(4, 4, (-1, 2))


def test_files_and_png(tmp_path):
    pytest.importorskip("PIL")
    frames = visualize_conduction((1, 1), [1, 5], tmp_path, extent=(8, 8), png=True)
    assert [f.path.rsplit("/", 1)[1] for f in frames] == ["conduction_t1.pgm", "conduction_t5.pgm"]
    assert (tmp_path / "conduction_t5.png").exists()


def test_to_uint8_range(rng):
    img = to_uint8(rng.standard_normal((5, 5)))
    assert img.min() == 0 and img.max() == 255


def test_pgm_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, (7, 3), dtype=np.uint8)
    write_pgm(tmp_path / "a.pgm", img)
    np.testing.assert_array_equal(read_pgm(tmp_path / "a.pgm"), img)


def test_model_diffusivity_field(rng):
    model = build_model(micro_config(), 0)
    assert (model_diffusivity(model) == 0).all()
    randomize_parameters(model, rng, 0.1)
    k = model_diffusivity(model, stage=1, layer=1)
    assert k.shape == (4, 4, 32)
    frames = visualize_conduction((1, 2), [1, 5], k=k)
    assert frames[0].field.shape == (4, 4)


def test_fixed_model_diffusivity():
    model = build_model(micro_config(k_mode="fixed", fixed_k=0.5), 0)
    np.testing.assert_array_equal(model_diffusivity(model), np.full((8, 8, 16), 0.5))
