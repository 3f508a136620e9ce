import math

import numpy as np
import pytest

import pycebm


def test_log_normalizer_standard_gaussian():
    # Unit variance, zero mean: -0.5 * log(1) per dimension.
    assert pycebm.log_normalizer_b([0.0, 0.0], [-0.5, -0.5]) == pytest.approx(0.0, abs=1e-15)
    lam2 = -1.0 / (2.0 * 4.0)
    lam1 = 1.5 / 4.0
    expected = -lam1**2 / (4 * lam2) - 0.5 * math.log(-2 * lam2)
    assert pycebm.log_normalizer_b([lam1], [lam2]) == pytest.approx(expected, rel=1e-14)


def test_legendre_round_trip_and_routes():
    m1, m2 = pycebm.natural_to_mean([0.3, -1.0], [-0.7, -2.0])
    lam1, lam2 = pycebm.mean_to_natural(m1, m2)
    assert lam1 == pytest.approx([0.3, -1.0], abs=1e-12)
    assert lam2 == pytest.approx([-0.7, -2.0], abs=1e-12)
    a = pycebm.gaussian_log_density([0.3], [-0.7], [0.4], "canonical")
    b = pycebm.gaussian_log_density([0.3], [-0.7], [0.4], "bregman")
    assert a == pytest.approx(b, abs=1e-10)
    with pytest.raises(pycebm.DomainError):
        pycebm.log_normalizer_b([0.0], [0.5])


def test_auroc_and_knn():
    assert pycebm.auroc([3, 4], [1, 2]) == 1.0
    assert pycebm.auroc([1, 1], [1]) == 0.5
    codes = np.array([[0.0], [0.1], [5.0], [5.1]])
    assert pycebm.knn_same_class_fraction(codes, [0, 0, 1, 1]) == 1.0


def test_synthetic_and_model_energies():
    images, labels = pycebm.gen_synthetic(n_per_class=3, image_size=8, num_classes=4, seed=2)
    assert images.shape == (12, 1, 8, 8)
    assert labels == [0, 0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3]
    cfg = "[model]\nlatent_dim = 3\nencoder = mlp\nhidden = 5\n[data]\nimage_size = 8\n"
    model = pycebm.build_model(cfg, seed=1)
    assert model.kind == "cebm"
    energies = model.energies(images)
    assert energies.shape == (12,)
    assert np.all(np.isfinite(energies))
    assert model.representation(images).shape == (12, 3)
    assert "bias.lam1" in model.parameter_names()


def test_config_errors_are_typed():
    with pytest.raises(pycebm.ConfigError, match="train.bogus"):
        pycebm.echo_config("[train]\nbogus = 1\n")
    assert "[sgld]" in pycebm.echo_config("")


def test_train_sample_eval_round_trip(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text(
        f"[run]\nseed = 3\noutput_dir = {tmp_path / 'out'}\n"
        "[model]\nlatent_dim = 2\nencoder = mlp\nhidden = 4\ndepth = 1\n"
        "[train]\ntotal_steps = 2\nbatch_size = 4\n[sgld]\nsteps = 2\n"
        "[data]\nimage_size = 4\nn_per_class = 4\ntest_n_per_class = 3\nood_count = 4\n"
        "[eval]\nrepeats = 1\nper_class = 1\nmc_batch = 6\n"
    )
    assert pycebm.train(str(cfg)) == 0
    ckpt = tmp_path / "out" / "final.cebm"
    assert pycebm.load_model(str(ckpt)).kind == "cebm"
    assert pycebm.sample(str(ckpt), str(tmp_path / "s.pgm"), steps=3, count=4) == 0
    assert (tmp_path / "s.pgm").read_bytes().startswith(b"P5")
    assert pycebm.evaluate(str(ckpt), str(cfg), ["knn", "collapse"]) == 0
    assert (tmp_path / "out" / "eval" / "knn.json").exists()
    with pytest.raises(pycebm.FormatError):
        pycebm.load_model(str(tmp_path / "missing.cebm"))
