import hashlib

import numpy as np
import pytest

from tilediff import cli, imagecore
from tilediff.cli import JobError, parse_job, run_job, seam_metric
from tilediff.msr import plan_tiles

from conftest import smooth_means
from test_denoise import write_prior

PATCH, OVERLAP = 64, 32


@pytest.fixture
def prior_dir(tmp_path):
    d = tmp_path / "prior"
    d.mkdir()
    means = smooth_means(2, PATCH, PATCH, seed=11)
    write_prior(d, means, [0.5, 0.5], 0.05)
    return d


def test_parse_sr_happy_path(tmp_path, prior_dir):
    cmd, job = parse_job([
        "restore", "--task", "sr", "--scale", "4",
        "--in", "lr.ppm", "--out", str(tmp_path / "sr.ppm"),
        "--prior", str(prior_dir), "--seed", "7"])
    assert cmd == "restore"
    assert job.task == "sr" and job.scale == 4 and job.seed == 7
    assert job.eta == 0.85 and job.steps == 100  # defaults
    assert job.travel_l == 10 and job.travel_r == 3


def test_parse_rejects_misaligned_patch(tmp_path, prior_dir):
    with pytest.raises(JobError, match="multiples"):
        parse_job([
            "restore", "--task", "sr", "--scale", "4", "--patch", "62",
            "--overlap", "32", "--in", "x.ppm", "--out", "y.ppm",
            "--prior", str(prior_dir)])


def test_parse_missing_required():
    with pytest.raises(JobError, match="scale"):
        parse_job(["restore", "--task", "sr", "--in", "x.ppm",
                   "--out", "y.ppm", "--prior", "p/"])
    with pytest.raises(JobError, match="mask"):
        parse_job(["restore", "--task", "inpaint", "--in", "x.ppm",
                   "--out", "y.ppm", "--prior", "p/"])
    with pytest.raises(JobError, match="width"):
        parse_job(["generate", "--out", "y.ppm", "--prior", "p/"])


def test_config_file_and_flag_precedence(tmp_path, prior_dir):
    cfgfile = tmp_path / "job.cfg"
    cfgfile.write_text(
        "eta = 0.85   # from file\n"
        "steps = 20\n"
        f"prior = {prior_dir}\n")
    _, job = parse_job([
        "generate", "--config", str(cfgfile), "--width", "64",
        "--height", "64", "--out", str(tmp_path / "g.ppm"),
        "--eta", "0"])
    assert job.eta == 0.0  # flag wins over file
    assert job.steps == 20  # file wins over default


def test_config_file_unknown_key(tmp_path):
    cfgfile = tmp_path / "bad.cfg"
    cfgfile.write_text("etaa = 0.5\n")
    with pytest.raises(JobError, match="etaa"):
        cli._read_config(str(cfgfile))


def test_config_file_type_error(tmp_path):
    cfgfile = tmp_path / "bad.cfg"
    cfgfile.write_text("steps = many\n")
    with pytest.raises(JobError, match="steps"):
        cli._read_config(str(cfgfile))


def read_metrics(path):
    out = {}
    for line in path.read_text().splitlines():
        key, _, val = line.partition(":")
        out[key.strip()] = val.strip()
    return out


def test_run_sr_job_end_to_end(tmp_path, prior_dir, rng):
    lr = imagecore.Image(rng.uniform(-1, 1, size=(16, 24, 3)))
    imagecore.save_image(tmp_path / "lr.ppm", lr)
    out = tmp_path / "sr.ppm"
    _, job = parse_job([
        "restore", "--task", "sr", "--scale", "4",
        "--in", str(tmp_path / "lr.ppm"), "--out", str(out),
        "--prior", str(prior_dir), "--seed", "3",
        "--steps", "30", "--travel-l", "5", "--travel-r", "1"])
    assert run_job(job) == 0
    assert out.exists()
    metrics = read_metrics(tmp_path / "metrics.txt")
    assert float(metrics["consistency"]) <= 1e-6
    assert int(metrics["steps"]) == 30 * 2  # two tiles, r = 1
    assert float(metrics["wall_clock_sec"]) > 0


def test_run_generate_job_four_tiles(tmp_path, prior_dir):
    out = tmp_path / "gen.ppm"
    _, job = parse_job([
        "generate", "--width", "160", "--height", "64", "--out", str(out),
        "--prior", str(prior_dir), "--seed", "5", "--steps", "20",
        "--travel-r", "1"])
    assert run_job(job) == 0
    metrics = read_metrics(tmp_path / "metrics.txt")
    assert float(metrics["consistency"]) == 0.0
    assert float(metrics["seam_max"]) < 0.2
    img = imagecore.load_image(out)
    assert (img.height, img.width) == (64, 160)


def test_run_job_reproducible_hash(tmp_path, prior_dir):
    args = ["generate", "--width", "96", "--height", "64",
            "--prior", str(prior_dir), "--seed", "5", "--steps", "15",
            "--travel-r", "1"]
    hashes = set()
    for name in ("a.ppm", "b.ppm"):
        out = tmp_path / name
        _, job = parse_job(args + ["--out", str(out)])
        assert run_job(job) == 0
        hashes.add(hashlib.sha256(out.read_bytes()).hexdigest())
    assert len(hashes) == 1


def test_run_job_writes_metrics_on_failure(tmp_path, prior_dir):
    _, job = parse_job([
        "restore", "--task", "sr", "--scale", "4",
        "--in", str(tmp_path / "missing.ppm"),
        "--out", str(tmp_path / "o.ppm"), "--prior", str(prior_dir)])
    assert run_job(job) == 1
    metrics = read_metrics(tmp_path / "metrics.txt")
    assert "error" in metrics
    assert "wall_clock_sec" in metrics


def test_run_inpaint_with_hir(tmp_path, prior_dir, rng):
    means = smooth_means(2, PATCH, PATCH, seed=11)
    truth = np.tile(means[0], (2, 2, 1))[:128, :128, :]
    known = rng.random((128, 128)) < 0.5
    imagecore.save_image(tmp_path / "obs.ppm", imagecore.Image(truth))
    imagecore.save_image(
        tmp_path / "mask.pgm",
        imagecore.Image(np.where(known, 1.0, -1.0)[:, :, None]))
    out = tmp_path / "inpainted.ppm"
    _, job = parse_job([
        "restore", "--task", "inpaint", "--in", str(tmp_path / "obs.ppm"),
        "--mask", str(tmp_path / "mask.pgm"), "--out", str(out),
        "--prior", str(prior_dir), "--hir-factor", "2",
        "--steps", "15", "--travel-r", "1", "--seed", "2"])
    assert run_job(job) == 0
    metrics = read_metrics(tmp_path / "metrics.txt")
    assert "lowfreq_residual" in metrics
    assert float(metrics["consistency"]) <= 2 / 255 + 1e-9  # quantized I/O


def test_seam_metric_constant_image_is_zero():
    plan = plan_tiles(64, 96, PATCH, OVERLAP)
    img = np.full((64, 96, 3), 0.25)
    assert all(v == 0.0 for _, _, v in seam_metric(img, plan))


def test_seam_metric_detects_synthetic_step():
    plan = plan_tiles(64, 96, PATCH, OVERLAP)
    img = np.zeros((64, 96, 3))
    img[:, 32:, :] = 0.2  # visible step exactly at the second tile's start
    vals = {(axis, pos): v for axis, pos, v in seam_metric(img, plan)}
    assert vals[("col", 32)] >= 0.2  # interior band is flat, median 0
    assert vals[("col", 64)] == 0.0


def test_selftest_and_plan_commands(capsys):
    assert cli.main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "selftest: OK" in out
    assert cli.main(["plan", "--width", "100", "--height", "64",
                     "--patch", "64", "--overlap", "32", "--block", "4"]) == 0
    out = capsys.readouterr().out
    assert "left=36" in out


def test_main_reports_job_errors(capsys):
    assert cli.main(["restore", "--task", "sr", "--in", "x.ppm",
                     "--out", "y.ppm", "--prior", "p/"]) == 2
    assert "scale" in capsys.readouterr().err
