"""Command-line pipeline: subcommand wiring, exit codes, artifact schemas."""

import numpy as np
import pytest

from ppnmm.cli import main
from ppnmm.matrixio import read_matrix, write_matrix

FAST_SAMPLER = """
n_mc = 60
n_burn = 20
thin = 2
seed = 3
chmc_z.epsilon = 0.02
chmc_z.nlf_min = 5
chmc_z.nlf_max = 8
chmc_m.epsilon = 0.005
chmc_m.nlf_min = 5
chmc_m.nlf_max = 8
synth.n_rows = 4
synth.n_cols = 4
synth.r = 3
synth.l = 12
synth.seed = 2
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(FAST_SAMPLER)
    return path


def _read_report(path):
    out = {}
    for line in path.read_text().splitlines():
        key, _, value = line.partition("=")
        out[key] = value
    return out


def test_pipeline_synth_unmix_eval_diag(tmp_path, config_file, capsys):
    truth_dir = tmp_path / "truth"
    result_dir = tmp_path / "result"
    assert main([
        "synth", "--config", str(config_file), "--out-dir", str(truth_dir),
    ]) == 0
    for name in (
        "image.pmat", "truth_endmembers.pmat", "truth_abundances.pmat",
        "truth_b.pmat", "truth_sigma2.pmat", "scene.txt", "config.txt",
    ):
        assert (truth_dir / name).exists(), name

    assert main([
        "unmix", "--image", str(truth_dir / "image.pmat"), "--endmembers", "3",
        "--config", str(config_file), "--out-dir", str(result_dir),
    ]) == 0
    for name in (
        "endmembers.pmat", "abundances.pmat", "b.pmat", "b_nonzero_prob.pmat",
        "sigma2.pmat", "hyper.pmat", "trace.pmat", "trace_columns.txt",
        "accept.pmat", "eps.pmat", "diverged.pmat", "summary.txt", "config.txt",
        "prior_means.pmat",
    ):
        assert (result_dir / name).exists(), name
    a_hat = read_matrix(result_dir / "abundances.pmat")
    assert a_hat.shape == (3, 16)
    assert np.max(np.abs(a_hat.sum(axis=0) - 1.0)) < 1e-9

    assert main([
        "eval", "--truth-dir", str(truth_dir), "--result-dir", str(result_dir),
    ]) == 0
    report = _read_report(result_dir / "eval_report.txt")
    assert float(report["rnmse"]) >= 0.0
    assert float(report["re"]) >= 0.0
    assert "sam_average" in report
    assert (result_dir / "b_hist.csv").exists()
    assert (result_dir / "pca_pixels.csv").exists()
    # scene grid present: maps written as rows x cols matrices
    assert read_matrix(result_dir / "b_map.pmat").shape == (4, 4)
    assert read_matrix(result_dir / "a_map_1.pmat").shape == (4, 4)

    assert main(["diag", "--chains", str(result_dir / "trace.pmat")]) == 0
    out = capsys.readouterr().out
    assert "w.mean=" in out
    assert "chain0.accept_z.mean=" in out


def test_unmix_with_explicit_prior_means(tmp_path, config_file):
    truth_dir = tmp_path / "truth"
    result_dir = tmp_path / "result"
    main(["synth", "--config", str(config_file), "--out-dir", str(truth_dir)])
    prior = truth_dir / "truth_endmembers.pmat"
    assert main([
        "unmix", "--image", str(truth_dir / "image.pmat"), "--endmembers", "3",
        "--prior-means", str(prior), "--config", str(config_file),
        "--out-dir", str(result_dir),
    ]) == 0
    np.testing.assert_array_equal(
        read_matrix(result_dir / "prior_means.pmat"), read_matrix(prior)
    )


def test_missing_required_flag_exits_1(tmp_path, capsys):
    assert main(["synth", "--out-dir", str(tmp_path)]) == 1
    assert capsys.readouterr().err != ""


def test_unknown_subcommand_exits_1(capsys):
    assert main(["transmogrify"]) == 1


def test_no_subcommand_exits_1(capsys):
    assert main([]) == 1


def test_bad_config_exits_2(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("wat = 1\n")
    assert main([
        "synth", "--config", str(cfg), "--out-dir", str(tmp_path / "o"),
    ]) == 2
    assert "unknown key" in capsys.readouterr().err


def test_missing_image_exits_2(tmp_path, config_file, capsys):
    assert main([
        "unmix", "--image", str(tmp_path / "nope.pmat"), "--endmembers", "3",
        "--config", str(config_file), "--out-dir", str(tmp_path / "o"),
    ]) == 2


def test_degenerate_image_exits_2(tmp_path, config_file, rng):
    # rank-deficient image: initializer must fail with a data error
    path = tmp_path / "flat.pmat"
    write_matrix(np.outer(rng.uniform(0.2, 0.8, 10), np.ones(20)), path)
    assert main([
        "unmix", "--image", str(path), "--endmembers", "3",
        "--config", str(config_file), "--out-dir", str(tmp_path / "o"),
    ]) == 2


def test_pathological_synth_exits_3(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("synth.a_max = 0.33334\nsynth.r = 3\nsynth.l = 10\n")
    assert main([
        "synth", "--config", str(cfg), "--out-dir", str(tmp_path / "o"),
    ]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_seed_override_changes_output(tmp_path, config_file):
    d1, d2, d3 = (tmp_path / n for n in ("a", "b", "c"))
    main(["synth", "--config", str(config_file), "--out-dir", str(d1)])
    main(["synth", "--config", str(config_file), "--out-dir", str(d2),
          "--seed", "99"])
    main(["synth", "--config", str(config_file), "--out-dir", str(d3)])
    img1 = read_matrix(d1 / "image.pmat")
    img2 = read_matrix(d2 / "image.pmat")
    img3 = read_matrix(d3 / "image.pmat")
    assert not np.array_equal(img1, img2)
    np.testing.assert_array_equal(img1, img3)


def test_config_echoed_verbatim(tmp_path, config_file):
    out = tmp_path / "o"
    main(["synth", "--config", str(config_file), "--out-dir", str(out)])
    assert (out / "config.txt").read_text() == config_file.read_text()


def test_unmix_reproducible_across_runs(tmp_path, config_file):
    truth_dir = tmp_path / "truth"
    main(["synth", "--config", str(config_file), "--out-dir", str(truth_dir)])
    outs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        assert main([
            "unmix", "--image", str(truth_dir / "image.pmat"),
            "--endmembers", "3", "--config", str(config_file),
            "--out-dir", str(out),
        ]) == 0
        outs.append(out)
    for fname in ("abundances.pmat", "endmembers.pmat", "b.pmat", "sigma2.pmat"):
        assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()


def test_diag_multiple_chains(tmp_path, config_file):
    truth_dir = tmp_path / "truth"
    main(["synth", "--config", str(config_file), "--out-dir", str(truth_dir)])
    traces = []
    for i, seed in enumerate(("5", "6")):
        out = tmp_path / f"chain{i}"
        main([
            "unmix", "--image", str(truth_dir / "image.pmat"),
            "--endmembers", "3", "--config", str(config_file),
            "--out-dir", str(out), "--seed", seed,
        ])
        traces.append(str(out / "trace.pmat"))
    report_path = tmp_path / "diag.txt"
    assert main(["diag", "--chains", *traces, "--out", str(report_path)]) == 0
    report = _read_report(report_path)
    assert "w.psrf" in report
    assert float(report["n_chains"]) == 2
