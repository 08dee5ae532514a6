import csv
import json

import pytest

from varlab.errors import ConfigurationError, UsageError
from varlab.experiments import (
    ExperimentResult, build_config, compare, load_config, load_manifest, parse_config_text, partition_sizes,
    replicate_count, run, variation_bandwidths, write_results,
)
from varlab.models import Experiment, Reading
from varlab.schemas import ExperimentConfig, RunManifest

SMALL_K = {"k_rep": 100, "x_max": 5.0, "r2_steps_per_unit": 32}


def _config(tmp_path, experiment, name="out", **values):
    return build_config({"experiment": experiment.value, "output_dir": str(tmp_path / name), **values})


def _read_rows(directory):
    with open(directory / "results.csv", newline="", encoding="utf-8") as handle:
        return list(csv.reader(handle))


def test_local_time_moments_run(tmp_path):
    config = _config(tmp_path, Experiment.LOCAL_TIME_MOMENTS, n_steps=256, n_rep=100, threads=2)
    manifest = run(config)
    out = tmp_path / "out"
    rows = _read_rows(out)
    assert rows[0] == ["experiment", "replicate", "n", "statistic", "value"]
    keys = [(int(r[1]), int(r[2]), r[3]) for r in rows[1:]]
    assert keys == sorted(keys)
    assert len(rows) == 1 + 100 * 6
    # exact identities of the discrete field
    assert manifest.assertions["max_power_zero_error"]
    assert manifest.assertions["max_occupation_mass_error"]
    assert {"mean_L0", "mean_sq_integral", "mean_two_alpha", "silt_identity_gap"} <= set(manifest.summary)
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["mean_L0"]["target"] == pytest.approx(0.7978845608)
    assert load_manifest(out / "manifest.json").model_dump() == manifest.model_dump()


def test_runs_are_reproducible_across_thread_counts(tmp_path):
    one = _config(tmp_path, Experiment.LOCAL_TIME_MOMENTS, "one", n_steps=128, n_rep=100, threads=1, seed=5)
    three = _config(tmp_path, Experiment.LOCAL_TIME_MOMENTS, "three", n_steps=128, n_rep=100, threads=3, seed=5)
    run(one)
    run(three)
    assert (tmp_path / "one" / "results.csv").read_bytes() == (tmp_path / "three" / "results.csv").read_bytes()
    assert (tmp_path / "one" / "summary.json").read_bytes() == (tmp_path / "three" / "summary.json").read_bytes()


def test_gamma_variation_run(tmp_path):
    config = _config(tmp_path, Experiment.GAMMA_VARIATION, n_steps=256, n_rep=20, n_sequence=[8, 16, 32],
                     hermite_nodes=11, **SMALL_K)
    manifest = run(config)
    for name in ("antisymmetry_error", "gamma_variance_ratio", "mean_gamma_T"):
        assert manifest.assertions[name], name
    assert "variation_ratio_trend" in manifest.assertions
    assert "route_correlation" not in manifest.assertions
    assert "variation_ratio_band" not in manifest.assertions
    for name in ("K_X", "K_gamma", "gamma_variance_exponent", "variation_ratio[32]"):
        assert name in manifest.summary
    assert manifest.summary["K_gamma"].value == pytest.approx(4.0 ** (4.0 / 3.0) * manifest.summary["K_X"].value)
    ratio = manifest.summary["gamma_variance_ratio"].value
    assert ratio == pytest.approx(2.0 ** manifest.summary["gamma_variance_exponent"].value)
    statistics = {row[3] for row in _read_rows(tmp_path / "out")[1:]}
    assert {"gamma_direct_T", "gamma_clark_ocone_T", "S_4/3", "variation_ratio", "r2_form_xy"} <= statistics


def test_gamma_partitions_default_above_the_mollifier():
    config = ExperimentConfig(experiment=Experiment.GAMMA_VARIATION)
    sizes = partition_sizes(config)
    assert sizes == [16, 32, 64, 128]
    bandwidths = variation_bandwidths(config, sizes)
    assert bandwidths[128] == pytest.approx(2.0 / 4096)
    # spacing over mollifier doubles with every refinement
    spacing = [1.0 / (n * bandwidths[n]) for n in sizes]
    assert spacing == pytest.approx([2.0, 4.0, 8.0, 16.0])
    assert partition_sizes(ExperimentConfig(experiment=Experiment.X_VARIATION)) == [512, 1024, 2048, 4096]


def test_gamma_partition_below_mollifier_is_rejected(tmp_path):
    config = _config(tmp_path, Experiment.GAMMA_VARIATION, n_steps=256, n_rep=20, n_sequence=[64, 128, 256])
    with pytest.raises(ConfigurationError):
        run(config)


@pytest.mark.slow
def test_gamma_variation_trends_toward_its_limit(tmp_path):
    config = _config(tmp_path, Experiment.GAMMA_VARIATION, n_steps=2048, n_rep=200, k_rep=200, x_max=10.0,
                     r2_steps_per_unit=64)
    manifest = run(config)
    ratios = [manifest.summary[f"variation_ratio[{n}]"].value for n in (16, 32, 64, 128)]
    assert manifest.assertions["variation_ratio_trend"], ratios
    assert manifest.assertions["antisymmetry_error"]


def test_estimate_k_run(tmp_path):
    config = _config(tmp_path, Experiment.ESTIMATE_K, n_steps=256, n_rep=100, **SMALL_K)
    manifest = run(config)
    assert manifest.verdict is not None
    assert set(manifest.verdict.gaps) == {Reading.OUTER_POWER, Reading.INNER_POWER}
    assert manifest.assertions["r2_min_form"]
    assert "r2_max_path_gap" in manifest.assertions
    for method in ("R2_XYQuad", "R2_ExpKernel", "RW_OuterPower", "RW_InnerPower"):
        assert manifest.summary[f"K[{method}]"].value > 0.0


def test_x_variation_run(tmp_path):
    config = _config(tmp_path, Experiment.X_VARIATION, n_steps=256, n_rep=100, n_sequence=[64, 128, 256],
                     quick=True, **SMALL_K)
    manifest = run(config)
    for name in ("variation_matches_K", "log_mean_slope", "divergent"):
        assert manifest.assertions[name], (name, manifest.summary[name])
    assert manifest.failed_replicates == []


def test_self_similarity_run(tmp_path):
    config = _config(tmp_path, Experiment.SELF_SIMILARITY, n_steps=32, n_rep=10_000, quick=True, t_values=[0.5])
    manifest = run(config)
    assert set(manifest.assertions) == {"var_x[1]", "variance_ratio[0.5]", "ks_distance[0.5]"}
    assert manifest.passed, manifest.summary


def test_verify_lemmas_run(tmp_path):
    config = _config(tmp_path, Experiment.VERIFY_LEMMAS, quick=True, mc_samples=20_000)
    manifest = run(config)
    # deterministic checks, independent of the Monte Carlo draws
    for name in ("heat_kernel_mass[0.001]", "heat_kernel_mass[1]", "variance_y[1]", "lemma_a1_bound",
                 "lemma1_rate[1.667]", "lemma1_rate[2]"):
        assert manifest.assertions[name], name
    assert "lemma1_to_zero[2]" not in manifest.assertions


def test_replicate_count_defaults():
    assert replicate_count(ExperimentConfig(experiment=Experiment.ESTIMATE_K)) == 2000
    assert replicate_count(ExperimentConfig(experiment=Experiment.ESTIMATE_K, quick=True)) == 200
    assert replicate_count(ExperimentConfig(experiment=Experiment.SELF_SIMILARITY, quick=True)) == 1000
    assert replicate_count(ExperimentConfig(experiment=Experiment.ESTIMATE_K, n_rep=7)) == 7


def _manifest(tmp_path, experiment, name, **values):
    result = ExperimentResult(experiment)
    result.add_summary("statistic", values.get("value", 1.0), values.get("stderr", 0.1))
    config = _config(tmp_path, experiment, name)
    manifest = RunManifest(config=config, version="test", wall_time_seconds=0.0, summary=result.summary,
                           assertions=result.assertions)
    write_results(result, manifest, config.output_dir)
    return load_manifest(tmp_path / name / "manifest.json")


def test_compare_runs(tmp_path):
    a = _manifest(tmp_path, Experiment.ESTIMATE_K, "a", value=1.0, stderr=0.3)
    b = _manifest(tmp_path, Experiment.ESTIMATE_K, "b", value=1.5, stderr=0.4)
    report = compare(a, b)
    (row,) = report.rows
    assert row.difference == pytest.approx(-0.5)
    assert row.combined_stderr == pytest.approx(0.5)
    assert row.z == pytest.approx(-1.0)
    assert compare(a, a).max_abs_z == 0.0


def test_compare_leaves_statistics_without_stderr_unscaled(tmp_path):
    a = _manifest(tmp_path, Experiment.ESTIMATE_K, "a", value=1.0, stderr=None)
    b = _manifest(tmp_path, Experiment.ESTIMATE_K, "b", value=1.5, stderr=0.4)
    report = compare(a, b)
    (row,) = report.rows
    assert row.z is None
    assert row.combined_stderr is None
    assert row.difference == pytest.approx(-0.5)
    assert report.max_abs_z == 0.0
    assert report.unscaled == ["statistic"]
    assert compare(a, a).unscaled == ["statistic"]


def test_compare_rejects_different_experiments(tmp_path):
    a = _manifest(tmp_path, Experiment.ESTIMATE_K, "a")
    b = _manifest(tmp_path, Experiment.X_VARIATION, "b")
    with pytest.raises(UsageError):
        compare(a, b)


def test_load_manifest_rejects_garbage(tmp_path):
    target = tmp_path / "manifest.json"
    target.write_text("{not json", encoding="utf-8")
    with pytest.raises(UsageError):
        load_manifest(target)
    with pytest.raises(UsageError):
        load_manifest(tmp_path / "missing.json")


def test_parse_key_value_config():
    data, lines = parse_config_text("# desk run\nexperiment = estimate-k\nn_rep: 500  # paths\n\nquick = true\n")
    assert data == {"experiment": "estimate-k", "n_rep": 500, "quick": True}
    assert lines == {"experiment": 2, "n_rep": 3, "quick": 5}


def test_parse_config_errors_carry_line():
    with pytest.raises(ConfigurationError) as excinfo:
        parse_config_text("experiment = estimate-k\nexperiment = x-variation\n")
    assert excinfo.value.line == 2
    with pytest.raises(ConfigurationError) as excinfo:
        parse_config_text("experiment = estimate-k\n\njust words\n")
    assert excinfo.value.line == 3


@pytest.mark.parametrize("text, line", [
    ("experiment = estimate-k\nn_steps = -3\n", 2),
    ("experiment = estimate-k\nseed = 1\nbogus = 4\n", 3),
    ("experiment = estimate-k\nn_sequence = [64, 96]\n", 2),
    ('{\n  "experiment": "estimate-k",\n  "n_rep": 0\n}\n', 3),
    ("experiment = no-such-thing\n", 1),
])
def test_invalid_config_reports_line(text, line):
    data, lines = parse_config_text(text)
    with pytest.raises(ConfigurationError) as excinfo:
        build_config(data, lines)
    assert excinfo.value.line == line
    assert f"line {line}" in excinfo.value.detail


def test_partitions_must_divide_steps():
    with pytest.raises(ConfigurationError) as excinfo:
        build_config({"experiment": "gamma-variation", "n_steps": 96, "n_sequence": [64]})
    assert excinfo.value.line is None


def test_load_config_with_overrides(tmp_path):
    source = tmp_path / "run.cfg"
    source.write_text("experiment = estimate-k\nseed = 5\nthreads = 2\n", encoding="utf-8")
    config = load_config(source, {"seed": 7, "threads": None, "output_dir": str(tmp_path)})
    assert config.seed == 7
    assert config.threads == 2
    assert config.output_dir == str(tmp_path)
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.cfg")


def test_config_json_round_trip():
    config = ExperimentConfig(experiment=Experiment.GAMMA_VARIATION, n_sequence=[256, 512], seed=11, threads=3)
    assert ExperimentConfig.model_validate_json(config.model_dump_json()).model_dump() == config.model_dump()
