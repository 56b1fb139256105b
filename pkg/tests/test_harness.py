from dataclasses import replace

import numpy as np
import pytest

from lffattack import config, harness
from lffattack.config import DatasetSpec
from lffattack.errors import ConfigError, InvariantViolation
from lffattack.oracles import LinearSoftmaxModel
from lffattack.trace import AttackTrace


@pytest.fixture(scope="module")
def small(default_cfg, default_world):
    """The default world restricted to the first 60 test examples."""
    ds, _, models = default_world
    cfg = replace(default_cfg, test_limit=60)
    return cfg, ds, models


def test_tiny_dataset_sits_on_centers():
    spec = DatasetSpec(classes=2, dim=2, train_per_class=1, test_per_class=1, spread=0.0)
    ds = harness.generate_dataset(spec, 5)
    for xs, ys in ((ds.train_x, ds.train_y), (ds.test_x, ds.test_y)):
        by_label = {int(y): x for x, y in zip(xs, ys)}
        assert set(by_label) == {0, 1}
    for k in (0, 1):
        np.testing.assert_array_equal(ds.train_x[ds.train_y == k], ds.test_x[ds.test_y == k])


def test_generation_is_deterministic_and_in_box():
    spec = DatasetSpec(classes=3, dim=4, train_per_class=30, test_per_class=10, spread=0.1)
    a, b = harness.generate_dataset(spec, 1), harness.generate_dataset(spec, 1)
    assert harness.dumps_dataset(a) == harness.dumps_dataset(b)
    assert harness.dumps_dataset(a) != harness.dumps_dataset(harness.generate_dataset(spec, 2))
    assert a.train_x.min() >= 0 and a.train_x.max() <= 1
    assert np.bincount(a.train_y).tolist() == [30, 30, 30]


def test_infeasible_spec_rejected():
    spec = DatasetSpec(classes=10, dim=1, spread=0.2)
    with pytest.raises(ConfigError, match="cannot place"):
        harness.generate_dataset(spec, 0)


def test_default_centers_are_separated(default_cfg):
    rng = np.random.default_rng((default_cfg.seed, default_cfg.dataset_seed))
    centers = harness._place_centers(rng, default_cfg.dataset)
    d = np.linalg.norm(centers[:, None] - centers[None], axis=-1)
    assert d[np.triu_indices(len(centers), 1)].min() >= 4 * default_cfg.dataset.spread


def test_dataset_round_trip(small):
    _, ds, _ = small
    text = harness.dumps_dataset(ds, "feed")
    assert text.startswith("# config_sha256=feed\nlffattack-dataset 1\n")
    back = harness.loads_dataset(text)
    for name in ("train_x", "train_y", "test_x", "test_y"):
        np.testing.assert_array_equal(getattr(back, name), getattr(ds, name))
    with pytest.raises(ValueError):
        harness.loads_dataset(text.replace("end\n", ""))


def test_default_models_fit(default_world):
    ds, trained, _ = default_world
    assert harness.accuracy(trained["linear"].model, ds.test_x, ds.test_y) >= 0.95
    for r in trained.values():
        assert r.accuracy == harness.accuracy(r.model, ds.train_x, ds.train_y)


def test_zero_iterations_return_clean_points(small):
    cfg, ds, models = small
    attack = replace(cfg.attack("mlff_mi"), iterations=0)
    d = ds.limited(60)
    run = harness.run_attack(attack, models["mlp_a"], d.test_x, d.test_y)
    assert run.examples and run.oracle_calls == 0
    for e in run.examples:
        np.testing.assert_array_equal(e.x_adv, e.x_clean)
    assert harness.success_rate(models["mlp_b"], run, d.test_x, d.test_y) == 0.0


def test_only_correct_examples_are_attacked():
    model = LinearSoftmaxModel(np.array([[1.0, 0.0], [0.0, 1.0]]), np.zeros(2))
    xs = np.array([[0.9, 0.1], [0.1, 0.9], [0.8, 0.3]])
    ys = np.array([0, 0, 0])
    attack = config.loads(config.bundled("default")).attack("i")
    run = harness.run_attack(attack, model, xs, ys)
    assert run.indices.tolist() == [0, 2]


def test_targets_exclude_true_label_and_are_seeded():
    labels = np.arange(200) % 5
    t = harness.draw_targets(labels, 5, (0, 1))
    assert (t != labels).all()
    np.testing.assert_array_equal(t, harness.draw_targets(labels, 5, (0, 1)))
    assert len(set(t[labels == 0].tolist())) == 4


def test_targeted_attack_skips_examples_already_at_target(small):
    cfg, ds, models = small
    d = ds.limited(60)
    attack = replace(cfg.attack("mi"), targeted=True)
    targets = harness.draw_targets(d.test_y, 5, (0, 1))
    sur = models["mlp_a"]
    targets[0] = sur.predict(d.test_x[0])
    run = harness.run_attack(attack, sur, d.test_x, d.test_y, targets=targets)
    assert 0 not in run.indices
    assert all(e.target == targets[e.index] for e in run.examples)


def test_parallel_run_is_identical(small):
    cfg, ds, models = small
    d = ds.limited(30)
    attack = cfg.attack("mlff_admix")
    a = harness.run_attack(attack, models["mlp_a"], d.test_x, d.test_y, (0, 1), jobs=1)
    b = harness.run_attack(attack, models["mlp_a"], d.test_x, d.test_y, (0, 1), jobs=3)
    assert [e.trace.digest() for e in a.examples] == [e.trace.digest() for e in b.examples]


def test_report_rows_and_increments(small):
    cfg, ds, models = small
    report, runs = harness.run_experiment(cfg, ds, models)
    d = ds.limited(60)
    names = [a.name for a in cfg.attacks]
    assert report.attacks() == names
    assert len(report.rows) == len(names) * 4
    for r in report.rows:
        assert 0.0 <= r.asr <= 1.0 and r.wall_ms is None
        base = cfg.attack(r.attack).baseline
        if base is None:
            assert r.inc is None
        else:
            assert r.inc == r.asr - report.row(r.victim, base).asr
    sur_row = report.row("mlp_a", "mi")
    assert sur_row.asr == harness.success_rate(models["mlp_a"], runs["mi"], d.test_x, d.test_y)
    assert report.row("mlp_b", "mi").oracle_calls == runs["mi"].oracle_calls


def test_denominator_excludes_clean_misclassified(small):
    cfg, ds, models = small
    d = ds.limited(60)
    run = harness.run_attack(cfg.attack("mi"), models["mlp_a"], d.test_x, d.test_y, (0, 1))
    # a victim that always answers 0 is correct only on label-0 examples
    const = LinearSoftmaxModel(np.zeros((5, 20)), np.array([1.0, 0, 0, 0, 0]))
    assert harness.success_rate(const, run, d.test_x, d.test_y) == 0.0


def test_missing_baseline_is_an_error(small):
    cfg, ds, models = small
    with pytest.raises(ConfigError, match="baseline"):
        harness.run_experiment(cfg, ds, models, attacks=[cfg.attack("mlff_mi")])


def test_csv_format(small):
    cfg, ds, models = small
    timed = replace(cfg, wall_time=True)
    report, _ = harness.run_experiment(timed, ds, models, attacks=[cfg.attack("i")])
    lines = report.to_csv().splitlines()
    assert lines[0] == f"# config_sha256={cfg.hash}"
    assert lines[1] == harness.CSV_HEADER
    fields = lines[2].split(",")
    assert fields[:3] == ["mlp_a", "mlp_a", "i"] and fields[5] == "" and fields[7] != ""


def test_linear_surrogate_ifgsm_regression(default_cfg, default_world):
    ds, _, models = default_world
    run = harness.run_attack(default_cfg.attack("i"), models["linear"], ds.test_x, ds.test_y,
                             harness.attack_seed(default_cfg))
    asr = harness.success_rate(models["linear"], run, ds.test_x, ds.test_y)
    # frozen at first run; see the decisions ledger for why it sits below 0.90
    assert asr == pytest.approx(0.566, abs=1e-12)


@pytest.mark.parametrize(
    "axis, values, message",
    [("Q", [], "at least one"), ("Q", ["1", "1"], "duplicates"), ("Q", ["x"], "not numeric"),
     ("Q", ["1.5"], "not an integer"), ("beta", ["0"], "> 0"), ("eta", ["1"], "axis")],
)
def test_sweep_value_validation(axis, values, message):
    with pytest.raises(ConfigError, match=message):
        harness.sweep_values(axis, values)


def test_sweep_values_sorted():
    assert harness.sweep_values("Q", ["8", "1", "4.0"]) == [1, 4, 8]
    assert harness.sweep_values("beta", [1.5, "0.5"]) == [0.5, 1.5]


def test_q_sweep_degenerates_and_reuses_baselines(small):
    cfg, ds, models = small
    cfg = cfg.with_attacks([cfg.attack("mi"), cfg.attack("mlff_mi")])
    res = harness.sweep(cfg, ds, models, "Q", [2, 1])
    assert res.values == [1, 2]
    q1 = res.reports[0]
    for victim in ("mlp_a", "mlp_b", "mlp_wide", "linear"):
        assert q1.row(victim, "mlff_mi").asr == q1.row(victim, "mi").asr
        assert q1.row(victim, "mlff_mi").inc == 0.0
    assert res.reports[1].row("mlp_b", "mi") == q1.row("mlp_b", "mi")
    summary = res.summary_csv("h").splitlines()
    assert summary[1] == "axis,value,attack,mean_victim_asr,surrogate_asr"
    assert [line.split(",")[1] for line in summary[2:]] == ["1", "1", "2", "2"]
    assert res.maximizers("mi") == [1, 2]


def test_budget_check_catches_escapes(small):
    cfg, ds, models = small
    d = ds.limited(10)
    run = harness.run_attack(cfg.attack("i"), models["mlp_a"], d.test_x, d.test_y)
    harness.check_budget(run)
    e = run.examples[0]
    e.trace.points[-1] = e.x_clean + 0.2
    with pytest.raises(InvariantViolation, match="budget"):
        harness.check_budget(run)
    e.trace.points[-1] = np.clip(e.x_clean, 0, 1) * 0 - 1e-9
    with pytest.raises(InvariantViolation):
        harness.check_budget(run)


def test_determinism_check_catches_tampering(small):
    cfg, ds, models = small
    d = ds.limited(10)
    seed = harness.attack_seed(cfg)
    run = harness.run_attack(cfg.attack("mi"), models["mlp_a"], d.test_x, d.test_y, seed)
    harness.check_determinism(run, models["mlp_a"], d.test_x, d.test_y, seed)
    e = run.examples[0]
    run.examples[0] = replace(e, trace=AttackTrace(e.x_clean, 0.015))
    with pytest.raises(InvariantViolation, match="determinism"):
        harness.check_determinism(run, models["mlp_a"], d.test_x, d.test_y, seed)
