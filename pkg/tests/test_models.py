import json
import math

import numpy as np
import pytest

from pumpcast.errors import DivergenceDetected, FeatureOrderMismatch, MissingInput, SingleClassInput
from pumpcast.labeling import ThresholdSet
from pumpcast.models import (
    BoostConfig,
    ForestConfig,
    IsolationConfig,
    LogisticConfig,
    MajorityBaseline,
    PersistenceBaseline,
    RuleBaseline,
    TreeConfig,
    dumps_model,
    loads_model,
    logistic_loss,
    predict,
    save_model,
    load_model,
    train_boosted,
    train_forest,
    train_isolation_forest,
    train_logistic,
    train_tree,
)
from pumpcast.models import baselines as baselines_mod
from pumpcast.models.tree import LEAF

from .helpers import blobs, make_dataset
from .oracles import brute_root_split, reference_predict, reference_tree


def random_tiny(rng):
    n = int(rng.integers(2, 13))
    d = int(rng.integers(1, 4))
    # a small value grid makes ties between candidates common
    X = rng.integers(0, 5, size=(n, d)).astype(float)
    y = rng.integers(0, 2, size=n)
    return X, y


def test_root_split_matches_brute_force_gini():
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 200:
        X, y = random_tiny(rng)
        if len(set(y)) < 2:
            continue
        tree = train_tree(X, y, config=TreeConfig(max_depth=1, min_samples_leaf=1))
        oracle = brute_root_split(X.tolist(), [1.0] * len(y), [float(v) for v in y], "gini")
        if oracle is None or oracle[0] <= 1e-12:
            assert tree.feature[0] == LEAF
        else:
            assert (int(tree.feature[0]), float(tree.threshold[0])) == oracle[1:]
            assert tree.gain[0] == pytest.approx(oracle[0], abs=1e-12)
        checked += 1


def test_root_split_matches_brute_force_newton():
    rng = np.random.default_rng(1)
    for _ in range(200):
        X, _ = random_tiny(rng)
        g = rng.normal(size=len(X)).round(2)
        h = rng.uniform(0.05, 0.25, size=len(X)).round(3)
        tree = train_tree(X, grad=g, hess=h, config=TreeConfig(max_depth=1, min_samples_leaf=1))
        oracle = brute_root_split(X.tolist(), g.tolist(), h.tolist(), "newton")
        if oracle is None or oracle[0] <= 1e-12:
            assert tree.feature[0] == LEAF
        else:
            assert (int(tree.feature[0]), float(tree.threshold[0])) == oracle[1:]
            assert tree.gain[0] == pytest.approx(oracle[0], abs=1e-12)


@pytest.mark.parametrize("mode", ["gini", "newton"])
def test_whole_tree_matches_depth_first_reference(mode):
    rng = np.random.default_rng(2 if mode == "gini" else 3)
    for _ in range(40):
        n = int(rng.integers(5, 40))
        X = rng.integers(0, 6, size=(n, 3)).astype(float)
        depth, leaf = int(rng.integers(1, 5)), int(rng.integers(1, 3))
        if mode == "gini":
            y = rng.integers(0, 2, size=n)
            tree = train_tree(X, y, config=TreeConfig(max_depth=depth, min_samples_leaf=leaf))
            ref = reference_tree(X.tolist(), [1.0] * n, y.astype(float).tolist(), "gini", depth, leaf)
        else:
            g = rng.normal(size=n).round(2)
            h = rng.uniform(0.05, 0.25, size=n).round(3)
            tree = train_tree(X, grad=g, hess=h, config=TreeConfig(max_depth=depth, min_samples_leaf=leaf))
            ref = reference_tree(X.tolist(), g.tolist(), h.tolist(), "newton", depth, leaf)
        probe = rng.integers(-1, 7, size=(50, 3)).astype(float)
        expected = [reference_predict(ref, x) for x in probe.tolist()]
        assert tree.predict_value(probe).tolist() == pytest.approx(expected, abs=1e-12)


def test_separable_single_split():
    X = np.array([[0.0], [1.0], [2.0], [10.0], [11.0], [12.0]])
    y = np.array([0, 0, 0, 1, 1, 1])
    tree = train_tree(X, y, config=TreeConfig(min_samples_leaf=1))
    assert tree.n_nodes == 3
    assert tree.threshold[0] == 6.0
    assert tree.predict_value(X).tolist() == y.tolist()


def test_pure_node_is_leaf():
    tree = train_tree(np.arange(6.0)[:, None], np.ones(6, dtype=int))
    assert tree.n_nodes == 1
    assert tree.value[0] == 1.0


def test_depth_and_leaf_size_limits():
    X, y = blobs(200, 200, shift=0.3, seed=2)
    tree = train_tree(X, y, config=TreeConfig(max_depth=3, min_samples_leaf=10))
    assert tree.depth <= 3
    leaves = tree.feature == LEAF
    assert tree.weight[leaves].min() >= 10


def test_boosting_hand_computed_round():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    ds = make_dataset(X, [0, 0, 1, 1])
    model = train_boosted(ds, BoostConfig(n_rounds=1, learning_rate=1.0, max_depth=4))
    assert model.base_score == 0.0
    tree = model.trees[0]
    assert tree.threshold[0] == 0.0
    assert tree.gain[0] == pytest.approx(2 / 3, abs=1e-15)
    assert tree.n_leaves == 2
    assert tree.predict_value(X).tolist() == pytest.approx([-2 / 3, -2 / 3, 2 / 3, 2 / 3], abs=1e-15)
    _, scores = model.predict(ds)
    expected = [1 / (1 + math.exp(2 / 3))] * 2 + [1 / (1 + math.exp(-2 / 3))] * 2
    assert scores.tolist() == pytest.approx(expected, abs=1e-15)


def test_boosting_zero_rounds_predicts_base_rate():
    X, y = blobs(30, 10)
    model = train_boosted(make_dataset(X, y), BoostConfig(n_rounds=0))
    _, scores = model.predict(X)
    assert np.allclose(scores, 0.25)


@pytest.mark.parametrize("eta", [0.05, 0.3])
def test_boosting_loss_non_increasing(eta):
    X, y = blobs(60, 40, shift=1.0, seed=3)
    model = train_boosted(make_dataset(X, y), BoostConfig(n_rounds=40, learning_rate=eta))
    hist = np.array(model.loss_history)
    assert np.all(np.diff(hist) <= 1e-9)
    assert hist[-1] == pytest.approx(logistic_loss(y, model.margin(X)))


def test_boosting_divergence_detected(monkeypatch):
    # a tree whose leaves point the wrong way makes the loss climb every round
    from pumpcast.models import boosting

    real = boosting.train_newton_tree

    def backwards(X, g, h, cfg, rng, order=None):
        return real(X, -g, h, cfg, rng, order)

    monkeypatch.setattr(boosting, "train_newton_tree", backwards)
    X, y = blobs(30, 30, seed=4)
    with pytest.raises(DivergenceDetected):
        train_boosted(make_dataset(X, y), BoostConfig(n_rounds=10))


def test_single_class_rejected():
    ds = make_dataset(np.ones((5, 2)), np.zeros(5))
    with pytest.raises(SingleClassInput):
        train_forest(ds)
    with pytest.raises(SingleClassInput):
        train_boosted(ds)


def test_forest_of_one_tree_without_bootstrap_equals_tree():
    X, y = blobs(50, 30, seed=5)
    forest = train_forest(make_dataset(X, y), ForestConfig(n_trees=1, bootstrap=False, max_features="all"))
    tree = train_tree(X, y, config=TreeConfig(max_depth=12, min_samples_leaf=2))
    assert forest.trees[0].to_dict() == tree.to_dict()


def test_forest_deterministic_and_seed_sensitive():
    ds = make_dataset(*blobs(80, 40, shift=0.8, seed=6))
    a = train_forest(ds, ForestConfig(n_trees=10, seed=1))
    b = train_forest(ds, ForestConfig(n_trees=10, seed=1))
    c = train_forest(ds, ForestConfig(n_trees=10, seed=2))
    assert dumps_model(a) == dumps_model(b)
    assert dumps_model(a) != dumps_model(c)


def test_forest_scores_are_vote_fractions():
    ds = make_dataset(*blobs(80, 40, shift=0.8, seed=7))
    model = train_forest(ds, ForestConfig(n_trees=7))
    labels, scores = model.predict(ds)
    assert np.allclose(scores * 7, np.round(scores * 7))
    assert np.array_equal(labels, (scores >= 0.5).astype(np.int8))


def test_importance_finds_informative_feature():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(300, 4))
    y = (X[:, 2] > 0.2).astype(int)
    model = train_forest(make_dataset(X, y), ForestConfig(n_trees=20))
    ranking = model.feature_importance()
    assert ranking[0][0] == "f2"
    assert sum(v for _, v in ranking) == pytest.approx(1.0)


def test_invariant_to_row_permutation_without_bootstrap():
    X, y = blobs(40, 20, seed=9)
    perm = np.random.default_rng(0).permutation(60)
    cfg = TreeConfig(max_depth=5, min_samples_leaf=1)
    a = train_tree(X, y, config=cfg)
    b = train_tree(X[perm], y[perm], config=cfg)
    assert np.array_equal(a.predict_value(X), b.predict_value(X))


def test_monotone_feature_transform_keeps_partition():
    X, y = blobs(40, 20, seed=10)
    cfg = TreeConfig(max_depth=4, min_samples_leaf=1)
    a = train_tree(X, y, config=cfg)
    b = train_tree(np.exp(X), y, config=cfg)
    assert np.array_equal(a.apply(X), b.apply(np.exp(X)))


def test_feature_order_mismatch():
    ds = make_dataset(*blobs(30, 10))
    model = train_forest(ds, ForestConfig(n_trees=3))
    with pytest.raises(FeatureOrderMismatch):
        model.predict(ds.X, feature_names=("f1", "f0", "f2"))
    with pytest.raises(FeatureOrderMismatch):
        model.predict(ds.X[:, :2])


@pytest.mark.parametrize(
    "train",
    [
        lambda ds: train_forest(ds, ForestConfig(n_trees=4)),
        lambda ds: train_boosted(ds, BoostConfig(n_rounds=5)),
        lambda ds: train_logistic(ds, LogisticConfig(epochs=50)),
        lambda ds: train_isolation_forest(ds, IsolationConfig(n_trees=5, subsample=32)),
        lambda ds: RuleBaseline("adaptive", ThresholdSet.table_defaults()),
        lambda ds: PersistenceBaseline(),
        lambda ds: MajorityBaseline(),
    ],
)
def test_serialization_round_trip(train, tmp_path):
    X, y = blobs(40, 20, seed=11)
    ds = make_dataset(X, y, last_values=np.tile([1.0, 50, 2600, 4.0, 225], (60, 1)), current_label=y)
    model = train(ds)
    path = tmp_path / "m.json"
    save_model(model, path)
    back = load_model(path)
    assert dumps_model(back) == dumps_model(model)
    a, sa = predict(model, ds)
    b, sb = predict(back, ds)
    assert np.array_equal(a, b) and np.array_equal(sa, sb)
    assert json.loads(path.read_text())["format"] == "pumpcast.model"


def test_loads_model_rejects_foreign_payload():
    with pytest.raises(ValueError):
        loads_model('{"format": "other"}')


def test_rule_baselines_use_last_values():
    th = ThresholdSet.table_defaults()
    last = np.array([[1.0, 50, 2600, 4.0, 225], [2.0, 50, 2600, 4.0, 225], [6.0, 50, 2600, 4.0, 225]])
    ds = make_dataset(np.zeros((3, 1)), [0, 1, 1], last_values=last)
    assert RuleBaseline("adaptive", th).predict(ds)[0].tolist() == [0, 1, 1]
    assert RuleBaseline("fixed", th).predict(ds)[0].tolist() == [0, 0, 1]


def test_persistence_and_majority():
    ds = make_dataset(np.zeros((4, 1)), [0, 1, 1, 0], current_label=[0, 2, 0, 1])
    assert PersistenceBaseline().predict(ds)[0].tolist() == [0, 1, 0, 1]
    assert MajorityBaseline().predict(ds)[0].tolist() == [0, 0, 0, 0]
    with pytest.raises(MissingInput):
        PersistenceBaseline().predict(ds.X)


def test_logistic_separates_blobs():
    X, y = blobs(100, 100, shift=3.0, seed=12)
    model = train_logistic(make_dataset(X, y))
    labels, _ = model.predict(X)
    assert (labels == y).mean() > 0.95


def test_isolation_forest_never_sees_positives(monkeypatch):
    seen = {}
    real = baselines_mod.fit_isolation_forest

    def spy(X_normal, names, flag_rate, config):
        seen["X"] = np.array(X_normal)
        seen["rate"] = flag_rate
        return real(X_normal, names, flag_rate, config)

    monkeypatch.setattr(baselines_mod, "fit_isolation_forest", spy)
    X, y = blobs(80, 20, shift=4.0, seed=13)
    ds = make_dataset(X, y)
    model = train_isolation_forest(ds, IsolationConfig(n_trees=30, subsample=64))
    positives = {tuple(r) for r in X[y == 1]}
    assert not any(tuple(r) in positives for r in seen["X"])
    assert len(seen["X"]) == 80
    assert seen["rate"] == pytest.approx(0.2)
    labels, scores = model.predict(ds)
    assert labels[y == 1].mean() > 0.8
    assert np.all((scores >= 0) & (scores <= 1))
