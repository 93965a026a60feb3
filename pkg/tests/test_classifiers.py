import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from profilemil.classifiers import (
    GaussianNBModel,
    KernelModel,
    LinearModel,
    TrainConfig,
    decision_value,
    decision_values,
    kkt_violation,
    load_model,
    logistic_objective,
    model_from_dict,
    model_to_dict,
    nb_log_posterior,
    predict_instance,
    rbf_kernel,
    save_model,
    svm_primal_objective,
    train_gaussian_nb,
    train_linear_svm,
    train_logreg,
    train_rbf_svm,
)
from profilemil.core import FeatureVector, SignMapping
from profilemil.errors import DimensionMismatch, MissingClass

M = SignMapping("female", "male")


def blobs(seed, n=40, d=3, shift=1.0):
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    y[:2] = [1.0, -1.0]
    X = rng.normal(size=(n, d)) + shift * y[:, None] * np.ones(d) / np.sqrt(d)
    return X, y


# ------------------------------------------------------------------ naive Bayes

def test_nb_sample_statistics():
    m = train_gaussian_nb(np.array([[-1.0], [1.0]]), np.array([-1.0, 1.0]))
    assert m.means[0, 0] == 1.0 and m.means[1, 0] == -1.0
    np.testing.assert_array_equal(m.priors, [0.5, 0.5])
    assert np.all(m.variances >= m.variance_floor)


def test_nb_midpoint_is_a_tie_broken_positive():
    X = np.array([[-2.0], [0.0], [2.0], [4.0]])
    y = np.array([-1.0, -1.0, 1.0, 1.0])
    m = train_gaussian_nb(X, y)
    post = np.exp(nb_log_posterior(m, [[1.0]]))[0]
    np.testing.assert_allclose(post, [0.5, 0.5], atol=1e-15)
    assert decision_value(m, [1.0]) == 0.0
    assert predict_instance(m, [1.0], M) == "female"


def nb_oracle(X, y, x, floor=1e-9):
    """Bayes rule with an explicit product of univariate normal densities."""
    joint = []
    for c in (1.0, -1.0):
        Xc = X[y == c]
        prior = len(Xc) / len(X)
        dens = 1.0
        for j in range(X.shape[1]):
            mu = Xc[:, j].mean()
            var = max(((Xc[:, j] - mu) ** 2).mean(), floor)
            dens *= norm.pdf(x[j], loc=mu, scale=np.sqrt(var))
        joint.append(prior * dens)
    joint = np.array(joint)
    return np.log(joint / joint.sum())


@pytest.mark.parametrize("seed", range(10))
def test_nb_log_posterior_matches_oracle(seed):
    X, y = blobs(seed, n=12, d=3)
    m = train_gaussian_nb(X, y)
    for x in np.random.default_rng(seed + 100).normal(size=(5, 3)):
        np.testing.assert_allclose(nb_log_posterior(m, x[None, :])[0], nb_oracle(X, y, x),
                                   rtol=0, atol=1e-9)


def test_nb_constant_feature_uses_floor():
    X = np.array([[1.0, 5.0], [2.0, 5.0], [3.0, 5.0], [4.0, 5.0]])
    y = np.array([1.0, 1.0, -1.0, -1.0])
    m = train_gaussian_nb(X, y, TrainConfig(variance_floor=1e-6))
    assert np.all(m.variances[:, 1] == 1e-6)
    assert np.isfinite(decision_value(m, [2.5, 5.0]))


def test_missing_class():
    for trainer in (train_gaussian_nb, train_logreg, train_linear_svm, train_rbf_svm):
        with pytest.raises(MissingClass):
            trainer(np.ones((3, 2)), np.ones(3))


# ------------------------------------------------------------ logistic regression

def test_logreg_separable():
    X = np.array([[0.0, 0.0], [1.0, 0.2], [3.0, 3.0], [4.0, 3.5]])
    y = np.array([-1.0, -1.0, 1.0, 1.0])
    m = train_logreg(X, y, TrainConfig(C=100.0))
    assert np.all(np.sign(decision_values(m, X)) == y)


def fd_gradient(X, y, w, b, C, h=1e-5):
    theta = np.append(w, b)
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        fp = logistic_objective((theta + e)[:-1], (theta + e)[-1], X, y, C)[0]
        fm = logistic_objective((theta - e)[:-1], (theta - e)[-1], X, y, C)[0]
        g[i] = (fp - fm) / (2 * h)
    return g


@pytest.mark.parametrize("seed", range(10))
def test_logreg_gradient_finite_differences(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(5, 4))
    y = np.where(rng.random(5) < 0.5, 1.0, -1.0)
    w, b, C = rng.normal(size=4), rng.normal(), 10 ** rng.uniform(-1, 1)
    _, gw, gb = logistic_objective(w, b, X, y, C)
    analytic = np.append(gw, gb)
    numeric = fd_gradient(X, y, w, b, C)
    assert np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric) < 1e-5


def test_logreg_strong_regularisation_predicts_majority():
    X, y = blobs(3, n=50)
    y[:35] = 1.0
    m = train_logreg(X, y, TrainConfig(C=1e-8))
    assert np.linalg.norm(m.weights) < 1e-6
    assert np.all(decision_values(m, X) > 0)


def test_logreg_converges_to_tolerance():
    X, y = blobs(4)
    m = train_logreg(X, y, TrainConfig(C=1.0, tolerance=1e-6))
    _, gw, gb = logistic_objective(m.weights, m.bias, X, y, 1.0)
    assert m.converged and np.sqrt(gw @ gw + gb * gb) <= 1e-6


# ------------------------------------------------------------------ linear SVM

def test_linear_svm_two_points():
    m = train_linear_svm(np.array([[-1.0], [1.0]]), np.array([-1.0, 1.0]),
                         TrainConfig(C=1e3, tolerance=1e-10))
    assert m.weights[0] == pytest.approx(1.0, abs=1e-9)
    assert m.bias == pytest.approx(0.0, abs=1e-9)


def test_linear_svm_separable_zero_hinge():
    X = np.array([[0.0, 0.0], [0.5, 1.0], [3.0, 3.0], [4.0, 2.5]])
    y = np.array([-1.0, -1.0, 1.0, 1.0])
    m = train_linear_svm(X, y, TrainConfig(C=100.0, tolerance=1e-8))
    assert np.all(y * decision_values(m, X) >= 1 - 1e-6)


def grid_oracle(X, y, C):
    """Brute-force minimum of the 1-D primal over a coarse then a fine (w, b) grid."""
    def search(wc, bc, half, n):
        ws = np.linspace(wc - half, wc + half, n)
        bs = np.linspace(bc - half, bc + half, n)
        W, B = np.meshgrid(ws, bs, indexing="ij")
        z = W[..., None] * X[:, 0] + B[..., None]
        obj = 0.5 * W ** 2 + C * np.maximum(0, 1 - y * z).sum(-1)
        i = np.unravel_index(np.argmin(obj), obj.shape)
        return ws[i[0]], bs[i[1]], obj[i]

    w, b, _ = search(0.0, 0.0, 4.0, 801)
    w, b, _ = search(w, b, 0.02, 801)
    return search(w, b, 2e-4, 401)[2]


@pytest.mark.parametrize("seed, C", [(0, 0.5), (1, 1.0), (2, 3.0)])
def test_linear_svm_matches_grid_oracle(seed, C):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(7, 1))
    y = np.where(X[:, 0] + 0.8 * rng.normal(size=7) > 0, 1.0, -1.0)
    y[:2] = [1.0, -1.0]
    m = train_linear_svm(X, y, TrainConfig(C=C, tolerance=1e-9))
    ours = svm_primal_objective(m.weights, m.bias, X, y, C)
    assert abs(ours - grid_oracle(X, y, C)) < 1e-3


@pytest.mark.parametrize("seed, C", [(0, 0.1), (1, 1.0), (2, 10.0), (3, 100.0)])
def test_linear_svm_matches_convex_solver(seed, C):
    X, y = blobs(seed, n=50, d=4, shift=0.8)
    m = train_linear_svm(X, y, TrainConfig(C=C, tolerance=1e-8))
    w, b = cp.Variable(4), cp.Variable()
    prob = cp.Problem(cp.Minimize(0.5 * cp.sum_squares(w)
                                  + C * cp.sum(cp.pos(1 - cp.multiply(y, X @ w + b)))))
    prob.solve()
    ours = svm_primal_objective(m.weights, m.bias, X, y, C)
    assert ours <= prob.value * (1 + 1e-6) + 1e-6
    assert ours >= prob.value * (1 - 1e-6) - 1e-6


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6), C=st.sampled_from([0.01, 0.3, 1.0, 30.0]))
def test_linear_svm_beats_zero_model(seed, C):
    X, y = blobs(seed, n=20, d=2, shift=0.5)
    m = train_linear_svm(X, y, TrainConfig(C=C))
    assert svm_primal_objective(m.weights, m.bias, X, y, C) <= \
        svm_primal_objective(np.zeros(2), 0.0, X, y, C) + 1e-9


# --------------------------------------------------------------------- RBF SVM

XOR_X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
XOR_Y = np.array([-1.0, -1.0, 1.0, 1.0])


def test_rbf_xor():
    m = train_rbf_svm(XOR_X, XOR_Y, TrainConfig(C=10.0, gamma=1.0))
    assert np.all(np.sign(decision_values(m, XOR_X)) == XOR_Y)


def test_rbf_tiny_gamma_behaves_linearly():
    X, y = blobs(7, n=40, d=2, shift=3.0)
    lin = train_linear_svm(X, y, TrainConfig(C=1.0, tolerance=1e-6))
    rbf = train_rbf_svm(X, y, TrainConfig(C=1e4, gamma=1e-4, tolerance=1e-6, max_iterations=10 ** 6))
    g = np.stack(np.meshgrid(np.linspace(-2, 2, 15), np.linspace(-2, 2, 15)), -1).reshape(-1, 2)
    far = np.abs(decision_values(lin, g)) > 0.25
    assert np.all(np.sign(decision_values(lin, g[far])) == np.sign(decision_values(rbf, g[far])))


@pytest.mark.parametrize("seed, C, gamma", [(0, 1.0, 0.5), (1, 10.0, 0.1), (2, 0.1, 2.0)])
def test_rbf_kkt_and_feasibility(seed, C, gamma):
    X, y = blobs(seed, n=30, d=2, shift=1.0)
    tol = 1e-4
    _, res = train_rbf_svm(X, y, TrainConfig(C=C, gamma=gamma, tolerance=tol), return_alpha=True)
    a = res.alpha
    assert res.converged
    assert np.all(a >= 0) and np.all(a <= C)
    assert abs(a @ y) < 1e-6
    Q = rbf_kernel(X, X, gamma) * np.outer(y, y)
    assert kkt_violation(a, Q @ a - 1.0, y, C) <= tol


# ------------------------------------------------------------------ prediction

def test_decision_value_examples():
    lin = LinearModel(np.array([1.0, 0.0]), 0.0)
    assert decision_value(lin, FeatureVector([2.0, 5.0])) == 2.0
    assert predict_instance(lin, [2.0, 5.0], M) == "female"
    assert predict_instance(lin, [0.0, 5.0], M) == "female"
    assert predict_instance(lin, [-1e-12, 5.0], M) == "male"
    s = np.array([0.3, -0.7])
    ker = KernelModel(s[None, :], np.array([1.0]), 0.0, 0.5)
    assert decision_value(ker, s) == 1.0
    with pytest.raises(DimensionMismatch):
        decision_value(lin, [1.0, 2.0, 3.0])


@pytest.mark.parametrize("trainer, cfg", [
    (train_gaussian_nb, TrainConfig()),
    (train_logreg, TrainConfig(C=1.0, tolerance=1e-8)),
    (train_linear_svm, TrainConfig(C=1.0, tolerance=1e-8)),
    (train_rbf_svm, TrainConfig(C=1.0, gamma=0.5, tolerance=1e-8)),
])
def test_prediction_invariant_to_sign_mapping_swap(trainer, cfg):
    X, y = blobs(11, n=30, d=2)
    m1 = trainer(X, y, cfg)
    m2 = trainer(X, -y, cfg)
    swapped = M.swapped()
    pts = np.random.default_rng(0).normal(size=(50, 2))
    keep = np.abs(decision_values(m1, pts)) > 1e-4
    for x in pts[keep]:
        assert predict_instance(m1, x, M) == predict_instance(m2, x, swapped)


def test_serialisation_round_trip(tmp_path):
    X, y = blobs(5, n=20)
    models = [train_gaussian_nb(X, y), train_logreg(X, y), train_linear_svm(X, y),
              train_rbf_svm(X, y, TrainConfig(gamma=0.3))]
    for i, m in enumerate(models):
        path = tmp_path / f"m{i}.json"
        save_model(m, path, {"C": 1.0})
        back = load_model(path)
        assert type(back) is type(m)
        np.testing.assert_array_equal(decision_values(back, X), decision_values(m, X))
    doc = model_to_dict(models[2])
    assert doc["version"] == 1 and doc["kind"] == "svm"
    with pytest.raises(ValueError):
        model_from_dict({**doc, "version": 99})
