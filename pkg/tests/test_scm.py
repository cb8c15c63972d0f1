import numpy as np
import pytest

from gci.errors import CapacityError, ContractError
from gci.estimate import EffectCurve
from gci.graph import GraphSpec
from gci.scm import (
    AdjustmentAudit,
    DiscreteScm,
    Mechanism,
    ScmSpec,
    benchmark_scm,
    counterfactual_outcomes,
    draw_weights,
    exact_interventional,
    joint_table,
    random_discrete_scm,
    replay,
    sample,
    sample_discrete,
    true_mtef,
    verify_adjustment_equivalence,
)


def single_root_spec():
    g = GraphSpec(["t", "y"], [("t", "y")], "t", "y")
    return ScmSpec(
        g,
        {
            "t": Mechanism(),
            "y": Mechanism(parents=("t",), weights=(1.0,), link="sigmoid"),
        },
    )


def linear_spec(a=2.0, b=1.5):
    """y = a*t + b*X + eps; t = 0.8*X + eps; X root."""
    g = GraphSpec(["X", "t", "y"], [("X", "t"), ("X", "y"), ("t", "y")], "t", "y")
    return ScmSpec(
        g,
        {
            "X": Mechanism(),
            "t": Mechanism(parents=("X",), weights=(0.8,), link="linear"),
            "y": Mechanism(parents=("X", "t"), weights=(b, a), link="linear"),
        },
    )


class TestMechanismAndSpec:
    def test_weight_count_mismatch(self):
        with pytest.raises(ContractError):
            Mechanism(parents=("a", "b"), weights=(1.0,))

    def test_bad_noise(self):
        with pytest.raises(ContractError):
            Mechanism(noise_sd=0.0)

    def test_mechanism_parents_must_match_graph(self):
        g = GraphSpec(["t", "y"], [("t", "y")], "t", "y")
        with pytest.raises(ContractError):
            ScmSpec(g, {"t": Mechanism(), "y": Mechanism()})

    def test_json_round_trip(self):
        spec = benchmark_scm()
        again = ScmSpec.from_json(spec.to_json())
        assert again.graph == spec.graph
        assert again.mechanisms == spec.mechanisms
        assert again.to_json() == spec.to_json()


class TestSampling:
    def test_root_law(self):
        spec = single_root_spec()
        res = sample(spec, 100_000, seed=5)
        t = res.data.column("t")
        assert abs(t.mean()) < 0.02
        assert 0.98 < t.std() < 1.02

    def test_sigmoid_mechanism_formula(self):
        spec = single_root_spec()
        res = sample(spec, 50_000, seed=11)
        t = res.data.column("t")
        y = res.data.column("y")
        delta = y - 1.0 / (1.0 + np.exp(-t))
        # residual recovers the unit noise law within Monte-Carlo slack
        assert abs(delta.mean()) < 3 / np.sqrt(len(delta))
        assert abs(delta.std() - 1.0) < 0.02

    def test_benchmark_shape(self):
        res = sample(benchmark_scm(), 1000, seed=0)
        assert res.data.values.shape == (1000, 15)
        assert np.all(np.isfinite(res.data.values))
        assert res.data.columns[-2:] == ("t", "y")

    def test_determinism_bit_for_bit(self):
        spec = benchmark_scm()
        a = sample(spec, 500, seed=3)
        b = sample(spec, 500, seed=3)
        assert np.array_equal(a.data.values, b.data.values)
        assert np.array_equal(a.noise.values, b.noise.values)
        c = sample(spec, 500, seed=4)
        assert not np.array_equal(a.data.values, c.data.values)


class TestDrawWeights:
    def test_range(self):
        g = benchmark_scm().graph
        w = draw_weights(g, seed=1)
        assert set(w) == set(g.edges)
        assert all(0.5 <= v <= 2.0 for v in w.values())

    def test_determinism(self):
        g = benchmark_scm().graph
        assert draw_weights(g, seed=9) == draw_weights(g, seed=9)

    def test_mean(self):
        g = GraphSpec(
            [f"v{i}" for i in range(100)] + ["t", "y"],
            [(f"v{i}", "t") for i in range(100)] + [("t", "y")],
            "t",
            "y",
        )
        vals = []
        for s in range(100):
            vals.extend(draw_weights(g, seed=s).values())
        assert 1.22 < np.mean(vals) < 1.28


class TestCounterfactuals:
    def test_consistency_at_factual_treatment(self):
        spec = benchmark_scm()
        res = sample(spec, 200, seed=21)
        t = res.data.column("t")
        y = res.data.column("y")
        y_cf = counterfactual_outcomes(spec, res.noise, do_t=t)
        np.testing.assert_array_equal(y_cf, y)

    def test_null_effect_when_no_path(self):
        g = GraphSpec(["t", "y"], [], "t", "y")
        spec = ScmSpec(g, {"t": Mechanism(), "y": Mechanism()})
        res = sample(spec, 100, seed=2)
        a = counterfactual_outcomes(spec, res.noise, do_t=-3.0)
        b = counterfactual_outcomes(spec, res.noise, do_t=4.0)
        np.testing.assert_array_equal(a, b)

    def test_linear_difference_exact(self):
        spec = linear_spec(a=2.0)
        res = sample(spec, 300, seed=8)
        y1 = counterfactual_outcomes(spec, res.noise, do_t=1.0)
        y0 = counterfactual_outcomes(spec, res.noise, do_t=0.25)
        np.testing.assert_allclose(y1 - y0, 2.0 * 0.75, rtol=0, atol=1e-12)

    def test_non_descendants_invariant(self):
        spec = benchmark_scm()
        res = sample(spec, 100, seed=33)
        replayed = replay(spec, res.noise, do={"t": 5.0})
        for col in ("X1", "X2", "X3", "X4", "X5", "X6", "X7", "X8", "X13"):
            np.testing.assert_array_equal(replayed.column(col), res.data.column(col))

    def test_noise_mismatch_rejected(self):
        spec = benchmark_scm()
        res = sample(linear_spec(), 50, seed=1)
        with pytest.raises(ContractError):
            counterfactual_outcomes(spec, res.noise, do_t=0.0)


class TestTrueMtef:
    def test_linear_constant_slope(self):
        spec = linear_spec(a=2.0)
        grid = np.linspace(-1, 1, 7)
        curve = true_mtef(spec, grid, n=400, seed=4)
        np.testing.assert_allclose(curve.mtef, 2.0, rtol=0, atol=1e-12)

    def test_null_effect_zero(self):
        g = GraphSpec(["t", "y"], [], "t", "y")
        spec = ScmSpec(g, {"t": Mechanism(), "y": Mechanism()})
        curve = true_mtef(spec, [0.0, 0.5, 1.0], n=200, seed=0)
        np.testing.assert_allclose(curve.mtef, 0.0, atol=1e-12)

    def test_sigmoid_against_quadrature(self):
        """Mean potential outcome checked against Gauss-Hermite integration."""
        g = GraphSpec(["t", "m", "y"], [("t", "m"), ("m", "y"), ("t", "y")], "t", "y")
        w_tm, w_my, w_ty = 1.3, 1.7, 0.9
        spec = ScmSpec(
            g,
            {
                "t": Mechanism(),
                "m": Mechanism(parents=("t",), weights=(w_tm,), link="sigmoid"),
                "y": Mechanism(parents=("m", "t"), weights=(w_my, w_ty), link="sigmoid"),
            },
        )
        grid = np.array([-1.0, 0.0, 1.0, 2.0])
        n = 200_000
        curve = true_mtef(spec, grid, n=n, seed=77)

        nodes, weights = np.polynomial.hermite_e.hermegauss(80)
        sig = lambda x: 1.0 / (1.0 + np.exp(-x))

        def mean_y(g_val):
            m_vals = sig(w_tm * g_val) + nodes  # m = f(t) + eps, eps ~ N(0,1)
            inner = sig(w_my * m_vals)
            return float(np.sum(weights * inner) / np.sqrt(2 * np.pi)) + sig(w_ty * g_val)

        mu_quad = np.array([mean_y(g) for g in grid])
        mtef_quad = np.diff(mu_quad) / np.diff(grid)
        # Monte-Carlo 3-sigma bound for a shared-panel mean difference
        panel = sample(spec, n, seed=77)
        for k in range(len(grid) - 1):
            y_hi = counterfactual_outcomes(spec, panel.noise, grid[k + 1])
            y_lo = counterfactual_outcomes(spec, panel.noise, grid[k])
            diff = (y_hi - y_lo) / (grid[k + 1] - grid[k])
            mc_sigma = diff.std() / np.sqrt(n)
            assert abs(curve.mtef[k] - mtef_quad[k]) < 3 * mc_sigma + 1e-9

    def test_rejects_bad_grid(self):
        with pytest.raises(ContractError):
            true_mtef(linear_spec(), [1.0, 0.5], n=100, seed=0)


def triangle_scm():
    g = GraphSpec(["X", "t", "y"], [("X", "t"), ("X", "y"), ("t", "y")], "t", "y")
    tables = {
        "X": np.array([0.4, 0.6]),
        "t": np.array([[0.7, 0.3], [0.2, 0.8]]),
        "y": np.array([[[0.9, 0.1], [0.5, 0.5]], [[0.6, 0.4], [0.1, 0.9]]]),
    }
    return DiscreteScm(g, tables)


class TestDiscrete:
    def test_table_shape_validation(self):
        g = GraphSpec(["t", "y"], [("t", "y")], "t", "y")
        with pytest.raises(ContractError):
            DiscreteScm(g, {"t": np.array([0.5, 0.5]), "y": np.array([0.5, 0.5])})

    def test_row_sum_validation(self):
        g = GraphSpec(["t", "y"], [], "t", "y")
        with pytest.raises(ContractError):
            DiscreteScm(g, {"t": np.array([0.5, 0.6]), "y": np.array([0.5, 0.5])})

    def test_joint_normalizes(self):
        d = random_discrete_scm(seed=3)
        j = joint_table(d)
        assert abs(j.sum() - 1.0) < 1e-12
        assert j.min() >= 0

    def test_interventional_is_distribution(self):
        for s in range(10):
            d = random_discrete_scm(seed=100 + s)
            for do_t in (0, 1):
                p = exact_interventional(d, do_t)
                assert abs(p.sum() - 1.0) < 1e-12
                assert p.min() >= 0

    def test_t_root_equals_conditional(self):
        g = GraphSpec(["t", "y"], [("t", "y")], "t", "y")
        d = DiscreteScm(
            g,
            {
                "t": np.array([0.3, 0.7]),
                "y": np.array([[0.8, 0.2], [0.4, 0.6]]),
            },
        )
        j = joint_table(d)
        for do_t in (0, 1):
            cond = j[do_t] / j[do_t].sum()
            np.testing.assert_allclose(exact_interventional(d, do_t), cond, atol=1e-12)
            np.testing.assert_allclose(
                exact_interventional(d, do_t), d.tables["y"][do_t], atol=1e-12
            )

    def test_capacity_error(self):
        names = [f"v{i}" for i in range(21)] + ["t", "y"]
        g = GraphSpec(names, [("t", "y")], "t", "y")
        tables = {n: np.array([0.5, 0.5]) for n in names if n != "y"}
        tables["y"] = np.array([[0.5, 0.5], [0.5, 0.5]])
        d = DiscreteScm(g, tables)
        with pytest.raises(CapacityError):
            exact_interventional(d, 1)

    def test_sample_discrete_matches_marginals(self):
        d = triangle_scm()
        data = sample_discrete(d, 50_000, seed=5)
        j = joint_table(d)
        p_x1 = j[1].sum()
        assert abs(data.column("X").mean() - p_x1) < 0.01


class TestAdjustmentEquivalence:
    def test_confounder_triangle(self):
        audit = verify_adjustment_equivalence(triangle_scm())
        assert audit.confounders == ("X",)
        assert audit.max_discrepancy < 1e-10
        assert audit.skipped_cells == 0

    def test_t_root_case(self):
        g = GraphSpec(["X", "t", "y"], [("t", "y"), ("X", "y")], "t", "y")
        d = DiscreteScm(
            g,
            {
                "X": np.array([0.5, 0.5]),
                "t": np.array([0.4, 0.6]),
                "y": np.array([[[0.9, 0.1], [0.3, 0.7]], [[0.6, 0.4], [0.2, 0.8]]]),
            },
        )
        audit = verify_adjustment_equivalence(d)
        assert audit.confounders == ()
        assert audit.max_discrepancy < 1e-10

    def test_randomized_audit(self):
        worst = 0.0
        for s in range(120):
            audit = verify_adjustment_equivalence(random_discrete_scm(seed=5000 + s))
            worst = max(worst, audit.max_discrepancy)
            assert audit.skipped_cells == 0  # positivity enforced by clipping
        assert worst < 1e-8

    def test_generator_yields_conforming_graphs(self):
        from gci.scm import root_adjustment_sufficient

        for s in range(200):
            d = random_discrete_scm(seed=9000 + s)
            assert root_adjustment_sufficient(d.graph)

    def test_mediated_confounder_breaks_root_adjustment(self):
        """A non-root common ancestor mediating into both t and y is
        outside the identity's scope: the audit must show a real gap."""
        from gci.scm import root_adjustment_sufficient

        g = GraphSpec(
            ["R", "A", "t", "y"],
            [("R", "A"), ("A", "t"), ("A", "y"), ("t", "y")],
            "t",
            "y",
        )
        assert not root_adjustment_sufficient(g)
        rng = np.random.default_rng(0)

        def cpt(k):
            p1 = np.clip(rng.random(size=(2,) * k), 0.05, 0.95)
            return np.stack([1 - p1, p1], axis=-1)

        d = DiscreteScm(g, {"R": cpt(0), "A": cpt(1), "t": cpt(1), "y": cpt(2)})
        audit = verify_adjustment_equivalence(d)
        assert audit.confounders == ("R",)
        assert audit.max_discrepancy > 0.01
