import numpy as np
import pytest

from neoc.errors import ProblemError, ProblemFormatError, ProblemValidationError
from neoc.services.expr import to_string
from neoc.services.problem import (
    ParamPerturbation,
    builtin,
    catalog,
    derived_fields,
    describe,
    load_problem,
    load_problem_file,
)


def _make_text(
    f="-a1*x1",
    g="1",
    m="(1 + a1)*x1^2 + x1^4",
    R="1",
    lo="-1",
    hi="1",
    names="a1",
    nominal="1",
    extra="",
):
    return f"""
[dims]
state = 1
control = 1
params = {len(names.split())}

[dynamics]
f1 = {f}
g11 = {g}

[cost]
m = {m}
R = {R}

[domain]
lo = {lo}
hi = {hi}

[params]
names = {names}
nominal = {nominal}
{extra}
"""


class TestLoadProblem:
    def test_scalar_problem(self):
        p = load_problem(_make_text(), name="scalar")
        assert (p.state_dim, p.control_dim, p.param_dim) == (1, 1, 1)
        assert p.alpha_names == ("a1",)
        np.testing.assert_array_equal(p.alpha_nominal, [1.0])
        assert to_string(p.f[0]) == "-a1*x1"

    def test_R_not_positive_definite(self):
        with pytest.raises(ProblemValidationError, match="R not positive definite"):
            load_problem(_make_text(R="0"))

    def test_drift_not_vanishing_at_origin(self):
        with pytest.raises(ProblemValidationError, match=r"f\(0,alpha\) != 0"):
            load_problem(_make_text(f="1"))

    def test_drift_vanishing_only_at_nominal(self):
        with pytest.raises(ProblemValidationError, match=r"f\(0,alpha\) != 0"):
            load_problem(_make_text(f="(a1 - 1) + x1"))

    def test_cost_not_positive(self):
        with pytest.raises(ProblemValidationError, match="m"):
            load_problem(_make_text(m="x1^2 - 0.5*x1^4 - 0.6*x1^2"))

    def test_cost_not_zero_at_origin(self):
        with pytest.raises(ProblemValidationError, match=r"m\(0"):
            load_problem(_make_text(m="1 + x1^2"))

    def test_empty_domain(self):
        with pytest.raises(ProblemValidationError, match="lo < hi"):
            load_problem(_make_text(lo="1", hi="1"))

    def test_unknown_key_reports_line(self):
        text = _make_text().replace("R = 1", "R = 1\nQ = 1")
        with pytest.raises(ProblemFormatError, match="unknown key 'Q'") as exc:
            load_problem(text)
        assert exc.value.line is not None
        assert str(exc.value).startswith(f"line {exc.value.line}:")

    def test_unknown_section(self):
        with pytest.raises(ProblemFormatError, match=r"unknown section \[solver\]"):
            load_problem(_make_text() + "\n[solver]\nmax_iter = 3\n")

    def test_duplicate_key(self):
        text = _make_text().replace("g11 = 1", "g11 = 1\ng11 = 2")
        with pytest.raises(ProblemFormatError, match="duplicate key"):
            load_problem(text)

    def test_unknown_symbol(self):
        with pytest.raises(ProblemFormatError, match="unknown symbol"):
            load_problem(_make_text(f="-b*x1"))

    def test_expression_syntax_error_carries_line(self):
        with pytest.raises(ProblemFormatError, match="syntax error") as exc:
            load_problem(_make_text(g="1 +"))
        assert exc.value.line is not None

    def test_nominal_length_mismatch(self):
        with pytest.raises(ProblemFormatError, match="dimension mismatch"):
            load_problem(_make_text(nominal="1 2"))

    def test_missing_dynamics_entry(self):
        text = _make_text().replace("g11 = 1\n", "")
        with pytest.raises(ProblemFormatError, match="missing g11"):
            load_problem(text)

    def test_state_name_as_parameter(self):
        with pytest.raises(ProblemFormatError, match="invalid parameter name"):
            load_problem(_make_text(names="x1", f="-x1"))

    def test_comments_and_quotes(self):
        text = _make_text(f='"-a1*x1"  # linear drift')
        assert to_string(load_problem(text).f[0]) == "-a1*x1"

    def test_explicit_spread(self):
        p = load_problem(_make_text(extra="spread = 0.25"))
        np.testing.assert_array_equal(p.spread, [0.25])

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "toy.problem"
        path.write_text(_make_text(), encoding="utf-8")
        p = load_problem_file(path)
        assert p.name == "toy"

    def test_fields_batch_shapes(self):
        p = load_problem(_make_text())
        x = np.linspace(-1, 1, 11)[:, None]
        f, g, m = p.fields(x, [2.0])
        assert f.shape == (11, 1) and g.shape == (11, 1, 1) and m.shape == (11,)
        np.testing.assert_allclose(f[:, 0], -2.0 * x[:, 0])
        np.testing.assert_allclose(g, 1.0)
        np.testing.assert_allclose(m, 3.0 * x[:, 0] ** 2 + x[:, 0] ** 4)


class TestLqrSection:
    def test_synthesised_fields(self):
        p = builtin("cartpole_lqr")
        assert p.lqr is not None
        A, B, Q = p.lqr.matrices()
        x = np.array([[0.1, -0.2, 0.3, 0.05]])
        f, g, m = p.fields(x)
        np.testing.assert_allclose(f[0], A @ x[0], atol=1e-14)
        np.testing.assert_allclose(g[0], B, atol=1e-14)
        assert m[0] == pytest.approx(x[0] @ Q @ x[0])

    def test_cartpole_matrices(self):
        A, B, Q = builtin("cartpole_lqr").lqr.matrices()
        assert A[1, 1] == pytest.approx(-0.1818, abs=1e-4)
        assert A[1, 2] == pytest.approx(2.6727, abs=1e-4)
        assert A[3, 1] == pytest.approx(-0.4545, abs=1e-4)
        assert A[3, 2] == pytest.approx(31.1818, abs=1e-4)
        assert B[1, 0] == pytest.approx(1.8182, abs=1e-4)
        assert B[3, 0] == pytest.approx(4.5455, abs=1e-4)
        np.testing.assert_array_equal(Q, np.diag([1.0, 0.0, 1.0, 0.0]))

    def test_parameter_derivatives(self):
        lp = builtin("cartpole_lqr").lqr
        b = lp.alpha_names.index("b")
        h = 1e-6
        up, down = lp.alpha_nominal.copy(), lp.alpha_nominal.copy()
        up[b] += h
        down[b] -= h
        dA, dB, dQ = lp.derivatives()[b]
        np.testing.assert_allclose(dA, (lp.matrices(up)[0] - lp.matrices(down)[0]) / (2 * h), atol=1e-6)
        np.testing.assert_array_equal(dB, 0.0)
        np.testing.assert_array_equal(dQ, 0.0)


class TestBuiltins:
    @pytest.mark.parametrize("name", ["scalar_siso", "bilinear", "pendulum", "cartpole_lqr"])
    def test_all_builtins_validate(self, name):
        p = builtin(name)
        assert p.name == name
        assert name in catalog()

    def test_pendulum(self):
        p = builtin("pendulum")
        assert (p.state_dim, p.control_dim, p.param_dim) == (2, 1, 2)
        assert p.alpha_names == ("m", "l")
        np.testing.assert_array_equal(p.alpha_nominal, [1.0, 1.0])
        assert [to_string(e) for e in p.f] == ["x2", "sin(x1) - m/l*x2"]
        assert [to_string(row[0]) for row in p.g] == ["0", "1/m"]

    def test_bilinear(self):
        p = builtin("bilinear")
        assert to_string(p.f[0]) == "0"
        assert to_string(p.g[0][0]) == "a1*x1^2"
        assert to_string(p.m) == "a1*x1^2 + a1^2*x1^4"

    def test_cartpole_nominal(self):
        p = builtin("cartpole_lqr")
        assert p.alpha_names == ("M", "m", "b", "l", "I")
        np.testing.assert_allclose(p.alpha_nominal, [0.5, 0.2, 0.1, 0.3, 0.006])
        np.testing.assert_array_equal(p.R, [[1.0]])

    def test_unknown_builtin_lists_names(self):
        with pytest.raises(ProblemError) as exc:
            builtin("segway")
        for name in ("scalar_siso", "bilinear", "pendulum", "cartpole_lqr"):
            assert name in str(exc.value)

    def test_catalog_entries(self):
        entries = catalog()
        assert entries["scalar_siso"].u0 == ("-5*x1",)
        assert entries["pendulum"].delta == (-0.2, 0.2)
        assert entries["cartpole_lqr"].u0 is None

    def test_describe(self):
        info = describe(builtin("scalar_siso"))
        assert info["m"] == "(1 + a1)*x1^2 + x1^4"
        assert info["domain"] == {"lo": [-1.0], "hi": [1.0]}


class TestDerivedFields:
    @pytest.mark.parametrize("name", ["scalar_siso", "bilinear", "pendulum"])
    def test_match_finite_differences(self, name):
        p = builtin(name)
        d = derived_fields(p)
        rng = np.random.default_rng(7)
        h = 1e-6
        for _ in range(20):
            x = rng.uniform(p.lo, p.hi)[None, :]
            alpha = p.alpha_nominal + rng.uniform(-0.1, 0.1, p.param_dim)
            df, dg, dm = d.fields(x, alpha)
            for l in range(p.param_dim):
                up, down = alpha.copy(), alpha.copy()
                up[l] += h
                down[l] -= h
                fu, gu, mu = p.fields(x, up)
                fd, gd, md = p.fields(x, down)
                np.testing.assert_allclose(df[0, :, l], (fu - fd)[0] / (2 * h), rtol=1e-6, atol=1e-8)
                np.testing.assert_allclose(dg[0, l], (gu - gd)[0] / (2 * h), rtol=1e-6, atol=1e-8)
                assert dm[0, l] == pytest.approx((mu - md)[0] / (2 * h), rel=1e-6, abs=1e-8)

    def test_origin_terms_pendulum(self):
        A, B, H = derived_fields(builtin("pendulum")).origin_terms()
        np.testing.assert_allclose(A, [[0.0, 1.0], [1.0, -1.0]])
        np.testing.assert_allclose(B, [[0.0], [1.0]])
        np.testing.assert_allclose(H, 2.0 * np.eye(2))

    def test_smooth_builtins_flagged_smooth(self):
        assert not derived_fields(builtin("pendulum")).nonsmooth

    def test_kinked_problem_flagged(self):
        p = load_problem(_make_text(m="x1^2 + abs(x1)^3"))
        assert derived_fields(p).nonsmooth


class TestParamPerturbation:
    def test_length_checked(self):
        with pytest.raises(ProblemValidationError, match="param_dim"):
            ParamPerturbation.for_problem(builtin("pendulum"), [0.1])

    def test_box(self):
        with pytest.raises(ProblemValidationError, match="box"):
            ParamPerturbation.for_problem(builtin("scalar_siso"), [0.5], box=[0.2])
        assert ParamPerturbation.for_problem(builtin("scalar_siso"), 0.1).delta_alpha.tolist() == [0.1]
