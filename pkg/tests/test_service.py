import pytest
from fastapi.testclient import TestClient

from bdtwine.service import app, create_app


@pytest.fixture(scope="module")
def client():
    return TestClient(app)


MM_INFTY = {"kind": "mm_infty", "lambda": 1.0, "nu": 1.0}
MM1 = {"kind": "mm1", "lambda": 1.0, "nu": 4.0}
DOUBLING = {"kind": "geometric", "kappa": 2.0}
CONST = {"kind": "const"}


def test_health(client):
    r = client.get("/health")
    assert r.status_code == 200
    assert r.json() == {"status": "ok"}


def test_create_app_returns_fresh_instance():
    assert create_app() is not app


def test_validate_envelope(client):
    r = client.post("/model/validate", json={"model": MM_INFTY, "n": 80})
    doc = r.json()
    assert r.status_code == 200
    assert doc["ok"] is True
    assert doc["command"] == "validate"
    assert "ergodicity" in doc["result"]


def test_validate_flags_transient_chain(client):
    r = client.post("/model/validate", json={"model": {"kind": "mm1", "lambda": 4.0, "nu": 1.0}, "n": 80})
    doc = r.json()
    assert r.status_code == 200
    assert doc["ok"] is False


def test_stationary_matches_library(client):
    r = client.post("/model/stationary", json={"model": MM1, "n": 50})
    doc = r.json()
    assert doc["ok"] is True
    assert doc["result"]["probs"][0] == pytest.approx(0.75)
    assert doc["result"]["mean"] == pytest.approx(1.0 / 3.0, abs=1e-9)


def test_evolve_accepts_lambda_alias_and_corpus(client):
    r = client.post(
        "/semigroup/evolve",
        json={"model": MM_INFTY, "f": {"kind": "corpus", "name": "rho"}, "weight": CONST, "t": 0.5, "n": 80},
    )
    doc = r.json()
    assert doc["ok"] is True
    assert len(doc["result"]["values"]) == 81


def test_verify_intertwine_rows(client):
    r = client.post(
        "/verify/intertwine",
        json={"model": MM1, "weight": DOUBLING, "t_grid": [0.1, 1.0], "n": 120, "tol": 1e-6, "seed": 0},
    )
    doc = r.json()
    assert doc["ok"] is True
    assert len(doc["result"]["rows"]) == 5
    assert doc["result"]["worst_residual"] < 1e-6
    assert all(row["pass"] for row in doc["result"]["rows"])


def test_verify_subcommute_skips_and_checks(client):
    r = client.post(
        "/verify/subcommute",
        json={"model": MM1, "weight": DOUBLING, "phi": {"name": "square"}, "t_grid": [0.2], "n": 120, "seed": 1},
    )
    doc = r.json()
    assert doc["ok"] is True
    assert any(row["status"] == "checked" for row in doc["result"]["rows"])


def test_verify_bicommute(client):
    r = client.post(
        "/verify/bicommute",
        json={"model": {"kind": "mm_infty", "lambda": 2.0, "nu": 1.0}, "phi": {"name": "rlogr"}, "t_grid": [0.2, 1.0], "n": 100, "seed": 0},
    )
    doc = r.json()
    assert doc["ok"] is True


def test_curvature_with_kappa(client):
    r = client.post("/curvature", json={"model": MM1, "weight": DOUBLING, "n": 200, "with_kappa": True})
    doc = r.json()
    assert doc["ok"] is True
    assert doc["result"]["sigma_u"] == pytest.approx(1.0)
    assert doc["result"]["kappa_u"]["value"] == pytest.approx(1.0, abs=1e-6)
    assert doc["result"]["v_head"][0] == pytest.approx(3.0)


def test_curvature_reports_kappa_failure_reason(client):
    # sigma = 0 makes the curvature integral diverge; the endpoint reports
    # why instead of failing the whole request
    r = client.post("/curvature", json={"model": MM1, "weight": CONST, "n": 150, "with_kappa": True})
    doc = r.json()
    assert r.status_code == 200
    assert "kappa_reason" in doc["result"]


def test_optimize_endpoint_trace_tail(client):
    r = client.post("/optimize/weight", json={"model": MM1, "family": {"kind": "geometric"}, "n": 200, "seed": 42})
    doc = r.json()
    assert doc["ok"] is True
    assert doc["result"]["sigma"] == pytest.approx(1.0, abs=1e-6)
    assert doc["result"]["trace_len"] >= len(doc["result"]["trace_tail"])


def test_gap_report_endpoint(client):
    r = client.post("/optimize/gap-report", json={"model": {"kind": "mm_infty", "lambda": 2.0, "nu": 1.0}, "family": {"kind": "geometric"}, "n": 80, "seed": 0})
    doc = r.json()
    assert doc["ok"] is True
    assert doc["result"]["gap"] == pytest.approx(1.0, abs=1e-6)


def test_wasserstein_with_lp_cross_check(client):
    r = client.post(
        "/wasserstein",
        json={"model": MM_INFTY, "weight": CONST, "x0_a": 0, "x0_b": 3, "t": 0.5, "n": 80, "with_lp": True},
    )
    doc = r.json()
    assert doc["ok"] is True
    assert doc["result"]["lp"]["vs_closed_form"] < 1e-9
    assert doc["result"]["lp"]["duality_gap"] < 1e-9


def test_wasserstein_explicit_probs(client):
    r = client.post(
        "/wasserstein",
        json={"probs_a": [0.5, 0.5], "probs_b": [0.0, 1.0], "weight": CONST, "t": 1.0, "n": 1, "with_lp": True},
    )
    doc = r.json()
    assert doc["result"]["distance"] == pytest.approx(0.5)


def test_inequalities_battery(client):
    r = client.post("/inequalities", json={"model": MM_INFTY, "weight": CONST, "n": 120, "seed": 0})
    doc = r.json()
    assert doc["ok"] is True
    checks = {row["check"] for row in doc["result"]["rows"]}
    assert {"spectral_gap", "poincare", "kappa", "lyapunov", "poisson_gradient"} <= checks
    assert all(row["pass"] is not False for row in doc["result"]["rows"])


def test_inequalities_subset_and_skip(client):
    # the single-server queue with constant weight has sigma = 0: kappa must
    # come back as a skipped row, not an error
    r = client.post("/inequalities", json={"model": MM1, "weight": CONST, "n": 100, "checks": ["kappa"], "seed": 0})
    doc = r.json()
    assert r.status_code == 200
    row = doc["result"]["rows"][0]
    assert row["check"] == "kappa"
    assert row["pass"] is None
    assert "skipped" in row["details"]


def test_hitting_endpoint(client):
    r = client.post("/hitting", json={"lambda": 1.0, "nu": 4.0, "x": 1, "t": 1.0, "n": 200, "tol": 1e-6})
    doc = r.json()
    assert doc["ok"] is True
    assert doc["result"]["details"]["bound_ok"] is True


def test_mehler_endpoint(client):
    r = client.post("/mehler", json={"lambda": 1.0, "nu": 1.0, "x0": 3, "t": 0.7, "n": 80, "tol": 1e-8})
    doc = r.json()
    assert doc["ok"] is True
    assert doc["result"]["tv_distance"] < 1e-12


def test_order_domination_reports_both_orders(client):
    r = client.post("/order", json={"check": "domination", "model": MM_INFTY, "x": 2, "t": 0.5, "n": 100})
    doc = r.json()
    assert doc["ok"] is True
    assert doc["result"]["verdict"]["kind"] == "convex"
    assert "stochastic_verdict" in doc["result"]


def test_order_comparison_requires_model_b(client):
    r = client.post("/order", json={"check": "comparison", "model": MM_INFTY, "x0": 1, "t": 0.5, "n": 100})
    assert r.status_code == 400
    assert r.json()["kind"] == "BdtwineError"


def test_simulate_hitting_z_score(client):
    r = client.post("/simulate", json={"model": MM1, "kind": "hitting", "x0": 1, "t": 1.0, "paths": 20000, "seed": 42, "n": 200})
    doc = r.json()
    assert doc["ok"] is True
    assert abs(doc["result"]["z_score"]) <= 4.0


def test_simulate_coupled_requires_mm1(client):
    r = client.post("/simulate", json={"model": MM_INFTY, "kind": "coupled", "x0": 1, "t": 0.5, "paths": 1000, "seed": 1, "n": 100})
    assert r.status_code == 400


def test_domain_errors_map_to_400_with_kind(client):
    r = client.post("/model/validate", json={"model": {"kind": "mm_infty", "lambda": -1.0, "nu": 1.0}, "n": 50})
    assert r.status_code == 400
    doc = r.json()
    assert doc["kind"] == "InvalidParameterError"
    assert "lam" in doc["message"]


def test_type_errors_map_to_422(client):
    r = client.post("/model/validate", json={"model": {"kind": "mm_infty", "lambda": "soup", "nu": 1.0}, "n": 50})
    assert r.status_code == 422


def test_responses_are_json_clean(client):
    # numpy floats inside results must serialize as plain JSON numbers
    r = client.post("/curvature", json={"model": MM1, "weight": DOUBLING, "n": 150, "with_kappa": False})
    text = r.text
    assert "NaN" not in text and "Infinity" not in text
