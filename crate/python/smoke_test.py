"""Smoke test for the refnet Python extension.

Build and install first:

    pip install --no-build-isolation -e crates/py
    python python/smoke_test.py
"""

import math
import tempfile
from pathlib import Path

import refnet


def check_network():
    # Path 0-1-2-3 plus a pendant on 1.
    net = refnet.Network(5)
    for u, v in [(0, 1), (1, 2), (2, 3), (1, 4)]:
        net.add_edge(u, v)
    assert (net.node_count, net.edge_count, net.directed) == (5, 4, False)
    assert net.degree_centrality() == [0.25, 0.75, 0.5, 0.25, 0.25]
    assert net.betweenness_centrality() == [0.0, 5.0, 3.0, 0.0, 0.0]
    eig = net.eigenvector_centrality()
    assert abs(sum(x * x for x in eig) - 1.0) < 1e-12
    assert max(range(5), key=lambda i: eig[i]) == 1
    try:
        net.add_edge(2, 2)
    except ValueError as e:
        assert "self-loop" in str(e)
    else:
        raise AssertionError("self-loop accepted")


def check_shapley():
    out = refnet.exact_shapley(lambda x: x[0] * x[1], [1.0, 1.0], [[0.0, 0.0]])
    assert out["phi"] == [0.5, 0.5]
    assert (out["base_value"], out["prediction"]) == (0.0, 1.0)
    try:
        refnet.exact_shapley(lambda x: 1 / 0, [1.0], [[0.0]])
    except ZeroDivisionError:
        pass
    else:
        raise AssertionError("model error swallowed")
    assert refnet.roc_auc([0.1, 0.9], [0.0, 1.0]) == 1.0


def check_pipeline():
    with tempfile.TemporaryDirectory() as tmp:
        manifest = refnet.generate_synthetic(tmp, seed=3, patients=20_000)
        assert manifest["alpha"] == "0.8"
        data = refnet.Dataset.load(Path(tmp) / "consultations.csv", Path(tmp) / "physicians.csv")
        assert data.census() == (250, 710, 40)
        assert data.rejected == 0
        assert data.consultations == int(manifest["realized_consultations"])
        ref = data.referral_network()
        assert ref.directed and ref.edge_count > 0
        prof = data.professional_network()
        assert not prof.directed and prof.node_count == 960
        buckets = data.interval_distribution()
        assert buckets[-1][0] is None and math.isclose(buckets[-1][2], 1.0)
        within_30 = next(c for edge, _, c in buckets if edge == 30)
        assert abs(within_30 - 0.22) < 0.05, within_30
        cent = data.centrality()
        assert len(cent["degree"]) == len(cent["node_id"]) == 960
        runs = data.link_prediction(seeds=[0], models=["graphsage"])
        assert sorted(r["features"] for r in runs) == ["with_social", "without_social"]
        assert all(0.0 <= r["accuracy"] <= 1.0 for r in runs)


if __name__ == "__main__":
    check_network()
    check_shapley()
    check_pipeline()
    print("refnet python smoke test: ok")
