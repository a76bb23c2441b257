"""HTTP service endpoints over a small trained checkpoint."""

import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from steershape.model import save_checkpoint
from steershape.service import DEFAULT_PAYLOAD_CAP_BYTES, make_app, mesh_payload


@pytest.fixture(scope="module")
def client(mini_conditioned, tmp_path_factory):
    path = tmp_path_factory.mktemp("svc") / "model.ckpt"
    save_checkpoint(mini_conditioned, path)
    app = make_app(path)
    with TestClient(app) as c:
        yield c


@pytest.fixture(scope="module")
def baseline_client(mini_baseline, tmp_path_factory):
    path = tmp_path_factory.mktemp("svc_b") / "model.ckpt"
    save_checkpoint(mini_baseline, path)
    app = make_app(path)
    with TestClient(app) as c:
        yield c


class TestShapes:
    def test_listing(self, client, mini_conditioned):
        r = client.get("/shapes")
        assert r.status_code == 200
        body = r.json()
        assert [s["id"] for s in body["shapes"]] == mini_conditioned.shape_ids
        assert body["conditioned"] is True
        assert set(body["feature_names"]) == {"volume", "isthmus_area",
                                              "symmetry"}
        for entry in body["shapes"]:
            assert set(entry["features"]) == {"volume", "isthmus_area",
                                              "symmetry"}
        assert set(body["clamp"]) == set(body["feature_names"])

    def test_healthcheck(self, client):
        assert client.get("/health").json()["status"] == "ok"


class TestReconstruct:
    def test_known_shape(self, client):
        r = client.post("/reconstruct", json={"shape_id": "shape_000",
                                              "resolution": 32})
        assert r.status_code == 200
        mesh = r.json()["mesh"]
        assert mesh["n_faces"] > 0
        assert len(mesh["positions"]) == mesh["n_vertices"] * 3
        assert len(mesh["indices"]) == mesh["n_faces"] * 3
        assert max(mesh["indices"]) < mesh["n_vertices"]

    def test_unknown_shape_404(self, client):
        r = client.post("/reconstruct", json={"shape_id": "nope"})
        assert r.status_code == 404
        assert r.json()["error"]["code"] == "unknown_shape"

    def test_malformed_body_400(self, client):
        r = client.post("/reconstruct", json={"wrong": 1})
        assert r.status_code == 400
        assert r.json()["error"]["code"] == "malformed_request"


class TestGenerate:
    def test_deterministic_payload(self, client):
        a = client.post("/generate", json={"seed": 11, "resolution": 24})
        b = client.post("/generate", json={"seed": 11, "resolution": 24})
        assert a.status_code == 200
        assert a.content == b.content

    def test_override_reflected_in_conditioning(self, client, mini_conditioned):
        target = float(mini_conditioned.features_raw[:, 0].mean())
        r = client.post("/generate", json={"seed": 1, "resolution": 24,
                                           "overrides": {"volume": target}})
        assert r.status_code == 200
        assert r.json()["conditioned"]["volume"] == pytest.approx(target)

    def test_unknown_override_400(self, client):
        r = client.post("/generate", json={"overrides": {"girth": 2.0}})
        assert r.status_code == 400


class TestEdit:
    def test_identity_edit_equals_reconstruct(self, client):
        recon = client.post("/reconstruct", json={"shape_id": "shape_001",
                                                  "resolution": 32})
        edit = client.post("/edit", json={"base": "shape_001", "features": {},
                                          "resolution": 32})
        assert edit.status_code == 200
        assert edit.json()["mesh"] == recon.json()["mesh"]

    def test_feature_edit_changes_mesh(self, client, mini_conditioned):
        base = client.post("/edit", json={"base": "shape_000", "features": {},
                                          "resolution": 24}).json()
        vols = mini_conditioned.features_raw[:, 0]
        own = base["conditioned"]["volume"]
        target = float(vols[np.argmax(np.abs(vols - own))])
        edited = client.post("/edit", json={"base": "shape_000",
                                            "features": {"volume": target},
                                            "resolution": 24}).json()
        assert edited["mesh"] != base["mesh"]
        assert edited["conditioned"]["volume"] == pytest.approx(target, rel=1e-9)

    def test_repeat_edit_served_from_cache_identically(self, client):
        req = {"base": "shape_002", "features": {"volume": 0.1},
               "resolution": 24}
        a = client.post("/edit", json=req)
        b = client.post("/edit", json=req)
        assert a.content == b.content

    def test_unconditioned_model_409(self, baseline_client):
        r = baseline_client.post("/edit", json={"base": "shape_000",
                                                "features": {"volume": 0.1}})
        assert r.status_code == 409
        assert r.json()["error"]["code"] == "unconditioned_model"

    def test_code_base_accepted(self, client, mini_conditioned):
        code = mini_conditioned.latents.code(0)
        r = client.post("/edit", json={
            "base": {"fixed": code.fixed.tolist(),
                     "trainable": code.trainable.tolist()},
            "features": {}, "resolution": 24})
        assert r.status_code == 200

    def test_bad_code_length_400(self, client):
        r = client.post("/edit", json={"base": {"fixed": [0.0],
                                                "trainable": [0.0]},
                                       "features": {}})
        assert r.status_code == 400

    def test_unknown_shape_404(self, client):
        r = client.post("/edit", json={"base": "ghost", "features": {}})
        assert r.status_code == 404

    def test_clamp_flag_on_extreme_values(self, client, mini_conditioned):
        extreme = float(mini_conditioned.features_raw[:, 0].max() * 100)
        r = client.post("/edit", json={"base": "shape_000",
                                       "features": {"volume": extreme},
                                       "resolution": 24})
        assert r.status_code == 200
        assert r.json()["clamped"] is True


class TestPayload:
    def test_truncation_under_byte_cap(self, mini_dataset):
        mesh = mini_dataset.shapes[0].mesh
        full = mesh_payload(mesh, DEFAULT_PAYLOAD_CAP_BYTES)
        assert not full["truncated"]
        small = mesh_payload(mesh, 10_000)
        assert small["truncated"]
        assert small["n_faces"] < full["n_faces"]
        assert len(small["positions"]) == small["n_vertices"] * 3
        if small["indices"]:
            assert max(small["indices"]) < small["n_vertices"]

    def test_loading_returns_503(self):
        app = make_app(None)
        with TestClient(app) as c:
            r = c.get("/shapes")
            assert r.status_code == 503
            assert r.json()["error"]["code"] == "checkpoint_loading"

    def test_openapi_document(self, client):
        spec = client.get("/openapi.json").json()
        for route in ("/shapes", "/reconstruct", "/generate", "/edit"):
            assert route in spec["paths"]
