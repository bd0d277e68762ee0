import pytest
from fastapi.testclient import TestClient

from pixle.core import ImageTensor, image_to_png
from pixle.service.app import app
from tests.test_harness import write_toy_dataset

client = TestClient(app, raise_server_exceptions=False)


@pytest.fixture
def toy_png(tmp_path):
    img = ImageTensor.from_array([[0.9, 0.1], [0.2, 0.3]])
    path = tmp_path / "toy.png"
    path.write_bytes(image_to_png(img))
    return path


SWAP_SETTINGS = {
    "restarts": 10,
    "iters": 20,
    "patch_min": 1,
    "patch_max": 1,
    "mode": "swap",
    "seed": 1,
}


def test_health():
    response = client.get("/api/health")
    assert response.status_code == 200
    assert response.json()["status"] == "ok"


def test_oracle_info():
    response = client.get("/api/oracle", params={"descriptor": "builtin:pixel-probe"})
    assert response.status_code == 200
    body = response.json()
    assert body["num_classes"] == 2
    assert body["concurrent_safe"] is True


def test_oracle_info_bad_descriptor():
    response = client.get("/api/oracle", params={"descriptor": "nonsense"})
    assert response.status_code == 400


def test_attack_endpoint_success(toy_png, tmp_path):
    out_dir = tmp_path / "out"
    response = client.post(
        "/api/attack",
        json={
            "oracle": "builtin:pixel-probe",
            "image": str(toy_png),
            "label": 0,
            "settings": SWAP_SETTINGS,
            "out_dir": str(out_dir),
        },
    )
    assert response.status_code == 200
    body = response.json()
    assert body["success"] is True
    assert body["l0"] == 2
    assert (out_dir / "toy_adv.png").is_file()
    assert (out_dir / "toy_outcome.json").is_file()
    assert (out_dir / "toy_trajectory.csv").is_file()


def test_attack_endpoint_budget_exhausted(toy_png):
    response = client.post(
        "/api/attack",
        json={
            "oracle": "builtin:constant:0.6,0.4",
            "image": str(toy_png),
            "label": 0,
            "settings": {**SWAP_SETTINGS, "restarts": 2, "iters": 3},
        },
    )
    assert response.status_code == 200
    body = response.json()
    assert body["success"] is False
    assert body["queries"] == 7


def test_attack_endpoint_missing_image(tmp_path):
    response = client.post(
        "/api/attack",
        json={"oracle": "builtin:pixel-probe", "image": str(tmp_path / "nope.png"), "label": 0},
    )
    assert response.status_code == 400


def test_attack_endpoint_label_out_of_range(toy_png):
    response = client.post(
        "/api/attack",
        json={"oracle": "builtin:pixel-probe", "image": str(toy_png), "label": 9},
    )
    assert response.status_code == 400


def test_attack_endpoint_validation_422(toy_png):
    response = client.post(
        "/api/attack", json={"oracle": "builtin:pixel-probe", "image": str(toy_png)}
    )
    assert response.status_code == 422  # label missing


def test_campaign_and_plot_endpoints(tmp_path):
    manifest = write_toy_dataset(tmp_path / "data")
    out_dir = tmp_path / "campaign"
    response = client.post(
        "/api/campaign",
        json={
            "oracle": "builtin:pixel-probe",
            "manifest": str(manifest),
            "settings": SWAP_SETTINGS,
            "out_dir": str(out_dir),
        },
    )
    assert response.status_code == 200
    body = response.json()
    assert body["failed_items"] == []
    assert len(body["report"]["per_image"]) == 6
    assert (out_dir / "report.json").is_file()

    plot = client.post("/api/plot", json={"campaign_dir": str(out_dir)})
    assert plot.status_code == 200
    assert (out_dir / "plots" / "loss_curves.svg").is_file()


def test_plot_endpoint_missing_campaign(tmp_path):
    response = client.post("/api/plot", json={"campaign_dir": str(tmp_path / "void")})
    assert response.status_code == 400


def test_matrix_endpoint(tmp_path):
    manifest = write_toy_dataset(tmp_path / "data")
    response = client.post(
        "/api/matrix",
        json={
            "oracle": "builtin:pixel-probe",
            "manifest": str(manifest),
            "settings": {**SWAP_SETTINGS, "restarts": 20},
            "per_pair_quota": 2,
            "out_dir": str(tmp_path / "m"),
        },
    )
    assert response.status_code == 200
    matrix = response.json()["matrix"]
    assert matrix["cells"][0][1] == 100.0
    assert matrix["cells"][0][0] is None
    assert (tmp_path / "m" / "matrix.json").is_file()


def test_oracle_failure_maps_to_502(toy_png):
    # a linear model path that does not exist is a config error (400);
    # a process oracle that dies immediately is an oracle error (502)
    response = client.post(
        "/api/attack",
        json={
            "oracle": "process:false",
            "image": str(toy_png),
            "label": 0,
        },
    )
    assert response.status_code == 502
