import json

import pytest

from pixle.cli import EXIT_ATTACK_FAILED, EXIT_ERROR, EXIT_OK, EXIT_USAGE, main
from pixle.core import ImageTensor, image_to_png
from tests.test_harness import write_toy_dataset


@pytest.fixture
def toy_png(tmp_path):
    img = ImageTensor.from_array([[0.9, 0.1], [0.2, 0.3]])
    path = tmp_path / "toy.png"
    path.write_bytes(image_to_png(img))
    return path


def swap_flags():
    return [
        "--patch-min", "1", "--patch-max", "1", "--mode", "swap",
        "--restarts", "10", "--iters", "20", "--seed", "1",
    ]


def test_attack_success_exit_zero(toy_png, tmp_path, capsys):
    out_dir = tmp_path / "out"
    code = main(
        [
            "attack",
            "--oracle", "builtin:pixel-probe",
            "--image", str(toy_png),
            "--label", "0",
            "--out", str(out_dir),
            *swap_flags(),
        ]
    )
    assert code == EXIT_OK
    assert "success=True" in capsys.readouterr().out
    assert (out_dir / "toy_adv.png").is_file()
    outcome = json.loads((out_dir / "toy_outcome.json").read_text())
    assert outcome["config_echo"]["mode"] == "swap"


def test_missing_label_is_usage_error(toy_png, capsys):
    code = main(
        ["attack", "--oracle", "builtin:pixel-probe", "--image", str(toy_png)]
    )
    assert code == EXIT_USAGE
    assert "usage error" in capsys.readouterr().err


def test_unknown_flag_is_usage_error():
    assert main(["attack", "--frobnicate"]) == EXIT_USAGE


def test_budget_exhausted_exit_three(toy_png):
    code = main(
        [
            "attack",
            "--oracle", "builtin:constant:0.6,0.4",
            "--image", str(toy_png),
            "--label", "0",
            "--algorithm", "iterative",
            "--iters", "0",
            "--patch-min", "1", "--patch-max", "1",
        ]
    )
    assert code == EXIT_ATTACK_FAILED


def test_bad_oracle_exit_two(toy_png, capsys):
    code = main(
        [
            "attack",
            "--oracle", "linear:/definitely/missing.pixlw",
            "--image", str(toy_png),
            "--label", "0",
        ]
    )
    assert code == EXIT_ERROR
    assert "error:" in capsys.readouterr().err


def test_campaign_then_plot(tmp_path, capsys):
    manifest = write_toy_dataset(tmp_path / "data")
    out_dir = tmp_path / "campaign"
    code = main(
        [
            "campaign",
            "--oracle", "builtin:pixel-probe",
            "--manifest", str(manifest),
            "--out", str(out_dir),
            *swap_flags(),
        ]
    )
    assert code == EXIT_OK
    assert "success_rate" in capsys.readouterr().out
    assert (out_dir / "report.json").is_file()

    code = main(["plot", "--campaign", str(out_dir)])
    assert code == EXIT_OK
    assert (out_dir / "plots" / "remaining.csv").is_file()


def test_plot_missing_campaign_exit_two(tmp_path):
    assert main(["plot", "--campaign", str(tmp_path / "void")]) == EXIT_ERROR


def test_matrix_command(tmp_path, capsys):
    manifest = write_toy_dataset(tmp_path / "data")
    code = main(
        [
            "matrix",
            "--oracle", "builtin:pixel-probe",
            "--manifest", str(manifest),
            "--per-pair-quota", "1",
            "--restarts", "20",
            *swap_flags()[:-2],  # drop the seed to use the default
        ]
    )
    assert code == EXIT_OK
    assert "overall_success_rate" in capsys.readouterr().out


def test_seed_env_fallback(toy_png, tmp_path, monkeypatch):
    monkeypatch.setenv("PIXLE_SEED", "777")
    out_dir = tmp_path / "seeded"
    code = main(
        [
            "attack",
            "--oracle", "builtin:pixel-probe",
            "--image", str(toy_png),
            "--label", "0",
            "--out", str(out_dir),
            "--patch-min", "1", "--patch-max", "1", "--mode", "swap",
        ]
    )
    assert code == EXIT_OK
    outcome = json.loads((out_dir / "toy_outcome.json").read_text())
    assert outcome["config_echo"]["seed"] == 777


def test_identical_invocations_identical_outputs(toy_png, tmp_path):
    dirs = [tmp_path / "a", tmp_path / "b"]
    for out_dir in dirs:
        assert (
            main(
                [
                    "attack",
                    "--oracle", "builtin:pixel-probe",
                    "--image", str(toy_png),
                    "--label", "0",
                    "--out", str(out_dir),
                    *swap_flags(),
                ]
            )
            == EXIT_OK
        )
    adv = [(d / "toy_adv.png").read_bytes() for d in dirs]
    traj = [(d / "toy_trajectory.csv").read_bytes() for d in dirs]
    assert adv[0] == adv[1]
    assert traj[0] == traj[1]


def test_campaign_workers_byte_identical(tmp_path):
    manifest = write_toy_dataset(tmp_path / "data")
    outputs = {}
    for workers, out_dir in (("1", tmp_path / "w1"), ("4", tmp_path / "w4")):
        code = main(
            [
                "campaign",
                "--oracle", "builtin:pixel-probe",
                "--manifest", str(manifest),
                "--workers", workers,
                "--out", str(out_dir),
                *swap_flags(),
            ]
        )
        assert code == EXIT_OK
        outputs[workers] = (out_dir / "per_image.csv").read_bytes()
    assert outputs["1"] == outputs["4"]


def test_help_documents_defaults(capsys):
    with pytest.raises(SystemExit):
        main(["attack", "--help"])
    out = capsys.readouterr().out
    assert "default: restart" in out
    assert "default: 100" in out
    assert "PIXLE_SEED" in out
