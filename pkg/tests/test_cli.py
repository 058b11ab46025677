"""End-to-end command-line flows driven in-process through main()."""

import json

import numpy as np
import pytest

from tilkit import read_result
from tilkit.cli import EXIT_BACKEND, EXIT_OK, EXIT_PARTIAL, EXIT_VALIDATION, main
from tilkit.errors import BackendUnavailableError

from conftest import HEIGHT, planted_track, two_valley_track


def write_script(tmp_path, scripts, name="script.json"):
    path = tmp_path / name
    path.write_text(json.dumps(scripts))
    return path


def localize_args(manifest, out, script, **extra):
    args = [
        "localize", str(manifest),
        "--sampling", "sass-2d",
        "--n-ac", "1",
        "--vlm-backend", "scripted",
        "--script", str(script),
        "--out", str(out),
    ]
    for k, v in extra.items():
        args += [f"--{k.replace('_', '-')}", str(v)]
    return args


PERFECT = {"discriminator": ["contact"], "localizer": ["2"], "checker": ["Yes"]}


class TestDynamicsCommand:
    def test_writes_profile_and_plot(self, valley_video, tmp_path, capsys):
        out = tmp_path / "dyn"
        code = main(["dynamics", str(valley_video), "--sampling", "sass-2d", "--out", str(out)])
        assert code == EXIT_OK
        data = json.loads((out / "valley20_dynamics.json").read_text())
        assert data["zero_accel_times"][0] == pytest.approx(20.0, abs=0.05)
        assert (out / "valley20_dynamics.svg").stat().st_size > 1000
        assert "zero-acceleration times" in capsys.readouterr().out

    def test_smoothing_flags(self, valley_video, tmp_path):
        out = tmp_path / "dyn2"
        code = main([
            "dynamics", str(valley_video), "--sampling", "sass-2d",
            "--sg-window", "5", "--sg-order", "2", "--out", str(out),
        ])
        assert code == EXIT_OK
        data = json.loads((out / "valley20_dynamics.json").read_text())
        assert data["zero_accel_times"][0] == pytest.approx(20.0, abs=0.05)

    def test_static_camera_3d(self, valley_video, tmp_path):
        out = tmp_path / "dyn3"
        code = main([
            "dynamics", str(valley_video), "--sampling", "sass-3d",
            "--static-camera", "--out", str(out),
        ])
        assert code == EXIT_OK
        data = json.loads((out / "valley20_dynamics.json").read_text())
        assert data["zero_accel_times"][0] == pytest.approx(20.0, abs=0.05)

    def test_bad_manifest(self, tmp_path, capsys):
        code = main(["dynamics", str(tmp_path / "missing.json"), "--out", str(tmp_path)])
        assert code == EXIT_VALIDATION
        assert "error" in capsys.readouterr().err


class TestLocalizeCommand:
    def test_scripted_egoloc(self, valley_video, tmp_path, capsys):
        out = tmp_path / "results"
        script = write_script(tmp_path, PERFECT)
        audit = tmp_path / "audit.jsonl"
        code = main(localize_args(valley_video, out, script, audit=audit))
        assert code == EXIT_OK
        result = read_result(out / "valley20.til.json")
        assert result.contacts == (20,)
        assert result.separations == ()
        assert len(audit.read_text().splitlines()) == 3
        assert "valley20" in capsys.readouterr().out

    def test_directory_target(self, valley_video, tmp_path):
        out = tmp_path / "results"
        script = write_script(tmp_path, PERFECT)
        code = main(localize_args(valley_video.parent, out, script))
        assert code == EXIT_OK
        assert (out / "valley20.til.json").is_file()

    def test_trials_write_separate_files(self, valley_video, tmp_path):
        out = tmp_path / "results"
        script = write_script(
            tmp_path, {k: v * 2 for k, v in PERFECT.items()}
        )
        code = main(localize_args(valley_video, out, script, trials=2))
        assert code == EXIT_OK
        r0 = read_result(out / "valley20.trial0.til.json")
        r1 = read_result(out / "valley20.trial1.til.json")
        assert r0.contacts == r1.contacts == (20,)
        assert r0.config_digest != r1.config_digest

    def test_threshold_mode(self, video_factory, tmp_path):
        dists = [0.05, 0.04, 0.02, 0.01, 0.01, 0.04, 0.05]
        manifest = video_factory(
            video_id="pinch", n=7,
            wrist=np.stack([np.linspace(30, 60, 7), np.full(7, HEIGHT / 2)], axis=1),
            index_tip_3d=[[0.0, 0.0, 0.5]] * 7,
            thumb_tip_3d=[[d, 0.0, 0.5] for d in dists],
        )
        out = tmp_path / "results"
        code = main([
            "localize", str(manifest), "--mode", "threshold",
            "--threshold", "0.03", "--out", str(out),
        ])
        assert code == EXIT_OK
        result = read_result(out / "pinch.til.json")
        assert result.contacts == (3,)
        assert result.separations == (6,)

    def test_greedy_mode(self, valley_video, tmp_path):
        out = tmp_path / "results"
        script = write_script(tmp_path, {"localizer": ["2", "4"]})
        code = main([
            "localize", str(valley_video), "--mode", "greedy", "--n-adj", "2",
            "--vlm-backend", "scripted", "--script", str(script), "--out", str(out),
        ])
        assert code == EXIT_OK
        result = read_result(out / "valley20.til.json")
        assert result.mode == "greedy"
        assert len(result.contacts) == len(result.separations) == 1

    def test_scripted_without_script_flag(self, valley_video, tmp_path, capsys):
        code = main([
            "localize", str(valley_video), "--sampling", "sass-2d",
            "--vlm-backend", "scripted", "--out", str(tmp_path),
        ])
        assert code == EXIT_VALIDATION
        assert "--script" in capsys.readouterr().err

    def test_backend_dead_from_start(self, valley_video, tmp_path, monkeypatch, capsys):
        class DeadBackend:
            def __init__(self, base_url, model):
                pass

            def complete(self, request):
                raise BackendUnavailableError("refused")

        monkeypatch.setattr("tilkit.cli.HttpBackend", DeadBackend)
        code = main([
            "localize", str(valley_video), "--sampling", "sass-2d", "--n-ac", "1",
            "--out", str(tmp_path / "r"),
        ])
        assert code == EXIT_BACKEND
        assert "backend" in capsys.readouterr().err

    def test_backend_dies_midway(self, two_event_video, tmp_path, monkeypatch, capsys):
        responses = ["contact", "2", "Yes"]

        class DyingBackend:
            def __init__(self, base_url, model):
                self.replies = list(responses)

            def complete(self, request):
                if not self.replies:
                    raise BackendUnavailableError("went away")
                return self.replies.pop(0)

        monkeypatch.setattr("tilkit.cli.HttpBackend", DyingBackend)
        out = tmp_path / "r"
        code = main([
            "localize", str(two_event_video), "--sampling", "sass-2d", "--n-ac", "1",
            "--out", str(out),
        ])
        assert code == EXIT_PARTIAL
        result = read_result(out / "twoevent.til.json")
        assert result.contacts == (15,)
        assert result.diagnostics.partial
        assert "partial" in capsys.readouterr().err


class TestEvaluateCommand:
    def localized(self, manifest, tmp_path, video_id):
        out = tmp_path / "results"
        script = write_script(tmp_path, PERFECT, name=f"{video_id}.script.json")
        assert main(localize_args(manifest, out, script)) == EXIT_OK
        return out

    def test_perfect_prediction_scores(self, valley_video, tmp_path, capsys):
        out = self.localized(valley_video, tmp_path, "valley20")
        code = main([
            "evaluate", str(out), "--manifests", str(valley_video),
            "--gamma", "1,3",
        ])
        assert code == EXIT_OK
        text = capsys.readouterr().out
        assert "valley20" in text
        assert "SR@1" in text and "SR@3" in text
        assert "1.0000" in text
        assert "0.00" in text  # exact MAE

    def test_report_written_to_file(self, valley_video, tmp_path):
        out = self.localized(valley_video, tmp_path, "valley20")
        report = tmp_path / "report.txt"
        code = main([
            "evaluate", str(out), "--manifests", str(valley_video), "--out", str(report),
        ])
        assert code == EXIT_OK
        assert "valley20" in report.read_text()

    def test_no_ground_truth_match(self, video_factory, tmp_path, capsys):
        manifest = video_factory(video_id="nogt", n=8)
        out = tmp_path / "results"
        script = write_script(tmp_path, PERFECT)
        assert main(localize_args(manifest, out, script, seed=0)) == EXIT_OK
        code = main(["evaluate", str(out), "--manifests", str(manifest)])
        assert code == EXIT_VALIDATION
        assert "ground truth" in capsys.readouterr().err

    def test_bad_gamma(self, valley_video, tmp_path, capsys):
        out = self.localized(valley_video, tmp_path, "valley20")
        code = main(["evaluate", str(out), "--manifests", str(valley_video), "--gamma", "x"])
        assert code == EXIT_VALIDATION
        assert "--gamma" in capsys.readouterr().err


class TestPlotCommand:
    def test_plot_with_result(self, valley_video, tmp_path):
        out = tmp_path / "results"
        script = write_script(tmp_path, PERFECT)
        assert main(localize_args(valley_video, out, script)) == EXIT_OK
        target = tmp_path / "plot.svg"
        code = main([
            "plot", str(valley_video), str(out / "valley20.til.json"),
            "--sampling", "sass-2d", "--out", str(target),
        ])
        assert code == EXIT_OK
        assert target.stat().st_size > 1000
