"""Manifest validation, result round-trips, profile dumps, and plots."""

import json
import shutil

import numpy as np
import pytest

from tilkit import (
    AdjacentWindow,
    Diagnostics,
    EventRecord,
    PixelBox,
    TILResult,
    dump_profile,
    dynamics_profile,
    find_manifests,
    load_manifest,
    plot_dynamics,
    read_result,
    write_result,
)
from tilkit.errors import ManifestError, ResultParseError

from conftest import HEIGHT, WIDTH, planted_track


def mutate(manifest_path, fn):
    """Rewrite a manifest after applying fn to its parsed dict."""
    data = json.loads(manifest_path.read_text())
    fn(data)
    manifest_path.write_text(json.dumps(data))
    return manifest_path


class TestLoadManifest:
    def test_full_video(self, valley_video):
        video = load_manifest(valley_video)
        assert video.id == "valley20"
        assert video.n_obs == 40
        assert video.fps == 30.0
        assert video.has_depth
        assert video.intrinsics.fx == 100.0
        assert video.wrist.shape == (40, 2)
        assert video.ground_truth == {"contacts": [20], "separations": []}
        frame = video.load_frame(1)
        assert frame.shape == (HEIGHT, WIDTH, 3) and frame.dtype == np.uint8
        depth = video.load_depth(1)
        assert depth.dtype == np.float64
        assert depth.shape == (HEIGHT, WIDTH)
        assert np.allclose(depth, 1.0)

    def test_minimal_video(self, video_factory):
        video = load_manifest(video_factory(video_id="mini", n=5, with_depth=False))
        assert not video.has_depth
        assert video.keypoints_at(1) is None
        assert video.box_at(1) is None
        assert video.index_tip_3d is None
        assert video.ground_truth is None
        with pytest.raises(ManifestError):
            video.load_depth(1)

    def test_optional_hand_annotations(self, video_factory):
        kp = [None] * 5
        kp[2] = [[30.0, 40.0], [35.0, 45.0]]
        boxes = [None] * 5
        boxes[2] = [10, 12, 50, 60]
        tips = [[0.0, 0.0, 0.5]] * 5
        path = video_factory(
            video_id="anno", n=5, keypoints=kp, boxes=boxes,
            index_tip_3d=tips, thumb_tip_3d=tips,
        )
        video = load_manifest(path)
        assert video.keypoints_at(1) is None
        assert video.keypoints_at(3).shape == (2, 2)
        assert video.box_at(3) == PixelBox(10, 12, 50, 60)
        assert video.index_tip_3d.shape == (5, 3)

    def test_gt_sorted_on_load(self, video_factory):
        path = video_factory(video_id="unsorted", n=10,
                             gt={"contacts": [7, 2], "separations": [9, 8]})
        video = load_manifest(path)
        assert video.ground_truth == {"contacts": [2, 7], "separations": [8, 9]}

    def test_frame_index_bounds(self, video_factory):
        video = load_manifest(video_factory(video_id="b", n=4))
        with pytest.raises(ManifestError):
            video.load_frame(0)
        with pytest.raises(ManifestError):
            video.load_frame(5)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ManifestError, match="not found"):
            load_manifest(tmp_path / "nope.json")

    def test_invalid_json_reports_position(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text('{"id": }')
        with pytest.raises(ManifestError, match=r"bad\.json:1:\d+: invalid JSON"):
            load_manifest(bad)

    @pytest.mark.parametrize(
        "edit,needle",
        [
            (lambda d: d.update(schema_version=2), "schema_version"),
            (lambda d: d.pop("id"), "id: required"),
            (lambda d: d.update(fps=0), "fps"),
            (lambda d: d.update(width=0), "width"),
            (lambda d: d.update(depth_scale=-1), "depth_scale"),
            (lambda d: d["frames"].pop(), "depth: 5 entries but frames has 4"),
            (lambda d: d.pop("intrinsics"), "intrinsics: required when depth"),
            (lambda d: d["intrinsics"].pop("fx"), "intrinsics.fx"),
            (lambda d: d.pop("hand"), "hand"),
            (lambda d: d["hand"].pop("wrist"), "hand.wrist: required"),
            (lambda d: d["hand"]["wrist"].pop(), "hand.wrist: 4 entries but frames has 5"),
            (lambda d: d["hand"]["wrist"].__setitem__(0, None), r"hand.wrist\[0\]: null"),
            (lambda d: d["hand"]["wrist"].__setitem__(0, [1.0]), r"hand.wrist\[0\]"),
            (lambda d: d.update(ground_truth={"contacts": [0]}),
             r"ground_truth.contacts\[0\]: 0 outside \[1, 5\] \(1-based\)"),
            (lambda d: d.update(ground_truth={"contacts": [1.5]}), "must be an integer"),
            (lambda d: d["hand"].update(keypoints=[None, None]),
             "hand.keypoints: 2 entries but frames has 5"),
            (lambda d: d["hand"].update(boxes=[[5, 5, 1, 1]] + [None] * 4),
             r"hand.boxes\[0\]: inverted"),
        ],
    )
    def test_validation_errors_name_the_field(self, video_factory, edit, needle):
        path = video_factory(video_id="err", n=5)
        mutate(path, edit)
        with pytest.raises(ManifestError, match=needle):
            load_manifest(path)

    def test_missing_frame_file(self, video_factory):
        path = video_factory(video_id="gone", n=5)
        (path.parent / "rgb" / "0002.png").unlink()
        with pytest.raises(ManifestError, match=r"frames\[1\].*not found"):
            load_manifest(path)


class TestFindManifests:
    def test_single_file(self, valley_video):
        assert find_manifests(valley_video) == [valley_video]

    def test_directory_sorted(self, tmp_path, video_factory):
        a = video_factory(video_id="vb", n=4)
        b = video_factory(video_id="va", n=4)
        flat = tmp_path / "flat"
        flat.mkdir()
        shutil.copy(a, flat / "vb.json")
        shutil.copy(b, flat / "va.json")
        found = find_manifests(flat)
        assert [p.name for p in found] == ["va.json", "vb.json"]

    def test_empty_directory(self, tmp_path):
        empty = tmp_path / "none"
        empty.mkdir()
        with pytest.raises(ManifestError):
            find_manifests(empty)


def sample_result():
    window = AdjacentWindow(frames=(19, 20, 21, 22), anchor_position=2)
    events = (
        EventRecord(
            plan_id=1, anchor=20, attribute="contact", window=window,
            round1_time=20, checker_verdict="accept", round2_time=None,
            final_time=20, resample_count=0,
        ),
        EventRecord(
            plan_id=2, anchor=21, attribute="separation", window=window,
            round1_time=20, checker_verdict="reject", round2_time=22,
            final_time=22, resample_count=1,
            flags=("round 1: tile unparseable, fell back to the anchor tile",),
        ),
    )
    diag = Diagnostics(
        plans_total=3, plans_resolved=2, plans_unresolved=1, draws_total=4,
        unparseable_tile=1, notes=["plan 3 (t=30): 1 draw(s), no attribute found"],
    )
    return TILResult(
        contacts=(20,), separations=(22,), events=events, diagnostics=diag,
        video_id="rt", n_obs=40, mode="egoloc", sampling="sass-3d",
        config_digest="abc123",
    )


class TestResultRoundTrip:
    def test_field_for_field(self, tmp_path):
        path = tmp_path / "out" / "rt.til.json"
        write_result(sample_result(), path)
        back = read_result(path)
        orig = sample_result()
        assert back.contacts == orig.contacts
        assert back.separations == orig.separations
        assert back.video_id == orig.video_id
        assert back.n_obs == orig.n_obs
        assert back.mode == orig.mode
        assert back.sampling == orig.sampling
        assert back.config_digest == orig.config_digest
        assert back.events == orig.events
        assert back.diagnostics == orig.diagnostics

    def test_empty_result(self, tmp_path):
        empty = TILResult(
            contacts=(), separations=(), events=(), diagnostics=Diagnostics(),
            video_id="e", n_obs=10, mode="threshold", sampling="sass-2d",
        )
        path = write_result(empty, tmp_path / "e.til.json")
        back = read_result(path)
        assert back.contacts == () and back.events == ()
        assert back.mode == "threshold"

    def test_deterministic_bytes(self, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        write_result(sample_result(), a)
        write_result(sample_result(), b)
        assert a.read_bytes() == b.read_bytes()

    def test_unknown_fields_warn_but_read(self, tmp_path):
        path = tmp_path / "x.til.json"
        write_result(sample_result(), path)
        data = json.loads(path.read_text())
        data["future_field"] = 1
        data["events"][0]["novel"] = True
        data["diagnostics"]["extra_counter"] = 9
        path.write_text(json.dumps(data))
        with pytest.warns(UserWarning) as caught:
            back = read_result(path)
        messages = " | ".join(str(w.message) for w in caught)
        assert "future_field" in messages
        assert "events[0].novel" in messages
        assert "diagnostics.extra_counter" in messages
        assert back.contacts == (20,)

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.til.json"
        path.write_text('{"kind": "til_result",\n  broken')
        with pytest.raises(ResultParseError, match=r"bad\.til\.json:2"):
            read_result(path)

    def test_wrong_kind(self, tmp_path):
        path = tmp_path / "other.json"
        path.write_text(json.dumps({"kind": "something_else"}))
        with pytest.raises(ResultParseError, match="not a til_result"):
            read_result(path)


def planted_profile(n=40, valley=20):
    us = planted_track(n, valley)
    speeds = np.abs(np.diff(us, append=us[-1] + (us[-1] - us[-2]))) * 30.0
    return dynamics_profile(speeds, dt=1 / 30.0, window=7, order=3)


class TestProfileDump:
    def test_json_payload(self, tmp_path):
        profile = planted_profile()
        path = dump_profile(profile, tmp_path / "p.json")
        data = json.loads(path.read_text())
        assert data["kind"] == "dynamics_profile"
        assert len(data["speeds"]) == 40
        assert len(data["zero_accel_times"]) == 1
        assert data["zero_accel_times"][0] == pytest.approx(20.0, abs=0.1)
        assert data["degraded"] is False


class TestPlotDynamics:
    def test_svg_created_and_deterministic(self, tmp_path):
        profile = planted_profile()
        result = sample_result()
        gt = {"contacts": [20], "separations": []}
        a = plot_dynamics(profile, result, gt, tmp_path / "a.svg")
        b = plot_dynamics(profile, result, gt, tmp_path / "b.svg")
        assert a.stat().st_size > 1000
        assert a.read_bytes() == b.read_bytes()

    def test_png_without_result_or_gt(self, tmp_path):
        path = plot_dynamics(planted_profile(), None, None, tmp_path / "p.png")
        assert path.stat().st_size > 1000
