import json

import numpy as np
import pytest

from garmentwarp import PipelineConfig, StageError, ValidationError, run_pipeline
from garmentwarp import io as gio
from garmentwarp.cli import main as cli_main
from garmentwarp.fixtures import identity_fixture, smoke_fixture, write_fixture


@pytest.fixture(scope="module")
def smoke_paths(tmp_path_factory):
    out = tmp_path_factory.mktemp("fixture")
    return write_fixture(smoke_fixture(64), out)


@pytest.fixture(scope="module")
def smoke_run(smoke_paths, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    result = run_pipeline(PipelineConfig(), smoke_paths, out)
    return result


class TestRunPipeline:
    def test_smoke_completes_with_all_outputs(self, smoke_run):
        names = set(smoke_run.manifest["outputs"])
        expected = {"pose_model.ct", "pose_target.ct", "corr_dense.ct",
                    "corr_tps.ct", "clothes_model.png", "warp_dense.png",
                    "layout_warped.png", "control_grid.json",
                    "tps_transform.json", "warp_tps.png", "layout_pred.png",
                    "layout_merged.png", "clothes_masked.png",
                    "body_nontarget.png", "attention_mask.png", "fused.png",
                    "losses.json", "metrics.json"}
        assert expected <= names

    def test_manifest_stable_across_runs(self, smoke_paths, smoke_run, tmp_path):
        again = run_pipeline(PipelineConfig(), smoke_paths, tmp_path / "b")
        assert again.manifest == smoke_run.manifest

    def test_worker_count_does_not_change_outputs(self, smoke_paths, smoke_run,
                                                  tmp_path):
        many = run_pipeline(PipelineConfig(workers=8), smoke_paths,
                            tmp_path / "w8")
        assert many.manifest["outputs"] == smoke_run.manifest["outputs"]

    def test_losses_report_complete(self, smoke_run):
        report = smoke_run.losses
        for name in ("l1", "tps", "layout", "perceptual", "style",
                     "contextual", "adversarial", "regularizer"):
            assert {"value", "weight", "weighted"} <= set(report[name])
        assert np.isfinite(report["total"])

    def test_metrics_schema(self, smoke_run):
        m = smoke_run.metrics
        assert set(m) == {"warp_ssim", "mask_ssim", "h_ssim", "losses"}
        assert set(m["losses"]) == {"l1", "tps", "layout", "perceptual",
                                    "style", "contextual", "adv", "reg",
                                    "total"}

    def test_missing_input_key_rejected(self, smoke_paths, tmp_path):
        inputs = dict(smoke_paths)
        del inputs["model_image"]
        with pytest.raises(ValidationError, match="model_image"):
            run_pipeline(PipelineConfig(), inputs, tmp_path / "x")

    def test_missing_file_is_stage_named_error(self, smoke_paths, tmp_path):
        inputs = dict(smoke_paths)
        inputs["model_image"] = str(tmp_path / "nope.png")
        with pytest.raises(StageError) as err:
            run_pipeline(PipelineConfig(), inputs, tmp_path / "x")
        assert err.value.stage == "load-inputs"

    def test_bad_layout_size_aborts_with_stage(self, smoke_paths, tmp_path):
        from garmentwarp import SegmentationMap
        inputs = dict(smoke_paths)
        small = tmp_path / "small_layout.png"
        gio.save_segmentation(
            SegmentationMap(np.zeros((32, 32), dtype=np.uint8)), small)
        inputs["model_layout"] = str(small)
        with pytest.raises(StageError) as err:
            run_pipeline(PipelineConfig(), inputs, tmp_path / "x")
        assert err.value.stage == "load-inputs"
        assert "model_layout" in str(err.value)

    def test_identity_mask_flag(self, smoke_paths, tmp_path):
        result = run_pipeline(PipelineConfig(), smoke_paths, tmp_path / "m",
                              identity_mask=0.25)
        assert result.losses["regularizer"]["value"] == 0.75


class TestIdentityFixture:
    def test_self_transfer_quality(self, tmp_path):
        paths = write_fixture(identity_fixture(64), tmp_path / "fix")
        result = run_pipeline(PipelineConfig(), paths, tmp_path / "out")
        assert result.metrics["warp_ssim"] >= 0.99
        tps = gio.load_tensor(tmp_path / "out" / "warp_tps.ct")
        fused = gio.load_tensor(tmp_path / "out" / "fused.ct")
        assert tps.data.tobytes() == fused.data.tobytes()


class TestCli:
    def test_fixture_and_pipeline_commands(self, tmp_path, capsys):
        fix = tmp_path / "fix"
        assert cli_main(["fixture", "--kind", "smoke", "--out", str(fix)]) == 0
        code = cli_main([
            "pipeline",
            "--model-image", str(fix / "model_image.png"),
            "--model-keypoints", str(fix / "model_keypoints.json"),
            "--model-layout", str(fix / "model_layout.png"),
            "--target-keypoints", str(fix / "target_keypoints.json"),
            "--target-body", str(fix / "target_body.png"),
            "--target-preserved", str(fix / "target_preserved.png"),
            "--gt-clothes", str(fix / "gt_clothes.png"),
            "--out", str(tmp_path / "out"),
        ])
        assert code == 0
        assert (tmp_path / "out" / "manifest.json").exists()

    def test_exit_code_validation_error(self, tmp_path):
        bad = tmp_path / "config.json"
        bad.write_text(json.dumps({"alpha": 100.0, "bogus_key": 1}))
        code = cli_main(["distance-field", "--keypoints", "nope.json",
                         "--config", str(bad), "--out", str(tmp_path / "o.ct")])
        assert code == 2

    def test_exit_code_io_error(self, tmp_path):
        missing = tmp_path / "missing.ct"
        code = cli_main(["warp-dense", "--matrix", str(missing),
                         "--image", str(missing), "--out", str(tmp_path / "o.png")])
        assert code == 4

    def test_exit_code_corrupt_tensor(self, tmp_path):
        bad = tmp_path / "bad.ct"
        bad.write_bytes(b"JUNKJUNKJUNK")
        code = cli_main(["metrics", "--inception-probs", str(bad)])
        assert code == 4

    def test_inception_score_command(self, tmp_path, capsys):
        from garmentwarp import Tensor
        probs = tmp_path / "probs.ct"
        gio.save_tensor(Tensor(np.full((4, 5), 0.2)), probs)
        assert cli_main(["metrics", "--inception-probs", str(probs)]) == 0
        assert "1.0" in capsys.readouterr().out


@pytest.fixture(scope="module")
def chained(tmp_path_factory):
    root = tmp_path_factory.mktemp("compose")
    fix = root / "fix"
    write_fixture(smoke_fixture(64), fix)
    pipe_out = root / "pipeline"
    inputs = {
        "model_image": str(fix / "model_image.png"),
        "model_keypoints": str(fix / "model_keypoints.json"),
        "model_layout": str(fix / "model_layout.png"),
        "target_keypoints": str(fix / "target_keypoints.json"),
        "target_body": str(fix / "target_body.png"),
        "target_preserved": str(fix / "target_preserved.png"),
        "gt_clothes": str(fix / "gt_clothes.png"),
    }
    run_pipeline(PipelineConfig(), inputs, pipe_out)
    cli_out = root / "chain"
    cli_out.mkdir()

    def run(*argv):
        assert cli_main(list(argv)) == 0

    run("distance-field", "--keypoints", inputs["model_keypoints"],
        "--out", str(cli_out / "df_model.ct"))
    run("distance-field", "--keypoints", inputs["target_keypoints"],
        "--out", str(cli_out / "df_target.ct"))
    run("correspond", "--model-image", inputs["model_image"],
        "--model-df", str(cli_out / "df_model.ct"),
        "--target-df", str(cli_out / "df_target.ct"),
        "--out-dense", str(cli_out / "mdis.ct"),
        "--out-tps", str(cli_out / "mtps.ct"))
    run("warp-dense", "--matrix", str(cli_out / "mdis.ct"),
        "--image", str(pipe_out / "clothes_model.ct"),
        "--out", str(cli_out / "wc.png"))
    run("warp-layout", "--matrix", str(cli_out / "mdis.ct"),
        "--layout", inputs["model_layout"],
        "--out", str(cli_out / "wm.png"))
    run("tps-fit", "--matrix", str(cli_out / "mtps.ct"),
        "--out", str(cli_out / "transform.json"),
        "--out-control", str(cli_out / "control.json"))
    run("tps-apply", "--transform", str(cli_out / "transform.json"),
        "--image", str(pipe_out / "clothes_model.ct"),
        "--out", str(cli_out / "tc.png"),
        "--out-tensor", str(cli_out / "tc.ct"))
    run("layout-merge", "--pred", str(cli_out / "wm.png"),
        "--preserved", inputs["target_preserved"],
        "--out", str(cli_out / "rtg.png"))
    run("fuse", "--tps", str(cli_out / "tc.ct"),
        "--out", str(cli_out / "fused.png"),
        "--out-tensor", str(cli_out / "fused.ct"))
    run("losses", "--fused", str(cli_out / "fused.ct"),
        "--reference", inputs["target_body"],
        "--warped-tps", str(pipe_out / "warp_tps.ct"),
        "--gt-clothes", inputs["gt_clothes"],
        "--model-clothes", str(pipe_out / "clothes_model.ct"),
        "--control", str(cli_out / "control.json"),
        "--pred-layout", str(cli_out / "wm.png"),
        "--merged-layout", str(cli_out / "rtg.png"),
        "--out", str(cli_out / "losses.json"))
    run("metrics", "--warp", str(pipe_out / "warp_dense.ct"),
        "--fused", str(cli_out / "fused.ct"),
        "--reference", inputs["target_body"],
        "--gt-clothes", inputs["gt_clothes"],
        "--merged-layout", str(cli_out / "rtg.png"),
        "--losses", str(cli_out / "losses.json"),
        "--out", str(cli_out / "metrics.json"))
    return pipe_out, cli_out


class TestCliComposition:
    """Stage-by-stage CLI runs reproduce the pipeline's files exactly."""

    @pytest.mark.parametrize("pipeline_name,chain_name", [
        ("pose_model.ct", "df_model.ct"),
        ("pose_target.ct", "df_target.ct"),
        ("corr_dense.ct", "mdis.ct"),
        ("corr_tps.ct", "mtps.ct"),
        ("warp_dense.png", "wc.png"),
        ("layout_warped.png", "wm.png"),
        ("control_grid.json", "control.json"),
        ("tps_transform.json", "transform.json"),
        ("warp_tps.png", "tc.png"),
        ("layout_merged.png", "rtg.png"),
        ("fused.png", "fused.png"),
        ("losses.json", "losses.json"),
        ("metrics.json", "metrics.json"),
    ])
    def test_stage_output_matches_pipeline(self, chained, pipeline_name,
                                           chain_name):
        pipe_out, cli_out = chained
        assert (pipe_out / pipeline_name).read_bytes() == \
            (cli_out / chain_name).read_bytes()
