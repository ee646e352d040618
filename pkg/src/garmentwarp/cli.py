"""Command-line interface.

Subcommands mirror the pipeline stages so results can be produced end to end
(`pipeline`) or stage by stage and composed; both routes give identical
files.  Exit codes: 0 success, 2 validation error, 3 numerical failure,
4 file/IO error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import io as gio
from .config import PipelineConfig
from .correspondence import (aggregate_features, correspondence_matrix,
                             encode_features, encoder_pyramid)
from .errors import NumericalError, StageError, TensorFileError, ValidationError
from .fixtures import FIXTURES, write_fixture
from .fusion import AttentionMask, attention_regularizer, fuse_attention
from .layout import merge_layout, one_hot_encode, warp_layout, cross_entropy_loss
from .losses import (FeaturePyramid, adversarial_loss, contextual_loss,
                     l1_loss, perceptual_loss, style_loss, total_loss)
from .metrics import inception_score, masked_ssim
from .pipeline import MODEL_SLOT_OFFSET, POSE_SLOT_OFFSET, run_pipeline
from .pose import distance_fields
from .tensor import Tensor
from .warping import (dense_warp_image, soft_argmax_control_points, tps_apply,
                      tps_fit, tps_loss)


def _load_image_any(path):
    """Image file or binary tensor, by extension (tensors stay lossless)."""
    if str(path).endswith(".ct"):
        return gio.load_tensor(path)
    return gio.load_image(path)


def _config_from(args) -> PipelineConfig:
    config = PipelineConfig.from_json(args.config) if getattr(args, "config", None) \
        else PipelineConfig()
    overrides = {}
    for name in ("encoder_seed", "alpha", "workers", "control_grid"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    return config.replace(**overrides) if overrides else config


def _add_config_options(sub):
    sub.add_argument("--config", help="pipeline config JSON (defaults apply otherwise)")
    sub.add_argument("--encoder-seed", dest="encoder_seed", type=int)
    sub.add_argument("--alpha", type=float)
    sub.add_argument("--workers", type=int)


def cmd_fixture(args):
    pair = FIXTURES[args.kind](args.size)
    paths = write_fixture(pair, args.out)
    print("\n".join(f"{k}: {v}" for k, v in sorted(paths.items())))


def cmd_distance_field(args):
    config = _config_from(args)
    keypoints = gio.load_keypoints(args.keypoints)
    field = distance_fields(keypoints, workers=config.workers)
    gio.save_tensor(field.field, args.out)
    print(f"wrote {args.out}")


def cmd_correspond(args):
    config = _config_from(args)
    model_image = gio.load_image(args.model_image)
    pose_model = gio.load_tensor(args.model_df).data
    pose_target = gio.load_tensor(args.target_df).data
    stack = np.concatenate([model_image.data, pose_model], axis=2)
    feat_model = encode_features(stack, config.encoder_seed,
                                 slot_offset=MODEL_SLOT_OFFSET, source="model+pose")
    feat_target = encode_features(pose_target, config.encoder_seed,
                                  slot_offset=POSE_SLOT_OFFSET, source="target-pose")
    m_dis = correspondence_matrix(
        aggregate_features(feat_target, config.dense_window),
        aggregate_features(feat_model, config.dense_window), config.workers)
    m_tps = correspondence_matrix(
        aggregate_features(feat_target, config.tps_window),
        aggregate_features(feat_model, config.tps_window), config.workers)
    gio.save_matrix(m_dis, args.out_dense)
    gio.save_matrix(m_tps, args.out_tps)
    print(f"wrote {args.out_dense} and {args.out_tps}")


def cmd_warp_dense(args):
    config = _config_from(args)
    matrix = gio.load_matrix(args.matrix)
    image = _load_image_any(args.image)
    warped = dense_warp_image(matrix, image, config.alpha, config.workers)
    gio.save_image(warped, args.out)
    if args.out_tensor:
        gio.save_tensor(warped, args.out_tensor)
    print(f"wrote {args.out}")


def cmd_warp_layout(args):
    config = _config_from(args)
    matrix = gio.load_matrix(args.matrix)
    layout = gio.load_segmentation(args.layout)
    warped = warp_layout(matrix, layout, config.alpha, config.workers)
    gio.save_segmentation(warped, args.out)
    print(f"wrote {args.out}")


def cmd_tps_fit(args):
    config = _config_from(args)
    if args.control:
        control = gio.load_control_grid(args.control)
    else:
        matrix = gio.load_matrix(args.matrix)
        control = soft_argmax_control_points(matrix, config.control_grid,
                                             config.alpha)
    transform = tps_fit(control, config.lambda_kernel)
    if args.out_control:
        gio.save_control_grid(control, args.out_control)
    gio.save_transform(transform, args.out)
    print(f"wrote {args.out}")


def cmd_tps_apply(args):
    transform = gio.load_transform(args.transform)
    image = _load_image_any(args.image)
    warped = tps_apply(transform, image)
    gio.save_image(warped, args.out)
    if args.out_tensor:
        gio.save_tensor(warped, args.out_tensor)
    print(f"wrote {args.out}")


def cmd_layout_merge(args):
    pred = gio.load_segmentation(args.pred)
    preserved = gio.load_segmentation(args.preserved)
    merged = merge_layout(pred, preserved)
    gio.save_segmentation(merged, args.out)
    print(f"wrote {args.out}")


def cmd_fuse(args):
    tps_img = _load_image_any(args.tps)
    generated = _load_image_any(args.generated) if args.generated \
        else Tensor(np.zeros(tps_img.dims))
    if args.mask:
        mask = AttentionMask(gio.load_grayscale(args.mask))
    else:
        mask = AttentionMask.constant(args.identity_mask, tps_img.dims[:2])
    fused = fuse_attention(tps_img, generated, mask)
    gio.save_image(fused, args.out)
    if args.out_tensor:
        gio.save_tensor(fused, args.out_tensor)
    print(f"wrote {args.out}")


def cmd_losses(args):
    config = _config_from(args)
    fused = _load_image_any(args.fused)
    reference = _load_image_any(args.reference)
    warped_tps = _load_image_any(args.warped_tps)
    truth_clothes = _load_image_any(args.gt_clothes)
    control = gio.load_control_grid(args.control)
    pred = gio.load_segmentation(args.pred_layout)
    merged = gio.load_segmentation(args.merged_layout)
    if args.mask:
        mask = AttentionMask(gio.load_grayscale(args.mask))
    else:
        mask = AttentionMask.constant(args.identity_mask, fused.dims[:2])
    seed = config.encoder_seed
    pyr_fused = FeaturePyramid(tuple(encoder_pyramid(fused.data, seed)))
    pyr_truth = FeaturePyramid(tuple(encoder_pyramid(reference.data, seed)))

    def flat(img):
        feats = encoder_pyramid(img.data, seed)[-1].data
        return feats.reshape(-1, feats.shape[2])

    clothes_model = _load_image_any(args.model_clothes)
    components = {
        "l1": l1_loss(fused, reference),
        "tps": tps_loss(warped_tps, truth_clothes, control,
                        config.tps_l1, config.tps_constraint,
                        config.lambda_radius, config.lambda_slope),
        "layout": cross_entropy_loss(one_hot_encode(pred), merged),
        "perceptual": perceptual_loss(pyr_fused, pyr_truth),
        "style": style_loss(pyr_fused, pyr_truth),
        "contextual": contextual_loss(flat(fused), flat(clothes_model)),
        "adversarial": adversarial_loss(np.array([0.5]), np.array([0.5])),
        "regularizer": attention_regularizer(mask),
    }
    _, report = total_loss(components, config.loss_weights)
    gio.write_json(report, args.out)
    print(f"wrote {args.out}")


def cmd_metrics(args):
    if args.inception_probs:
        probs = gio.load_tensor(args.inception_probs)
        print(f"inception_score: {inception_score(probs)!r}")
        return
    needed = ("warp", "fused", "reference", "gt_clothes", "merged_layout", "out")
    missing = [n for n in needed if not getattr(args, n)]
    if missing:
        raise ValidationError(f"metrics needs --{missing[0].replace('_', '-')} "
                              "(or --inception-probs)")
    warped = _load_image_any(args.warp)
    fused = _load_image_any(args.fused)
    reference = _load_image_any(args.reference)
    gt = _load_image_any(args.gt_clothes)
    clothes_mask = gio.load_segmentation(args.merged_layout)
    mask_c = clothes_mask.mask(clothes_mask.palette.clothes)
    mask_h = 1.0 - clothes_mask.mask({0})
    losses = gio.read_json(args.losses) if args.losses else None
    report = {
        "warp_ssim": masked_ssim(warped, gt, mask_c),
        "mask_ssim": masked_ssim(fused, reference, mask_c),
        "h_ssim": masked_ssim(fused, reference, mask_h),
    }
    if losses is not None:
        report["losses"] = {
            "l1": losses["l1"]["value"], "tps": losses["tps"]["value"],
            "layout": losses["layout"]["value"],
            "perceptual": losses["perceptual"]["value"],
            "style": losses["style"]["value"],
            "contextual": losses["contextual"]["value"],
            "adv": losses["adversarial"]["value"],
            "reg": losses["regularizer"]["value"],
            "total": losses["total"],
        }
    gio.write_json(report, args.out)
    print(f"wrote {args.out}")


def cmd_pipeline(args):
    config = _config_from(args)
    inputs = {
        "model_image": args.model_image,
        "model_keypoints": args.model_keypoints,
        "model_layout": args.model_layout,
        "target_keypoints": args.target_keypoints,
        "target_body": args.target_body,
        "target_preserved": args.target_preserved,
    }
    for key in ("pred_layout", "generated", "attention_mask", "gt_clothes"):
        value = getattr(args, key)
        if value:
            inputs[key] = value
    result = run_pipeline(config, inputs, args.out,
                          identity_mask=args.identity_mask)
    print(f"pipeline complete: {result.out_dir / 'manifest.json'}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="garmentwarp",
        description="Geometric warping and loss toolkit for garment transfer")
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("fixture", help="write a bundled synthetic fixture")
    sub.add_argument("--kind", choices=sorted(FIXTURES), default="smoke")
    sub.add_argument("--size", type=int, default=64)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=cmd_fixture)

    sub = subs.add_parser("distance-field", help="keypoints JSON -> distance-field tensor")
    sub.add_argument("--keypoints", required=True)
    sub.add_argument("--out", required=True)
    _add_config_options(sub)
    sub.set_defaults(func=cmd_distance_field)

    sub = subs.add_parser("correspond", help="compute both correspondence matrices")
    sub.add_argument("--model-image", required=True)
    sub.add_argument("--model-df", required=True, help="model distance-field tensor")
    sub.add_argument("--target-df", required=True, help="target distance-field tensor")
    sub.add_argument("--out-dense", required=True)
    sub.add_argument("--out-tps", required=True)
    _add_config_options(sub)
    sub.set_defaults(func=cmd_correspond)

    sub = subs.add_parser("warp-dense", help="dense-warp an image through a matrix")
    sub.add_argument("--matrix", required=True)
    sub.add_argument("--image", required=True)
    sub.add_argument("--out", required=True)
    sub.add_argument("--out-tensor")
    _add_config_options(sub)
    sub.set_defaults(func=cmd_warp_dense)

    sub = subs.add_parser("warp-layout", help="dense-warp a segmentation map")
    sub.add_argument("--matrix", required=True)
    sub.add_argument("--layout", required=True)
    sub.add_argument("--out", required=True)
    _add_config_options(sub)
    sub.set_defaults(func=cmd_warp_layout)

    sub = subs.add_parser("tps-fit", help="control points (soft-argmax) + TPS fit")
    group = sub.add_mutually_exclusive_group(required=True)
    group.add_argument("--matrix", help="TPS-scale correspondence matrix")
    group.add_argument("--control", help="existing control-grid JSON")
    sub.add_argument("--out", required=True, help="transform JSON")
    sub.add_argument("--out-control", help="also write the control grid JSON")
    sub.add_argument("--control-grid", dest="control_grid", type=int)
    _add_config_options(sub)
    sub.set_defaults(func=cmd_tps_fit)

    sub = subs.add_parser("tps-apply", help="warp an image through a TPS transform")
    sub.add_argument("--transform", required=True)
    sub.add_argument("--image", required=True)
    sub.add_argument("--out", required=True)
    sub.add_argument("--out-tensor")
    sub.set_defaults(func=cmd_tps_apply)

    sub = subs.add_parser("layout-merge", help="overlay preserved head/shoes")
    sub.add_argument("--pred", required=True)
    sub.add_argument("--preserved", required=True)
    sub.add_argument("--out", required=True)
    sub.set_defaults(func=cmd_layout_merge)

    sub = subs.add_parser("fuse", help="attention compositing of TPS and generated")
    sub.add_argument("--tps", required=True)
    sub.add_argument("--generated")
    sub.add_argument("--mask")
    sub.add_argument("--identity-mask", type=float, default=1.0,
                     help="constant mask value when no mask file is given")
    sub.add_argument("--out", required=True)
    sub.add_argument("--out-tensor")
    sub.set_defaults(func=cmd_fuse)

    sub = subs.add_parser("losses", help="full loss report from stage files")
    sub.add_argument("--fused", required=True)
    sub.add_argument("--reference", required=True)
    sub.add_argument("--warped-tps", required=True)
    sub.add_argument("--gt-clothes", required=True)
    sub.add_argument("--model-clothes", required=True)
    sub.add_argument("--control", required=True)
    sub.add_argument("--pred-layout", required=True)
    sub.add_argument("--merged-layout", required=True)
    sub.add_argument("--mask")
    sub.add_argument("--identity-mask", type=float, default=1.0)
    sub.add_argument("--out", required=True)
    _add_config_options(sub)
    sub.set_defaults(func=cmd_losses)

    sub = subs.add_parser("metrics", help="SSIM metrics report / inception score")
    sub.add_argument("--inception-probs", help="N×K probability tensor, prints IS")
    sub.add_argument("--warp")
    sub.add_argument("--fused")
    sub.add_argument("--reference")
    sub.add_argument("--gt-clothes")
    sub.add_argument("--merged-layout")
    sub.add_argument("--losses")
    sub.add_argument("--out")
    sub.set_defaults(func=cmd_metrics)

    sub = subs.add_parser("pipeline", help="run the whole computation")
    sub.add_argument("--model-image", required=True)
    sub.add_argument("--model-keypoints", required=True)
    sub.add_argument("--model-layout", required=True)
    sub.add_argument("--target-keypoints", required=True)
    sub.add_argument("--target-body", required=True)
    sub.add_argument("--target-preserved", required=True)
    sub.add_argument("--pred-layout", dest="pred_layout")
    sub.add_argument("--generated")
    sub.add_argument("--attention-mask", dest="attention_mask")
    sub.add_argument("--gt-clothes", dest="gt_clothes")
    sub.add_argument("--identity-mask", type=float, default=None)
    sub.add_argument("--out", required=True)
    _add_config_options(sub)
    sub.set_defaults(func=cmd_pipeline)

    return parser


def _exit_code(exc) -> int:
    if isinstance(exc, StageError):
        return _exit_code(exc.cause)
    if isinstance(exc, ValidationError):
        return 2
    if isinstance(exc, NumericalError):
        return 3
    if isinstance(exc, (TensorFileError, OSError)):
        return 4
    return 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (StageError, ValidationError, NumericalError, TensorFileError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
