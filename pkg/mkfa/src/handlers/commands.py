"""Command handlers"""
import argparse
import json
import logging
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict

import numpy as np

from ..backbone.config import PRESET_NAMES, preset
from ..backbone.count import count_params
from ..data.generator import KINDS, GeneratorSpec, gen_corpus
from ..data.image_io import read_ppm
from ..data.manifest import SPLITS, load_manifest
from ..nn.blocks import MF_VARIANTS, MFA_VARIANTS, MKA_VARIANTS
from ..nn.gradsuite import SUITE, run_suite, suite_passed
from ..spectral.analysis import METHODS, corpus_spectrum_stats, feature_depth_profile
from ..spectral.report import write_csv
from ..training.ablation import ABLATION_ROWS, ablate
from ..training.checkpoint import load_checkpoint
from ..training.gradcam import FAKE_CLASS, default_tap, gradcam, write_gradcam
from ..training.optim import OPTIMIZERS
from ..training.trainer import TrainConfig, evaluate, images_to_tensor, load_images, train
from ..utils.config import Config
from ..utils.errors import UsageError
from .router import Router

log = logging.getLogger(__name__)

router = Router()

ACCEPTANCE_FAILED = "acceptance_failed"


def _emit(payload: Dict[str, Any]) -> None:
    """Machine-readable result on stdout"""
    print(json.dumps(payload, sort_keys=True, default=float))


def _arch_args(parser: argparse.ArgumentParser, cfg: Config) -> None:
    parser.add_argument('--preset', choices=PRESET_NAMES, default=cfg.preset, help="architecture preset")
    parser.add_argument('--mka-variant', choices=MKA_VARIANTS, default='multi_dw7')
    parser.add_argument('--mfa-variant', choices=MFA_VARIANTS, default='ffn_mf')
    parser.add_argument('--mf-variant', choices=MF_VARIANTS, default='literal_dc')


def _arch(args: argparse.Namespace):
    arch = replace(preset(args.preset), mf_variant=args.mf_variant)
    return arch.with_variants(args.mka_variant, args.mfa_variant)


def _train_config(args: argparse.Namespace, cfg: Config, arch) -> TrainConfig:
    return TrainConfig(
        arch=arch,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        min_lr=args.min_lr,
        warmup_epochs=args.warmup_epochs,
        label_smoothing=args.label_smoothing,
        optimizer=args.optimizer,
        weight_decay=args.weight_decay if args.optimizer == 'adamw' else 0.0,
        augment={} if args.no_augment else cfg.augment,
        seed=args.seed,
        threads=args.threads,
    )


def _optim_args(parser: argparse.ArgumentParser, cfg: Config, epochs: int) -> None:
    parser.add_argument('--epochs', type=int, default=epochs)
    parser.add_argument('--seed', type=int, default=cfg.seed)
    parser.add_argument('--batch-size', type=int, default=cfg.batch_size)
    parser.add_argument('--optimizer', choices=OPTIMIZERS, default=cfg.optimizer)
    parser.add_argument('--lr', type=float, default=cfg.lr, help="base learning rate")
    parser.add_argument('--min-lr', type=float, default=cfg.min_lr)
    parser.add_argument('--warmup-epochs', type=int, default=cfg.warmup_epochs)
    parser.add_argument('--label-smoothing', type=float, default=cfg.label_smoothing)
    parser.add_argument('--weight-decay', type=float, default=cfg.weight_decay, help="adamw only")
    parser.add_argument('--no-augment', action='store_true', help="disable the configured augmentations")


# --- gen-data -------------------------------------------------------------------

def _gen_data_args(parser: argparse.ArgumentParser, cfg: Config) -> None:
    parser.add_argument('--out', required=True, help="corpus directory")
    parser.add_argument('--seed', type=int, default=cfg.seed)
    parser.add_argument('--n-real', type=int, default=2500)
    parser.add_argument('--n-fake', type=int, default=2500)
    parser.add_argument('--image-size', type=int, default=cfg.image_size)
    parser.add_argument('--blob-count', type=int, nargs=2, default=cfg.blob_count, metavar=('LO', 'HI'))
    parser.add_argument('--alpha', type=float, default=cfg.alpha, help="1/f^alpha noise exponent")
    parser.add_argument('--intensity', type=float, default=cfg.intensity)
    parser.add_argument('--kinds', nargs='+', choices=KINDS, default=cfg.kinds)
    parser.add_argument('--split-fraction', type=float, default=cfg.split_fraction)


@router.command('gen-data', "generate the synthetic real/fake corpus", _gen_data_args)
def cmd_gen_data(args: argparse.Namespace, cfg: Config) -> Dict[str, Any]:
    spec = GeneratorSpec(
        image_size=args.image_size,
        blob_count=tuple(args.blob_count),
        alpha=args.alpha,
        kinds=tuple(args.kinds),
        intensity=args.intensity,
        seed=args.seed,
    )
    manifest = gen_corpus(spec, args.n_real, args.n_fake, args.split_fraction, args.out, args.threads)
    result = {'out': args.out, 'counts': manifest.counts}
    _emit(result)
    return result


# --- train / eval ---------------------------------------------------------------

def _train_args(parser: argparse.ArgumentParser, cfg: Config) -> None:
    parser.add_argument('--data', required=True, help="corpus directory or manifest.json")
    parser.add_argument('--out', required=True, help="output directory")
    _arch_args(parser, cfg)
    _optim_args(parser, cfg, cfg.epochs)
    parser.add_argument('--finetune-lr', type=float, default=cfg.finetune_lr,
                        help="lr used with --init-ckpt unless --lr is given")
    group = parser.add_mutually_exclusive_group()
    group.add_argument('--init-ckpt', help="start from these weights (fine-tuning: adamw unless --optimizer is given)")
    group.add_argument('--resume', help="continue this checkpoint (model, optimizer, epoch, step)")
    parser.add_argument('--stop-after', type=int, default=None, help="stop after this epoch")


@router.command('train', "train a detector on a corpus", _train_args)
def cmd_train(args: argparse.Namespace, cfg: Config) -> Dict[str, Any]:
    manifest = load_manifest(args.data)
    arch = _arch(args)
    if args.init_ckpt:
        if not args.explicit.get('optimizer'):
            args.optimizer = 'adamw'
        if not args.explicit.get('lr'):
            args.lr = args.finetune_lr
        log.info(f"🔧 fine-tuning regime: {args.optimizer}, lr {args.lr}, wd {args.weight_decay}")
    if args.resume:
        arch = load_checkpoint(args.resume).config

    outcome = train(
        _train_config(args, cfg, arch), manifest, args.out,
        init_ckpt=args.init_ckpt, resume=args.resume, stop_after=args.stop_after,
    )
    last = outcome.history[-1] if outcome.history else {}
    result = {'checkpoint': str(outcome.checkpoint), 'metrics': str(outcome.metrics), 'last': last}
    _emit(result)
    return result


def _eval_args(parser: argparse.ArgumentParser, cfg: Config) -> None:
    parser.add_argument('--ckpt', required=True)
    parser.add_argument('--data', required=True)
    parser.add_argument('--split', choices=SPLITS, default='test')
    parser.add_argument('--batch-size', type=int, default=cfg.batch_size)
    parser.add_argument('--out', help="also write the report as JSON here")


@router.command('eval', "frame-level AUC of a checkpoint on one split", _eval_args)
def cmd_eval(args: argparse.Namespace, cfg: Config) -> Dict[str, Any]:
    model = load_checkpoint(args.ckpt).model
    report = evaluate(model, load_manifest(args.data), args.split, args.batch_size, args.threads)
    result = report.to_dict()
    log.info(f"📊 {args.split}: AUC {report.auc:.4f}, accuracy {report.accuracy:.4f} on {report.count} images")
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(result, indent=2, sort_keys=True) + "\n", encoding='utf-8')
    _emit(result)
    return result


# --- spectra --------------------------------------------------------------------

def _spectral_args(parser: argparse.ArgumentParser, cfg: Config) -> None:
    parser.add_argument('--bins', type=int, default=cfg.spectral_bins)
    parser.add_argument('--eps', type=float, default=cfg.spectral_eps)
    parser.add_argument('--method', choices=METHODS, default=cfg.spectral_method)


def _spectrum_args(parser: argparse.ArgumentParser, cfg: Config) -> None:
    parser.add_argument('--data', required=True)
    parser.add_argument('--out', required=True, help="CSV path")
    parser.add_argument('--split', choices=SPLITS, default=None, help="restrict to one split")
    parser.add_argument('--kinds', nargs='+', choices=KINDS, default=None, help="restrict fakes to these kinds")
    _spectral_args(parser, cfg)


@router.command('spectrum', "real vs fake radial log-amplitude curves of a corpus", _spectrum_args)
def cmd_spectrum(args: argparse.Namespace, cfg: Config) -> Dict[str, Any]:
    report = corpus_spectrum_stats(
        load_manifest(args.data), kinds=args.kinds, split=args.split,
        bins=args.bins, eps=args.eps, method=args.method, threads=args.threads,
    )
    path = write_csv(report, args.out)
    log.info(f"✅ spectrum written to {path}")
    result = {'out': str(path), **report.meta}
    _emit(result)
    return result


def _feat_spectrum_args(parser: argparse.ArgumentParser, cfg: Config) -> None:
    parser.add_argument('--ckpt', required=True)
    parser.add_argument('--data', required=True)
    parser.add_argument('--out', required=True, help="CSV path")
    parser.add_argument('--taps', nargs='+', default=None, help="feature taps (default: every stage output)")
    parser.add_argument('--label', choices=('real', 'fake', 'all'), default='all')
    parser.add_argument('--split', choices=SPLITS, default='test')
    parser.add_argument('--count', type=int, default=64, help="number of images averaged")
    _spectral_args(parser, cfg)


@router.command('feat-spectrum', "relative log amplitude of intermediate features by depth", _feat_spectrum_args)
def cmd_feat_spectrum(args: argparse.Namespace, cfg: Config) -> Dict[str, Any]:
    model = load_checkpoint(args.ckpt).model
    manifest = load_manifest(args.data)
    label = {'real': 0, 'fake': 1, 'all': None}[args.label]
    records = manifest.select(label=label, split=args.split)[:args.count]
    if not records:
        raise UsageError(f"no {args.label} images in split '{args.split}'")
    taps = args.taps or [f"stage{i}" for i in range(1, 5)]
    images = images_to_tensor(load_images(manifest, records, args.threads))
    report = feature_depth_profile(model, images, taps, args.bins, args.eps, args.method)
    path = write_csv(report, args.out)
    log.info(f"✅ feature spectra for {len(report.series)} taps written to {path}")
    result = {'out': str(path), 'taps': list(report.series), 'count': len(records)}
    _emit(result)
    return result


# --- gradcam --------------------------------------------------------------------

def _gradcam_args(parser: argparse.ArgumentParser, cfg: Config) -> None:
    parser.add_argument('--ckpt', required=True)
    parser.add_argument('--image', required=True, help="PPM image")
    parser.add_argument('--tap', default=None, help="feature tap (default: last block of stage 3)")
    parser.add_argument('--target', type=int, default=FAKE_CLASS, help="class whose logit is explained")
    parser.add_argument('--out', required=True, help="output directory")


@router.command('gradcam', "Grad-CAM heatmap of one image", _gradcam_args)
def cmd_gradcam(args: argparse.Namespace, cfg: Config) -> Dict[str, Any]:
    model = load_checkpoint(args.ckpt).model
    image = read_ppm(args.image)
    tap = args.tap or default_tap(model)
    cam = gradcam(model, image, args.target, tap)
    ppm_path, csv_path = write_gradcam(args.out, Path(args.image).stem, image, cam)
    result = {'tap': tap, 'target': args.target, 'overlay': str(ppm_path), 'grid': str(csv_path),
              'peak': [int(v) for v in np.unravel_index(int(np.argmax(cam)), cam.shape)]}
    _emit(result)
    return result


# --- gradcheck / params ---------------------------------------------------------

def _gradcheck_args(parser: argparse.ArgumentParser, cfg: Config) -> None:
    parser.add_argument('--seed', type=int, default=0)
    parser.add_argument('--shapes', type=int, default=5, help="random shapes per op")
    parser.add_argument('--tolerance', type=float, default=1e-5, help="max relative error")
    parser.add_argument('--ops', nargs='+', choices=sorted(SUITE), default=None)


@router.command('gradcheck', "finite-difference check of every op and block", _gradcheck_args)
def cmd_gradcheck(args: argparse.Namespace, cfg: Config) -> Dict[str, Any]:
    results = run_suite(args.seed, args.shapes, args.tolerance, args.ops)
    failed = [f"{r.op} [{r.shape}]" for r in results if not r.passed]
    worst = max(r.report.max_rel_error for r in results)
    result = {'cases': len(results), 'failed': failed, 'max_rel_error': worst}
    if suite_passed(results):
        log.info(f"✅ all {len(results)} gradient checks passed (max rel err {worst:.2e})")
    else:
        log.error(f"❌ {len(failed)} of {len(results)} gradient checks failed")
        result[ACCEPTANCE_FAILED] = True
    _emit(result)
    return result


def _params_args(parser: argparse.ArgumentParser, cfg: Config) -> None:
    _arch_args(parser, cfg)
    parser.add_argument('--json', action='store_true', help="print the breakdown as JSON")


@router.command('params', "closed-form parameter count of a preset", _params_args)
def cmd_params(args: argparse.Namespace, cfg: Config) -> Dict[str, Any]:
    arch = _arch(args)
    total, breakdown = count_params(arch)
    result = {'preset': args.preset, 'total': total, 'breakdown': breakdown, 'config': arch.to_dict()}
    if args.json:
        _emit(result)
    else:
        print(f"{args.preset}: {total:,} parameters ({total / 1e6:.2f}M)")
        for name, count in breakdown.items():
            print(f"  {name:<14}{count:>12,}")
    return result


# --- ablate ---------------------------------------------------------------------

def _ablate_args(parser: argparse.ArgumentParser, cfg: Config) -> None:
    parser.add_argument('--data', required=True)
    parser.add_argument('--out', required=True)
    parser.add_argument('--variants', nargs='+', default=list(ABLATION_ROWS),
                        help="row labels or mka:mfa pairs")
    _arch_args(parser, cfg)
    _optim_args(parser, cfg, epochs=5)


@router.command('ablate', "train each module variant and tabulate test AUC", _ablate_args)
def cmd_ablate(args: argparse.Namespace, cfg: Config) -> Dict[str, Any]:
    base = _train_config(args, cfg, _arch(args))
    rows = ablate(base, load_manifest(args.data), args.out, args.variants)
    result = {'out': str(Path(args.out) / 'ablation.csv'),
              'rows': [{'variant': r.variant, 'params': r.params, 'test_auc': r.test_auc} for r in rows]}
    _emit(result)
    return result
