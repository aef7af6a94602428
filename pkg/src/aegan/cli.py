"""Command-line entry point for the full experimental pipeline.

One binary, subcommand style.  Progress goes to standard error; every
machine-readable artifact is a file under the command's --out directory,
accompanied by ``run_manifest.json`` recording the resolved configuration,
seed, input fingerprints, and outputs.  ``aegan rerun MANIFEST`` replays a
recorded run.  Exit codes: 0 success, 1 validation or configuration error,
2 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, config as cfgmod, data as dataio, gan, gradcheck, inversion
from . import kernels, models, search as searchmod
from .errors import NumericalError, ValidationError

log = logging.getLogger("aegan")

GRID_COLUMNS = 16


# ---------------------------------------------------------------------------
# helpers


def _resolve_gan_path(path) -> Path:
    p = Path(path)
    if p.is_dir():
        p = p / "generator.ckpt"
    return p


def _load_generator(path) -> models.GeneratorNet:
    bundle = dataio.load_checkpoint(_resolve_gan_path(path), expect_kind="generator")
    return bundle.net


def _load_encoder(path) -> models.InverseGeneratorNet:
    bundle = dataio.load_checkpoint(path, expect_kind="inverse_generator")
    return bundle.net


def _training_kwargs(cfg: dict) -> dict:
    return dict(batch_size=cfg["batch_size"], learning_rate=cfg["learning_rate"],
                beta1=cfg["beta1"], beta2=cfg["beta2"], optimizer=cfg["optimizer"])


def _arch_for_checkpoint(cfg: dict, explicit: set, ckpt_cfg: models.ArchitectureConfig) -> dict:
    """Inherit architecture from the checkpoint; explicit conflicts are errors."""
    merged = dict(cfg)
    for key in ("latent_dim", "image_size", "channels", "base_width"):
        ckpt_value = getattr(ckpt_cfg, key)
        if key in explicit and merged[key] != ckpt_value:
            raise ValidationError(f"architecture mismatch: {key}={merged[key]} requested but "
                                  f"the checkpoint was trained with {key}={ckpt_value}")
        merged[key] = ckpt_value
    return merged


def _diagnostic_writer(out_dir: Path, nets_of):
    def write(state, iteration):
        for name, net in nets_of(state).items():
            path = out_dir / f"diagnostic_{name}_iter{iteration}.ckpt"
            dataio.save_checkpoint(path, net)
            log.error("wrote diagnostic checkpoint %s", path)
    return write


def _image_paths(images_arg) -> list[Path]:
    p = Path(images_arg)
    if p.is_file():
        return [p]
    return dataio.list_images(p)


def _load_images(images_arg, image_size: int) -> tuple[list[str], np.ndarray]:
    paths = _image_paths(images_arg)
    if not paths:
        raise ValidationError(f"no images at {images_arg}")
    ids, imgs = [], []
    for p in paths:
        img = dataio.load_image(p)
        if img.shape[:2] != (image_size, image_size):
            img = np.asarray(dataio.resize_area(img, image_size, image_size), np.float32)
        ids.append(p.stem)
        imgs.append(img)
    return ids, np.stack(imgs).astype(np.float32)


def _write_loss_csv(path, history, header):
    dataio.write_csv(path, header, history)


def _perturb(image: np.ndarray, kind: str) -> np.ndarray:
    """Deterministic query perturbations for search demos."""
    img = np.asarray(image, np.float32).copy()
    if kind == "none":
        return img
    if kind == "brightness":
        return np.clip(img + 0.15, 0.0, 1.0)
    if kind == "channel-swap":
        return img[:, :, [1, 2, 0]]
    if kind == "occlude":
        h, w = img.shape[:2]
        y0, x0 = int(0.30 * h), int(0.30 * w)
        img[y0 : y0 + max(1, h // 4), x0 : x0 + max(1, w // 4)] = 0.0
        return img
    raise ValidationError(f"unknown perturbation {kind!r}")


# ---------------------------------------------------------------------------
# commands; each returns (resolved_config, inputs: dict, outputs: list[Path])


def cmd_gen_data(args, out_dir: Path):
    if args["n"] is None or args["size"] is None:
        raise ValidationError("gen-data requires --n and --size")
    dataio.generate_dataset(args["n"], args["size"], args["seed"], out_dir)
    cfg = {"n": args["n"], "size": args["size"]}
    return cfg, {}, [out_dir / "images", out_dir / "attributes.csv"]


def cmd_train_gan(args, out_dir: Path):
    cfg, _ = cfgmod.resolve(args.get("config"), _config_overrides(args))
    if args.get("data") is None:
        raise ValidationError("train-gan requires --data")
    arch = cfgmod.arch_from(cfg)
    _, images = dataio.load_image_dir(args["data"], arch.image_size)
    iters = args.get("iters")
    if iters is None:
        if args.get("epochs") is None:
            raise ValidationError("train-gan requires --iters or --epochs")
        iters = args["epochs"] * max(1, len(images) // cfg["batch_size"])
    state = gan.train_dcgan(
        images, arch, iters, args["seed"], log_every=args.get("log_every", 100),
        diagnostic=_diagnostic_writer(out_dir, lambda s: {"generator": s.generator,
                                                          "discriminator": s.discriminator}),
        **_training_kwargs(cfg))
    outputs = [out_dir / "generator.ckpt", out_dir / "discriminator.ckpt",
               out_dir / "gan_loss.csv"]
    dataio.save_checkpoint(outputs[0], state.generator, state.g_opt)
    dataio.save_checkpoint(outputs[1], state.discriminator, state.d_opt)
    _write_loss_csv(outputs[2], state.history, ["iteration", "d_loss", "g_loss"])
    cfg["iterations"] = iters
    return cfg, {"data": args["data"]}, outputs


def cmd_train_ig(args, out_dir: Path):
    if args.get("gan") is None:
        raise ValidationError("train-ig requires --gan")
    if args.get("iters") is None:
        raise ValidationError("train-ig requires --iters")
    bundle = dataio.load_checkpoint(_resolve_gan_path(args["gan"]), expect_kind="generator")
    cfg, explicit = cfgmod.resolve(args.get("config"), _config_overrides(args))
    cfg = _arch_for_checkpoint(cfg, explicit, bundle.config)
    gen = bundle.net.freeze()
    state = inversion.train_inverse_generator(
        gen, bundle.config, args["iters"], args["seed"],
        log_every=args.get("log_every", 100),
        diagnostic=_diagnostic_writer(out_dir, lambda s: {"encoder": s.encoder}),
        **_training_kwargs(cfg))
    outputs = [out_dir / "ig.ckpt", out_dir / "ig_loss.csv"]
    dataio.save_checkpoint(outputs[0], state.encoder, state.optimizer,
                           extra={"trained_against": bundle.fingerprint})
    _write_loss_csv(outputs[1], state.history, ["iteration", "recon_loss"])
    cfg["iterations"] = args["iters"]
    return cfg, {"gan": args["gan"]}, outputs


def cmd_train_baseline(args, out_dir: Path):
    method = args.get("method")
    if method not in ("direct", "bigan"):
        raise ValidationError("train-baseline requires --method direct|bigan")
    if args.get("iters") is None:
        raise ValidationError("train-baseline requires --iters")
    cfg, explicit = cfgmod.resolve(args.get("config"), _config_overrides(args))
    inputs = {}
    if method == "direct":
        if args.get("gan") is None:
            raise ValidationError("train-baseline --method direct requires --gan")
        bundle = dataio.load_checkpoint(_resolve_gan_path(args["gan"]), expect_kind="generator")
        cfg = _arch_for_checkpoint(cfg, explicit, bundle.config)
        gen = bundle.net.freeze()
        state = inversion.train_direct_regressor(
            gen, bundle.config, args["iters"], args["seed"],
            log_every=args.get("log_every", 100),
            diagnostic=_diagnostic_writer(out_dir, lambda s: {"encoder": s.encoder}),
            **_training_kwargs(cfg))
        outputs = [out_dir / "direct.ckpt", out_dir / "direct_loss.csv"]
        dataio.save_checkpoint(outputs[0], state.encoder, state.optimizer,
                               extra={"trained_against": bundle.fingerprint})
        _write_loss_csv(outputs[1], state.history, ["iteration", "mse"])
        inputs["gan"] = args["gan"]
    else:
        if args.get("data") is None:
            raise ValidationError("train-baseline --method bigan requires --data")
        arch = cfgmod.arch_from(cfg)
        _, images = dataio.load_image_dir(args["data"], arch.image_size)
        state = inversion.train_bigan(
            images, arch, args["iters"], args["seed"],
            log_every=args.get("log_every", 100),
            diagnostic=_diagnostic_writer(out_dir, lambda s: {
                "encoder": s.encoder, "generator": s.generator,
                "discriminator": s.discriminator}),
            **_training_kwargs(cfg))
        outputs = [out_dir / "bigan_encoder.ckpt", out_dir / "bigan_generator.ckpt",
                   out_dir / "bigan_discriminator.ckpt", out_dir / "bigan_loss.csv"]
        dataio.save_checkpoint(outputs[0], state.encoder)
        dataio.save_checkpoint(outputs[1], state.generator)
        dataio.save_checkpoint(outputs[2], state.discriminator)
        _write_loss_csv(outputs[3], state.history, ["iteration", "d_loss", "ge_loss"])
        inputs["data"] = args["data"]
    cfg["iterations"] = args["iters"]
    cfg["method"] = method
    return cfg, inputs, outputs


def cmd_invert(args, out_dir: Path):
    method = args.get("method")
    if method not in ("aegan", "grad", "direct", "bigan"):
        raise ValidationError("invert requires --method aegan|grad|direct|bigan")
    if args.get("gan") is None or args.get("images") is None:
        raise ValidationError("invert requires --gan and --images")
    cfg, _ = cfgmod.resolve(args.get("config"), _config_overrides(args))
    gen = _load_generator(args["gan"]).freeze()
    ids, images = _load_images(args["images"], gen.cfg.image_size)
    inputs = {"gan": args["gan"], "images": args["images"]}

    if method == "grad":
        result = inversion.gradient_descent_invert(gen, images, steps=cfg["grad_steps"],
                                                   alpha=cfg["grad_alpha"], seed=args["seed"])
        latents = result.z
        recon = _decode(gen, latents)
    else:
        if args.get("enc") is None:
            raise ValidationError(f"invert --method {method} requires --enc")
        enc = _load_encoder(args["enc"])
        latents = inversion.encode_images(enc, images)
        recon = _decode(gen, latents)
        inputs["enc"] = args["enc"]

    outputs = [out_dir / "latents.csv", out_dir / "recon_grid.png"]
    header = ["id"] + [f"z_{i}" for i in range(latents.shape[1])]
    dataio.write_csv(outputs[0], header,
                     [[ids[i]] + [float(v) for v in latents[i]] for i in range(len(ids))])
    n = min(len(ids), GRID_COLUMNS)
    grid = dataio.make_grid([list(images[:n]), list(recon[:n])])
    dataio.save_image(outputs[1], grid)
    cfg["method"] = method
    return cfg, inputs, outputs


def _as_tensor(latents):
    from .autodiff import Tensor

    return Tensor(np.asarray(latents, np.float32))


def _decode(gen: models.GeneratorNet, latents: np.ndarray, batch: int = 64) -> np.ndarray:
    out = []
    for i in range(0, len(latents), batch):
        out.append(gen(_as_tensor(latents[i : i + batch]), train=False).data)
    return np.concatenate(out)


def cmd_eval_recon(args, out_dir: Path):
    if args.get("gan") is None:
        raise ValidationError("eval-recon requires --gan")
    if args.get("n") is None:
        raise ValidationError("eval-recon requires --n")
    gen = _load_generator(args["gan"]).freeze()
    inputs = {"gan": args["gan"]}
    rows = []
    if args.get("ig"):
        enc = _load_encoder(args["ig"])
        rows.append(("aegan", args["n"],
                     inversion.evaluate_reconstruction(gen, enc, args["n"], args["seed"])))
        inputs["ig"] = args["ig"]
    if args.get("direct"):
        enc = _load_encoder(args["direct"])
        rows.append(("direct", args["n"],
                     inversion.evaluate_reconstruction(gen, enc, args["n"], args["seed"])))
        inputs["direct"] = args["direct"]
    if args.get("bigan_dir"):
        bdir = Path(args["bigan_dir"])
        enc = _load_encoder(bdir / "bigan_encoder.ckpt")
        bgen = _load_generator(bdir / "bigan_generator.ckpt").freeze()
        rows.append(("bigan", args["n"],
                     inversion.evaluate_reconstruction(bgen, enc, args["n"], args["seed"])))
        inputs["bigan_dir"] = args["bigan_dir"]
    if not rows:
        raise ValidationError("eval-recon needs at least one encoder "
                              "(--ig, --direct, or --bigan-dir)")
    outputs = [out_dir / "recon_report.csv"]
    dataio.write_csv(outputs[0], ["method", "n_samples", "mean_similarity"], rows)
    for method, n, sim in rows:
        log.info("eval-recon %s: mean dhash similarity %.4f over %d samples", method, sim, n)
    return {"n": args["n"]}, inputs, outputs


def cmd_search(args, out_dir: Path):
    cfg, _ = cfgmod.resolve(args.get("config"), _config_overrides(args))
    inputs = {}
    if args.get("build_index"):
        if args.get("ig") is None or args.get("corpus") is None or args.get("index") is None:
            raise ValidationError("search --build-index requires --ig, --corpus, and --index")
        enc = _load_encoder(args["ig"])
        index = searchmod.build_index(enc, args["corpus"])
        index.save(args["index"])
        inputs.update(ig=args["ig"], corpus=args["corpus"])
        log.info("indexed %d images", len(index))
        return {"k": None}, inputs, [Path(args["index"])]

    if args.get("query") is None:
        raise ValidationError("search requires --query (or --build-index)")
    k = args.get("k") or 5
    methods = [args.get("method") or "aegan"]
    if methods == ["all"]:
        methods = list(searchmod.SEARCH_METHODS)
    query = dataio.load_image(args["query"])
    query = _perturb(query, args.get("perturb") or "none")
    query_id = Path(args["query"]).stem
    inputs["query"] = args["query"]

    outputs = []
    grid_rows = []
    for method in methods:
        if method == "aegan":
            if args.get("index") is None or args.get("ig") is None:
                raise ValidationError("search --method aegan requires --index and --ig")
            index = searchmod.LatentIndex.load(args["index"])
            enc = _load_encoder(args["ig"])
            result = searchmod.search(index, enc, query, k, query_id=query_id)
            inputs.update(index=args["index"], ig=args["ig"])
        else:
            if args.get("corpus") is None:
                raise ValidationError(f"search --method {method} requires --corpus")
            result = searchmod.search_baselines(args["corpus"], query, k, method,
                                                query_id=query_id)
            inputs["corpus"] = args["corpus"]
        csv_path = out_dir / f"search_{method}.csv"
        searchmod.write_query_csv(csv_path, result)
        outputs.append(csv_path)
        if args.get("corpus"):
            by_id = {p.stem: p for p in dataio.list_images(args["corpus"])}
            row = [query]
            for image_id, _ in result.entries:
                if image_id in by_id:
                    row.append(dataio.load_image(by_id[image_id]))
            grid_rows.append([_fit(img) for img in row])
    if grid_rows:
        grid_path = out_dir / "search_grid.png"
        dataio.save_image(grid_path, dataio.make_grid(grid_rows))
        outputs.append(grid_path)
    if args.get("perturb") and args["perturb"] != "none":
        qp = out_dir / "query_perturbed.png"
        dataio.save_image(qp, query)
        outputs.append(qp)
    return {"k": k, "methods": methods, "perturb": args.get("perturb") or "none"}, inputs, outputs


GRID_CELL = 64


def _fit(img: np.ndarray) -> np.ndarray:
    """Uniform grid cell size so small corpus thumbnails stay legible."""
    if img.shape[:2] != (GRID_CELL, GRID_CELL):
        return np.asarray(dataio.resize_area(img, GRID_CELL, GRID_CELL), np.float32)
    return np.asarray(img, np.float32)


def cmd_superres(args, out_dir: Path):
    if args.get("gan") is None or args.get("ig") is None or args.get("images") is None:
        raise ValidationError("superres requires --gan, --ig, and --images")
    sigma = args.get("sigma") or 1.0
    gen = _load_generator(args["gan"]).freeze()
    enc = _load_encoder(args["ig"])
    ids, images = _load_images(args["images"], gen.cfg.image_size)
    from .hashing import dhash, hash_similarity

    blurred = np.stack([np.asarray(searchmod.gaussian_blur(img, sigma), np.float32)
                        for img in images])
    restored = np.stack([searchmod.super_resolve(gen, enc, img) for img in blurred])
    rows = []
    for i, image_id in enumerate(ids):
        h0 = dhash(images[i])
        rows.append((image_id,
                     hash_similarity(h0, dhash(blurred[i])),
                     hash_similarity(h0, dhash(restored[i]))))
    outputs = [out_dir / "superres_report.csv", out_dir / "superres_grid.png"]
    dataio.write_csv(outputs[0], ["id", "sim_blurred", "sim_restored"], rows)
    n = min(len(ids), GRID_COLUMNS)
    grid = dataio.make_grid([list(images[:n]), list(blurred[:n]), list(restored[:n])])
    dataio.save_image(outputs[1], grid)
    return ({"sigma": sigma}, {"gan": args["gan"], "ig": args["ig"], "images": args["images"]},
            outputs)


def cmd_gradcheck(args, out_dir: Path | None):
    results = gradcheck.run_suite(seed=args["seed"])
    failed = [r for r in results if not r.passed]
    for r in results:
        log.info("gradcheck %-20s cases=%d worst=%.3g %s", r.name, r.cases, r.worst,
                 "PASS" if r.passed else "FAIL")
    if failed:
        raise NumericalError(f"gradient checks failed: {', '.join(r.name for r in failed)}")
    outputs = []
    if out_dir is not None:
        report = out_dir / "gradcheck_report.csv"
        dataio.write_csv(report, ["operation", "cases", "worst_ratio", "passed"],
                         [(r.name, r.cases, r.worst, int(r.passed)) for r in results])
        outputs.append(report)
    return {}, {}, outputs


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-gan": cmd_train_gan,
    "train-ig": cmd_train_ig,
    "train-baseline": cmd_train_baseline,
    "invert": cmd_invert,
    "eval-recon": cmd_eval_recon,
    "search": cmd_search,
    "superres": cmd_superres,
    "gradcheck": cmd_gradcheck,
}

_CONFIG_KEYS = ("latent_dim", "image_size", "channels", "base_width", "batch_size",
                "learning_rate", "beta1", "beta2", "optimizer", "grad_steps", "grad_alpha")


def _config_overrides(args: dict) -> dict:
    return {k: args.get(k) for k in _CONFIG_KEYS}


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aegan",
                                     description="GAN inversion toolkit: train the encoder, "
                                                 "compare baselines, search, and deblur.")
    parser.add_argument("--version", action="version", version=f"aegan {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="JSON config file (flags override it)")
        p.add_argument("--seed", type=int, default=0, help="run seed (default 0)")
        p.add_argument("--threads", type=int, default=None,
                       help="cap internal parallelism (default: AEGAN_THREADS or all cores)")
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")
        for key in _CONFIG_KEYS:
            flag = "--" + key.replace("_", "-")
            if key == "optimizer":
                p.add_argument(flag, choices=["adam", "sgd"], default=None)
            elif key in ("learning_rate", "beta1", "beta2", "grad_alpha"):
                p.add_argument(flag, type=float, default=None)
            else:
                p.add_argument(flag, type=int, default=None)

    p = sub.add_parser("gen-data", help="render a synthetic shapes dataset")
    p.add_argument("--n", type=int, help="number of images")
    p.add_argument("--size", type=int, help="image resolution")
    common(p)

    p = sub.add_parser("train-gan", help="train the generator/discriminator pair")
    p.add_argument("--data", help="directory of training images")
    p.add_argument("--epochs", type=int, help="passes over the dataset")
    p.add_argument("--iters", type=int, help="training iterations (overrides --epochs)")
    p.add_argument("--log-every", type=int, default=100)
    common(p)

    p = sub.add_parser("train-ig", help="train the inverse generator against a frozen GAN")
    p.add_argument("--gan", help="generator checkpoint (or train-gan output directory)")
    p.add_argument("--iters", type=int)
    p.add_argument("--log-every", type=int, default=100)
    common(p)

    p = sub.add_parser("train-baseline", help="train a baseline encoder (direct or bigan)")
    p.add_argument("--method", choices=["direct", "bigan"])
    p.add_argument("--gan", help="generator checkpoint (direct method)")
    p.add_argument("--data", help="directory of training images (bigan method)")
    p.add_argument("--iters", type=int)
    p.add_argument("--log-every", type=int, default=100)
    common(p)

    p = sub.add_parser("invert", help="recover latents for images and render reconstructions")
    p.add_argument("--method", choices=["aegan", "grad", "direct", "bigan"])
    p.add_argument("--gan", help="generator checkpoint")
    p.add_argument("--enc", help="encoder checkpoint (not used by --method grad)")
    p.add_argument("--images", help="image file or directory")
    common(p)

    p = sub.add_parser("eval-recon", help="mean hash-similarity report across trained encoders")
    p.add_argument("--gan", help="generator checkpoint")
    p.add_argument("--ig", help="inverse-generator checkpoint")
    p.add_argument("--direct", help="direct-regression encoder checkpoint")
    p.add_argument("--bigan-dir", help="train-baseline --method bigan output directory")
    p.add_argument("--n", type=int, help="number of generated samples")
    common(p)

    p = sub.add_parser("search", help="latent-space and baseline image search")
    p.add_argument("--build-index", action="store_true", help="build and save a latent index")
    p.add_argument("--index", help="latent index file (build target or query source)")
    p.add_argument("--ig", help="inverse-generator checkpoint")
    p.add_argument("--corpus", help="directory of corpus images")
    p.add_argument("--query", help="query image file")
    p.add_argument("--k", type=int, help="neighbors to return (default 5)")
    p.add_argument("--method", choices=["aegan", "dhash", "phash", "hist", "all"])
    p.add_argument("--perturb", choices=["none", "brightness", "channel-swap", "occlude"],
                   help="perturb the query before searching")
    common(p)

    p = sub.add_parser("superres", help="blur-removal reconstruction report")
    p.add_argument("--gan", help="generator checkpoint")
    p.add_argument("--ig", help="inverse-generator checkpoint")
    p.add_argument("--images", help="image file or directory")
    p.add_argument("--sigma", type=float, help="Gaussian blur sigma (default 1.0)")
    common(p)

    p = sub.add_parser("gradcheck", help="finite-difference suite over all operations")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", help="optional directory for gradcheck_report.csv")

    p = sub.add_parser("rerun", help="replay a recorded run from its manifest")
    p.add_argument("manifest", help="path to run_manifest.json")
    p.add_argument("--out", help="override the output directory")

    return parser


# ---------------------------------------------------------------------------
# manifest plumbing


def _write_manifest(out_dir: Path, command: str, args: dict, resolved_cfg: dict,
                    inputs: dict, outputs: list, elapsed: float) -> Path:
    manifest = {
        "version": __version__,
        "command": command,
        "args": {k: v for k, v in args.items() if v is not None and k != "command"},
        "config": resolved_cfg,
        "seed": args.get("seed"),
        "threads": kernels.get_num_threads(),
        "inputs": {name: {"path": str(path), "sha256": dataio.sha256_path(path)}
                   for name, path in inputs.items()},
        "outputs": [str(p) for p in outputs],
        "elapsed_seconds": round(elapsed, 3),
        "kernel_backend": kernels.active_backend(),
    }
    path = out_dir / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _dispatch(command: str, args: dict) -> None:
    threads = args.get("threads")
    if threads is None:
        threads = int(os.environ.get("AEGAN_THREADS", "0") or 0)
    kernels.set_num_threads(threads)
    out_dir = None
    if args.get("out"):
        out_dir = Path(args["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
    elif command != "gradcheck":
        raise ValidationError(f"{command} requires --out")
    start = time.perf_counter()
    resolved_cfg, inputs, outputs = COMMANDS[command](args, out_dir)
    if out_dir is not None:
        _write_manifest(out_dir, command, args, resolved_cfg, inputs, outputs,
                        time.perf_counter() - start)


def _rerun(manifest_path: str, out_override: str | None) -> None:
    path = Path(manifest_path)
    if not path.exists():
        raise ValidationError(f"manifest does not exist: {path}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}: invalid manifest JSON: {e}") from e
    command = manifest.get("command")
    if command not in COMMANDS:
        raise ValidationError(f"{path}: unknown command {command!r}")
    args = dict(manifest.get("args", {}))
    if out_override:
        args["out"] = out_override
    log.info("rerunning %s (seed %s)", command, args.get("seed"))
    _dispatch(command, args)


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="[aegan] %(message)s")
    parser = build_parser()
    ns = parser.parse_args(argv)
    args = vars(ns)
    command = args.pop("command")
    try:
        if command == "rerun":
            _rerun(args["manifest"], args.get("out"))
        else:
            _dispatch(command, args)
        return 0
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
