"""Acceptance suite: one test per criterion, each reporting PASS/FAIL in the summary.

Run alone with ``pytest tests/test_acceptance.py -v``. Set ``VSR_ACCEPTANCE_OUT``
to keep the exported loss curves and reports (default: a pytest temp dir).
"""

import copy
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

import conftest
from oracles import direct_resize, expected_generator_params, ssim_direct
from vsrgan import checkpoint as ck
from vsrgan import gradsuite, training
from vsrgan.cli import evaluate, main
from vsrgan.config import RunConfigFile
from vsrgan.data import (
    build_synthetic_dataset,
    cubic_kernel,
    imresize_bicubic,
    read_dataset,
    write_dataset,
)
from vsrgan.errors import CheckpointError
from vsrgan.losses import LossWeights, charbonnier, gan_losses, generator_objective
from vsrgan.metrics import psnr, ssim
from vsrgan.models import (
    Discriminator,
    DiscriminatorConfig,
    FeatureNet,
    Generator,
    GeneratorConfig,
    conv_count,
    param_count,
)
from vsrgan.plotting import plot_loss_curves
from vsrgan.tensor_core import conv2d_forward, conv2d_naive
from vsrgan.training import TrainConfig, lr_at_epoch, pretrain, train_gan, transfer_init

pytestmark = pytest.mark.slow


def record(number, name, ok, detail):
    conftest.ACCEPTANCE[number] = (name, bool(ok), detail)
    print(f"[{'PASS' if ok else 'FAIL'}] {number}. {name}: {detail}")
    assert ok, detail


def dataset_mse(generator, ds):
    return float(np.mean((generator.forward(ds.lr) - ds.hr) ** 2))


@pytest.fixture(scope="session")
def out_dir(tmp_path_factory):
    env = os.environ.get("VSR_ACCEPTANCE_OUT")
    path = Path(env) if env else tmp_path_factory.mktemp("acceptance")
    path.mkdir(parents=True, exist_ok=True)
    return path


@pytest.fixture(scope="session")
def desk():
    return RunConfigFile.load(conftest.DESK_CONFIG)


@pytest.fixture(scope="session")
def fixture_ds(desk):
    return build_synthetic_dataset(seed=desk.seed, scale=desk.train.scale)


@pytest.fixture(scope="session")
def pretrained(desk, fixture_ds):
    """The desk-scale pretraining run shared by the later criteria."""
    g = Generator(desk.generator, seed=desk.seed)
    mse0 = dataset_mse(g, fixture_ds)
    t0 = time.perf_counter()
    _, tlog = pretrain(g, fixture_ds, desk.train)
    seconds = time.perf_counter() - t0
    return {"generator": g, "log": tlog, "seconds": seconds, "mse0": mse0,
            "mse1": dataset_mse(g, fixture_ds)}


def test_01_gradient_suite():
    t0 = time.perf_counter()
    results = gradsuite.run_checks("all", seed=0)
    seconds = time.perf_counter() - t0
    failed = [r.check.row for r in results if not r.passed]
    worst = {tol: max(r.error for r in results if r.check.tol == tol)
             for tol in (gradsuite.LAYER_TOL, gradsuite.COMPOSITE_TOL)}
    ok = not failed and seconds < 60 and gradsuite.STEP == 1e-5
    record(1, "gradient suite", ok,
           f"{len(results)} checks, failed={failed or 'none'}, worst layer err "
           f"{worst[gradsuite.LAYER_TOL]:.2e}, worst composite err "
           f"{worst[gradsuite.COMPOSITE_TOL]:.2e}, {seconds:.1f} s")


def test_02_convolution_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        n, cin, cout = rng.integers(1, 4), rng.integers(1, 6), rng.integers(1, 6)
        k = int(rng.choice([1, 3, 5]))
        stride, pad = int(rng.integers(1, 3)), int(rng.integers(0, k // 2 + 1))
        h, w = rng.integers(k, 13, size=2)
        x = rng.standard_normal((n, cin, h, w))
        wt = rng.standard_normal((cout, cin, k, k))
        b = rng.standard_normal(cout)
        fast = conv2d_forward(x, wt, b, stride, pad)
        slow = conv2d_naive(x, wt, b, stride, pad)
        assert fast.shape == slow.shape
        worst = max(worst, float(np.max(np.abs(fast - slow))))
    record(2, "convolution oracle", worst < 1e-10, f"100 shapes, max abs diff {worst:.2e}")


def test_03_resampler_oracle():
    rng = np.random.default_rng(3)
    worst = 0.0
    for h, w, oh, ow in [(12, 12, 6, 6), (13, 9, 5, 4), (8, 10, 16, 20), (7, 7, 21, 21),
                         (20, 18, 5, 6), (9, 11, 9, 11)]:
        img = rng.random((h, w))
        diff = imresize_bicubic(img, oh, ow) - direct_resize(img, oh, ow)
        worst = max(worst, float(np.max(np.abs(diff))))
    fixed = all(np.array_equal(imresize_bicubic(np.full((12, 15), c), oh, ow),
                               np.full((oh, ow), c))
                for c in (0.0, 0.3, 1.0) for oh, ow in [(6, 5), (24, 30), (3, 4)])
    kernel = (cubic_kernel(0.0), cubic_kernel(1.0), cubic_kernel(0.5), cubic_kernel(1.5))
    ok = worst < 1e-10 and fixed and kernel == (1.0, 0.0, 0.5625, -0.0625)
    record(3, "resampler oracle", ok,
           f"max abs diff {worst:.2e}, constant fixed points {fixed}, W(0,1,0.5,1.5)={kernel}")


def test_04_architecture_counts():
    g = Generator()
    fewer = Generator(GeneratorConfig(num_res_blocks=14))
    convs, blocks, count = conv_count(g), len(g.blocks), param_count(g)
    delta = count - param_count(fewer)
    ok = (convs == 34 and blocks == 15 and count == expected_generator_params() == 1_330_369
          and delta == 73_856)
    record(4, "architecture counts", ok,
           f"{convs} convs, {blocks} blocks, {count} params (analytic "
           f"{expected_generator_params()}), one block = {delta}")


def test_05_loss_identities(rng):
    x = rng.random((4, 1, 12, 12))
    floor, _ = charbonnier(x, x, 1e-3)
    floor_ok = math.isclose(floor, x.size * 1e-3, rel_tol=1e-12)

    xhat = rng.random(x.shape)
    d = Discriminator(DiscriminatorConfig(input_size=12, conv_channels=(4,)))
    value, grad, _ = generator_objective(x, xhat, d, None, LossWeights(0.0, 0.0))
    pix, pix_grad = charbonnier(xhat, x, 1e-3)
    exact = value == pix and np.array_equal(grad, pix_grad)

    half = np.full(16, 0.5)
    gan_err = abs(gan_losses(half, half).loss_d - 2 * math.log(2))
    record(5, "loss identities", floor_ok and exact and gan_err < 1e-12,
           f"floor {floor!r} vs {x.size * 1e-3!r}, alpha=beta=0 bit-exact {exact}, "
           f"|L_D(0.5) - 2 ln 2| = {gan_err:.1e}")


def test_06_schedule_fidelity(monkeypatch):
    cfg = TrainConfig()
    lrs = [lr_at_epoch(cfg, e) for e in (0, 49, 50, 74, 75, 99)]
    lr_ok = lrs == [1e-3, 1e-3, 1e-4, 1e-4, 1e-5, 1e-5]

    # Observe the optimizer settings actually used by the adversarial phase.
    seen = {"decay": [], "lr": set()}
    real_init, real_step = training.Adam.__init__, training.Adam.step

    def spy_init(self, params, *args, **kwargs):
        real_init(self, params, *args, **kwargs)
        seen["decay"].append(self.weight_decay)

    def spy_step(self, lr):
        seen["lr"].add(lr)
        return real_step(self, lr)

    monkeypatch.setattr(training.Adam, "__init__", spy_init)
    monkeypatch.setattr(training.Adam, "step", spy_step)
    ds = build_synthetic_dataset(frames=5, size=36, patch=12, stride=12)
    g = Generator(GeneratorConfig(base_channels=2, num_res_blocks=0))
    d = Discriminator(DiscriminatorConfig(input_size=12, conv_channels=(2,)))
    train_gan(g, d, FeatureNet(), ds, TrainConfig(batch_size=4, max_steps=2))
    gan_ok = seen["decay"] == [1e-4, 1e-3] and seen["lr"] == {1e-4}
    record(6, "schedule fidelity", lr_ok and gan_ok,
           f"lr at epochs 0/49/50/74/75/99 = {lrs}; GAN lr {sorted(seen['lr'])}, "
           f"decay G/D = {seen['decay']}")


def test_07_overfit_smoke(pretrained, desk, fixture_ds):
    p = pretrained
    ratio = p["mse0"] / p["mse1"]
    train_psnr = 10 * math.log10(1.0 / p["mse1"])
    steps = len(p["log"])
    ok = (len(fixture_ds) == 48 and steps == 500 and ratio >= 100 and train_psnr >= 35
          and p["seconds"] < 600)
    record(7, "overfit smoke test", ok,
           f"{steps} iterations on {len(fixture_ds)} samples, MSE {p['mse0']:.3g} -> "
           f"{p['mse1']:.3g} ({ratio:.0f}x), train PSNR {train_psnr:.2f} dB, {p['seconds']:.0f} s")


def test_08_gan_stability(pretrained, desk, fixture_ds, out_dir):
    logs, finals = {}, {}
    for mode in ("charbonnier", "l2"):
        g = copy.deepcopy(pretrained["generator"])
        d = Discriminator(desk.discriminator, seed=desk.seed + 1)
        f = ck.make_feature_net(desk.feature_net)
        cfg = training.with_overrides(desk.train, charbonnier_mode=mode, max_steps=200)
        _, _, tlog = train_gan(g, d, f, fixture_ds, cfg)
        logs[mode] = tlog
        finals[mode] = tlog.column("loss_d")[-1]
        (out_dir / f"gan_{mode}.log.csv").write_text(tlog.to_csv(zero_time=True))
    plot_loss_curves(logs, out_dir / "gan_modes.svg", title="adversarial phase: charbonnier vs l2")
    loss_d = logs["charbonnier"].column("loss_d")
    ok = (len(loss_d) == 200 and bool(np.all(np.isfinite(loss_d))) and finals["charbonnier"] > 0.05
          and len(logs["l2"]) == 200)
    record(8, "GAN stability harness", ok,
           f"final L_D charbonnier {finals['charbonnier']:.4f}, l2 {finals['l2']:.4f}; "
           f"l2 warnings: {logs['l2'].warnings or 'none'}; curves in {out_dir}")


def test_09_ablation_harness(pretrained, desk, out_dir):
    held_out = build_synthetic_dataset(seed=desk.seed + 1, scale=desk.train.scale)
    fnet = ck.make_feature_net(desk.feature_net)
    g = pretrained["generator"]
    full = evaluate(g, held_out, fnet, crop=held_out.scale, model="full")
    center = evaluate(g, held_out, fnet, crop=held_out.scale, center_frame_only=True,
                      model="center")
    for name, rep in (("full", full), ("center", center)):
        (out_dir / f"ablation_{name}.csv").write_text(rep.to_csv())
    ok = center.mean_psnr <= full.mean_psnr
    record(9, "ablation harness", ok,
           f"full sequence {full.mean_psnr:.2f} dB, center frame only {center.mean_psnr:.2f} dB "
           f"(gap {full.mean_psnr - center.mean_psnr:.2f} dB)")


def test_10_transfer_mechanism(pretrained, desk, tmp_path):
    source = tmp_path / "x2.vsrc"
    ck.save_network(source, pretrained["generator"])
    x4 = build_synthetic_dataset(seed=desk.seed + 2, scale=4)

    target = transfer_init(source, Generator(desk.generator, seed=desk.seed + 7))
    same = np.array_equal(target.forward(x4.lr), pretrained["generator"].forward(x4.lr))

    fresh = Generator(desk.generator, seed=desk.seed + 7)
    f = ck.make_feature_net(desk.feature_net)
    weights = desk.train.loss_weights

    def objective(gen):
        d = Discriminator(desk.discriminator, seed=desk.seed + 1)
        return generator_objective(x4.hr, gen.forward(x4.lr), d, f, weights,
                                   desk.train.generator_mode, desk.train.charbonnier_mode)[0]

    after, random_init = objective(target), objective(fresh)
    record(10, "transfer mechanism", same and after <= random_init,
           f"forward-identical {same}; initial objective on the x4 fixture "
           f"{after:.4g} after transfer vs {random_init:.4g} fresh")


def test_11_persistence(pretrained, desk, fixture_ds, tmp_path, monkeypatch):
    first = ck.save_network(tmp_path / "g.vsrc", pretrained["generator"], with_optimizer=True)
    g2, meta_ckpt = ck.load_network(tmp_path / "g.vsrc")
    ckpt_same = ck.encode(ck.from_network(g2, with_optimizer=True, meta=meta_ckpt.meta)) == first

    write_dataset(tmp_path / "a.vsrd", fixture_ds)
    write_dataset(tmp_path / "b.vsrd", read_dataset(tmp_path / "a.vsrd"))
    data_same = (tmp_path / "a.vsrd").read_bytes() == (tmp_path / "b.vsrd").read_bytes()

    rng = np.random.default_rng(11)
    positions = sorted({0, 5, len(first) - 1, *rng.integers(0, len(first), 300).tolist()})
    detected = 0
    for pos in positions:
        bad = bytearray(first)
        bad[pos] ^= int(rng.integers(1, 256))
        try:
            ck.decode(bytes(bad))
        except CheckpointError:
            detected += 1

    monkeypatch.chdir(tmp_path)
    runs = []
    for name in ("run1", "run2"):
        argv = [
            ["synth-data", "--seed", "5", "--out", f"{name}/data.vsrd"],
            ["pretrain", "--config", str(conftest.DESK_CONFIG), "--data", f"{name}/data.vsrd",
             "--max-steps", "6", "--checkpoint-dir", name, "--out", f"{name}/g.vsrc"],
            ["train-gan", "--config", str(conftest.DESK_CONFIG), "--data", f"{name}/data.vsrd",
             "--init", f"{name}/g.vsrc", "--max-steps", "3", "--checkpoint-dir", name,
             "--out", f"{name}/gan.vsrc"],
            ["eval", "--checkpoint", f"{name}/gan.vsrc", "--data", f"{name}/data.vsrd",
             "--out", f"{name}/report"],
            ["plot", "--log", f"{name}/gan.log.csv", "--out", f"{name}/curves.svg"],
        ]
        codes = [main(["--deterministic", *a]) for a in argv]
        files = {p.relative_to(name).as_posix(): p.read_bytes()
                 for p in sorted(Path(name).rglob("*")) if p.is_file()}
        runs.append((codes, files))
    (codes1, files1), (codes2, files2) = runs
    reproducible = codes1 == codes2 == [0] * 5 and files1 == files2
    ok = ckpt_same and data_same and detected == len(positions) and reproducible
    record(11, "persistence", ok,
           f"checkpoint round trip {ckpt_same}, dataset round trip {data_same}, "
           f"corruption detected {detected}/{len(positions)}, end-to-end runs identical "
           f"{reproducible} ({len(files1)} files)")


def test_12_metric_oracles():
    rng = np.random.default_rng(12)
    x = rng.uniform(0.0, 0.9, (1, 48, 48))
    offset_err = abs(psnr(x, x + 0.1) - 20.0)
    ident = ssim(x, x)
    worst = 0.0
    for _ in range(5):
        a = rng.random((20, 24))
        b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
        worst = max(worst, abs(ssim(a, b) - ssim_direct(a, b)))
    ok = offset_err <= 1e-9 and abs(ident - 1.0) < 1e-12 and worst < 1e-6
    record(12, "metric oracles", ok,
           f"|PSNR - 20| = {offset_err:.1e}, SSIM(x,x) = {ident!r}, max oracle diff {worst:.1e}")
