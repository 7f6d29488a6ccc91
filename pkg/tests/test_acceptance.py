"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

The lines are printed in pytest's terminal summary (see conftest.py). Run just
this file with ``pytest tests/test_acceptance.py`` or ``python tests/test_acceptance.py``.
The desk pipeline runs twice per session (criteria 6 to 8 share it) and takes
a few minutes on one core.
"""

import csv
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from breathnet.cli import main
from breathnet.config import load_run_config
from breathnet.data import load_pair, read_manifest, split_corpus, synth_pair
from breathnet.dsp import AudioClip, SpectrogramConfig, istft, stft
from breathnet.evaluation import mfcc_distance
from breathnet.losses import mae_loss, speech_loss, total_loss
from breathnet.model import UNetConfig, count_parameters, init_params, unet_forward
from breathnet.modelio import load_model
from breathnet.optim import EarlyStopping
from breathnet.training import SpectrogramBank, TrainConfig, Trainer, evaluate_loss, extract_patches
from breathnet.wavio import read_wav
from gradcheck import check_op, unet_gradient_errors
from test_tensor import GRAD_CASES

DESK_CONF = str(Path(__file__).resolve().parents[1] / "configs" / "desk.conf")

RESULTS: dict[int, tuple[bool, str, str]] = {}


@contextmanager
def criterion(number: int, title: str):
    """Record PASS when the block finishes, FAIL (and re-raise) when it does not."""
    rec = {"detail": ""}
    try:
        yield rec
    except BaseException as exc:
        detail = rec["detail"] or f"{type(exc).__name__}: {exc}"
        RESULTS[number] = (False, title, detail)
        raise
    RESULTS[number] = (True, title, rec["detail"])


def report_lines() -> list[str]:
    lines = []
    for n in range(1, 10):
        if n not in RESULTS:
            lines.append(f"criterion {n}: NOT RUN")
            continue
        ok, title, detail = RESULTS[n]
        lines.append(f"criterion {n} {'PASS' if ok else 'FAIL'}: {title}: {detail}")
    return lines


# -- 1 ------------------------------------------------------------------------------------------------

def test_criterion_1_stft_round_trip():
    with criterion(1, "STFT/ISTFT round trip") as rec:
        x = np.random.default_rng(0).uniform(-1, 1, 22050)
        t0 = time.perf_counter()
        y = istft(stft(AudioClip(x, 22050), SpectrogramConfig())).samples
        seconds = time.perf_counter() - t0
        n = min(len(x), len(y))
        err = np.linalg.norm(x[:n] - y[:n]) / np.linalg.norm(x[:n])
        rec["detail"] = f"relative L2 error {err:.2e} (< 1e-6), {seconds:.3f} s (< 1 s)"
        assert err < 1e-6 and seconds < 1.0, rec["detail"]


# -- 2 ------------------------------------------------------------------------------------------------

def test_criterion_2_gradient_suite():
    with criterion(2, "gradient suite") as rec:
        t0 = time.perf_counter()
        worst_name, worst = max(((name, check_op(op, *arrays)) for name, (op, arrays) in GRAD_CASES.items()),
                                key=lambda item: item[1])
        e2e = max(unet_gradient_errors(UNetConfig.desk()))
        seconds = time.perf_counter() - t0
        rec["detail"] = (f"{len(GRAD_CASES)} primitives, worst {worst:.2e} ({worst_name}) (< 1e-4); "
                         f"desk U-Net end-to-end worst {e2e:.2e} (< 1e-3); {seconds:.1f} s (< 120 s)")
        assert worst < 1e-4 and e2e < 1e-3 and seconds < 120, rec["detail"]


# -- 3 ------------------------------------------------------------------------------------------------

def test_criterion_3_loss_identities():
    with criterion(3, "loss identities") as rec:
        t, p = np.array([1.0, 2.0]), np.array([0.0, 0.0])
        units = tuple(float(f(t, p).data) for f in (mae_loss, speech_loss, total_loss))
        rng = np.random.default_rng(3)
        worst = 0.0
        for _ in range(1000):
            shape = tuple(rng.integers(1, 8, size=rng.integers(1, 4)))
            yt, yp = rng.random(shape) * 5, rng.standard_normal(shape) * 5
            direct = 2 * np.mean(yt * np.abs(yt - yp))
            worst = max(worst, abs(float(speech_loss(yt, yp).data) - direct))
        rec["detail"] = f"unit values {units} (exact 1.5/5.0/6.5); identity worst {worst:.1e} (<= 1e-12)"
        assert units == (1.5, 5.0, 6.5) and worst <= 1e-12, rec["detail"]


# -- 4 ------------------------------------------------------------------------------------------------

def test_criterion_4_parameter_budget():
    with criterion(4, "parameter budget") as rec:
        t0 = time.perf_counter()
        count = count_parameters(UNetConfig.paper())
        seconds = time.perf_counter() - t0
        rec["detail"] = f"{count:,} parameters at the paper configuration ([1.5M, 2.3M]), {seconds * 1e3:.1f} ms"
        assert 1_500_000 <= count <= 2_300_000 and seconds < 1.0, rec["detail"]


# -- 5 ------------------------------------------------------------------------------------------------

def test_criterion_5_overfit_one_pair():
    with criterion(5, "overfit smoke test") as rec:
        cfg = load_run_config(DESK_CONF)
        assert (cfg.model.depth, cfg.model.base_filters, cfg.model.input_frames) == (2, 4, 64)
        pair = synth_pair(cfg.synth, 0).as_pair("0")
        grid = SpectrogramBank.from_pairs([pair], cfg.model, cfg.stft).grid()
        # memorize the patch of this pair that holds the most breath energy
        removed = (grid.mags - grid.targets).reshape(len(grid), -1).sum(axis=1)
        patch = grid.batch([int(np.argmax(removed))])
        params = init_params(cfg.model, cfg.seed)
        tc = TrainConfig(learning_rate=1e-3, loss_domain=cfg.train.loss_domain, seed=cfg.seed)
        trainer = Trainer(params, tc)
        # scored in eval mode at both ends, so dropout noise does not enter the ratio
        initial = evaluate_loss(params, patch, loss_domain=tc.loss_domain)
        t0 = time.perf_counter()
        for _ in range(500):
            trainer.step(patch)
        seconds = time.perf_counter() - t0
        final = evaluate_loss(trainer.params, patch, loss_domain=tc.loss_domain)
        ratio = final / initial
        rec["detail"] = (f"{tc.loss_domain}-domain loss {initial:.4g} -> {final:.4g} after 500 steps "
                         f"= {ratio:.1%} (<= 5%), {seconds:.0f} s (< 180 s)")
        assert ratio <= 0.05 and seconds < 180, rec["detail"]


# -- desk pipeline, shared by 6 to 8 ---------------------------------------------------------------

def run_desk_pipeline(root: Path) -> dict:
    cfg = load_run_config(DESK_CONF)
    corpus, model, report = root / "corpus", root / "model.brnm", root / "report.csv"
    t0 = time.perf_counter()
    codes = [main(["--config", DESK_CONF, "synth", str(corpus), "--count", "8"])]
    manifest = corpus / "manifest.csv"
    codes.append(main(["--config", DESK_CONF, "train", str(manifest), str(model)]))
    codes.append(main(["--config", DESK_CONF, "eval", str(model), str(manifest), "--report", str(report)]))
    seconds = time.perf_counter() - t0
    test_ids = split_corpus(read_manifest(manifest), cfg.split.fractions, cfg.seed).test
    outputs = {}
    for i in test_ids:
        out = root / f"enhanced_{i:04d}.wav"
        codes.append(main(["--config", DESK_CONF, "infer", str(model),
                           str(corpus / f"pair_{i:04d}_input.wav"), str(out)]))
        outputs[i] = out
    return dict(cfg=cfg, codes=codes, seconds=seconds, manifest=manifest, model=model, report=report,
                history=model.with_suffix(".history.csv"), test_ids=test_ids, outputs=outputs)


@pytest.fixture(scope="session")
def desk_runs(tmp_path_factory):
    return [run_desk_pipeline(tmp_path_factory.mktemp(f"desk{k}")) for k in (1, 2)]


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_criterion_6_end_to_end_desk_run(desk_runs):
    with criterion(6, "end-to-end desk run") as rec:
        run = desk_runs[0]
        cfg = run["cfg"]
        assert run["codes"] == [0] * len(run["codes"]), f"exit codes {run['codes']}"

        # history: replaying the stopper gives a best epoch at the minimum, and the saved
        # model is that epoch's parameters
        hist = read_rows(run["history"])
        val = [float(r["val_loss"]) for r in hist]
        stopper = EarlyStopping(cfg.train.patience, cfg.train.min_delta)
        stops = [stopper.update(v) for v in val]
        best = stopper.best_epoch
        assert val[best - 1] <= min(val) + cfg.train.min_delta
        assert stops[-1] or len(val) == cfg.train.max_epochs
        assert not any(stops[:-1])
        manifest = read_manifest(run["manifest"])
        split = split_corpus(manifest, cfg.split.fractions, cfg.seed)
        val_set = extract_patches([load_pair(manifest, i) for i in split.validation], cfg.model, cfg.stft)
        saved = evaluate_loss(load_model(run["model"]), val_set, loss_domain=cfg.train.loss_domain)
        assert saved == pytest.approx(val[best - 1], rel=1e-4)

        rows = read_rows(run["report"])
        assert [int(r["pair"]) for r in rows] == run["test_ids"]
        w = np.array([float(r["duration_s"]) for r in rows])
        accuracy = float(np.sum(w * np.array([float(r["accuracy"]) for r in rows])) / w.sum())
        directions = []
        for r in rows:
            pair = load_pair(manifest, int(r["pair"]))
            directions.append((float(r["mfcc_distance"]), mfcc_distance(pair.input, pair.target, cfg.mfcc)))
        rec["detail"] = (f"{len(val)} epochs, best {best}; test pairs {run['test_ids']}: accuracy "
                         f"{accuracy:.4f} (>= 0.90); MFCC output vs input "
                         + ", ".join(f"{a:.4f} < {b:.4f}" for a, b in directions)
                         + f"; {run['seconds']:.0f} s (< 900 s)")
        assert accuracy >= 0.90, rec["detail"]
        assert all(a < b for a, b in directions), rec["detail"]
        assert run["seconds"] < 900, rec["detail"]


def segment_energy(x, frames, hop=512):
    """Energy of the hop-length segments centred on the given frames."""
    return sum(float(np.sum(x[max(k * hop - hop // 2, 0): k * hop + hop // 2] ** 2)) for k in frames)


def test_criterion_7_breath_suppression(desk_runs):
    with criterion(7, "breath suppression") as rec:
        run = desk_runs[0]
        cfg = run["cfg"]
        parts = []
        ok = True
        for i, out_path in run["outputs"].items():
            ref = synth_pair(cfg.synth, i, cfg.stft)
            x = read_wav(run["manifest"].parent / f"pair_{i:04d}_input.wav").samples
            y = read_wav(out_path).samples
            x = x[: len(y)]
            centres = np.arange(len(ref.labels)) * cfg.stft.hop
            speech = np.zeros(len(ref.labels), bool)
            for a, b in ref.speech:
                speech |= (centres >= a) & (centres < b)
            breath_frames = np.flatnonzero(ref.labels & (centres < len(y)))
            speech_frames = np.flatnonzero(speech & ~ref.labels & (centres < len(y)))
            drop = 10 * np.log10(segment_energy(x, breath_frames) / segment_energy(y, breath_frames))
            change = 10 * np.log10(segment_energy(y, speech_frames) / segment_energy(x, speech_frames))
            parts.append(f"pair {i}: breath frames -{drop:.1f} dB (>= 10), "
                         f"speech-only frames {change:+.3f} dB (|.| < 1)")
            ok &= drop >= 10 and abs(change) < 1
        rec["detail"] = "; ".join(parts)
        assert parts and ok, rec["detail"]


def test_criterion_8_determinism(desk_runs):
    with criterion(8, "determinism") as rec:
        a, b = desk_runs
        same_model = a["model"].read_bytes() == b["model"].read_bytes()
        same_report = a["report"].read_bytes() == b["report"].read_bytes()
        same_audio = all(a["outputs"][i].read_bytes() == b["outputs"][i].read_bytes() for i in a["outputs"])
        strip = lambda rows: [(r["epoch"], r["train_loss"], r["val_loss"]) for r in rows]
        same_history = strip(read_rows(a["history"])) == strip(read_rows(b["history"]))
        rec["detail"] = (f"model files identical: {same_model}; reports identical: {same_report}; "
                         f"enhanced audio identical: {same_audio}; loss history identical: {same_history}")
        assert same_model and same_report and same_audio and same_history, rec["detail"]


# -- 9 ------------------------------------------------------------------------------------------------

def test_criterion_9_mask_contract():
    with criterion(9, "mask contract") as rec:
        rng = np.random.default_rng(9)
        calls = bad = 0
        t0 = time.perf_counter()
        for _ in range(200):
            depth = int(rng.integers(1, 4))
            cfg = UNetConfig(depth=depth, base_filters=int(rng.integers(1, 5)),
                             use_batch_norm=bool(rng.integers(0, 2)),
                             dropout_rate=float(rng.uniform(0, 0.5)),
                             input_frames=int(rng.integers(1, 3)) * 2**depth,
                             input_bins=int(rng.integers(1, 3)) * 2**depth)
            params = init_params(cfg, int(rng.integers(0, 2**31)))
            for k in range(50):
                shape = (int(rng.integers(1, 3)), cfg.input_frames, cfg.input_bins, 1)
                # log magnitudes from near silence up to far beyond any real signal
                x = (rng.random(shape) * 10 ** rng.uniform(-3, 3)).astype(np.float32)
                out = unet_forward(params, x, cfg, "train" if k % 2 else "eval", rng=rng).data
                calls += 1
                bad += not (out.shape == x.shape and np.all((out > 0) & (out < 1)))
        seconds = time.perf_counter() - t0
        rec["detail"] = (f"{calls} forward passes over 200 random configs, {bad} violations "
                         f"of shape or (0, 1) range, {seconds:.0f} s")
        assert calls == 10_000 and bad == 0, rec["detail"]


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
