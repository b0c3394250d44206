"""Exit-criteria checks. Each test records one PASS/FAIL line, collected in
the terminal summary under "acceptance criteria"."""

import itertools
import time

import numpy as np
import pytest

from resf_enhance.cli import main
from resf_enhance.dsp import StftConfig, decompose, interior, istft, padded_stft, recompose, stft
from resf_enhance.enhance import oracle_enhance
from resf_enhance.evaluation import aggregate, edit_distance, wer
from resf_enhance.losses import ConstantScorer, loss_discriminator, loss_tf, loss_tf_grad, loss_time, loss_time_grad
from resf_enhance.simulate import (
    NINE_SNRS_DB,
    FfrBand,
    SubtractionConfig,
    band_energy_ratio,
    global_snr_db,
    make_triplet,
    scale_noise,
    subtract_magnitudes,
    subtraction_factors,
)
from resf_enhance.stream import IdentityEnhancer, StreamState, stream_signal
from resf_enhance.synth import ego_voice, harmonic_utterance, white_noise
from resf_enhance.twomask import (
    MaskPair,
    ToyGeneratorModel,
    ToyHyper,
    enhance_magnitude,
    oracle_masks,
    save_model,
    toy_generate,
    toy_train,
)
from resf_enhance.wavio import read_wav, write_wav

pytestmark = pytest.mark.acceptance

SR = 16000
CFG = StftConfig()
FFR = FfrBand()
BAND = FFR.bin_mask(CFG.n_fft, SR)
WINDOW = 32640


@pytest.fixture
def check(record_property):
    def _check(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        record_property("acceptance", line)
        print(line)
        assert ok, line

    return _check


def test_stft_perfect_reconstruction(check):
    rng = np.random.default_rng(100)
    worst_err, worst_time = 0.0, 0.0
    for _ in range(20):
        x = rng.standard_normal(WINDOW)
        start = time.perf_counter()
        y = istft(stft(x, CFG), CFG)
        worst_time = max(worst_time, time.perf_counter() - start)
        sl = interior(len(x), CFG)
        worst_err = max(worst_err, np.linalg.norm(y[sl] - x[sl]) / np.linalg.norm(x[sl]))
    check(
        "STFT perfect reconstruction",
        worst_err < 1e-6 and worst_time < 1.0,
        f"20 x 2040 ms, worst interior rel L2 {worst_err:.2e} (< 1e-6), worst time {worst_time:.3f} s (< 1 s)",
    )


def test_recomposition_identities(check):
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(100):
        shape = (int(rng.integers(1, 50)), 201)
        z = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        worst = max(worst, np.max(np.abs(recompose(*decompose(z)) - z)))
        m = rng.uniform(0, 5, shape)
        p = rng.uniform(-np.pi, np.pi, shape)
        m2, p2 = decompose(recompose(m, p))
        worst = max(worst, np.max(np.abs(m2 - m)), np.max(np.abs(np.angle(np.exp(1j * (p2 - p))))))
    check("decompose/recompose identities", worst < 1e-9, f"100 spectrograms, worst entry error {worst:.2e} (< 1e-9)")


def test_zero_restoration_directed(check):
    rng = np.random.default_rng(102)
    err_sq = ref_sq = worst_bin = 0.0
    n_zeroed, leaked = 0, 0.0
    sub = SubtractionConfig(oversubtraction_factor=3.0, base_factor=1.0, spectral_floor=0.0)
    alpha = subtraction_factors(sub, FFR, CFG.n_fft, SR)
    for _ in range(10):
        human, ego = harmonic_utterance(rng), ego_voice(rng)
        noise = scale_noise(human, ego, 0.0)
        s = np.abs(padded_stft(human.samples, CFG))
        m = np.abs(padded_stft(human.samples + noise, CFG))
        e = np.abs(padded_stft(noise, CFG))
        y = subtract_magnitudes(m, e, alpha, sub.spectral_floor)
        zeroed = (y == 0) & BAND & (s > 1e-6)
        n_zeroed += int(zeroed.sum())
        out = enhance_magnitude(y, oracle_masks(y, s, FFR))
        err_sq += float(np.sum((out[zeroed] - s[zeroed]) ** 2))
        ref_sq += float(np.sum(s[zeroed] ** 2))
        worst_bin = max(worst_bin, float(np.max(np.abs(out[zeroed] - s[zeroed]))))
        # any multiplicative mask, including the unclipped clean/noisy ratio
        ratio = s / (y + 1e-8)
        for mask in (rng.uniform(0, 1, y.shape), rng.uniform(0, 1e6, y.shape), ratio):
            gained = enhance_magnitude(y, MaskPair(np.zeros_like(y), mask))
            leaked = max(leaked, float(np.max(np.abs(gained[zeroed]))))
    rel = (err_sq / ref_sq) ** 0.5
    check(
        "zero-restoration directed test",
        n_zeroed > 0 and rel < 1e-3 and leaked == 0.0,
        f"{n_zeroed} FFR bins zeroed, oracle rel L2 error {rel:.2e} (< 1e-3, worst bin abs {worst_bin:.1e}), "
        f"multiplicative-only max output {leaked}",
    )


def test_oracle_end_to_end(check):
    before, after = [], []
    for i in range(20):
        human, ego = harmonic_utterance(np.random.default_rng(i)), ego_voice(np.random.default_rng(500 + i))
        tri = make_triplet(human, ego, 0.0)
        y = oracle_enhance(tri.distortion.samples, human.samples)
        before.append(band_energy_ratio(tri.distortion.samples, human.samples, BAND))
        after.append(band_energy_ratio(y, human.samples, BAND))
    ok = max(before) < 0.2 and min(after) >= 0.95
    check(
        "oracle end-to-end FFR energy",
        ok,
        f"20 utterances at 0 dB, before max {max(before):.3f} (< 0.2), after min {min(after):.3f} "
        f"mean {np.mean(after):.3f} (>= 0.95)",
    )


def _zeroed_pairs(seeds):
    pairs = []
    for seed in seeds:
        s = np.abs(padded_stft(harmonic_utterance(np.random.default_rng(seed)).samples, CFG))
        y = s.copy()
        y[:, BAND] = 0.0
        pairs.append((y, s))
    return pairs


def _ffr_error(model, pairs):
    return sum(float(np.sum((enhance_magnitude(y, toy_generate(model, y)) - s)[:, BAND] ** 2)) for y, s in pairs)


def test_toy_generator_learning(check):
    start = time.perf_counter()
    train, held_out = _zeroed_pairs(range(40)), _zeroed_pairs(range(1000, 1020))
    model, losses = toy_train(train, FFR, ToyHyper())
    baseline = ToyGeneratorModel(np.zeros_like(model.weights), model.gains, model.k_low, model.k_high)
    reduction = 1 - _ffr_error(model, held_out) / _ffr_error(baseline, held_out)
    monotone = all(b <= a for a, b in zip(losses, losses[1:]))
    elapsed = time.perf_counter() - start
    check(
        "toy generator learning",
        reduction >= 0.5 and monotone and elapsed < 120,
        f"held-out FFR error reduced {100 * reduction:.1f}% (>= 50%), loss monotone={monotone}, "
        f"runtime {elapsed:.1f} s (< 120 s)",
    )


def test_loss_gradients(check):
    rng = np.random.default_rng(104)
    h = 1e-5
    worst_tf = worst_time = 0.0
    for _ in range(100):
        shape = tuple(rng.integers(2, 8, 2))
        est = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        ref = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        g = loss_tf_grad(est, ref)
        idx = tuple(rng.integers(0, n) for n in shape)
        for unit, part in ((1.0, np.real), (1j, np.imag)):
            plus, minus = est.copy(), est.copy()
            plus[idx] += unit * h
            minus[idx] -= unit * h
            num = (loss_tf(plus, ref) - loss_tf(minus, ref)) / (2 * h)
            worst_tf = max(worst_tf, abs(part(g[idx]) - num) / max(abs(num), 1e-12))

        n = int(rng.integers(5, 100))
        a, b = rng.standard_normal(n), rng.standard_normal(n)
        i = int(np.argmax(np.abs(a - b)))  # away from the kink at a == b
        plus, minus = a.copy(), a.copy()
        plus[i] += h
        minus[i] -= h
        num = (loss_time(plus, b) - loss_time(minus, b)) / (2 * h)
        worst_time = max(worst_time, abs(loss_time_grad(a, b)[i] - num) / max(abs(num), 1e-12))
    check(
        "loss gradient checks",
        worst_tf < 1e-4 and worst_time < 1e-4,
        f"100 trials each, worst rel error loss_tf {worst_tf:.2e}, loss_time {worst_time:.2e} (< 1e-4)",
    )


def test_discriminator_arithmetic(check):
    x = np.ones((3, 128))
    got = [
        loss_discriminator(ConstantScorer(1.0), x, x, 1.0),
        loss_discriminator(ConstantScorer(0.5), x, x, 1.0),
        loss_discriminator(ConstantScorer(1.0), x, x, 0.0),
    ]
    check("L_D arithmetic", got == [0.0, 0.5, 1.0], f"cases (1,q=1) (0.5,q=1) (1,q=0) -> {got}")


class _Recorder:
    def __init__(self):
        self.windows = []

    def enhance(self, w):
        self.windows.append(w.copy())
        return w


def test_incremental_protocol(check):
    rng = np.random.default_rng(105)
    x = rng.standard_normal(7 * 8160 + 1001)
    exact = stream_signal(x, IdentityEnhancer()).tobytes() == x.tobytes()

    state, rec = StreamState(), _Recorder()
    blocks = [rng.standard_normal(8160) for _ in range(6)]
    emitted_at, window_ok = [], True
    for k, block in enumerate(blocks, 1):
        for j in range(3):
            if state.push_buffer(block[j * 2720 : (j + 1) * 2720], rec) is not None:
                emitted_at.append(3 * (k - 1) + j + 1)
        history = [np.zeros(8160)] * max(0, 4 - k) + blocks[max(0, k - 4) : k]
        window_ok &= np.array_equal(rec.windows[-1], np.concatenate(history))
    first = np.array_equal(rec.windows[0], np.concatenate([np.zeros(3 * 8160), blocks[0]]))
    timing = emitted_at == [3, 6, 9, 12, 15, 18]
    check(
        "IP protocol",
        exact and first and window_ok and timing,
        f"identity bit-exact={exact}, block-1 window [0,0,0,B1]={first}, eviction={window_ok}, "
        f"emissions at buffers {emitted_at}",
    )


def test_ip_vs_non_ip_parity(check, tmp_path):
    rng = np.random.default_rng(106)
    human, ego = harmonic_utterance(rng, 3.3), ego_voice(rng, 3.3)
    tri = make_triplet(human, ego, 5.0)
    write_wav(tmp_path / "in.wav", tri.distortion)
    model = tmp_path / "toy.bin"
    y = np.abs(padded_stft(tri.distortion.samples, CFG))
    s = np.abs(padded_stft(human.samples, CFG))
    save_model(toy_train([(y, s)], FFR, ToyHyper(epochs=20))[0], model)
    codes, lengths = [], []
    for flag in ([], ["--streaming"]):
        out = tmp_path / f"out{len(flag)}.wav"
        codes.append(main(["enhance", str(tmp_path / "in.wav"), str(out), "--generator", f"toy:{model}", *flag]))
        lengths.append(len(read_wav(out)) if out.exists() else -1)
    n_in = len(tri.distortion)
    check(
        "IP vs non-IP parity",
        codes == [0, 0] and lengths[0] == lengths[1] == n_in,
        f"exit codes {codes}, output lengths without/with streaming {lengths}, input {n_in}",
    )


def _brute_force(ref, hyp):
    best = len(ref) + len(hyp)
    for k in range(1, min(len(ref), len(hyp)) + 1):
        for ri in itertools.combinations(range(len(ref)), k):
            for hi in itertools.combinations(range(len(hyp)), k):
                best = min(best, len(ref) + len(hyp) - 2 * k + sum(ref[a] != hyp[b] for a, b in zip(ri, hi)))
    return best


def test_wer_oracle_equivalence(check):
    mismatches, pairs = 0, 0
    seqs = [s for n in range(6) for s in itertools.product("ab", repeat=n)]
    for ref in seqs:
        for hyp in seqs:
            pairs += 1
            mismatches += edit_distance(ref, hyp) != _brute_force(ref, hyp)
    rng = np.random.default_rng(107)
    for n_ref in range(1, 9):
        for n_hyp in range(9):
            for _ in range(6):
                ref, hyp = list(rng.choice(list("abc"), n_ref)), list(rng.choice(list("abc"), n_hyp))
                pairs += 1
                mismatches += wer(ref, hyp) != _brute_force(ref, hyp) / n_ref
    ref10 = "one two three four five six seven eight nine ten".split()
    hyp10 = "one two three four five six seven ate ninety nine ten".split()
    boundary = wer(ref10, hyp10)
    check(
        "WER oracle equivalence",
        mismatches == 0 and boundary == 0.20,
        f"{pairs} pairs up to length 8 vs exhaustive alignment, {mismatches} mismatches; 10-word/2-error WER {boundary}",
    )


def test_snr_mixing_sweep(check):
    rng = np.random.default_rng(108)
    worst = 0.0
    for _ in range(10):
        speech = harmonic_utterance(rng, rng.uniform(1.0, 3.0))
        noise = white_noise(rng, int(rng.integers(8000, 64000)), level=rng.uniform(0.01, 0.5))
        for snr in NINE_SNRS_DB:
            worst = max(worst, abs(global_snr_db(speech.samples, scale_noise(speech, noise, snr)) - snr))
    check("SNR mixing sweep", worst < 0.01, f"10 pairs x {len(NINE_SNRS_DB)} SNRs, worst deviation {worst:.2e} dB (< 0.01)")


def test_aggregation_fidelity(check):
    fixtures = [
        ([0.0, 0.0], {"mean": 0.00, "std": 0.00, "pct_le_20": 100.00}),
        ([0.10, 0.30], {"mean": 20.00, "std": 10.00, "pct_le_20": 50.00}),
        # 257 perfect, 200 at 10 %, 43 at 40 %: mean 37.2 / 500, 457 of 500 compliant
        ([0.0] * 257 + [0.10] * 200 + [0.40] * 43, {"mean": 7.44, "std": 11.06, "pct_le_20": 91.40}),
        # all three reported columns: sum 8.686 + 22.326 + 6.188 = 37.2,
        # E[x^2] = 3.537242 / 500, variance 0.001539124, STD 0.03923
        ([0.202] * 43 + [0.061] * 366 + [0.068] * 91, {"mean": 7.44, "std": 3.92, "pct_le_20": 91.40}),
    ]
    got = [aggregate(values).summary() for values, _ in fixtures]
    ok = all(g == want for g, (_, want) in zip(got, fixtures))
    check("aggregation fidelity", ok, "; ".join(f"{g}" for g in got))
