"""End-to-end acceptance gate.

Each test here checks one headline criterion at its stated tolerance and
prints a single PASS/FAIL line (visible with ``pytest -s`` or in captured
output on failure).  Oracles are shared with the unit-test modules so the
same independent references back both suites.
"""

import functools
import random
import time

import numpy as np
import pytest
import torch

import test_cli
import test_decoding
import test_metrics
import test_spotting

from signkit.cli import main as cli_main
from signkit.corpus import BOS, EOS, PAD, ClipRecord, detect_duplicates, extend_boundaries
from signkit.fusion import FusionConfig, FusionModel, beam_search, grad_check, greedy_decode, train
from signkit.fusion.training import TrainingPair
from signkit.fusion.model import MultiHeadAttention
from signkit.metrics import EvalPair, bleu, breakdown, rouge_l
from signkit.spotting import SpotConfig, normalized_edit_distance, spot_lexical


def criterion(name):
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except BaseException:
                print(f"FAIL: {name}")
                raise
            print(f"PASS: {name}")

        return wrapper

    return decorate


@criterion("spotting oracle equivalence (500 random streams, exact, <10s)")
def test_spotting_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    for _ in range(500):
        vocab = [f"w{i}" for i in range(int(rng.integers(2, 51)))]
        stream = test_spotting.random_stream(rng, "clip", int(rng.integers(1, 201)), vocab)
        sentence = list(rng.choice(vocab + ["oov1", "oov2"], size=int(rng.integers(0, 9))))
        cfg = SpotConfig(delta_l=float(rng.uniform(0.0, 0.9)))
        got = spot_lexical(stream, sentence, cfg)
        assert got == test_spotting.brute_force_lexical(stream, sentence, cfg)
    assert time.perf_counter() - start < 10.0


@criterion("edit-distance oracle (10,000 random pairs, exact; kitten/sitting = 3/7)")
def test_edit_distance_oracle():
    rng = random.Random(7)
    alphabet = "ABCDEFG"
    for _ in range(10_000):
        a = "".join(rng.choices(alphabet, k=rng.randint(0, 12)))
        b = "".join(rng.choices(alphabet, k=rng.randint(0, 12)))
        expected = test_spotting.dp_levenshtein(a, b)
        got = normalized_edit_distance(a, b)
        assert got == (expected / max(len(a), len(b)) if (a or b) else 0.0)
    assert normalized_edit_distance("kitten", "sitting") == 3 / 7


@criterion("spotting defaults are 0.6 / 0.2 / 0.5, window 32, stride 8")
def test_spot_config_defaults():
    cfg = SpotConfig()
    assert cfg.delta_l == 0.6
    assert cfg.delta_f == 0.2
    assert cfg.conf_min == 0.5
    assert cfg.window_len == 32
    assert cfg.stride == 8


@criterion("boundary extension [3.0,5.2] -> [2.5,5.7] and clamping, exact")
def test_boundary_extension():
    rec = ClipRecord("c", "v", 3000, 5200, "hello there")
    padded = extend_boundaries(rec, 0.5, 60.0)
    assert (padded.start_ms, padded.end_ms) == (2500, 5700)
    # clamp at the start of the video
    early = extend_boundaries(ClipRecord("c", "v", 200, 1200, "x"), 0.5, 60.0)
    assert (early.start_ms, early.end_ms) == (0, 1700)
    # clamp at the end of the video
    late = extend_boundaries(ClipRecord("c", "v", 58000, 59800, "x"), 0.5, 60.0)
    assert (late.start_ms, late.end_ms) == (57500, 60000)


@criterion("gradient check: 3-stream model, float64, max rel err < 1e-4, <60s")
def test_gradient_check():
    start = time.perf_counter()
    cfg = FusionConfig(
        vocab_size=10,
        stream_dims={"global": 4, "mouthing": 4, "hand": 4},
        model_dim=8,
        num_heads=2,
        enc_layers=1,
        dec_layers=1,
        ffn_dim=8,
        max_len=8,
        dropout=0.0,
    )
    torch.manual_seed(0)
    model = FusionModel(cfg).double().eval()
    g = torch.Generator().manual_seed(1)
    feats = {
        m: torch.randn(1, 4, cfg.stream_dims[m], generator=g, dtype=torch.float64)
        for m in cfg.enabled_streams
    }
    err = grad_check(model, feats, torch.tensor([[BOS, 5, 6, EOS]]))
    assert err < 1e-4
    assert time.perf_counter() - start < 60.0


@criterion("attention rows sum to 1 (1e-6) and masked weights are exactly 0, 100 shapes")
def test_attention_normalization():
    rng = random.Random(11)
    for i in range(100):
        heads = rng.choice([1, 2])
        dim = heads * rng.choice([2, 4])
        lq, lk, batch = rng.randint(1, 6), rng.randint(1, 6), rng.randint(1, 3)
        torch.manual_seed(i)
        mha = MultiHeadAttention(dim, heads, dropout=0.0).eval()
        q, k, v = (torch.randn(batch, n, dim) for n in (lq, lk, lk))
        mask = torch.rand(batch, lk) < 0.4
        mask[:, 0] = False  # keep every query row attendable
        _, weights = mha(q, k, v, key_padding_mask=mask)
        sums = weights.sum(-1)
        assert torch.allclose(sums, torch.ones_like(sums), atol=1e-6)
        masked = weights.masked_select(mask[:, None, None, :].expand_as(weights))
        assert (masked == 0).all()


@criterion("overfit sanity: 20 pairs, <=2k steps -> train BLEU-4 >= 99, held-out ~0, <5min")
def test_overfit_sanity():
    start = time.perf_counter()
    cfg = FusionConfig(
        vocab_size=40,
        stream_dims={"global": 8, "mouthing": 8, "hand": 8},
        model_dim=32,
        num_heads=2,
        enc_layers=2,
        dec_layers=2,
        ffn_dim=64,
        max_len=12,
        dropout=0.0,
        lr_peak=1e-3,
        warmup_iters=100,
        total_iters=2000,
        batch_size=20,
        seed=1,
    )
    g = torch.Generator().manual_seed(42)
    rng = random.Random(42)

    def make_pairs(count, tag):
        pairs = []
        for i in range(count):
            feats = {
                m: torch.randn(6, cfg.stream_dims[m], generator=g)
                for m in cfg.enabled_streams
            }
            ids = [rng.randrange(4, cfg.vocab_size) for _ in range(rng.randint(3, 6))]
            pairs.append(TrainingPair(f"{tag}{i}", feats, [BOS, *ids, EOS]))
        return pairs

    train_pairs = make_pairs(20, "train")
    held_out = make_pairs(5, "dev")
    model, curve = train(train_pairs, cfg)
    assert len(curve) == 2000

    def score(pairs):
        eval_pairs = []
        for p in pairs:
            hyp = greedy_decode(model, {m: f.unsqueeze(0) for m, f in p.features.items()},
                                max_len=cfg.max_len)
            hyp_words = tuple(f"t{t}" for t in hyp.tokens if t not in (BOS, EOS, PAD))
            ref_words = tuple(f"t{t}" for t in p.target if t not in (BOS, EOS, PAD))
            eval_pairs.append(EvalPair(p.clip_id, hyp_words, ref_words, frozenset({"other"})))
        return bleu(eval_pairs, 4)

    assert score(train_pairs) >= 99.0
    assert score(held_out) < 5.0
    assert time.perf_counter() - start < 300.0


@criterion("beam=1 equals greedy on 50 random models; exhaustive toy equivalence")
def test_beam_search_equivalences():
    for seed in range(50):
        model, feats = test_decoding.small_model(seed=seed)
        assert beam_search(model, feats, beam_width=1, max_len=6).tokens == \
            greedy_decode(model, feats, max_len=6).tokens
    model, feats = test_decoding.small_model(vocab_size=4, seed=3, max_len=3)
    for alpha in (0.0, 1.0):
        norm, tokens = test_decoding.enumerate_best(model, feats, max_len=3, alpha=alpha)
        hyp = beam_search(model, feats, beam_width=100, length_penalty=alpha, max_len=3)
        assert list(hyp.tokens) == tokens
        assert hyp.normalized_score(alpha) == pytest.approx(norm, abs=1e-5)


@criterion("metric goldens: identity 100s; 36.79 / 80.0 fixtures (1e-2); reference agreement (1e-6)")
def test_metric_goldens():
    identity = [test_metrics.pair("the cat sat on the mat", "the cat sat on the mat")]
    assert bleu(identity, 4) == pytest.approx(100.0)
    assert rouge_l(identity) == pytest.approx(100.0)
    # unigram precision 1 on a 3-token hypothesis vs 6-token reference:
    # brevity penalty exp(1 - 6/3) alone -> 36.79
    short = [test_metrics.pair("the cat sat", "the cat sat on the mat")]
    assert bleu(short, 1) == pytest.approx(36.79, abs=1e-2)
    # LCS 2 against a 3-token reference: P=1, R=2/3 -> F1 = 0.8
    assert rouge_l([test_metrics.pair("the cat", "the cat sat")]) == pytest.approx(80.0, abs=1e-2)
    rng = random.Random(0)
    vocab = [f"w{i}" for i in range(12)]
    for _ in range(100):
        pairs = []
        for i in range(rng.randint(1, 8)):
            hyp = " ".join(rng.choices(vocab, k=rng.randint(1, 10)))
            ref = " ".join(rng.choices(vocab, k=rng.randint(1, 10)))
            pairs.append(test_metrics.pair(hyp, ref, clip_id=f"c{i}"))
        for n in (1, 2, 3, 4):
            assert bleu(pairs, n) == pytest.approx(test_metrics.reference_bleu(pairs, n), abs=1e-6)


@criterion("breakdown subsets partition the eval set; 105/967 duplicates -> 10.9%")
def test_breakdown_partition_and_duplicate_rate():
    rng = random.Random(5)
    for trial in range(20):
        pairs = []
        for i in range(rng.randint(1, 40)):
            tags = [rng.choice(["news", "vlog", "other"])]
            if rng.random() < 0.4:
                tags.append("duplicate")
            if rng.random() < 0.3:
                tags.append("has_fingerspelling")
            pairs.append(test_metrics.pair("a b", "a c", clip_id=f"c{trial}-{i}", tags=tags))
        report = breakdown(pairs)
        total = report.subsets["all"].count

        def count(name):
            return report.subsets[name].count if name in report.subsets else 0

        assert count("duplicate") + count("non_duplicate") == total
        assert count("news") + count("vlog") + count("other") == total
        assert count("with_fs") + count("without_fs") == total

    train_recs = [
        ClipRecord(f"t{i}", "v", 0, 1000, f"train sentence number {i}") for i in range(105)
    ]
    eval_recs = [
        ClipRecord(f"e{i}", "v", 0, 1000, f"Train sentence number {i}!", split="test")
        for i in range(105)
    ] + [
        ClipRecord(f"f{i}", "v", 0, 1000, f"fresh eval sentence {i}", split="test")
        for i in range(967 - 105)
    ]
    duplicates, non_duplicates = detect_duplicates(eval_recs, train_recs)
    assert len(duplicates) == 105 and len(non_duplicates) == 862
    assert round(100 * len(duplicates) / len(eval_recs), 1) == 10.9


@criterion("determinism: two seeded pipeline runs are byte-identical")
def test_pipeline_determinism(tmp_path):
    def run(root):
        root.mkdir()
        captions = root / "captions"
        captions.mkdir()
        (captions / "vidA.vtt").write_text(test_cli.VTT_A)
        (captions / "vidB.vtt").write_text(test_cli.VTT_B)
        (captions / "videos.json").write_text(
            '{"vidA": {"source": "news", "signer_id": "S1", "duration_sec": 10.0},'
            ' "vidB": {"source": "vlog", "signer_id": "S2", "duration_sec": 8.0}}'
        )
        for sub in ("features", "posteriors", "out"):
            (root / sub).mkdir()
        config = root / "pipeline.yaml"
        config.write_text(
            f"""\
paths:
  captions_dir: {captions}
  features_dir: {root / 'features'}
  posteriors_dir: {root / 'posteriors'}
  proposals_file: {root / 'proposals.tsv'}
  output_dir: {root / 'out'}
corpus:
  min_count: 1
  dev_size: 1
  test_size: 1
fusion:
  stream_dims: {{"global": 4, "mouthing": 4, "hand": 4}}
  model_dim: 8
  num_heads: 2
  enc_layers: 1
  dec_layers: 1
  ffn_dim: 8
  max_len: 10
  dropout: 0.0
  warmup_iters: 2
  total_iters: 12
  batch_size: 3
  seed: 0
decode:
  beam_width: 2
"""
        )
        assert cli_main(["-c", str(config), "corpus", "build"]) == 0
        test_cli.build_recognizer_outputs(root)
        assert cli_main(["-c", str(config), "spot"]) == 0
        test_cli.build_features(root)
        assert cli_main(["-c", str(config), "train"]) == 0
        assert cli_main(["-c", str(config), "translate", "--split", "dev"]) == 0
        assert cli_main(["-c", str(config), "eval", "--split", "dev"]) == 0
        names = [
            "train.jsonl", "dev.jsonl", "test.jsonl", "vocab.tsv", "spotted.jsonl",
            "loss_curve.txt", "hypotheses_dev.tsv", "report_dev.txt",
        ]
        return {name: (root / "out" / name).read_bytes() for name in names}

    first = run(tmp_path / "run1")
    second = run(tmp_path / "run2")
    assert first == second
