import itertools

import pytest
import torch
import torch.nn.functional as F

from signkit.corpus import BOS, EOS
from signkit.fusion import FusionConfig, FusionModel, Hypothesis, beam_search, greedy_decode


def small_model(vocab_size=8, seed=0, max_len=6):
    cfg = FusionConfig(
        vocab_size=vocab_size,
        stream_dims={"global": 3, "mouthing": 3},
        model_dim=8,
        num_heads=2,
        enc_layers=1,
        dec_layers=1,
        ffn_dim=8,
        max_len=max_len,
        dropout=0.0,
        seed=seed,
    )
    torch.manual_seed(seed)
    model = FusionModel(cfg).eval()
    g = torch.Generator().manual_seed(seed + 1)
    feats = {m: torch.randn(1, 4, 3, generator=g) for m in cfg.enabled_streams}
    return model, feats


class TestGreedyEquivalence:
    @pytest.mark.parametrize("seed", range(8))
    def test_beam_one_equals_greedy(self, seed):
        model, feats = small_model(seed=seed)
        beam = beam_search(model, feats, beam_width=1, max_len=6)
        greedy = greedy_decode(model, feats, max_len=6)
        assert beam.tokens == greedy.tokens
        assert beam.score == pytest.approx(greedy.score, abs=1e-5)


def enumerate_best(model, feats, max_len, alpha):
    """Exhaustive search over every decodable sequence: any non-EOS prefix
    of length < max_len followed by EOS, plus forced termination at
    max_len."""
    encodings = model.encode(feats)
    vocab = model.cfg.vocab_size

    def seq_score(tokens):
        total = 0.0
        with torch.no_grad():
            for n in range(1, len(tokens)):
                logits = model.decode(encodings, torch.tensor([tokens[:n]]))
                total += float(F.log_softmax(logits[0, -1], dim=-1)[tokens[n]])
        return total

    best = None
    non_eos = [t for t in range(vocab) if t != EOS]
    for plen in range(0, max_len + 1):
        for prefix in itertools.product(non_eos, repeat=plen):
            tokens = [BOS, *prefix, EOS]
            score = seq_score(tokens)
            norm = score / max(1, len(tokens) - 1) ** alpha
            key = (norm, tuple(tokens))
            if best is None or key > best[0]:
                best = (key, tokens)
    return best[0][0], best[1]


class TestExhaustiveEquivalence:
    @pytest.mark.parametrize("alpha", [0.0, 1.0])
    def test_vocab4_len3_toy(self, alpha):
        model, feats = small_model(vocab_size=4, seed=3, max_len=3)
        norm, tokens = enumerate_best(model, feats, max_len=3, alpha=alpha)
        hyp = beam_search(model, feats, beam_width=100, length_penalty=alpha, max_len=3)
        assert list(hyp.tokens) == tokens
        assert hyp.normalized_score(alpha) == pytest.approx(norm, abs=1e-5)


class TestRankingAndTermination:
    def test_alpha_zero_is_raw_logprob(self):
        hyp = Hypothesis((BOS, 5, EOS), -3.5)
        assert hyp.normalized_score(0.0) == -3.5
        assert hyp.normalized_score(1.0) == -3.5 / 2

    def test_forced_eos_flagged_at_max_len(self):
        for seed in range(10):
            model, feats = small_model(seed=seed)
            hyp = greedy_decode(model, feats, max_len=2)
            assert hyp.tokens[-1] == EOS
            if len(hyp.tokens) == 4:  # BOS + 2 generated + appended EOS
                assert hyp.forced_eos
                return
        pytest.fail("no seed produced a forced termination")

    def test_beam_width_must_be_positive(self):
        model, feats = small_model()
        with pytest.raises(ValueError):
            beam_search(model, feats, beam_width=0)

    @pytest.mark.parametrize("seed", range(5))
    def test_wider_beam_never_scores_worse(self, seed):
        model, feats = small_model(seed=seed, vocab_size=6, max_len=4)
        scores = []
        for width in (1, 2, 3, 6):
            hyp = beam_search(model, feats, beam_width=width, length_penalty=1.0, max_len=4)
            scores.append(hyp.normalized_score(1.0))
        assert all(b >= a - 1e-9 for a, b in zip(scores, scores[1:]))

    def test_score_non_increasing_as_tokens_append(self):
        model, feats = small_model(seed=2)
        hyp = greedy_decode(model, feats, max_len=6)
        # log-probabilities are <= 0, so every appended token lowers score
        assert hyp.score <= 0.0
