import math

import pytest

hs = pytest.importorskip("hybridscope")


def test_numerics():
    p = hs.softmax([1.0, 2.0, 3.0])
    assert sum(p) == pytest.approx(1.0)
    assert hs.entropy_bits([0.5, 0.25, 0.25]) == 1.5
    assert hs.entropy_bits([0.25] * 4) == 2.0
    with pytest.raises(ValueError):
        hs.softmax([])


def test_layer_pattern_and_config():
    assert hs.expand_layer_pattern("(1S,1A)x2") == "S,A,S,A"
    c = hs.rg2b_toy_config()
    assert c.window == 64
    assert c.n_heads == 10
    with pytest.raises(ValueError):
        hs.expand_layer_pattern("2S")


def test_session_runs():
    model = hs.HybridModel.random(hs.make_config(16, 2, 4, 8, "1S,1A"), 1)
    s = hs.Session(model)
    logits = s.prefill([1, 3, 4, 5])
    assert len(logits) == 16
    assert len(s.step(2)) == 16
    assert s.length == 5


def test_tokenizer_round_trip():
    texts = ["Hello there, world.\n", "A second line"]
    tok = hs.Tokenizer.from_texts(texts)
    for t in texts:
        assert tok.decode(tok.encode(t)) == t


def test_rubric():
    needle = hs.default_needle()
    assert needle.rubric.score(needle.needle) == 5.0
    assert needle.rubric.score("sunny day") == 1.0


def test_policy_and_manipulation():
    p = hs.parse_policy("Only-Null,kG=2")
    assert p.generation == "Only"
    assert p.k_generation == 2
    assert p.k_prefill is None
    assert str(p) == "Only-Null,kG=2"
    row = hs.manipulate_row([0.1, 0.2, 0.3, 0.4], 0, [hs.NeedleSpan(1, 3)], "Binary")
    assert row == [0.0, 0.25, 0.25, 0.0]
    assert hs.select_topk_heads([3.0, 0.5, 2.0], 1) == [False, True, False]
    with pytest.raises(ValueError):
        hs.parse_policy("Keep")


def test_grid_and_prompt():
    grid = hs.make_grid(512, 10, 10)
    assert len(grid) == 100
    sentences = [s + "." for s in hs.synthetic_filler(0, 80).split(". ") if s]
    p = hs.build_prompt(sentences, 200, 0.5)
    assert abs(p.token_count - 200) <= 4
    assert len(p.needle_spans) == 1


def test_niah_oracle_sweep():
    full = hs.run_niah_oracle(max_length=160, n_lengths=2, n_depths=2)
    assert full.accuracy == 1.0
    silenced = hs.run_niah_oracle(max_length=160, n_lengths=2, n_depths=2, policy="Keep-Keep,kG=0")
    assert silenced.accuracy == 0.0
    assert full.to_csv().startswith("length_tokens,depth_pct,score\n")
    assert "<svg" in hs.render_heatmap_svg(full.to_csv())


def test_mcq():
    assert hs.mcq_copy_accuracy(40, 4) == 1.0
    assert hs.mcq_copy_accuracy(40, 4, "Keep-Keep,kP=0") < 0.6


def test_save_and_load(tmp_path):
    model = hs.HybridModel.random(hs.make_config(16, 2, 4, None, "1A"), 3)
    path = str(tmp_path / "m.bin")
    model.save(path)
    back = hs.HybridModel.load(path)
    assert back.config.window is None
    assert hs.Session(back).prefill([1, 2]) == hs.Session(model).prefill([1, 2])
    with pytest.raises(OSError):
        hs.HybridModel.load(str(tmp_path / "missing.bin"))
