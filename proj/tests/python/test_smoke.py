import math

import numpy as np
import pytest

import atelier

TOKEN = "tok start={s} dur=1/1 col={c} dir=forward lvl=high rot=none flex=none path=none face=front pos=center_center\n"
SCORE = "LABANSTR 1\nmeter 4/4\n" + TOKEN.format(s="1/1", c="arm_r") + TOKEN.format(s="0/1", c="arm_l")

ORACLE = """\
cell arm_r right_forward high 0.5
cell arm_l left_forward high 0.25
cell leg_r forward middle 0.25
rmax 1
budget 3
"""


def test_canonical_text_is_a_fixed_point():
    text = atelier.canonicalize(SCORE)
    assert text.index("col=arm_l") < text.index("col=arm_r")
    assert atelier.canonicalize(text) == text
    assert atelier.violations(text) == []


def test_overlap_is_reported():
    overlapping = "LABANSTR 1\nmeter 4/4\n" + TOKEN.format(s="0/1", c="arm_r") * 2
    assert len(atelier.violations(overlapping)) == 1


def test_parse_errors_carry_a_code():
    with pytest.raises(atelier.Error) as info:
        atelier.canonicalize("LABANSTR 2\nmeter 4/4\n")
    assert info.value.code == "version_mismatch"
    assert isinstance(info.value, ValueError)


def test_histogram_and_tv():
    h = atelier.histogram(SCORE)
    assert h.shape == (atelier.CELLS,)
    assert h.sum() == pytest.approx(1.0)
    assert h[atelier.cell_index("arm_r", "forward", "high")] == pytest.approx(0.5)
    assert atelier.tv_distance(h, h) == 0.0


def test_similarity():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=16), rng.normal(size=16)
    assert atelier.dot_similarity(x, y) == pytest.approx(float(x @ y))
    penalized = atelier.sc_score(x, y, 0.0, 2.0, 0.5)
    assert penalized == pytest.approx(float(x @ y) - 1.0)
    assert atelier.sc_score(x, y, 0.0, 2.0, 0.5, "as_written") == pytest.approx(float(x @ y) + 1.0)
    assert atelier.encode_motion(SCORE, 8, 3).shape == (8,)


def test_cyclic_fit_recovers_a_sine():
    t = np.arange(256) / 64
    fit = atelier.fit_cyclic(0.5 + 2 * np.sin(2 * math.pi * 3 * t + 0.7), 64, 1)
    (e,) = fit["elements"]
    assert e["frequency"] == pytest.approx(3, rel=1e-2)
    assert e["amplitude"] == pytest.approx(2, rel=2e-2)
    assert fit["offset"] == pytest.approx(0.5, abs=1e-2)


def test_vocab_round_trip():
    text = atelier.standard_vocab()
    assert atelier.check_vocab(text) == text
    assert "role=noun" in text


def test_oracle_feedback():
    assert atelier.check_oracle(ORACLE) == atelier.check_oracle(atelier.check_oracle(ORACLE))
    feedback = atelier.scripted_feedback(ORACLE, SCORE)
    assert 0 <= feedback["rating"] <= 1
    assert feedback["judgement"]["targets"]


def test_session_is_reproducible():
    config = "\n".join([
        "embedding_dim = 8", "score_length = 4", "candidates = 2", "alignment_pairs = 8",
        "alignment_steps = 3", "composer_steps = 3", "phase1_steps = 2", "phase2_steps = 3",
    ])
    log = atelier.run_session(config, ORACLE, 5, 7)
    assert log == atelier.run_session(config, ORACLE, 5, 7)
    events = atelier.parse_log(log)
    assert events[0]["kind"] == "session_created"
    assert [e["seq"] for e in events] == list(range(1, len(events) + 1))
    atelier.lint_log(log)
    assert len(atelier.replay_feedback(log)) == 5
    with pytest.raises(atelier.Error):
        atelier.run_session("alpha = 2", ORACLE, 1, 7)
