import json
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmguide.actions import DEFAULT_ACTIONS, find_action_mentions, validate_action_set
from dmguide.corpus import (
    Episode, FormatError, Post, Turn, assign_splits, build_episodes, detect_ability_check,
    episodes_from_dump, read_episodes, read_posts, split_threads, write_episodes, write_posts,
)

# ------------------------------------------------------------ ability checks


def test_table_check_with_roll():
    ev = detect_ability_check("Clint makes a perception check. 16", DEFAULT_ACTIONS)
    assert (ev.action, ev.roll) == ("perception", 16)


def test_no_check_pattern():
    assert detect_ability_check("Hello there, friends", DEFAULT_ACTIONS) is None


def test_rolling_before_action():
    ev = detect_ability_check("rolling for stealth: 7", DEFAULT_ACTIONS)
    assert (ev.action, ev.roll, ev.char_offset) == ("stealth", 7, 12)


def test_bare_roll_without_skill_word_is_ignored():
    assert detect_ability_check("I'll help as well. I got a 10", DEFAULT_ACTIONS) is None


def test_action_too_far_from_trigger():
    assert detect_ability_check("perception is what I will use on this roll", DEFAULT_ACTIONS) is None
    assert detect_ability_check("perception is what I roll", DEFAULT_ACTIONS).action == "perception"


def test_multiword_action_and_out_of_range_roll():
    ev = detect_ability_check("Sleight of Hand check 25 then 14", DEFAULT_ACTIONS)
    assert (ev.action, ev.roll) == ("sleight of hand", 14)


def test_synonyms_map_onto_labels():
    ev = detect_ability_check("I perceive check 3", DEFAULT_ACTIONS, {"perceive": "perception"})
    assert ev.action == "perception"


def test_empty_action_set_is_rejected():
    with pytest.raises(ValueError):
        detect_ability_check("stealth check", [])


TRIGGERS = r"(?:check|roll|rolls|rolling)"
W = r"[^\W_]"
GAP = r"(?:[\W_]+" + W + r"+){0,3}[\W_]+"


def regex_oracle(text, actions):
    """Earliest action occurrence with a trigger word within four words on either side."""
    best = None
    for a in actions:
        pat = r"(?<!" + W + r")" + r"\s+".join(map(re.escape, a.split())) + r"(?!" + W + r")"
        for m in re.finditer(pat, text, re.IGNORECASE):
            after = re.match(GAP + TRIGGERS + r"(?!" + W + r")", text[m.end():], re.IGNORECASE)
            before = re.search(r"(?<!" + W + r")" + TRIGGERS + GAP + r"$", text[: m.start()], re.IGNORECASE)
            if after or before:
                cand = (m.start(), -len(a.split()), a, m.end())
                best = cand if best is None or cand < best else best
                break
    if best is None:
        return None
    roll = next((int(d) for d in re.findall(r"\d+", text[best[3]:]) if 1 <= int(d) <= 20), None)
    return best[2], best[0], roll


vocab = st.sampled_from([
    "perception", "Stealth", "sleight", "of", "hand", "check", "roll", "rolls", "rolling", "checks",
    "I", "make", "a", "for", "the", "16", "25", "3", "20", ",", ":", "arcana", "insight!",
])


@given(st.lists(vocab, max_size=14))
@settings(max_examples=300)
def test_detect_matches_regex_oracle(words):
    text = " ".join(words)
    ev = detect_ability_check(text, DEFAULT_ACTIONS)
    got = None if ev is None else (ev.action, ev.char_offset, ev.roll)
    assert got == regex_oracle(text, DEFAULT_ACTIONS)


def test_action_inventory_has_23_labels():
    assert len(DEFAULT_ACTIONS) == 23
    assert validate_action_set(DEFAULT_ACTIONS) == DEFAULT_ACTIONS
    with pytest.raises(ValueError):
        validate_action_set(["stealth", "Stealth"])
    with pytest.raises(ValueError):
        validate_action_set([])


def test_find_action_mentions_orders_by_offset():
    assert find_action_mentions("Stealth, then animal  handling", DEFAULT_ACTIONS) == [
        (0, "stealth"), (14, "animal handling")]


# ----------------------------------------------------------------- episodes


def post(i, author, role, text, reply_to=None, mentions=()):
    return Post(id=f"p{i}", author=author, role=role, text=text, seq=i, reply_to=reply_to, name_mentions=tuple(mentions))


def five_post_thread():
    return [
        post(0, "dm", "dm", "Welcome to the road. The wagon creaks."),
        post(1, "Vi", "player", "Vi hums a tune."),
        post(2, "dm", "dm", "Clint, you notice some movements in the bushes.", mentions=["Clint"]),
        post(3, "Clint", "player", "Clint makes a perception check. 16"),
    ]


def test_hand_traced_thread():
    eps = build_episodes(five_post_thread())
    assert len(eps) == 1
    ep = eps[0]
    assert [t.text for t in ep.context] == ["Welcome to the road. The wagon creaks.", "Vi hums a tune."]
    assert ep.dm_text == "Clint, you notice some movements in the bushes."
    assert (ep.player_name, ep.player_action) == ("Clint", "perception")
    assert ep.dm_sentences == ["Clint, you notice some movements in the bushes."]


def test_thread_without_checks_is_empty():
    posts = [post(0, "dm", "dm", "Hello."), post(1, "Vi", "player", "Hi there.")]
    assert build_episodes(posts) == []


def fallback_thread():
    posts = [post(0, "dm", "dm", "Intro."), post(1, "dm", "dm", "Clint, look closely at the tracks.", mentions=["Clint"])]
    i = 2
    while i < 19:
        posts.append(post(i, "Vi", "player", "Vi waits."))
        i += 1
    posts.append(post(19, "dm", "dm", "The rain gets heavier."))
    posts.append(post(20, "Vi", "player", "Vi asks about the wagon."))
    posts.append(post(21, "dm", "dm", "The wagon is old, Vi.", reply_to="p20"))
    posts.append(post(22, "Clint", "player", "Clint rolls survival: 11"))
    return posts


def test_fallback_skips_out_of_window_mention_and_replies_to_others():
    ep = build_episodes(fallback_thread(), window=20)[0]
    assert ep.dm_text == "The rain gets heavier."
    assert ep.player_action == "survival"
    # with a larger window the mentioning post qualifies
    assert build_episodes(fallback_thread(), window=21)[0].dm_text == "Clint, look closely at the tracks."


def test_reply_to_player_counts_as_addressing():
    posts = [
        post(0, "dm", "dm", "Intro."),
        post(1, "Clint", "player", "Clint searches."),
        post(2, "dm", "dm", "Something glints.", reply_to="p1"),
        post(3, "dm", "dm", "Meanwhile the sky darkens."),
        post(4, "Clint", "player", "investigation check 9"),
    ]
    assert build_episodes(posts)[0].dm_text == "Something glints."


def test_unsorted_posts_are_rejected():
    posts = five_post_thread()
    with pytest.raises(ValueError):
        build_episodes([posts[1], posts[0]])


def test_split_threads_cuts_on_seq_reset():
    a, b = five_post_thread(), five_post_thread()
    assert [len(t) for t in split_threads(a + b)] == [4, 4]
    assert len(episodes_from_dump(a + b)) == 2


def test_player_action_equals_detected_event(clean_corpus):
    posts = clean_corpus.posts
    by_text = {p.text: p for p in posts if p.role == "player"}
    for ep in episodes_from_dump(posts)[:200]:
        assert ep.player_action == detect_ability_check(by_text[ep.player_text].text).action


thread_post = st.tuples(
    st.sampled_from(["dm", "Clint", "Vi"]),
    st.sampled_from(["Nothing much.", "stealth check 4", "perception roll 12", "Hello Clint."]),
    st.booleans(),
)


def thread_from(spec):
    out = []
    for i, (who, text, mention) in enumerate(spec):
        role = "dm" if who == "dm" else "player"
        out.append(post(i, who, role, text, mentions=["Clint"] if mention and role == "dm" else ()))
    return out


@given(st.lists(thread_post, max_size=30), st.integers(0, 25), st.integers(0, 10))
def test_window_monotone_and_deterministic(spec, window, extra):
    posts = thread_from(spec)
    small = build_episodes(posts, window)
    assert len(build_episodes(posts, window + extra)) >= len(small)
    assert build_episodes(posts, window) == small


# ---------------------------------------------------------------- file I/O


def sample_episodes():
    base = Episode("e1", [Turn("dm", "dm", "Intro.")], "You notice movements. The wind blows.", "Clint",
                   "perception check 4", "perception", guidance_index=0, intent_text="Make a perception check.",
                   intended_action="perception")
    return [base, base.replace(id="e2", guidance_index=None, intent_text=None, intended_action=None, split="test"),
            base.replace(id="e3", provenance="idm", player_action="stealth")]


def test_episode_round_trip(tmp_path):
    path = tmp_path / "eps.jsonl"
    eps = sample_episodes()
    write_episodes(eps, path)
    assert read_episodes(path) == eps
    assert "null" not in path.read_text()


def test_empty_episode_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert read_episodes(path) == []


def test_guidance_index_out_of_range_names_episode(tmp_path):
    path = tmp_path / "bad.jsonl"
    rec = json.loads(json.dumps({**sample_episodes()[0].__dict__, "context": [{"speaker": "dm", "role": "dm", "text": "x"}]}))
    rec["guidance_index"] = 9
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(FormatError, match="e1"):
        read_episodes(path)
    with pytest.raises(ValueError, match="e1"):
        write_episodes([sample_episodes()[0].replace(guidance_index=9)], tmp_path / "out.jsonl")


def test_malformed_line_names_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text("\n{not json}\n")
    with pytest.raises(FormatError, match=":2:"):
        read_episodes(path)


def test_unknown_fields_rejected(tmp_path):
    path = tmp_path / "posts.jsonl"
    path.write_text(json.dumps({"id": "p0", "author": "dm", "role": "dm", "text": "x", "seq": 0, "mood": "ok"}) + "\n")
    with pytest.raises(FormatError, match="mood"):
        read_posts(path)


def test_posts_round_trip(tmp_path):
    path = tmp_path / "posts.jsonl"
    posts = five_post_thread()
    write_posts(posts, path)
    assert read_posts(path) == posts


def test_assign_splits_is_deterministic_and_proportional(clean_episodes):
    a = assign_splits(clean_episodes, seed=3)
    b = assign_splits(clean_episodes, seed=3)
    assert [e.split for e in a] == [e.split for e in b]
    frac = sum(e.split == "train" for e in a) / len(a)
    assert 0.7 < frac < 0.9
    with pytest.raises(ValueError):
        assign_splits(clean_episodes, fractions=(0.5, 0.5, 0.5))
