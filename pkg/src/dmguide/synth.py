"""Seeded Play-By-Post style corpus with oracle labels.

Each gold episode is its own short thread::

    DM intro (filler + one scene sentence)
    0-2 player chat posts
    DM turn naming the acting player (filler + guidance sentence(s))
    player ability-check post
    [assist post]  [DM follow-up]

The scene sentence hints at the DM's intended action (with probability
``scene_fidelity``, otherwise it hints at a random action). The guidance
sentence is a template instantiation whose cue tokens the rule-based player
keys on. All randomness comes from one ``numpy.random.default_rng(seed)``
(PCG64) stream consumed in thread order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .actions import DEFAULT_ACTIONS
from .corpus import Episode, Post, Turn, assign_splits, write_episodes, write_posts
from .textfeat import split_sentences, tokenize


@dataclass(frozen=True)
class GuidanceTemplate:
    id: str
    action: str
    pattern: str
    cue_tokens: tuple[str, ...]

    def __post_init__(self):
        if not self.cue_tokens:
            raise ValueError(f"template {self.id}: cue_tokens must be non-empty")
        object.__setattr__(self, "cue_tokens", tuple(c.lower() for c in self.cue_tokens))

    def fill(self, entity: str, place: str) -> str:
        return self.pattern.format(entity=entity, place=place)


# (action, pattern, cues) x2 per action; cue tokens are disjoint across actions
_BANK_SPEC = [
    ("acrobatics", "A narrow ledge above the gorge near {place} looks barely wide enough to tiptoe across.", ("ledge", "tiptoe")),
    ("acrobatics", "{entity} points at a swaying rope bridge and dares you to flip across it.", ("swaying", "flip")),
    ("animal handling", "A skittish mule at the edge of {place} keeps bucking against its harness.", ("skittish", "mule")),
    ("animal handling", "The old hound of {entity} growls and bares its teeth whenever you come close.", ("hound", "growls")),
    ("arcana", "Faint runes glow along the archway, humming with some unfamiliar enchantment.", ("runes", "enchantment")),
    ("arcana", "{entity} hands you a crystal orb that pulses with a strange pale light.", ("orb", "pulses")),
    ("athletics", "A sheer cliff face rises before you, slick with moss but studded with handholds.", ("cliff", "handholds")),
    ("athletics", "A heavy boulder blocks the tunnel leading toward {place}.", ("boulder", "tunnel")),
    ("deception", "The gate sergeant squints at you and asks for papers you do not have.", ("papers", "squints")),
    ("deception", "{entity} will only open the vault for someone who claims to be a royal courier.", ("courier", "claims")),
    ("history", "The crumbling statue bears the crest of a dynasty that ruled {place} long ago.", ("crest", "dynasty")),
    ("history", "{entity} mentions an ancient war whose name sounds strangely familiar.", ("ancient", "war")),
    ("insight", "{entity} smiles warmly, but their eyes keep darting toward the door.", ("darting", "smiles")),
    ("insight", "The story of the merchant has a few odd gaps that do not quite fit together.", ("gaps", "merchant")),
    ("intimidation", "The bandit captain sneers, but his hand trembles on the hilt of his blade.", ("sneers", "trembles")),
    ("intimidation", "{entity} cowers behind the bar, clearly terrified of anyone with a weapon.", ("cowers", "terrified")),
    ("investigation", "A desk in the corner is covered in scattered letters and a half-burned ledger.", ("ledger", "letters")),
    ("investigation", "Fresh scratches around the lock suggest someone forced this door recently.", ("scratches", "lock")),
    ("medicine", "{entity} lies pale and feverish, breathing in shallow gasps.", ("feverish", "gasps")),
    ("medicine", "The wounded scout clutches a bloody bandage against his side.", ("bandage", "wounded")),
    ("nature", "Strange purple mushrooms grow in a ring around the old oak.", ("mushrooms", "oak")),
    ("nature", "The birds near {place} have fallen eerily silent, and the leaves are curling black.", ("curling", "birds")),
    ("perception", "You all notice some movements in the bushes near {place}.", ("movements", "bushes")),
    ("perception", "A faint glint catches your eye from somewhere up on the ridge.", ("glint", "ridge")),
    ("performance", "The tavern crowd in {place} is restless and calls for someone to play a song.", ("song", "crowd")),
    ("performance", "{entity} offers a purse of silver to whoever can entertain the bored nobles.", ("entertain", "nobles")),
    ("persuasion", "The guard seems a bit shaken to hear your words.", ("shaken",)),
    ("persuasion", "{entity} looks willing to talk if someone makes a kind offer.", ("willing",)),
    ("religion", "An altar stained with old wax bears the symbol of a forgotten god.", ("altar", "god")),
    ("religion", "{entity} wears a holy pendant you have seen in temple paintings.", ("pendant", "temple")),
    ("sleight of hand", "The key to the cell dangles from the belt of the dozing jailer.", ("dangles", "jailer")),
    ("sleight of hand", "{entity} leaves a fat coin pouch hanging loosely from the saddle.", ("pouch", "loosely")),
    ("stealth", "The patrol has not spotted you yet, and the shadows along the wall run deep.", ("patrol", "shadows")),
    ("stealth", "Two sentries near {place} are nodding off by the fire with their backs turned.", ("sentries", "backs")),
    ("survival", "The tracks in the mud split in two directions just past {place}.", ("tracks", "mud")),
    ("survival", "A storm is gathering over the hills and you have no shelter for the night.", ("storm", "shelter")),
    ("strength", "A rusted portcullis blocks the way, too heavy for most to lift.", ("portcullis", "rusted")),
    ("strength", "The cart of {entity} is stuck fast with one wheel sunk in a ditch.", ("cart", "ditch")),
    ("dexterity", "A volley of darts shoots from the walls as the floor tiles click underfoot.", ("darts", "tiles")),
    ("dexterity", "The rope holding {entity} above the pit begins to fray and slip.", ("fray", "pit")),
    ("constitution", "The air in the swamp near {place} is thick with a choking, poisonous fog.", ("fog", "choking")),
    ("constitution", "{entity} challenges you to match them drink for drink with the strongest ale in the house.", ("ale", "drink")),
    ("intelligence", "A puzzle box covered in sliding numbered panels sits on the pedestal.", ("puzzle", "panels")),
    ("intelligence", "{entity} scrawls a riddle on the wall and waits for an answer.", ("riddle", "scrawls")),
    ("wisdom", "A soft voice whispers in your mind, urging you to step into the dark water.", ("whispers", "urging")),
    ("wisdom", "The hermit near {place} asks whether you truly trust your own instincts.", ("hermit", "instincts")),
]

SCENES = {
    "acrobatics": "The path ahead follows a crumbling canyon rim near {place}.",
    "animal handling": "Your pack animals have been uneasy since you left {place}.",
    "arcana": "The old wizard tower looms over the valley beyond {place}.",
    "athletics": "The trail climbs steeply toward the mountain pass above {place}.",
    "deception": "The city watch is questioning everyone who enters {place}.",
    "history": "You arrive among the ruins of an old kingdom outside {place}.",
    "insight": "The village elder of {place} has gathered everyone to hear a stranger speak.",
    "intimidation": "A gang of thugs has been extorting the market stalls of {place}.",
    "investigation": "The magistrate of {place} asks you to look into a string of burglaries.",
    "medicine": "A sickness has been spreading through the refugee camp at {place}.",
    "nature": "The forest around {place} feels wrong, as if something is poisoning it.",
    "perception": "The wagon creaks along a quiet road to {place} lined with thick undergrowth.",
    "performance": "The harvest festival is in full swing in the square of {place}.",
    "persuasion": "The gatekeeper at {place} refuses to let anyone through without good reason.",
    "religion": "The party shelters inside an abandoned chapel on the way to {place}.",
    "sleight of hand": "The prisoners were stripped of their gear and locked below deck near {place}.",
    "stealth": "An enemy camp lies just beyond the next hill outside {place}.",
    "survival": "Your supplies are running low deep in the wilderness past {place}.",
    "strength": "Rubble from the collapse has sealed the mine entrance at {place}.",
    "dexterity": "The tomb corridor beneath {place} is lined with strange holes in the walls.",
    "constitution": "The march toward {place} has gone on for three days without rest.",
    "intelligence": "The library vault of {place} is sealed by a clockwork mechanism.",
    "wisdom": "An eerie calm has settled over the moonlit lake near {place}.",
}

FILLER = (
    "The wind picks up as evening falls over {place}.",
    "{entity} adjusts a heavy cloak and glances at the sky.",
    "You have been travelling for most of the day.",
    "The smell of woodsmoke drifts from somewhere nearby.",
    "{entity} hums an old tune under their breath.",
    "Rain has left the ground soft and the air cold.",
    "A few lanterns flicker in the windows of {place}.",
    "Your boots are caked with dust from the long road.",
    "{entity} mutters something about the price of bread in {place}.",
    "Somewhere in the distance a dog barks twice.",
    "The sun sits low and orange behind the trees.",
    "Nobody has said much since you left {place}.",
    "The road is quiet apart from the creak of your gear.",
    "{entity} passes around a skin of water.",
    "It is colder here than you expected.",
    "A crow watches you from a fence by the roadside.",
    "{entity} reminds everyone that the pay is waiting in {place}.",
    "Your stomach grumbles, and supper feels far away.",
    "The clouds part briefly to show a pale moon.",
    "{entity} tells a long story about a cousin who once sold goats.",
)

CHITCHAT = (
    "Sorry for the slow post, it has been a busy week.",
    "OOC: I will be away this weekend, feel free to skip my turn.",
    "Does anyone know if {far} shows up later in this campaign?",
    "Great session everyone, thanks for playing.",
    "Quick reminder to update your character sheets.",
    "I love how this story is going so far.",
    "Let me know if the map link is not working.",
    "OOC: should we vote on a new posting schedule?",
    "Haha, that last post made my day.",
    "I read about {far} in an old sourcebook last night.",
    "Apologies for the typos, I am posting from my phone.",
    "We will pick things up again on Monday.",
)

PLAYER_CHAT = (
    "Let us keep moving, we are burning daylight.",
    "I keep my hand near my sword and stay alert.",
    "Does anyone have a spare torch?",
    "I follow the others and keep quiet.",
    "We should find somewhere to rest soon.",
    "I am not sure about this, but I will go along.",
    "How far are we from the next town?",
    "I share some of my rations with the group.",
)

ACTION_LINES = (
    "{name} makes a {action} check. {roll}",
    "Rolling for {action}: {roll}",
    "{Action} check: {roll}",
    '"Let me try something." {name} makes a {action} check, {roll}.',
)

PLAYERS = ("Clint", "Vi", "Kif", "Mara", "Torin", "Elowen", "Brakka", "Pip")
ENTITIES = (
    "Gundren Rockseeker", "Sildar Hallwinter", "Halia Thornton", "Toblen Stonehill",
    "Linene Graywind", "Daran Edermath", "Qelline Alderleaf", "Harbin Wester",
    "Elmar Barthen", "Reidoth",
)
PLACES = ("Phandalin", "Neverwinter", "Thundertree", "Conyberry", "Leilon", "Triboar", "Wyvern Tor", "Cragmaw")
FAR_PLACES = ("Waterdeep", "Luskan", "Silverymoon", "Candlekeep", "Elminster")


def default_bank() -> list[GuidanceTemplate]:
    counts: dict[str, int] = {}
    bank = []
    for action, pattern, cues in _BANK_SPEC:
        counts[action] = counts.get(action, 0) + 1
        slug = action.replace(" ", "_")
        bank.append(GuidanceTemplate(f"{slug}-{counts[action]}", action, pattern, cues))
    return bank


@dataclass(frozen=True)
class SynthConfig:
    n_episodes: int = 5000
    seed: int = 0
    noise: float = 0.0
    filler_sentences: tuple[int, int] = (4, 12)
    mode: str = "plain"
    entity_pool: tuple[str, ...] = ENTITIES
    place_pool: tuple[str, ...] = PLACES
    scene_fidelity: float = 0.9
    actions: tuple[str, ...] = DEFAULT_ACTIONS
    split_fractions: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if self.n_episodes < 1:
            raise ValueError("n_episodes must be >= 1")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError("noise must be in [0, 1]")
        if not 0.0 <= self.scene_fidelity <= 1.0:
            raise ValueError("scene_fidelity must be in [0, 1]")
        lo, hi = self.filler_sentences
        if not 1 <= lo <= hi:
            raise ValueError("filler_sentences must be a range 1 <= lo <= hi")
        if self.mode not in ("plain", "ambiguous"):
            raise ValueError("mode must be 'plain' or 'ambiguous'")
        if not self.entity_pool or not self.place_pool:
            raise ValueError("entity_pool and place_pool must be non-empty")


@dataclass
class SynthCorpus:
    posts: list[Post]
    gold: list[Episode]

    def sidecar(self) -> list[dict]:
        return [
            {
                "id": ep.id,
                "guidance_index": ep.guidance_index,
                "intent_text": ep.intent_text,
                "intended_action": ep.intended_action,
                "split": ep.split,
            }
            for ep in self.gold
        ]

    def write(self, posts_path, gold_path, sidecar_path) -> None:
        write_posts(self.posts, posts_path)
        write_episodes(self.gold, gold_path)
        with open(sidecar_path, "w", encoding="utf-8") as fh:
            for rec in self.sidecar():
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def cue_index(bank: Sequence[GuidanceTemplate]) -> dict[str, str]:
    out: dict[str, str] = {}
    for t in bank:
        for c in t.cue_tokens:
            if out.setdefault(c, t.action) != t.action:
                raise ValueError(f"cue token {c!r} is shared by two actions")
    return out


def rule_player_act(
    dm_text: str,
    bank: Sequence[GuidanceTemplate],
    noise: float,
    rng: np.random.Generator,
    actions: Sequence[str] = DEFAULT_ACTIONS,
    cues: dict[str, str] | None = None,
) -> str:
    """Act on the earliest cue token in ``dm_text``; uniformly at random with prob. ``noise``.

    Always consumes one uniform draw, plus one integer draw when acting randomly.
    ``cues`` is a precomputed :func:`cue_index` of ``bank``.
    """
    u = rng.random()
    action = None
    if u >= noise:
        cues = cue_index(bank) if cues is None else cues
        for tok in tokenize(dm_text):
            if tok in cues:
                action = cues[tok]
                break
    if action is None:
        action = actions[int(rng.integers(len(actions)))]
    return action


def mined_intent_text(action: str, guidance: str | None) -> str:
    base = f"The Dungeon Master intends the players to make a {action} check"
    if guidance is None:
        return base
    g = guidance.strip()
    return f"{base} by mentioning: {g[:1].lower()}{g[1:]}"


def generate_corpus(cfg: SynthConfig, bank: Sequence[GuidanceTemplate] | None = None) -> SynthCorpus:
    bank = list(default_bank() if bank is None else bank)
    bank_actions = sorted({t.action for t in bank})
    if len(bank_actions) < 2:
        raise ValueError("template bank must cover at least 2 distinct actions")
    cues = cue_index(bank)
    by_action: dict[str, list[GuidanceTemplate]] = {}
    for t in bank:
        by_action.setdefault(t.action, []).append(t)
    scenes = {a: SCENES.get(a, "The road to {place} stretches on.") for a in bank_actions}
    rng = np.random.default_rng(cfg.seed)

    posts: list[Post] = []
    gold: list[Episode] = []
    for n in range(cfg.n_episodes):
        tid = f"t{n:05d}"
        seq = 0

        def post(author, role, text, reply_to=None, mentions=()):
            nonlocal seq
            seq += 1
            p = Post(f"{tid}-p{seq}", author, role, text, seq, reply_to, tuple(mentions))
            posts.append(p)
            return p

        party = [PLAYERS[i] for i in rng.choice(len(PLAYERS), size=3, replace=False)]
        actor = party[0]
        entity = cfg.entity_pool[int(rng.integers(len(cfg.entity_pool)))]
        place = cfg.place_pool[int(rng.integers(len(cfg.place_pool)))]
        fill = lambda s: s.format(entity=entity, place=place, far=FAR_PLACES[int(rng.integers(len(FAR_PLACES)))])

        intended = bank_actions[int(rng.integers(len(bank_actions)))]
        scene_action = intended
        if rng.random() >= cfg.scene_fidelity:
            scene_action = bank_actions[int(rng.integers(len(bank_actions)))]

        intro = [fill(FILLER[i]) for i in rng.choice(len(FILLER), size=2, replace=False)]
        intro.insert(int(rng.integers(3)), fill(scenes[scene_action]))
        context_posts = [post("DM", "dm", " ".join(intro))]
        last_actor_post = None
        for _ in range(int(rng.integers(3))):
            who = party[int(rng.integers(len(party)))]
            p = post(who, "player", PLAYER_CHAT[int(rng.integers(len(PLAYER_CHAT)))])
            context_posts.append(p)
            if who == actor:
                last_actor_post = p

        # DM turn: filler with guidance sentence(s) spliced in
        guid_t = by_action[intended][int(rng.integers(len(by_action[intended])))]
        guides = [fill(guid_t.pattern)]
        if cfg.mode == "ambiguous":
            others = [a for a in bank_actions if a != intended]
            other = others[int(rng.integers(len(others)))]
            other_t = by_action[other][int(rng.integers(len(by_action[other])))]
            guides.append(fill(other_t.pattern))
        lo, hi = cfg.filler_sentences
        total = max(int(rng.integers(lo, hi + 1)), len(guides))
        n_fill = total - len(guides)
        sents = [fill(FILLER[i]) for i in rng.choice(len(FILLER), size=n_fill, replace=n_fill > len(FILLER))]
        slots = sorted(rng.choice(total, size=len(guides), replace=False).tolist())
        for pos, g in zip(slots, guides):  # intended guidance takes the earliest slot
            sents.insert(pos, g)
        gidx = slots[0]
        dm_text = " ".join(sents)
        dm_post = post(
            "DM", "dm", dm_text,
            reply_to=last_actor_post.id if last_actor_post else None,
            mentions=(actor,),
        )

        action = rule_player_act(dm_text, bank, cfg.noise, rng, cfg.actions, cues)
        line = ACTION_LINES[int(rng.integers(len(ACTION_LINES)))]
        roll = int(rng.integers(1, 21))
        act_post = post(actor, "player", line.format(name=actor, action=action, Action=action.capitalize(), roll=roll),
                        reply_to=dm_post.id)
        if rng.random() < 0.3:
            post(party[1], "player", f"I'll help as well. I got a {int(rng.integers(1, 21))}")
        if rng.random() < 0.5:
            post("DM", "dm", f"{actor}, you steady yourself and take stock of the result.", reply_to=act_post.id)

        sentences = split_sentences(dm_text)
        assert sentences == sents, "template/filler text must split cleanly"
        gold.append(
            Episode(
                id=f"ep-{act_post.id}",
                context=[Turn(p.author, p.role, p.text) for p in context_posts],
                dm_text=dm_text,
                dm_sentences=sentences,
                guidance_index=gidx,
                player_name=actor,
                player_text=act_post.text,
                player_action=action,
                intent_text=mined_intent_text(intended, sents[gidx]),
                intended_action=intended,
                provenance="synthetic",
            )
        )
    gold = assign_splits(gold, cfg.seed, cfg.split_fractions)
    return SynthCorpus(posts, gold)


def chitchat_texts(rng: np.random.Generator, k: int) -> list[str]:
    return [
        CHITCHAT[int(i)].format(far=FAR_PLACES[int(rng.integers(len(FAR_PLACES)))])
        for i in rng.choice(len(CHITCHAT), size=k, replace=k > len(CHITCHAT))
    ]
