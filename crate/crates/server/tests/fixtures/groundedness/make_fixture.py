"""Regenerates titles.json and responses.jsonl.

Deterministic. Every invented title is checked to sit below the 0.85
similarity threshold against every real title, and every near-verbatim
variant above it, using an edit distance written here rather than the
crate's matcher.
"""
import json
import random

THRESHOLD = 0.85
TOTAL = 203
SUSPECTS = 10

TITLES = [
    "Growing Tomatoes on a Tiny Balcony",
    "Compost Basics Without a Backyard",
    "Five Herbs That Survive Beginners",
    "Self Watering Planters From Storage Bins",
    "Why Your Seedlings Are Leggy",
    "Pruning Peppers for a Bigger Harvest",
    "Winter Greens Under Grow Lights",
    "Worm Bin Troubleshooting",
    "Saving Seeds From Supermarket Produce",
    "The Cheapest Potting Mix That Works",
    "Attracting Pollinators to a Fire Escape",
    "Strawberries in Hanging Baskets",
    "Fixing Yellow Leaves on Basil",
    "Vertical Gardens for Renters",
    "Harvesting Microgreens in Ten Days",
    "Dealing With Aphids Organically",
    "Watering Schedules for Hot Summers",
    "Lettuce That Does Not Bolt",
    "Building a Mini Greenhouse for Twenty Dollars",
    "Container Potatoes Start to Finish",
    "Balcony Garden Tour After One Year",
    "Companion Planting in Small Spaces",
    "Overwintering Chili Plants Indoors",
    "Mistakes I Made in My First Garden",
]

INVENTED = [
    "Hydroponic Towers for Skyscrapers",
    "My Secret Orchid Fertilizer Recipe",
    "Raising Backyard Chickens in Winter",
    "Bonsai Techniques From Kyoto Masters",
    "Desert Cactus Collection Tour",
    "Beekeeping on a Rooftop Apartment",
    "Mushroom Logs in the Basement",
    "Pumpkin Contest Giant Growing Guide",
    "Aquaponics With Goldfish",
    "Lawn Care for Golf Course Greens",
]


def normalize(s):
    collapsed = " ".join(s.split()).lower()
    punct = set("!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~")
    start, end = 0, len(collapsed)
    while start < end and (collapsed[start] in punct or collapsed[start].isspace()):
        start += 1
    while end > start and (collapsed[end - 1] in punct or collapsed[end - 1].isspace()):
        end -= 1
    return collapsed[start:end]


def levenshtein(a, b):
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def similarity(a, b):
    a, b = normalize(a), normalize(b)
    if not a and not b:
        return 1.0
    return 1.0 - levenshtein(a, b) / max(len(a), len(b))


def best(span):
    return max(similarity(span, t) for t in TITLES)


for t in INVENTED:
    assert best(t) < THRESHOLD, (t, best(t))


def near_variant(rng, title):
    """Case, spacing, punctuation or a single typo; stays above threshold."""
    kind = rng.randrange(4)
    if kind == 0:
        v = title.upper()
    elif kind == 1:
        v = title.lower() + "!"
    elif kind == 2:
        v = title.replace(" ", "  ", 1)
    else:
        i = rng.randrange(1, len(title) - 1)
        while not title[i].isalpha():
            i = rng.randrange(1, len(title) - 1)
        v = title[:i] + title[i + 1:]
    assert best(v) >= THRESHOLD, (v, best(v))
    return v


QUOTES = [('"', '"'), ("“", "”"), ("「", "」"), ("[", "]"), ("《", "》")]

OPENERS = [
    "Honestly, I keep coming back for the practical stuff.",
    "As someone with a tiny balcony, this channel is my main reference.",
    "I mostly watch after work to unwind.",
    "My favourite part is how you explain the reasons behind each step.",
    "I like that nothing you show needs a backyard.",
    "What keeps me watching is that the tips are cheap to try.",
]

NO_TITLE = [
    "I would love more content about pests and how to prevent them early.",
    "Could you compare a few soil brands side by side next time?",
    "The calm pace of your videos is the reason I subscribed.",
    "More seasonal planning videos would help people like me who forget to start seeds.",
    "Please keep the focus on renters; that is what sets you apart.",
    "A follow up on how last year's plants did would be great.",
]


def cite(rng, span):
    if rng.random() < 0.2:
        return f"I learned a lot from the video titled {span}."
    o, c = rng.choice(QUOTES)
    return f"I learned a lot from {o}{span}{c}."


def main():
    rng = random.Random(203)
    suspect_slots = set(rng.sample(range(TOTAL), SUSPECTS))
    invented = list(INVENTED)
    rng.shuffle(invented)
    with open("titles.json", "w", encoding="utf-8") as f:
        json.dump(TITLES, f, indent=2)
        f.write("\n")
    lines = []
    for n in range(TOTAL):
        parts = [rng.choice(OPENERS)]
        cited = []
        if n in suspect_slots:
            if rng.random() < 0.5:
                t = rng.choice(TITLES)
                parts.append(cite(rng, t))
                cited.append({"span": t, "kind": "verbatim"})
            t = invented.pop()
            parts.append(cite(rng, t))
            cited.append({"span": t, "kind": "invented"})
            label = "HALLUCINATION_SUSPECT"
        else:
            r = rng.random()
            if r < 0.55:
                for t in rng.sample(TITLES, rng.choice([1, 1, 2])):
                    parts.append(cite(rng, t))
                    cited.append({"span": t, "kind": "verbatim"})
            elif r < 0.75:
                t = near_variant(rng, rng.choice(TITLES))
                parts.append(cite(rng, t))
                cited.append({"span": t, "kind": "near"})
            label = "GROUNDED"
        parts.append(rng.choice(NO_TITLE))
        lines.append({
            "response_id": f"resp-{n + 1:03}",
            "text": " ".join(parts),
            "label": label,
            "cited": cited,
        })
    assert sum(l["label"] != "GROUNDED" for l in lines) == SUSPECTS
    with open("responses.jsonl", "w", encoding="utf-8") as f:
        for l in lines:
            f.write(json.dumps(l, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main()
