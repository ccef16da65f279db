"""Writes samples_200.jsonl: 200 five-option VideoQA samples in three
question categories. Deterministic; rerunning reproduces the file."""
import json
import random

rng = random.Random(7)

PEOPLE = ["the man", "the woman", "the boy", "the girl", "the baby", "the old man", "the lady in red"]
OBJECTS = ["The blanket", "The table", "The closet/cabinet", "The clothes", "The dish", "The ball",
           "The phone", "The book", "The cup", "The toy car", "The guitar", "The umbrella",
           "The dog leash", "The laptop", "The bicycle", "The towel", "The broom", "The camera"]
ACTIONS = ["pick up", "put down", "hold", "throw", "push", "open", "clean", "carry"]
GERUNDS = {"pick up": "picking up", "put down": "putting down", "hold": "holding", "throw": "throwing",
           "push": "pushing", "open": "opening", "clean": "cleaning", "carry": "carrying"}
REASONS = ["to play with the dog", "because it was raining", "to show it to the baby",
           "to clean the floor", "because the music started", "to take a picture",
           "to help the girl stand", "because it fell over", "to get a better view",
           "to dry the hands"]
AFTER = ["walk away", "sit down", "laugh", "wave at the camera", "clap", "turn around",
         "look at the baby", "bend down", "run to the door", "put it on the table"]
PLACES = ["in the kitchen", "on the grass", "in a living room", "at the beach", "on a stage",
          "in a bedroom", "in a park", "by the pool"]


def options(gold, pool):
    others = rng.sample([p for p in pool if p != gold], 4)
    opts = others + [gold]
    rng.shuffle(opts)
    return opts, opts.index(gold)


def causal():
    who, act = rng.choice(PEOPLE), rng.choice(ACTIONS)
    obj = rng.choice(OBJECTS).lower()
    opts, gold = options(rng.choice(REASONS), REASONS)
    return f"Why did {who} {act} {obj}?", opts, gold


def temporal():
    who, act = rng.choice(PEOPLE), rng.choice(ACTIONS)
    obj = rng.choice(OBJECTS).lower()
    opts, gold = options(rng.choice(AFTER), AFTER)
    return f"What did {who} do after {GERUNDS[act]} {obj}?", opts, gold


def descriptive():
    who = rng.choice(PEOPLE)
    if rng.random() < 0.5:
        opts, gold = options(rng.choice(OBJECTS), OBJECTS)
        return f"Which object was tidied up by {who}?", opts, gold
    opts, gold = options(rng.choice(PLACES), PLACES)
    return f"Where is {who}?", opts, gold


MAKERS = {"causal": causal, "temporal": temporal, "descriptive": descriptive}

with open("samples_200.jsonl", "w") as f:
    for i in range(200):
        category = ["causal", "temporal", "descriptive"][i % 3]
        question, opts, gold = MAKERS[category]()
        sample = {"sample_id": f"nx{i:04d}", "video_ref": f"videos/{rng.randrange(10**9):09d}.mp4",
                  "question": question, "options": opts, "gold_index": gold, "category": category}
        f.write(json.dumps(sample) + "\n")
