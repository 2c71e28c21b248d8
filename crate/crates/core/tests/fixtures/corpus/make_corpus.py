"""Writes a small Food.com-shaped corpus and its expected parse.

The expected file is computed with csv + ast.literal_eval, independently of
the Rust loader. Run from this directory: python3 make_corpus.py
"""

import ast
import csv
import json
import random

rng = random.Random(11)

TAGS = ["italian", "mexican", "60-minutes-or-less", "vegetarian", "Low Fat",
        "main-dish", "desserts", "  easy  ", "kid's favorite", "summer"]
INGREDIENTS = ["tomato", "garlic", "olive oil", "salt, to taste", "cook's choice",
               "Onion", "basil", "sugar", "flour", 'the "good" butter', "lime", 'it\'s "fresh" mint']
NAMES = ["pasta", "tacos, the best", "mom's \"secret\" soup", "salad", "crème brûlée",
         "chili", "pie", "bread", "risotto", "curry"]

HEADER = ["name", "id", "minutes", "contributor_id", "submitted", "tags",
          "nutrition", "n_steps", "steps", "description", "ingredients",
          "n_ingredients"]


def literal(values):
    # Python's own repr, which is what the real corpus holds.
    return repr(list(values))


rows = []
for i in range(100):
    rid = str(1000 + i)
    tags = rng.sample(TAGS, rng.randint(0, 4))
    ingr = rng.sample(INGREDIENTS, rng.randint(1, 5))
    name = f"{rng.choice(NAMES)} {i}"
    steps = literal(["mix, then bake", "serve\nhot"])
    rows.append([name, rid, "30", "7", "2005-01-01", literal(tags), "[1.0, 2.0]",
                 "2", steps, "a \"quoted\" description, with commas", literal(ingr),
                 str(len(ingr))])

# Rows the loader must skip.
rows[10][5] = "['unterminated"
rows[20][1] = "  "
rows[30][10] = "['ok', 'also ok'"
# One with an empty tag that is dropped, not fatal.
rows[40][5] = "['', 'italian']"

with open("recipes.csv", "w", newline="") as f:
    w = csv.writer(f, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
    w.writerow(HEADER)
    w.writerows(rows)
    # wrong field count
    f.write("short row,9999,1\n")

inter = [["user_id", "recipe_id", "date", "rating", "review"]]
users = ["38094", "1293707", "8937", "2002"]
for u in users:
    for _ in range(25):
        rid = str(1000 + rng.randrange(100))
        inter.append([u, rid, "2010-01-01", str(rng.randint(0, 5)),
                      "great, would \"make\" again"])
inter += [
    ["38094", "424242", "2010-01-01", "5", "not in catalog"],
    ["38094", "1001", "2010-01-01", "five", "bad rating"],
    ["8937", "1002", "2010-01-01", "6", "out of range"],
    ["", "1003", "2010-01-01", "3", "no user"],
    ["2002", "1004", "2010-01-01", "4", "dup first"],
    ["2002", "1004", "2010-01-01", "1", "dup last wins"],
]
with open("interactions.csv", "w", newline="") as f:
    w = csv.writer(f, lineterminator="\n")
    w.writerows(inter)
    f.write("2002,1005\n")


def normalize(v):
    return " ".join(v.lower().split())


def features(field, relation):
    values = ast.literal_eval(field)
    if not isinstance(values, list):
        raise ValueError("not a list")
    return {f"{relation}:{normalize(v)}" for v in values if normalize(v)}


catalog = {}
recipe_skips = 0
with open("recipes.csv", newline="") as f:
    r = csv.reader(f)
    header = next(r)
    col = {h: i for i, h in enumerate(header)}
    for row in r:
        try:
            if len(row) != len(header):
                raise ValueError("field count")
            rid = row[col["id"]].strip()
            if not rid:
                raise ValueError("empty id")
            feats = features(row[col["tags"]], "hasTag") | features(row[col["ingredients"]], "hasIngredient")
        except (ValueError, SyntaxError):
            recipe_skips += 1
            continue
        catalog[rid] = {"name": row[col["name"]].strip(), "features": sorted(feats)}

pkgs = {}
inter_skips = 0
with open("interactions.csv", newline="") as f:
    r = csv.reader(f)
    header = next(r)
    col = {h: i for i, h in enumerate(header)}
    for row in r:
        if len(row) != len(header):
            inter_skips += 1
            continue
        user = row[col["user_id"]].strip()
        rid = row[col["recipe_id"]].strip()
        try:
            stars = int(row[col["rating"]].strip())
        except ValueError:
            stars = None
        if not user or stars is None or not 0 <= stars <= 5 or rid not in catalog:
            inter_skips += 1
            continue
        pkgs.setdefault(user, {})[rid] = stars

with open("expected.json", "w") as f:
    json.dump({"catalog": catalog, "pkgs": pkgs, "recipe_skips": recipe_skips,
               "interaction_skips": inter_skips}, f, indent=1, sort_keys=True)
    f.write("\n")
