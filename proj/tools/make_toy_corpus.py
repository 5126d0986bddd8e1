#!/usr/bin/env python3
# Copyright 2026 The Longturn Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Generates data/toy_corpus.jsonl: a small short-turn chit-chat corpus.

Sessions are drawn from topic templates, with a share of generic
back-channel sessions and post/comment groups that share their first
utterance, the two corpus properties the rescale filters target.
"""

import argparse
import json
import random

TOPICS = {
    "food": {
        "things": ["noodles", "dumplings", "hotpot", "ramen", "tacos", "curry",
                   "sushi", "pizza", "bbq", "porridge", "pancakes", "salad"],
        "places": ["the night market", "a tiny diner", "my grandma's kitchen",
                   "the food court", "a street stall", "the new cafe downtown"],
        "verbs": ["cooked", "ordered", "tried", "craved", "shared", "baked"],
    },
    "travel": {
        "things": ["train ride", "road trip", "beach", "mountain hike",
                   "old town", "island", "museum", "temple", "lake", "hostel"],
        "places": ["Kyoto", "Chengdu", "Lisbon", "Iceland", "Yunnan", "Bali",
                   "Hangzhou", "Seoul", "Prague", "Xi'an"],
        "verbs": ["visited", "booked", "explored", "planned", "photographed",
                  "missed"],
    },
    "pets": {
        "things": ["kitten", "puppy", "parrot", "hamster", "goldfish",
                   "rabbit", "corgi", "tabby cat", "turtle", "husky"],
        "places": ["the shelter", "the vet", "the park", "my balcony",
                   "the pet shop", "my neighbor's yard"],
        "verbs": ["adopted", "fed", "walked", "trained", "bathed", "spoiled"],
    },
    "movies": {
        "things": ["sci-fi movie", "documentary", "anime series", "thriller",
                   "romantic comedy", "sequel", "horror film", "cartoon",
                   "period drama", "mystery show"],
        "places": ["the cinema", "the film festival", "my couch",
                   "a friend's place", "the drive-in", "the late show"],
        "verbs": ["watched", "rewatched", "reviewed", "recommended",
                  "binged", "skipped"],
    },
    "sports": {
        "things": ["basketball game", "marathon", "badminton match",
                   "swimming class", "football final", "yoga session",
                   "table tennis", "climbing gym", "cycling route", "ski trip"],
        "places": ["the stadium", "the gym", "the court", "the river path",
                   "the pool", "the school field"],
        "verbs": ["played", "trained for", "watched", "joined", "won",
                  "finished"],
    },
    "music": {
        "things": ["concert", "guitar lesson", "new album", "piano piece",
                   "karaoke night", "jazz record", "playlist", "music video",
                   "drum solo", "folk song"],
        "places": ["the livehouse", "the music hall", "my headphones",
                   "the subway", "the radio", "the campus stage"],
        "verbs": ["heard", "practiced", "downloaded", "sang", "played",
                  "discovered"],
    },
    "work": {
        "things": ["deadline", "meeting", "project report", "job interview",
                   "team dinner", "spreadsheet", "client call", "promotion",
                   "night shift", "training course"],
        "places": ["the office", "the coworking space", "home", "the airport",
                   "the conference room", "the factory floor"],
        "verbs": ["prepared", "survived", "finished", "postponed",
                  "presented", "rewrote"],
    },
    "study": {
        "things": ["math exam", "thesis draft", "chemistry lab", "essay",
                   "language course", "group project", "history quiz",
                   "physics homework", "scholarship form", "reading list"],
        "places": ["the library", "the dorm", "the lecture hall",
                   "a study cafe", "the lab", "my desk"],
        "verbs": ["studied for", "submitted", "failed", "aced", "revised",
                  "started"],
    },
}

OPENERS = [
    "Guess what, I {verb} {a_thing} at {place} today.",
    "Have you ever {verb} {a_thing} at {place}?",
    "I finally {verb} {a_thing} last weekend.",
    "So I {verb} {a_thing} near {place} yesterday.",
    "My friend and I {verb} {a_thing} this morning.",
]
REPLIES = [
    "No way, how was the {thing}?",
    "Nice! I love {thing} too, especially at {place}.",
    "Really? I have wanted to try {thing} for months.",
    "That sounds fun, was {place} crowded?",
    "Lucky you. The last {thing} I {verb} was a disaster.",
    "Tell me more about the {thing}!",
    "Did you go alone or with someone to {place}?",
]
FOLLOWS = [
    "It was great, the {thing} was better than I expected.",
    "Honestly the {thing} was okay but {place} was amazing.",
    "We stayed at {place} until it got dark.",
    "I think I will go back to {place} next month.",
    "You should come with me next time, the {thing} is worth it.",
    "My sister {verb} {a_thing} there as well and loved it.",
    "The price was fair and the people at {place} were friendly.",
    "I took a lot of photos of the {thing}.",
]
CLOSERS = [
    "Deal, let's plan it for {day}.",
    "Count me in, {day} works for me.",
    "Sounds perfect, send me the details before {day}.",
    "Okay, see you on {day} then!",
    "Great, I will bring snacks on {day}.",
]
DAYS = ["Friday", "Saturday", "Sunday", "next Monday", "the holiday",
        "Tuesday evening", "the weekend", "Thursday night"]

GENERIC = [
    ["Haha, it's so cute.", "Haha! LMAO."],
    ["lol", "lol yes"],
    ["Good morning!", "Morning :)"],
    ["Ok", "Okay then."],
    ["hahaha", "hahahaha same"],
    ["Good night", "Night night"],
    ["Really?", "Yeah really."],
    ["Thanks!", "You're welcome."],
]

ZH_TOPICS = [
    ("火锅", "成都"), ("猫咪", "公园"), ("电影", "影院"), ("考试", "图书馆"),
    ("篮球", "体育馆"), ("旅行", "杭州"), ("音乐会", "剧场"), ("加班", "公司"),
]
ZH_OPENERS = ["今天我在{place}看到了{thing}。", "周末你去{place}了吗？{thing}怎么样？",
              "我最近很喜欢{thing}，经常去{place}。"]
ZH_REPLIES = ["真的吗？{thing}好玩吗？", "我也想去{place}看看{thing}。",
              "{place}人多不多？", "听起来不错，下次带上我。"]
ZH_FOLLOWS = ["挺好的，{place}的{thing}比我想象的好。", "下次我们一起去{place}吧。",
              "我拍了很多{thing}的照片。", "{place}离我家不远。"]


def fill(template, rng, topic):
    thing = rng.choice(topic["things"])
    article = "an" if thing[0] in "aeiou" else "a"
    return template.format(
        verb=rng.choice(topic["verbs"]),
        thing=thing,
        a_thing=f"{article} {thing}",
        place=rng.choice(topic["places"]),
        day=rng.choice(DAYS),
    )


def topical_session(rng, topic, turns):
    utts = [fill(rng.choice(OPENERS), rng, topic)]
    while len(utts) < turns - 1:
        pool = REPLIES if len(utts) % 2 == 1 else FOLLOWS
        utts.append(fill(rng.choice(pool), rng, topic))
    if turns > 1:
        closer_pool = CLOSERS if turns >= 4 else (REPLIES + FOLLOWS)
        utts.append(fill(rng.choice(closer_pool), rng, topic))
    return utts


def zh_session(rng, turns):
    thing, place = rng.choice(ZH_TOPICS)
    utts = [rng.choice(ZH_OPENERS).format(thing=thing, place=place)]
    while len(utts) < turns:
        pool = ZH_REPLIES if len(utts) % 2 == 1 else ZH_FOLLOWS
        utts.append(rng.choice(pool).format(thing=thing, place=place))
    return utts


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--sessions", type=int, default=400)
    parser.add_argument("--seed", type=int, default=20230525)
    parser.add_argument("--output", default="data/toy_corpus.jsonl")
    args = parser.parse_args()

    rng = random.Random(args.seed)
    names = sorted(TOPICS)
    records = []
    while len(records) < args.sessions:
        roll = rng.random()
        idx = len(records)
        if roll < 0.04:
            utts = list(rng.choice(GENERIC))
            tag = "generic"
        elif roll < 0.16:
            topic = TOPICS[rng.choice(names)]
            post = fill(rng.choice(OPENERS), rng, topic)
            for _ in range(rng.randint(2, 3)):
                if len(records) >= args.sessions:
                    break
                utts = [post] + [fill(rng.choice(REPLIES), rng, topic)]
                records.append({"id": f"toy{len(records):04d}",
                                "utterances": utts,
                                "meta": {"kind": "post_comment"}})
            continue
        elif roll < 0.24:
            utts = zh_session(rng, rng.choice([2, 3, 4, 5]))
            tag = "zh"
        else:
            topic_name = rng.choice(names)
            utts = topical_session(rng, TOPICS[topic_name],
                                   rng.choice([2, 2, 3, 3, 4, 4, 5, 6, 7]))
            tag = topic_name
        records.append({"id": f"toy{idx:04d}", "utterances": utts,
                        "meta": {"kind": tag}})

    with open(args.output, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


if __name__ == "__main__":
    main()
