# Copyright 2025 The dualnav Authors
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
"""
Fixed instruction vocabulary and the template instruction generator.
"""

import math
from typing import Sequence

import numpy as np


PAD_TOKEN, UNK_TOKEN, MASK_TOKEN = "<pad>", "<unk>", "<mask>"
PAD_ID, UNK_ID, MASK_ID = 0, 1, 2
SPECIAL_TOKENS = [PAD_TOKEN, UNK_TOKEN, MASK_TOKEN]

LANDMARK_LABELS = [
    "sofa", "table", "plant", "lamp", "bed", "fridge", "tv", "shelf", "chair", "sink", "piano", "door",
]  # fmt: skip
WORDS = [
    "go", "walk", "move", "head", "turn", "left", "right", "straight", "forward", "ahead", "to", "the",
    "toward", "past", "and", "then", "stop", "wait", "at", "near", "by", "next", "around", "corner",
    "through", "room", "corridor", "end", "of", "a", "little", "far",
]  # fmt: skip
VOCAB = SPECIAL_TOKENS + WORDS + LANDMARK_LABELS
TOKEN_TO_ID = {token: index for index, token in enumerate(VOCAB)}
LANDMARK_TOKEN_IDS = [TOKEN_TO_ID[label] for label in LANDMARK_LABELS]
VOCAB_SIZE = len(VOCAB)

STARTS = [["walk", "forward"], ["go", "straight"], ["head", "ahead"], ["move", "forward"]]
TURNS = [["turn", "{side}"], ["turn", "{side}", "at", "the", "corner"], ["go", "{side}"]]
PASSES = [["walk", "past", "the", "{label}"], ["go", "by", "the", "{label}"]]
STOPS = [
    ["stop", "near", "the", "{label}"], ["wait", "next", "to", "the", "{label}"], ["stop", "by", "the", "{label}"],
]  # fmt: skip
PLAIN_STOPS = [["stop", "at", "the", "end"], ["stop", "a", "little", "ahead"]]


def tokenize(text: str) -> list[int]:
    return [TOKEN_TO_ID.get(word, UNK_ID) for word in text.lower().split()]


def detokenize(token_ids: Sequence[int]) -> str:
    return " ".join(VOCAB[i] if 0 <= i < VOCAB_SIZE else UNK_TOKEN for i in token_ids)


def turn_directions(path: Sequence[Sequence[float]], min_turn: float = 30.0) -> list[str]:
    """Side of every bend sharper than `min_turn` degrees along a polyline, in travel order."""
    sides = []
    for a, b, c in zip(path[:-2], path[1:-1], path[2:]):
        heading_in = math.atan2(b[1] - a[1], b[0] - a[0])
        heading_out = math.atan2(c[1] - b[1], c[0] - b[0])
        turn = math.degrees((heading_out - heading_in + math.pi) % (2 * math.pi) - math.pi)
        if abs(turn) >= min_turn:
            sides.append("left" if turn > 0 else "right")

    return sides


def generate_instruction(
    path: Sequence[Sequence[float]],
    landmarks: Sequence[tuple[str, Sequence[float]]],
    rng: np.random.Generator,
    max_length: int = 24,
) -> list[int]:
    """Template instruction along an expert polyline: a start phrase, one phrase per bend, an optional landmark
    passed on the way, and a stop phrase naming the landmark nearest to the goal.
    """
    goal = np.asarray(path[-1], dtype=np.float64)
    words: list[str] = list(STARTS[rng.integers(len(STARTS))])
    sides = turn_directions(path)
    midpoint = np.asarray(path[len(path) // 2], dtype=np.float64)
    by_goal = sorted(landmarks, key=lambda item: float(np.linalg.norm(np.asarray(item[1]) - goal)))
    by_mid = sorted(landmarks, key=lambda item: float(np.linalg.norm(np.asarray(item[1]) - midpoint)))
    if by_mid and by_goal and by_mid[0][0] != by_goal[0][0]:
        words += ["and"] + [w.format(label=by_mid[0][0]) for w in PASSES[rng.integers(len(PASSES))]]

    for side in sides:
        words += ["then"] + [w.format(side=side) for w in TURNS[rng.integers(len(TURNS))]]

    words.append("then")
    if by_goal:
        words += [w.format(label=by_goal[0][0]) for w in STOPS[rng.integers(len(STOPS))]]
    else:
        words += list(PLAIN_STOPS[rng.integers(len(PLAIN_STOPS))])

    token_ids = tokenize(" ".join(words))
    if len(token_ids) > max_length:  # keep the stop phrase
        head = max_length // 2
        token_ids = token_ids[:head] + token_ids[-(max_length - head) :]

    return token_ids
