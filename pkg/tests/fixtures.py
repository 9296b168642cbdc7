import sys
import json
import logging
import pytest

import numpy as np

from trackkit.config import default_config


logger = logging.getLogger("trackkit-test")
logger.setLevel(logging.DEBUG)
fmt = '[%(levelname)s] %(asctime)s %(message)s'
formatter = logging.Formatter(fmt=fmt)
stream_handler = logging.StreamHandler(sys.stdout)
stream_handler.setLevel(logging.DEBUG)
stream_handler.setFormatter(formatter)
logger.addHandler(stream_handler)


CAR = [0.3, 0.3, 0.5, 0.6]
BIKE = [0.05, 0.4, 0.15, 0.5]
BIKE_JUMP = [0.55, 0.4, 0.65, 0.5]
CAT = [0.0, 0.0, 1.0, 0.5]
CAT_MIDDLE = [0.0, 0.0, 0.29, 0.5]
N_FRAMES = 10


def tokens(*pairs):
    return [{"text": text, "tag": tag} for text, tag in pairs]


def chunk(video_id, chunk_text, head_lemma, token_tags, box, first_score=0.9,
          middle_box=None, last_box=None):
    return {"video_id": video_id,
            "caption": f"a video of {chunk_text}",
            "chunk_text": chunk_text,
            "head_lemma": head_lemma,
            "tokens": tokens(*token_tags),
            "groundings": {"first": {"frame": 0, "box": box, "score": first_score},
                           "middle": {"frame": 5, "box": middle_box or box, "score": 0.8},
                           "last": {"frame": N_FRAMES - 1, "box": last_box or box,
                                    "score": 0.7}}}


def track(video_id, chunk_text, box, scores=None, boxes=None):
    scores = scores or {}
    boxes = boxes or {}
    return {"video_id": video_id,
            "chunk_text": chunk_text,
            "frames": [{"frame": i, "box": boxes.get(i, box), "score": scores.get(i, 0.95)}
                       for i in range(N_FRAMES)]}


def corpus_dicts(with_virtual=False):
    """Six candidates: one survivor and one failing each of the five stages"""
    chunks = [chunk("v1", "a red car", "car", [("a", "DT"), ("red", "JJ"), ("car", "NN")], CAR),
              chunk("v1", "two dogs", "dog", [("two", "CD"), ("dogs", "NNS")], CAR),
              chunk("v1", "a man", "man", [("a", "DT"), ("man", "NN")], CAR, first_score=0.6),
              chunk("v2", "a woman", "woman", [("a", "DT"), ("woman", "NN")], CAR),
              chunk("v2", "a bicycle", "bicycle", [("a", "DT"), ("bicycle", "NN")], BIKE),
              chunk("v2", "a cat", "cat", [("a", "DT"), ("cat", "NN")], CAT,
                    middle_box=CAT_MIDDLE)]
    tracks = [track("v1", "a red car", CAR),
              track("v1", "two dogs", CAR),
              track("v1", "a man", CAR),
              track("v2", "a woman", CAR, scores={4: 0.79}),
              track("v2", "a bicycle", BIKE, boxes={6: BIKE_JUMP}),
              track("v2", "a cat", CAT)]
    if with_virtual:
        chunks.append(chunk("v3", "the blue sky", "sky",
                            [("the", "DT"), ("blue", "JJ"), ("sky", "NN")], CAR))
        tracks.append(track("v3", "the blue sky", CAR))
    return chunks, tracks


def write_jsonl(path, objects):
    with open(path, "w") as f:
        for obj in objects:
            f.write(json.dumps(obj) + "\n")
    return path


@pytest.fixture
def config():
    config = default_config()
    config.pipeline.parallel = 1
    config.harness.retry_wait = 0
    return config


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def corpus():
    return corpus_dicts()


@pytest.fixture
def corpus_files(tmp_path):
    chunks, tracks = corpus_dicts()
    return (write_jsonl(tmp_path / "chunks.jsonl", chunks),
            write_jsonl(tmp_path / "tracks.jsonl", tracks))
