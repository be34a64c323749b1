import random

import pytest

# Five topics shared across cases so every fold's training data covers every
# topic; relevance is decided by query/sentence topic overlap, which the
# hashed interaction features make linearly separable.
TOPICS = ["fever", "fracture", "rash", "cough", "dizziness"]
FILLER = ["vitals", "stable", "plan", "reviewed", "team", "daily", "notes",
          "rounds", "diet", "ambulating"]


def toy_corpus(n_cases=25, seed=5, prefix="toy"):
    rng = random.Random(seed)
    cases = []
    for i in range(n_cases):
        topic = TOPICS[i % len(TOPICS)]
        sentences = []
        for j in range(16):
            if j < 4:
                rel = "essential"
                words = ["patient", "reported", topic, "episodes", rng.choice(FILLER)]
            elif j < 6:
                rel = "supplementary"
                words = ["history", "of", topic, "noted", rng.choice(FILLER)]
            else:
                rel = "not-relevant"
                words = [rng.choice(FILLER) for _ in range(5)]
            sentences.append({"id": str(j + 1), "text": " ".join(words), "relevance": rel})
        cases.append({
            "case_id": f"{prefix}-{i + 1:02d}",
            "patient_question": f"i keep having {topic} what is going on",
            "clinician_question": f"what explains the patient's {topic}",
            "sentences": sentences,
        })
    return cases


@pytest.fixture(scope="session")
def toy_cases():
    return toy_corpus()


@pytest.fixture(scope="session")
def toy_synthetic():
    return toy_corpus(n_cases=10, seed=11, prefix="synth")
