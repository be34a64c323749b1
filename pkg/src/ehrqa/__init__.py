"""Local-first, evidence-grounded question answering over clinical notes.

The pipeline has four stages: rewriting a patient question into a short
clinician-style question, selecting the note sentences that answer it,
generating a grounded answer, and citing each answer sentence back to its
supporting note sentences. Everything runs against a local chat/embedding
endpoint or a deterministic mock, and every stage can be evaluated against
labeled corpora.
"""

__version__ = "0.1.0"
