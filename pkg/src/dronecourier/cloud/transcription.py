"""Transcription provider seam.

Speech input is out of scope; the plain-text provider is an identity pass so a
real speech-to-text engine can be slotted behind the same interface later.
"""

from __future__ import annotations

from typing import Protocol


class TranscriptionProvider(Protocol):
    def transcribe(self, utterance: str) -> str:
        ...


class PlainTextTranscription:
    def transcribe(self, utterance: str) -> str:
        return utterance.strip()
