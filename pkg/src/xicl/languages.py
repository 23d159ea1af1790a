"""Language roster: ISO codes, resource tiers, scripts, display names."""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass

TIERS = ("high", "mid", "low")
SCRIPTS = ("latin", "hangul", "han", "telugu", "arabic", "other")


@dataclass(frozen=True)
class LanguageTag:
    code: str
    tier: str
    script: str
    name: str
    word_order: str = "S-V-O"

    def __post_init__(self) -> None:
        if not self.code or self.code != self.code.lower():
            raise ValueError(f"language code must be non-empty lowercase: {self.code!r}")
        if self.tier not in TIERS:
            raise ValueError(f"unknown tier {self.tier!r} for {self.code}")
        if self.script not in SCRIPTS:
            raise ValueError(f"unknown script {self.script!r} for {self.code}")


# The ten evaluation languages: English, three demonstration targets, six
# unseen languages spanning resource tiers.
LANGUAGES: dict[str, LanguageTag] = {
    tag.code: tag
    for tag in (
        LanguageTag("en", "high", "latin", "English", "S-V-O"),
        LanguageTag("fr", "high", "latin", "French", "S-V-O"),
        LanguageTag("ko", "mid", "hangul", "Korean", "S-O-V"),
        LanguageTag("yo", "low", "latin", "Yoruba", "S-V-O"),
        LanguageTag("zh", "high", "han", "Chinese", "S-V-O"),
        LanguageTag("es", "high", "latin", "Spanish", "S-V-O"),
        LanguageTag("id", "mid", "latin", "Indonesian", "S-V-O"),
        LanguageTag("tr", "mid", "latin", "Turkish", "S-O-V"),
        LanguageTag("sw", "low", "latin", "Swahili", "S-V-O"),
        LanguageTag("te", "low", "telugu", "Telugu", "S-O-V"),
    )
}

ENGLISH = LANGUAGES["en"]


def get_language(code: str) -> LanguageTag:
    try:
        return LANGUAGES[code]
    except KeyError:
        raise KeyError(f"language {code!r} is not configured; known: {sorted(LANGUAGES)}") from None


def token_script(token: str) -> str | None:
    """Dominant script of a token, or None when no letter carries a signal.

    Counts letters per script and returns the majority; digits and
    punctuation contribute nothing.
    """
    counts: dict[str, int] = {}
    for ch in token:
        if not ch.isalpha():
            continue
        counts[_char_script(ch)] = counts.get(_char_script(ch), 0) + 1
    if not counts:
        return None
    return max(counts.items(), key=lambda kv: (kv[1], kv[0]))[0]


def _char_script(ch: str) -> str:
    cp = ord(ch)
    if 0xAC00 <= cp <= 0xD7AF or 0x1100 <= cp <= 0x11FF or 0x3130 <= cp <= 0x318F:
        return "hangul"
    if (
        0x4E00 <= cp <= 0x9FFF
        or 0x3400 <= cp <= 0x4DBF
        or 0xF900 <= cp <= 0xFAFF
        or 0x20000 <= cp <= 0x2A6DF
    ):
        return "han"
    if 0x0C00 <= cp <= 0x0C7F:
        return "telugu"
    if 0x0600 <= cp <= 0x06FF or 0x0750 <= cp <= 0x077F or 0x08A0 <= cp <= 0x08FF:
        return "arabic"
    # Latin covers ASCII plus the Latin-1/Extended blocks (French accents,
    # Yoruba tone marks, Turkish dotless i, ...).
    if cp <= 0x024F or 0x1E00 <= cp <= 0x1EFF or 0x2C60 <= cp <= 0x2C7F or 0xA720 <= cp <= 0xA7FF:
        return "latin"
    name = unicodedata.name(ch, "")
    if name.startswith("LATIN"):
        return "latin"
    return "other"
