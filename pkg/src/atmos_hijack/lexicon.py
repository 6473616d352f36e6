"""Keyword lists shared by the toy text encoder and corpus category tagging."""

from __future__ import annotations

import re

WEATHER_CLOUD = "weather:cloud"
WEATHER_FOG_HAZE = "weather:fog-haze"
WEATHER_SMOKE_MIST = "weather:smoke-mist"
SOURCE_SCENE = "source-scene"
OTHER = "other"

WEATHER_GROUPS = (WEATHER_CLOUD, WEATHER_FOG_HAZE, WEATHER_SMOKE_MIST)
CATEGORIES = WEATHER_GROUPS + (SOURCE_SCENE, OTHER)

# Group keyword lists; ties resolve in WEATHER_GROUPS order.
WEATHER_KEYWORDS: dict[str, frozenset[str]] = {
    WEATHER_CLOUD: frozenset(
        "cloud clouds cloudy cloudbank overcast cumulus stratus cirrus "
        "snow snowy snowfall".split()
    ),
    WEATHER_FOG_HAZE: frozenset("fog foggy fogbank haze hazy smog murky".split()),
    WEATHER_SMOKE_MIST: frozenset(
        "smoke smoky smouldering mist misty vapor vapour plume plumes".split()
    ),
}

BRIGHTNESS_WORDS = frozenset(
    "white bright pale milky veil veiled luminous whitish glare".split()
)

SCENE_WORDS = frozenset(
    """
    airport runway runways terminal terminals river bridge residential houses
    house buildings building road roads highway farmland fields field forest
    trees harbor port ships ship dock pier parking industrial factory stadium
    beach coast mountain hills city urban downtown island railway station
    school park lake pond pool court intersection church tower desert meadow
    tanks tank plane planes aircraft ramps tracks campus block apartment
    """.split()
)

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def tag_category(text: str, override: str | None = None) -> str:
    """Category for an evidence text: explicit override, else keyword vote.

    The dominant weather group wins when any weather keyword appears;
    otherwise a scene noun makes it source-scene, else other.
    """
    if override is not None:
        if override not in CATEGORIES:
            raise ValueError(f"unknown category {override!r}")
        return override
    tokens = tokenize(text)
    counts = {
        group: sum(tok in words for tok in tokens)
        for group, words in WEATHER_KEYWORDS.items()
    }
    best = max(WEATHER_GROUPS, key=lambda g: counts[g])
    if counts[best] > 0:
        return best
    if any(tok in SCENE_WORDS for tok in tokens):
        return SOURCE_SCENE
    return OTHER
