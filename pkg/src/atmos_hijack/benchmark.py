"""Synthetic desk-scale benchmark: 260 evidence texts and 50 query images.

Deterministic by construction so the end-to-end properties (attack beats
the fixed baseline, which beats clean retrieval) are reproducible without
any model weights. Scene texts are template expansions over ground-object
subjects; weather texts cover the three atmospheric groups with at least
two atmospheric/brightness keywords each; a block of neutral catalog
entries keeps the corpus honest by holding rank positions that neither
scene suppression nor generic brightening can claim. Queries are seeded
terrain-like textures with road structure and moderate contrast.
"""

from __future__ import annotations

import numpy as np

from . import lexicon
from .atmosphere import fbm_noise
from .imaging import Image
from .prng import SplitMix64, derive_seed
from .retrieval import EvidenceCorpus, EvidenceEntry

_TEMPLATES = (
    "aerial view of {}",
    "satellite image of {}",
    "{} seen from above",
    "overhead photo of {}",
    "top-down view of {}",
    "remote sensing image of {}",
    "high resolution scan of {}",
    "orthophoto of {}",
)

_SUBJECTS = (
    "a residential area with houses and roads",
    "an airport with runways and terminals",
    "a river crossing under a steel bridge",
    "farmland with rectangular fields",
    "a dense forest with tall trees",
    "a harbor with docked ships",
    "an industrial district with factory buildings",
    "a parking area beside a stadium",
    "a sandy beach along the coast",
    "a mountain ridge with steep hills",
    "a city downtown with tall buildings",
    "a railway station with many tracks",
    "a school campus with a sports court",
    "a park with a round pond",
    "a desert plain with storage tanks",
    "an island near the busy port",
    "a highway intersection with ramps",
    "a church tower in an urban block",
    "a lake with a small pier",
    "a meadow beside the railway",
)

_CLOUD_TEXTS = (
    "thick white cloud cover over the terrain hides most of the usable detail in this capture",
    "dense cumulus clouds blanketing the scene so that little of the surface remains interpretable",
    "the image is mostly covered by bright clouds and offers very limited analytic value today",
    "overcast sky with heavy cloud cover dominating the upper portion of the acquired frame",
    "white clouds veil the ground below making the acquisition unsuitable for measurement work",
    "a cloudy scene with pale cloud banks drifting slowly across the whole acquisition window",
    "snow white cloud layer over the land with only a few gaps visible near the edges",
    "soft cumulus cloud cover with a bright veil spreading outward from the center of the frame",
    "stratus clouds cover most of the picture leaving just narrow corridors of visible ground",
    "bright overcast cloud deck above the scene flattening the tonal range of the capture",
    "large white cloud formations over the area interrupting the continuity of surface features",
    "the ground is hidden under white cloudy cover for the majority of this observation",
    "a milky cloud sheet covers the image and washes away nearly all fine surface texture",
    "broken white cumulus clouds over the landscape casting irregular gaps across the frame",
    "cloudy conditions with a luminous white veil reducing the certainty of any interpretation",
    "cirrus and cumulus clouds over the region layered at several distinct altitudes at once",
    "an overcast cloudy day seen from orbit with diffuse illumination across the entire swath",
    "white cloudbank drifting across the scene during the short interval of this acquisition",
    "heavy white cloud cover obscures the surface beyond what correction methods can recover",
    "pale overcast clouds wash out the view leaving the capture usable only for coarse context",
)

_FOG_HAZE_TEXTS = (
    "thick pale fog over the valley floor persisting well after the morning acquisition time",
    "hazy murky atmosphere with low visibility degrading the radiometric quality of the capture",
    "a pale haze veils the scene and softens every boundary between adjacent surface parcels",
    "dense fogbank and haze covering the ground so that alignment marks cannot be recovered",
    "smog and haze obscure the image across the industrialized half of the observed extent",
    "foggy murky conditions blur the landscape and lower confidence in any derived product",
    "a hazy white layer hangs over the area flattening contrast through the entire capture",
    "morning fog and haze hide most of the terrain until late in the observation window",
    "murky haze reduces the image contrast to a degree that automated screening flags it",
    "the scene is washed out by pale heavy haze typical of stagnant air over the basin",
    "fog and mist roll over the low ground filling every depression visible in the frame",
    "a foggy veil softens every edge leaving only the strongest linear features traceable",
    "hazy air makes the ground look pale and compresses the dynamic range of the sensor",
    "thick gray smog and haze lie over the district through the entire acquisition period",
    "low fog and haze obscure the banks along the northern margin of the observed area",
    "the picture is dimmed by dense pale haze that no radiometric correction fully removes",
    "a pale fogbank drifts across the shore during the seconds this frame was collected",
    "haze and glare wash out the surface wherever the viewing angle approaches the sun",
    "pale fog blankets the whole region and only the tallest structures break through it",
    "visibility is poor under the milky haze making feature extraction largely unreliable",
)

_SMOKE_MIST_TEXTS = (
    "drifting smoke plumes over the area trailing downwind from several distinct ignition points",
    "morning mist and vapor covering the flats before the daytime heating clears the air",
    "a misty veil hangs over the scene softening tone transitions across the full extent",
    "smoky air with pale vapor pooling in the low corridors between the higher ground",
    "white mist rises from the valley and spreads thinly across the adjacent terraces",
    "white smoke from a fire spreads over the land crossing the frame from west to east",
    "a thin pale mist softens the landscape without fully hiding the larger structures",
    "gray smoke and vapor drift across the image in bands aligned with the surface wind",
    "vapor and mist blur the ground detail enough to defeat fine scale change detection",
    "the scene is wrapped in pale mist with visibility dropping sharply toward the interior",
    "smoke plumes obscure the ground below along the full length of the burning front",
    "misty whitish conditions over the wetlands persisting through the entire overpass",
    "a smoky milky pall covers the district and drifts slowly toward the open country",
    "light mist and vapor cling to the gullies while the upper slopes remain clear",
    "billowing smoke and mist hide the terrain downwind of the active disturbance zone",
    "the air is thick with smoke and vapor reducing the capture to coarse shapes only",
    "a misty pale morning over the lowland with condensation still visible in the hollows",
    "smoky smouldering air shrouds the gorge long after the original source has faded",
    "fine mist and vapor hover above the flats in a layer just deep enough to matter",
    "white vapor trails across the scene marking the path of the moving emission source",
)

# Neutral catalog-noise entries: no weather, brightness, or scene
# vocabulary at all, so their similarity to any query is pure hash-bag
# alignment. They form a ranking wall that source suppression cannot
# lower and that only a genuinely strong atmospheric push climbs over,
# which keeps merely-suppressive perturbations from hijacking the top
# ranks for free.
_NEUTRAL_TEXTS = (
    "archive reference entry nine four two",
    "catalog number assigned during intake",
    "record batch pending manual review",
    "duplicate scan discarded after checksum",
    "metadata value left intentionally blank",
    "unlabeled acquisition from the legacy set",
    "placeholder caption awaiting curator input",
    "index card filed under miscellaneous",
    "acquisition date unknown source uncertain",
    "checksum verified against the master list",
    "entry migrated from the older database",
    "annotation missing for this item",
    "temporary identifier issued at ingest",
    "batch import completed without errors",
    "thumbnail generation skipped for this record",
    "manual inspection flagged no issues",
    "storage moved to the cold archive",
    "original filename lost during transfer",
    "encoding profile set to default",
    "review queue position currently unassigned",
    "calibration constants copied from the prior run",
    "operator remark omitted at submission time",
    "provenance chain incomplete for this asset",
    "retention policy defers deletion until audit",
    "compression settings inherited from the template",
    "access tally reset during the maintenance cycle",
    "placeholder text removed by the localization pass",
    "billing code absent from the request form",
    "upstream identifier truncated by the importer",
    "timestamp recorded in the local zone only",
    "quality rating withheld pending second opinion",
    "sensor housing temperature within nominal limits",
    "transfer manifest signed by the duty officer",
    "redundant copy scheduled for verification soon",
    "license class listed as internal use",
    "embargo interval expires at quarter end",
    "collection request routed through the main desk",
    "processing node selected by the scheduler",
    "session token renewed without operator action",
    "archive shelf assignment updated last week",
)

BENCHMARK_SEED = 977201


def benchmark_texts() -> list[tuple[str, str, str]]:
    """(id, text, category) rows: 160 scene + 60 weather + 40 neutral."""
    rows = []
    idx = 0
    for subject in _SUBJECTS:
        for template in _TEMPLATES:
            rows.append((f"scene-{idx:03d}", template.format(subject), lexicon.SOURCE_SCENE))
            idx += 1
    for i, text in enumerate(_CLOUD_TEXTS):
        rows.append((f"cloud-{i:02d}", text, lexicon.WEATHER_CLOUD))
    for i, text in enumerate(_FOG_HAZE_TEXTS):
        rows.append((f"fog-{i:02d}", text, lexicon.WEATHER_FOG_HAZE))
    for i, text in enumerate(_SMOKE_MIST_TEXTS):
        rows.append((f"mist-{i:02d}", text, lexicon.WEATHER_SMOKE_MIST))
    for i, text in enumerate(_NEUTRAL_TEXTS):
        rows.append((f"oth-{i:02d}", text, lexicon.OTHER))
    return rows


def build_benchmark_corpus(encoder) -> EvidenceCorpus:
    entries = [
        EvidenceEntry(id=i, text=t, category=c, embedding=encoder.encode_text(t))
        for i, t, c in benchmark_texts()
    ]
    return EvidenceCorpus(entries)


def texture_query(seed: int, size: int = 64) -> Image:
    """Seeded terrain-like texture: two noise channels plus dark road lines.

    Tuned for healthy contrast so clean retrieval prefers scene evidence,
    with bright-veil coverage exactly zero on every clean query. Roughly
    a third of the seeds produce brighter terrain (sun-lit plains, light
    rooftops) that crosses the veil threshold under a translucent overlay;
    the rest stay mid-dark.
    """
    rng = SplitMix64(derive_seed(BENCHMARK_SEED, "query", str(seed)))
    n1 = fbm_noise(size, size, derive_seed(BENCHMARK_SEED, "n1", str(seed)))
    n2 = fbm_noise(size, size, derive_seed(BENCHMARK_SEED, "n2", str(seed)))
    # contrast-stretch the noise so luminance std lands near 0.19
    s1 = np.clip((n1 - 0.5) * 2.6 + 0.5, 0.0, 1.0)
    s2 = np.clip((n2 - 0.5) * 2.6 + 0.5, 0.0, 1.0)
    bright = seed % 10 in (0, 3, 6)
    if bright:
        # sun-lit low-contrast terrain: weak scene wall, veil-prone overlay
        r = 0.36 + 0.45 * s1
        g = 0.36 + 0.42 * (0.6 * s1 + 0.4 * s2)
        b = 0.28 + 0.38 * s2
    else:
        r = 0.08 + 0.76 * s1
        g = 0.11 + 0.70 * (0.6 * s1 + 0.4 * s2)
        b = 0.05 + 0.62 * s2
    px = np.stack([r, g, b], axis=-1)

    # road-like dark strips, one horizontal and one vertical
    row = rng.randint(4, size - 5)
    col = rng.randint(4, size - 5)
    px[row : row + 2, :, :] *= 0.35
    px[:, col : col + 2, :] *= 0.35
    # mid-bright rooftops (kept below the veil threshold on clean queries,
    # but bright enough to cross it under a translucent overlay)
    blocks, lo, spread = (14, 0.74, 0.04) if bright else (10, 0.62, 0.16)
    for _ in range(blocks):
        y = rng.randint(0, size - 4)
        x = rng.randint(0, size - 4)
        px[y : y + 3, x : x + 3, :] = lo + spread * rng.next_float()

    return Image(np.clip(px, 0.0, 1.0)).quantize8()


def benchmark_queries(count: int = 50, size: int = 64) -> list[tuple[str, Image]]:
    return [(f"q{i:03d}", texture_query(i, size=size)) for i in range(count)]
